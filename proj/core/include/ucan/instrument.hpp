#ifndef UCAN_INSTRUMENT_HPP
#define UCAN_INSTRUMENT_HPP

#include <algorithm>
#include <cstdint>
#include <cstddef>
#include <vector>

// Operation counters and the scratch-buffer arena hook.
//
// Counting is a side channel: it never changes what an operation computes,
// only what is recorded about it. All state is thread local, so parallel
// experiments do not interleave their tallies.
//
// Accounting rules:
//   matmul (N,K)x(K,M)              -> N*K*M multiply-accumulates
//   conv                            -> c_out * c_in/groups * kh * kw * h_out * w_out per item
//   elementwise (mul/div/exp/norm)  -> one op per element, kept in its own class
//
// Temporary buffers participate only when they are requested through
// Scratch<T>; buffers below kScratchExemptElems elements are exempt.

namespace ucan::instrument {

inline constexpr std::size_t kScratchExemptElems = 1024;

struct Counters {
    std::int64_t matmul_macs = 0;
    std::int64_t conv_macs = 0;
    std::int64_t elementwise_ops = 0;
    std::int64_t denom_guard_hits = 0;
    std::int64_t alloc_current_elems = 0;
    std::int64_t alloc_peak_elems = 0;

    std::int64_t mac_total() const { return matmul_macs + conv_macs; }
};

bool enabled();
void set_enabled(bool on);

Counters snapshot();
void reset();

void add_matmul_macs(std::int64_t n);
void add_conv_macs(std::int64_t n);
void add_elementwise(std::int64_t n);
void hit_denom_guard();

void track_alloc(std::size_t elems);
void track_free(std::size_t elems);

// RAII wrapper around a temporary buffer that reports its element count to
// the arena hook. Use for the large intermediates whose footprint the
// analysis layer asserts on (attention score matrices, tile buffers).
template <typename T>
class Scratch {
public:
    explicit Scratch(std::size_t n) : buf_(n), tracked_(n >= kScratchExemptElems) {
        if (tracked_) track_alloc(n);
    }
    ~Scratch() {
        if (tracked_) track_free(buf_.size());
    }
    Scratch(const Scratch&) = delete;
    Scratch& operator=(const Scratch&) = delete;

    T* data() { return buf_.data(); }
    const T* data() const { return buf_.data(); }
    T& operator[](std::size_t i) { return buf_[i]; }
    const T& operator[](std::size_t i) const { return buf_[i]; }
    std::size_t size() const { return buf_.size(); }
    void fill(T v) { std::fill(buf_.begin(), buf_.end(), v); }

private:
    std::vector<T> buf_;
    bool tracked_;
};

} // namespace ucan::instrument

#endif
