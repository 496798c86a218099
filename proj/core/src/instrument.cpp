#include "ucan/instrument.hpp"

#include <algorithm>

namespace ucan::instrument {

namespace {
thread_local Counters g_counters;
thread_local bool g_enabled = false;
} // namespace

bool enabled() { return g_enabled; }
void set_enabled(bool on) { g_enabled = on; }

Counters snapshot() { return g_counters; }

void reset() {
    const bool keep = g_enabled;
    g_counters = Counters{};
    g_enabled = keep;
}

void add_matmul_macs(std::int64_t n) {
    if (g_enabled) g_counters.matmul_macs += n;
}

void add_conv_macs(std::int64_t n) {
    if (g_enabled) g_counters.conv_macs += n;
}

void add_elementwise(std::int64_t n) {
    if (g_enabled) g_counters.elementwise_ops += n;
}

void hit_denom_guard() {
    if (g_enabled) ++g_counters.denom_guard_hits;
}

void track_alloc(std::size_t elems) {
    if (!g_enabled) return;
    g_counters.alloc_current_elems += static_cast<std::int64_t>(elems);
    g_counters.alloc_peak_elems =
        std::max(g_counters.alloc_peak_elems, g_counters.alloc_current_elems);
}

void track_free(std::size_t elems) {
    if (!g_enabled) return;
    g_counters.alloc_current_elems -= static_cast<std::int64_t>(elems);
}

} // namespace ucan::instrument
