#ifndef UCAN_SERIALIZATION_HPP
#define UCAN_SERIALIZATION_HPP

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ucan/network.hpp"
#include "ucan/tensor.hpp"

namespace ucan {

// Binary tensor stream format:
//   magic "UCTN", u8 version = 1, u8 ndim, little-endian u32 dims,
//   then little-endian f32 payload.
void write_tensor_blob(std::ostream& os, const std::vector<std::uint32_t>& dims,
                       const float* data);
std::pair<std::vector<std::uint32_t>, std::vector<float>> read_tensor_blob(
    std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Weight file: a manifest header (name, kind, shape, offset, size) followed
// by the named blobs. Plain tensors are stored in the tensor stream format;
// feature-map entries carry a one-byte kind tag before their parameters;
// one text entry holds the model configuration.
void save_weights(const std::string& path, UcanWeights& weights,
                  const ModelConfig& cfg);
std::pair<UcanWeights, ModelConfig> load_weights(const std::string& path);

// Binary PPM (P6, maxval 255); pixel values map to [0, 1].
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& img);

} // namespace ucan

#endif
