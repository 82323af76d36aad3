// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_MLP_HPP_
#define IDLMA_MLP_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "idlma/grid.hpp"

namespace idlma {

/// One fully connected layer; weights are out x in, row-major.
struct DenseLayer {
  std::size_t rows = 0;  // output width
  std::size_t cols = 0;  // input width
  std::vector<float> weights;
  std::vector<float> bias;
};

struct MlpMeta {
  std::uint32_t freq_bins = 0;  // I
  std::uint32_t context = 0;    // c; the input spans 2c+1 frames at stride 2
  float delta2 = 1e-5f;
};

/// Variance-estimation network. Every layer is followed by a ReLU, including
/// the output layer.
struct MlpNetwork {
  std::vector<DenseLayer> layers;
  MlpMeta meta;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().cols; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().rows; }

  /// Throws MlpFormatError(kDimensionChainBreak / kMetaMismatch) on
  /// inconsistent shapes.
  void validate() const;
};

class MlpFormatError : public std::runtime_error {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kTruncatedPayload,
    kDimensionChainBreak,
    kMetaMismatch,
    kTrailingData,
  };
  MlpFormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Short lowercase label for an error class, e.g. "truncated payload".
const char* to_string(MlpFormatError::Kind kind);

// IDLM1 container: "IDLM1\0", u32 layer_count, u32 I, u32 c, f32 delta2, then
// per layer u32 rows, u32 cols, rows*cols f32 weights, rows f32 biases. All
// little-endian, no padding.
MlpNetwork parse_network(std::span<const unsigned char> bytes);
std::vector<unsigned char> serialize_network(const MlpNetwork& net);

MlpNetwork load_network(const std::filesystem::path& path);
void save_network(const std::filesystem::path& path, const MlpNetwork& net);

/// CRC-32 of the whole container.
std::uint32_t network_checksum(std::span<const unsigned char> bytes);

struct ContextVector {
  std::vector<double> values;  // I * (2c + 1)
  std::size_t frame = 0;
  double normalizer = 1.0;     // ||stacked||_2 + delta2
};

/// Stacks frames j-2c, j-2c+2, ..., j+2c of `magnitudes` (I x J), zero for
/// frames outside [0, J), and divides by (2-norm + delta2).
ContextVector assemble_context(const Grid<double>& magnitudes, std::size_t frame,
                               std::size_t context, double delta2);

/// relu(W x + b) through all layers, then scaled back by v.normalizer.
std::vector<double> forward(const MlpNetwork& net, const ContextVector& v);

}  // namespace idlma

#endif  // IDLMA_MLP_HPP_
