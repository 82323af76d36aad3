// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/mlp.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace idlma {

namespace {

constexpr unsigned char kMagic[6] = {'I', 'D', 'L', 'M', '1', '\0'};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void floats(std::vector<float>& out, std::size_t count, const char* what) {
    if (count > remaining() / 4) throw truncated(what);
    out.resize(count);
    for (auto& v : out) v = f32(what);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) throw truncated(what);
  }
  static MlpFormatError truncated(const char* what) {
    return MlpFormatError(MlpFormatError::Kind::kTruncatedPayload,
                          std::string("truncated payload while reading ") + what);
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
}

void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

}  // namespace

const char* to_string(MlpFormatError::Kind kind) {
  switch (kind) {
    case MlpFormatError::Kind::kIo: return "i/o error";
    case MlpFormatError::Kind::kBadMagic: return "bad magic";
    case MlpFormatError::Kind::kTruncatedPayload: return "truncated payload";
    case MlpFormatError::Kind::kDimensionChainBreak: return "dimension chain break";
    case MlpFormatError::Kind::kMetaMismatch: return "meta mismatch";
    case MlpFormatError::Kind::kTrailingData: return "trailing data";
  }
  return "unknown";
}

void MlpNetwork::validate() const {
  using Kind = MlpFormatError::Kind;
  if (layers.empty()) throw MlpFormatError(Kind::kDimensionChainBreak, "network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.rows == 0 || layer.cols == 0)
      throw MlpFormatError(Kind::kDimensionChainBreak,
                           "layer " + std::to_string(l) + " has a zero dimension");
    if (layer.weights.size() != layer.rows * layer.cols || layer.bias.size() != layer.rows)
      throw MlpFormatError(Kind::kDimensionChainBreak,
                           "layer " + std::to_string(l) + " storage does not match its shape");
    if (l > 0 && layers[l - 1].rows != layer.cols)
      throw MlpFormatError(Kind::kDimensionChainBreak,
                           "layer " + std::to_string(l - 1) + " outputs " +
                               std::to_string(layers[l - 1].rows) + " but layer " +
                               std::to_string(l) + " expects " + std::to_string(layer.cols));
  }
  const std::size_t expected_in = std::size_t{meta.freq_bins} * (2 * std::size_t{meta.context} + 1);
  if (input_dim() != expected_in)
    throw MlpFormatError(Kind::kMetaMismatch,
                         "input width " + std::to_string(input_dim()) + " != I*(2c+1) = " +
                             std::to_string(expected_in));
  if (output_dim() != meta.freq_bins)
    throw MlpFormatError(Kind::kMetaMismatch, "output width " + std::to_string(output_dim()) +
                                                  " != I = " + std::to_string(meta.freq_bins));
  if (!(meta.delta2 >= 0.0f) || !std::isfinite(meta.delta2))
    throw MlpFormatError(Kind::kMetaMismatch, "delta2 must be finite and nonnegative");
}

MlpNetwork parse_network(std::span<const unsigned char> bytes) {
  using Kind = MlpFormatError::Kind;
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw MlpFormatError(Kind::kBadMagic, "bad magic: not an IDLM1 container");
  Reader in(bytes.subspan(sizeof(kMagic)));
  MlpNetwork net;
  const std::uint32_t count = in.u32("layer count");
  net.meta.freq_bins = in.u32("freq bins");
  net.meta.context = in.u32("context");
  net.meta.delta2 = in.f32("delta2");
  // Each layer needs at least its 8-byte header.
  if (count > in.remaining() / 8)
    throw MlpFormatError(Kind::kTruncatedPayload, "truncated payload: layer count " +
                                                      std::to_string(count) + " exceeds file");
  net.layers.resize(count);
  for (std::uint32_t l = 0; l < count; ++l) {
    auto& layer = net.layers[l];
    layer.rows = in.u32("layer rows");
    layer.cols = in.u32("layer cols");
    if (l > 0 && net.layers[l - 1].rows != layer.cols)
      throw MlpFormatError(Kind::kDimensionChainBreak,
                           "layer " + std::to_string(l - 1) + " outputs " +
                               std::to_string(net.layers[l - 1].rows) + " but layer " +
                               std::to_string(l) + " expects " + std::to_string(layer.cols));
    in.floats(layer.weights, layer.rows * layer.cols, "layer weights");
    in.floats(layer.bias, layer.rows, "layer biases");
  }
  if (in.remaining() != 0)
    throw MlpFormatError(Kind::kTrailingData,
                         std::to_string(in.remaining()) + " unexpected bytes after last layer");
  net.validate();
  return net;
}

std::vector<unsigned char> serialize_network(const MlpNetwork& net) {
  net.validate();
  std::vector<unsigned char> out(kMagic, kMagic + sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  put_u32(out, net.meta.freq_bins);
  put_u32(out, net.meta.context);
  put_f32(out, net.meta.delta2);
  for (const auto& layer : net.layers) {
    put_u32(out, static_cast<std::uint32_t>(layer.rows));
    put_u32(out, static_cast<std::uint32_t>(layer.cols));
    for (float w : layer.weights) put_f32(out, w);
    for (float b : layer.bias) put_f32(out, b);
  }
  return out;
}

MlpNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MlpFormatError(MlpFormatError::Kind::kIo, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  return parse_network(bytes);
}

void save_network(const std::filesystem::path& path, const MlpNetwork& net) {
  const auto bytes = serialize_network(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MlpFormatError(MlpFormatError::Kind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw MlpFormatError(MlpFormatError::Kind::kIo, "write failed for " + path.string());
}

std::uint32_t network_checksum(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large files in pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

ContextVector assemble_context(const Grid<double>& magnitudes, std::size_t frame,
                               std::size_t context, double delta2) {
  const std::size_t bins = magnitudes.rows();
  const auto frames = static_cast<std::ptrdiff_t>(magnitudes.cols());
  ContextVector v;
  v.frame = frame;
  v.values.assign(bins * (2 * context + 1), 0.0);
  const auto center = static_cast<std::ptrdiff_t>(frame);
  const auto reach = static_cast<std::ptrdiff_t>(2 * context);
  std::size_t block = 0;
  for (std::ptrdiff_t offset = -reach; offset <= reach; offset += 2, ++block) {
    const std::ptrdiff_t j = center + offset;
    if (j < 0 || j >= frames) continue;
    for (std::size_t i = 0; i < bins; ++i)
      v.values[block * bins + i] = magnitudes(i, static_cast<std::size_t>(j));
  }
  double energy = 0.0;
  for (double x : v.values) energy += x * x;
  v.normalizer = std::sqrt(energy) + delta2;
  if (v.normalizer > 0.0)
    for (double& x : v.values) x /= v.normalizer;
  return v;
}

std::vector<double> forward(const MlpNetwork& net, const ContextVector& v) {
  if (v.values.size() != net.input_dim())
    throw std::invalid_argument("context vector has " + std::to_string(v.values.size()) +
                                " entries, network expects " + std::to_string(net.input_dim()));
  std::vector<double> in = v.values;
  std::vector<double> out;
  for (const auto& layer : net.layers) {
    out.assign(layer.rows, 0.0);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      const float* w = layer.weights.data() + r * layer.cols;
      double s = layer.bias[r];
      for (std::size_t c = 0; c < layer.cols; ++c) s += static_cast<double>(w[c]) * in[c];
      out[r] = std::max(s, 0.0);
    }
    in.swap(out);
  }
  for (double& x : in) x *= v.normalizer;
  return in;
}

}  // namespace idlma
