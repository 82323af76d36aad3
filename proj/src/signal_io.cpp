// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace idlma {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

void MultichannelSignal::validate() const {
  if (samples.empty()) throw std::invalid_argument("signal has no channels");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  for (const auto& ch : samples)
    if (ch.size() != samples[0].size())
      throw std::invalid_argument("signal channels have unequal lengths");
}

MultichannelSignal MultichannelSignal::mono(std::vector<double> x, double rate) {
  MultichannelSignal s;
  s.samples.push_back(std::move(x));
  s.sample_rate = rate;
  return s;
}

std::size_t mixing_channels(const MixingSpec& spec) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, GainMixing>)
          return m.gain.rows();
        else
          return m.taps.rows();
      },
      spec);
}

std::size_t mixing_sources(const MixingSpec& spec) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, GainMixing>)
          return m.gain.cols();
        else
          return m.taps.cols();
      },
      spec);
}

void validate_mixing(const MixingSpec& spec) {
  const std::size_t rows = mixing_channels(spec);
  const std::size_t cols = mixing_sources(spec);
  if (rows == 0 || cols == 0) throw MixingError("mixing spec is empty");
  for (std::size_t m = 0; m < rows; ++m) {
    bool nonzero = false;
    for (std::size_t n = 0; n < cols; ++n) {
      if (const auto* g = std::get_if<GainMixing>(&spec)) {
        if (!std::isfinite(g->gain(m, n))) throw MixingError("non-finite gain");
        nonzero = nonzero || g->gain(m, n) != 0.0;
      } else {
        const auto& taps = std::get<RirMixing>(spec).taps(m, n);
        for (double t : taps) {
          if (!std::isfinite(t)) throw MixingError("non-finite impulse response tap");
          nonzero = nonzero || t != 0.0;
        }
      }
    }
    if (!nonzero)
      throw MixingError("mixing row " + std::to_string(m) + " has no nonzero entry");
  }
}

MultichannelSignal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavReadError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) {
    return WavReadError(path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // A short data chunk still means the file was cut off.
      throw fail("truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      format = get_u16(f);
      channels = get_u16(f + 2);
      rate = get_u32(f + 4);
      bits = get_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw fail("extensible fmt chunk too short");
        format = get_u16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (channels == 0 || rate == 0) throw fail("invalid channel count or rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw UnsupportedEncodingError(path.string() + ": unsupported encoding (format " +
                                   std::to_string(format) + ", " + std::to_string(bits) +
                                   " bits)");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  MultichannelSignal signal;
  signal.sample_rate = rate;
  signal.samples.assign(channels, std::vector<double>(frames));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (t * channels + c) * width;
      if (pcm16) {
        signal.samples[c][t] = static_cast<std::int16_t>(get_u16(p)) / 32768.0;
      } else {
        signal.samples[c][t] = std::bit_cast<float>(get_u32(p));
      }
    }
  }
  return signal;
}

WavWriteReport write_wav(const std::filesystem::path& path, const MultichannelSignal& signal,
                         WavEncoding encoding) {
  signal.validate();
  const std::size_t channels = signal.channels();
  const std::size_t frames = signal.length();
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::size_t width = bits / 8;
  const std::size_t data_size = frames * channels * width;
  if (data_size > 0xFFFFFFFFu - 44) throw WavWriteError("signal too long for a WAV file");

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_size));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, static_cast<std::uint16_t>(channels));
  const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));
  put_u32(out, rate);
  put_u32(out, static_cast<std::uint32_t>(rate * channels * width));
  put_u16(out, static_cast<std::uint16_t>(channels * width));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_size));

  WavWriteReport report;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      double x = signal.samples[c][t];
      if (!std::isfinite(x)) throw WavWriteError("non-finite sample");
      if (x > 1.0 || x < -1.0) {
        x = std::clamp(x, -1.0, 1.0);
        ++report.clipped;
      }
      if (encoding == WavEncoding::kPcm16) {
        const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw WavWriteError("cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw WavWriteError("write failed for " + path.string());
  return report;
}

MultichannelSignal simulate_mixture(const std::vector<MultichannelSignal>& sources,
                                    const MixingSpec& spec) {
  validate_mixing(spec);
  const std::size_t channels = mixing_channels(spec);
  const std::size_t count = mixing_sources(spec);
  if (sources.size() != count)
    throw MixingError("mixing spec expects " + std::to_string(count) + " sources, got " +
                      std::to_string(sources.size()));
  for (const auto& s : sources) {
    s.validate();
    if (s.channels() != 1) throw MixingError("sources must be single-channel");
    if (s.length() != sources[0].length()) throw MixingError("sources differ in length");
    if (s.sample_rate != sources[0].sample_rate) throw MixingError("sample rate mismatch");
  }

  const std::size_t length = sources[0].length();
  MultichannelSignal mix;
  mix.sample_rate = sources[0].sample_rate;
  mix.samples.assign(channels, std::vector<double>(length, 0.0));

  if (const auto* g = std::get_if<GainMixing>(&spec)) {
    for (std::size_t m = 0; m < channels; ++m)
      for (std::size_t n = 0; n < count; ++n) {
        const double a = g->gain(m, n);
        const auto& s = sources[n].samples[0];
        for (std::size_t t = 0; t < length; ++t) mix.samples[m][t] += a * s[t];
      }
  } else {
    const auto& rir = std::get<RirMixing>(spec);
    for (std::size_t m = 0; m < channels; ++m)
      for (std::size_t n = 0; n < count; ++n) {
        const auto& h = rir.taps(m, n);
        const auto& s = sources[n].samples[0];
        auto& out = mix.samples[m];
        for (std::size_t t = 0; t < length; ++t) {
          const std::size_t reach = std::min(h.size(), t + 1);
          double acc = 0.0;
          for (std::size_t k = 0; k < reach; ++k) acc += h[k] * s[t - k];
          out[t] += acc;
        }
      }
  }
  return mix;
}

}  // namespace idlma
