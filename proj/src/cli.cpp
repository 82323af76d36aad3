// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "idlma/metrics.hpp"
#include "idlma/mlp.hpp"
#include "idlma/source_model.hpp"
#include "idlma/spatial.hpp"
#include "idlma/stft.hpp"
#include "json.hpp"

namespace idlma::cli {

namespace {

using nlohmann::json;

// Bad flag values or combinations; reported before any input is read.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MixOptions {
  std::vector<std::string> sources;
  std::string spec;
  std::string output;
  std::string encoding = "float32";
};

struct SeparateOptions {
  std::string input;
  std::string output_prefix;
  std::string trace;
  std::string model = "t";
  double nu = 1000.0;
  std::size_t outer_rounds = 10;
  std::size_t inner_iters = 10;
  double window_ms = 512.0;
  double hop_ms = 256.0;
  std::size_t ref_channel = 1;
  std::string source_model;
  std::vector<std::string> references;
  std::vector<std::string> weights;
  std::size_t bases = 20;
  std::string floor_mode = "relative";
  double floor_value = -1.0;  // unset: 0.1 relative, 1e-6 fixed
  std::uint64_t seed = 0;
  bool timing = false;
  std::string encoding = "float32";
  unsigned threads = 1;
};

struct EvalOptions {
  std::vector<std::string> estimates;
  std::vector<std::string> references;
  std::string mixture;
  std::size_t ref_channel = 1;
};

WavEncoding parse_encoding(const std::string& name) {
  if (name == "pcm16") return WavEncoding::kPcm16;
  if (name == "float32") return WavEncoding::kFloat32;
  throw UsageError("unknown encoding '" + name + "' (expected pcm16 or float32)");
}

std::vector<double> read_mono(const std::string& path, double rate, std::size_t length) {
  const MultichannelSignal s = read_wav(path);
  if (s.channels() != 1) throw UsageError(path + ": expected a single-channel file");
  if (s.sample_rate != rate) throw UsageError(path + ": sample rate differs from the mixture");
  if (s.length() != length) throw UsageError(path + ": length differs from the mixture");
  return s.samples[0];
}

int cmd_mix(const MixOptions& opt, std::ostream& out) {
  const WavEncoding encoding = parse_encoding(opt.encoding);
  if (opt.sources.empty()) throw UsageError("at least one --source is required");
  const MixingSpec spec = load_mixing_spec(opt.spec);
  if (mixing_sources(spec) != opt.sources.size())
    throw UsageError("mixing spec has " + std::to_string(mixing_sources(spec)) +
                     " source columns but " + std::to_string(opt.sources.size()) +
                     " sources were given");
  std::vector<MultichannelSignal> sources;
  for (const auto& path : opt.sources) {
    MultichannelSignal s = read_wav(path);
    if (s.channels() != 1) throw UsageError(path + ": sources must be single-channel");
    sources.push_back(std::move(s));
  }
  const MultichannelSignal mix = simulate_mixture(sources, spec);
  const WavWriteReport report = write_wav(opt.output, mix, encoding);
  out << format_mixing_spec(spec) << "\n";
  if (report.clipped > 0) out << "warning: " << report.clipped << " samples clipped\n";
  return kSuccess;
}

void validate(const SeparateOptions& opt) {
  if (opt.model != "gauss" && opt.model != "t")
    throw UsageError("--model must be gauss or t");
  if (opt.model == "t" && !(opt.nu > 0.0 && std::isfinite(opt.nu)))
    throw UsageError("--nu must be a positive finite number");
  if (opt.inner_iters == 0) throw UsageError("--inner-iters must be positive");
  if (!(opt.window_ms > 0.0) || !(opt.hop_ms > 0.0) || opt.hop_ms > opt.window_ms)
    throw UsageError("need 0 < --hop-ms <= --window-ms");
  if (opt.ref_channel == 0) throw UsageError("--ref-channel is 1-based");
  if (opt.floor_mode != "relative" && opt.floor_mode != "fixed")
    throw UsageError("--floor-mode must be relative or fixed");
  if (opt.floor_value != -1.0 && !(opt.floor_value >= 0.0))
    throw UsageError("--floor-value must be nonnegative");
  if (opt.threads == 0) throw UsageError("--threads must be positive");
  parse_encoding(opt.encoding);

  if (opt.source_model == "oracle") {
    if (opt.references.empty()) throw UsageError("oracle source model requires --reference per source");
    if (!opt.weights.empty()) throw UsageError("--weights is only valid with --source-model dnn");
  } else if (opt.source_model == "dnn") {
    if (opt.weights.empty()) throw UsageError("dnn source model requires --weights per source");
    if (!opt.references.empty()) throw UsageError("--reference is only valid with --source-model oracle");
  } else if (opt.source_model == "nmf") {
    if (opt.model != "gauss") throw UsageError("nmf source model supports --model gauss only");
    if (opt.bases == 0) throw UsageError("--bases must be positive");
    if (!opt.references.empty() || !opt.weights.empty())
      throw UsageError("nmf source model takes neither --reference nor --weights");
  } else {
    throw UsageError("--source-model must be oracle, nmf or dnn");
  }
}

int cmd_separate(const SeparateOptions& opt, std::ostream& out) {
  validate(opt);
  const WavEncoding encoding = parse_encoding(opt.encoding);

  const MultichannelSignal mix = read_wav(opt.input);
  const std::size_t channels = mix.channels();
  const std::size_t length = mix.length();
  const std::size_t ref = opt.ref_channel - 1;
  if (ref >= channels)
    throw UsageError("--ref-channel " + std::to_string(opt.ref_channel) + " exceeds the " +
                     std::to_string(channels) + " mixture channels");
  const auto need_per_source = [&](const std::vector<std::string>& v, const char* flag) {
    if (v.size() != channels)
      throw UsageError(std::string(flag) + " given " + std::to_string(v.size()) +
                       " times for a " + std::to_string(channels) + "-channel mixture");
  };
  if (opt.source_model == "oracle") need_per_source(opt.references, "--reference");
  if (opt.source_model == "dnn") need_per_source(opt.weights, "--weights");

  StftConfig config;
  config.window_len = ms_to_even_samples(opt.window_ms, mix.sample_rate);
  config.hop = static_cast<std::size_t>(std::lround(opt.hop_ms * mix.sample_rate / 1000.0));
  config.validate();
  if (length < config.window_len)
    throw UsageError("mixture is shorter than one analysis window");

  std::vector<ComplexSpectrogram> x;
  for (const auto& ch : mix.samples) x.push_back(stft(ch, config));

  const std::string trace_path =
      opt.trace.empty() ? opt.output_prefix + "_trace.jsonl" : opt.trace;
  std::ofstream trace(trace_path, std::ios::trunc);
  if (!trace) throw WavWriteError("cannot open trace file " + trace_path);
  const TraceSink sink = [&](const TraceRecord& r) {
    trace << format_trace_record(r, opt.timing) << '\n';
    trace.flush();
  };

  std::vector<std::vector<double>> outputs;
  if (opt.outer_rounds == 0) {
    // Nothing to separate: every slot carries the reference microphone.
    outputs.assign(channels, mix.samples[ref]);
  } else {
    SeparationResult result;
    if (opt.source_model == "nmf") {
      IlrmaConfig ilrma;
      ilrma.bases = opt.bases;
      ilrma.iterations = opt.outer_rounds * opt.inner_iters;
      ilrma.seed = opt.seed;
      ilrma.ref_channel = ref;
      ilrma.threads = opt.threads;
      ilrma.on_sweep = sink;
      result = run_ilrma(std::move(x), ilrma);
    } else {
      std::vector<std::unique_ptr<SourceModel>> models;
      if (opt.source_model == "oracle") {
        for (const auto& path : opt.references)
          models.push_back(oracle_model(stft(read_mono(path, mix.sample_rate, length), config)));
      } else {
        for (const auto& path : opt.weights) {
          MlpNetwork net = load_network(path);
          if (net.meta.freq_bins != config.bins())
            throw UsageError(path + ": network expects " + std::to_string(net.meta.freq_bins) +
                             " bins but the STFT has " + std::to_string(config.bins()));
          models.push_back(dnn_model(std::move(net), opt.threads));
        }
      }
      std::vector<const SourceModel*> views;
      for (const auto& m : models) views.push_back(m.get());

      IdlmaConfig idlma;
      idlma.nu = opt.model == "gauss" ? kGaussianNu : opt.nu;
      idlma.outer_rounds = opt.outer_rounds;
      idlma.inner_spatial_iters = opt.inner_iters;
      const bool relative = opt.floor_mode == "relative";
      const double value = opt.floor_value >= 0.0 ? opt.floor_value : (relative ? 0.1 : 1e-6);
      idlma.floor = relative ? FloorPolicy::relative(value) : FloorPolicy::fixed(value);
      idlma.ref_channel = ref;
      idlma.threads = opt.threads;
      idlma.on_sweep = sink;
      result = run_idlma(std::move(x), views, idlma);
    }
    for (const auto& y : result.y) outputs.push_back(istft(y, config, length));
  }

  std::size_t clipped = 0;
  for (std::size_t n = 0; n < outputs.size(); ++n) {
    const std::string path = opt.output_prefix + "_" + std::to_string(n + 1) + ".wav";
    clipped += write_wav(path, MultichannelSignal::mono(outputs[n], mix.sample_rate), encoding).clipped;
    out << path << "\n";
  }
  if (clipped > 0) out << "warning: " << clipped << " samples clipped\n";
  return kSuccess;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.estimates.empty() || opt.estimates.size() != opt.references.size())
    throw UsageError("give the same nonzero number of --estimate and --reference files");
  if (opt.ref_channel == 0) throw UsageError("--ref-channel is 1-based");
  const MultichannelSignal mix = read_wav(opt.mixture);
  if (opt.ref_channel > mix.channels()) throw UsageError("--ref-channel exceeds mixture channels");
  const auto load = [&](const std::vector<std::string>& paths) {
    std::vector<std::vector<double>> signals;
    for (const auto& p : paths) {
      const MultichannelSignal s = read_wav(p);
      if (s.channels() != 1) throw UsageError(p + ": expected a single-channel file");
      signals.push_back(s.samples[0]);
    }
    return signals;
  };
  const EvalReport report =
      evaluate(load(opt.estimates), load(opt.references), mix.samples[opt.ref_channel - 1]);
  out << format_report(report);
  return kSuccess;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MlpFormatError(MlpFormatError::Kind::kIo, "cannot open " + path);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const MlpNetwork net = parse_network(bytes);
  out << "file: " << path << "\n";
  out << "layers: " << net.layers.size() << "\n";
  out << "freq_bins: " << net.meta.freq_bins << "\n";
  out << "context: " << net.meta.context << "\n";
  out << "delta2: " << std::setprecision(9) << net.meta.delta2 << "\n";
  out << "input: " << net.input_dim() << "\n";
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l)
    out << "hidden " << l + 1 << ": " << net.layers[l].rows << "\n";
  out << "output: " << net.output_dim() << "\n";
  std::ostringstream crc;
  crc << std::hex << std::setw(8) << std::setfill('0') << network_checksum(bytes);
  out << "crc32: " << crc.str() << "\n";
  return kSuccess;
}

}  // namespace

std::size_t ms_to_even_samples(double ms, double sample_rate) {
  const double samples = ms * sample_rate / 1000.0;
  return 2 * static_cast<std::size_t>(std::lround(samples / 2.0));
}

MixingSpec parse_mixing_spec(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MixingError(std::string("mixing spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("type") || !doc.contains("rows"))
    throw MixingError("mixing spec needs \"type\" and \"rows\"");
  const auto& rows = doc["rows"];
  if (!rows.is_array() || rows.empty() || !rows[0].is_array() || rows[0].empty())
    throw MixingError("mixing spec rows must be a nonempty matrix");
  const std::size_t m = rows.size();
  const std::size_t n = rows[0].size();
  for (const auto& r : rows)
    if (!r.is_array() || r.size() != n) throw MixingError("mixing spec rows are ragged");

  const std::string type = doc["type"].get<std::string>();
  MixingSpec spec;
  try {
    if (type == "gain") {
      GainMixing g{Grid<double>(m, n)};
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g.gain(r, c) = rows[r][c].get<double>();
      spec = std::move(g);
    } else if (type == "rir") {
      RirMixing h{Grid<std::vector<double>>(m, n)};
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          h.taps(r, c) = rows[r][c].get<std::vector<double>>();
          if (h.taps(r, c).empty()) throw MixingError("impulse responses need at least one tap");
        }
      spec = std::move(h);
    } else {
      throw MixingError("unknown mixing type '" + type + "' (expected gain or rir)");
    }
  } catch (const json::exception& e) {
    throw MixingError(std::string("malformed mixing spec: ") + e.what());
  }
  validate_mixing(spec);
  return spec;
}

MixingSpec load_mixing_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw WavReadError("cannot open mixing spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mixing_spec(buf.str());
}

std::string format_mixing_spec(const MixingSpec& spec) {
  json doc;
  json rows = json::array();
  if (const auto* g = std::get_if<GainMixing>(&spec)) {
    doc["type"] = "gain";
    for (std::size_t r = 0; r < g->gain.rows(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < g->gain.cols(); ++c) row.push_back(g->gain(r, c));
      rows.push_back(row);
    }
  } else {
    const auto& h = std::get<RirMixing>(spec);
    doc["type"] = "rir";
    for (std::size_t r = 0; r < h.taps.rows(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < h.taps.cols(); ++c) row.push_back(h.taps(r, c));
      rows.push_back(row);
    }
  }
  doc["rows"] = rows;
  return doc.dump();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Determined multichannel source separation (IDLMA / ILRMA)", "idlma"};
  app.require_subcommand(1);

  MixOptions mix;
  auto* mix_cmd = app.add_subcommand("mix", "Synthesize a mixture from single-channel sources");
  mix_cmd->add_option("--source", mix.sources, "Source WAV (repeat per source)")->required();
  mix_cmd->add_option("--spec", mix.spec, "Mixing spec JSON file")->required();
  mix_cmd->add_option("-o,--output", mix.output, "Output mixture WAV")->required();
  mix_cmd->add_option("--encoding", mix.encoding, "pcm16 or float32");

  SeparateOptions sep;
  auto* sep_cmd = app.add_subcommand("separate", "Separate a determined mixture");
  sep_cmd->add_option("-i,--input", sep.input, "Mixture WAV")->required();
  sep_cmd->add_option("-o,--output-prefix", sep.output_prefix,
                      "Writes <prefix>_<n>.wav per source")->required();
  sep_cmd->add_option("--trace", sep.trace, "Trace file (default <prefix>_trace.jsonl)");
  sep_cmd->add_option("--model", sep.model, "Source distribution: gauss or t");
  sep_cmd->add_option("--nu", sep.nu, "Degrees of freedom for --model t");
  sep_cmd->add_option("--outer-rounds", sep.outer_rounds, "Source-model updates");
  sep_cmd->add_option("--inner-iters", sep.inner_iters, "Spatial sweeps per source-model update");
  sep_cmd->add_option("--window-ms", sep.window_ms, "Hamming window length in ms");
  sep_cmd->add_option("--hop-ms", sep.hop_ms, "Frame shift in ms");
  sep_cmd->add_option("--ref-channel", sep.ref_channel, "Back-projection channel (1-based)");
  sep_cmd->add_option("--source-model", sep.source_model, "oracle, nmf or dnn")->required();
  sep_cmd->add_option("--reference", sep.references, "Oracle reference WAV per source");
  sep_cmd->add_option("--weights", sep.weights, "IDLM1 network per source");
  sep_cmd->add_option("--bases", sep.bases, "NMF bases per source");
  sep_cmd->add_option("--floor-mode", sep.floor_mode, "relative or fixed");
  sep_cmd->add_option("--floor-value", sep.floor_value,
                      "Relative coefficient (default 0.1) or fixed floor (default 1e-6)");
  sep_cmd->add_option("--seed", sep.seed, "NMF initialization seed");
  sep_cmd->add_flag("--timing", sep.timing, "Record wall-clock time per sweep in the trace");
  sep_cmd->add_option("--encoding", sep.encoding, "pcm16 or float32");
  sep_cmd->add_option("--threads", sep.threads, "Worker threads for per-bin updates");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score estimates against references (SI-SDR)");
  eval_cmd->add_option("--estimate", ev.estimates, "Estimate WAV (repeat)")->required();
  eval_cmd->add_option("--reference", ev.references, "Reference WAV (repeat)")->required();
  eval_cmd->add_option("--mixture", ev.mixture, "Mixture WAV")->required();
  eval_cmd->add_option("--ref-channel", ev.ref_channel, "Mixture channel for the baseline (1-based)");

  std::string weights_path;
  auto* inspect_cmd = app.add_subcommand("inspect-weights", "Describe an IDLM1 network file");
  inspect_cmd->add_option("path", weights_path, "IDLM1 file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    if (*mix_cmd) return cmd_mix(mix, out);
    if (*sep_cmd) return cmd_separate(sep, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*inspect_cmd) return cmd_inspect(weights_path, out);
  } catch (const MlpFormatError& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return kIo;
  } catch (const WavReadError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const UnsupportedEncodingError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const WavWriteError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const SeparationError& e) {
    err << "error: numerical failure in round " << e.round() << ", sweep " << e.sweep()
        << ", bin " << e.bin() << ", source " << e.source() + 1 << ": " << e.what() << "\n";
    return kNumerical;
  } catch (const SingularMatrixError& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::domain_error& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}

}  // namespace idlma::cli
