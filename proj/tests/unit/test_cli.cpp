// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "idlma/cli.hpp"
#include "idlma/metrics.hpp"
#include "idlma/mlp.hpp"
#include "json.hpp"
#include "support/synth.hpp"

namespace fs = std::filesystem;
using namespace idlma;

namespace {

constexpr double kRate = 8000.0;

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class Workspace {
 public:
  Workspace() {
    static int counter = 0;
    dir_ = fs::temp_directory_path() / ("idlma_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  fs::path dir_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Two band-limited sources and their 2x2 instantaneous mixture on disk.
struct Fixture {
  std::vector<std::vector<double>> sources;
  std::string s1, s2, mix;

  explicit Fixture(const Workspace& ws, std::uint64_t seed = 7, std::size_t length = 16000) {
    std::mt19937_64 rng(seed);
    sources.push_back(testing::band_limited_noise(length, 0.05, 0.45, rng));
    sources.push_back(testing::band_limited_noise(length, 0.35, 0.9, rng));
    s1 = ws.path("s1.wav");
    s2 = ws.path("s2.wav");
    mix = ws.path("mix.wav");
    write_wav(s1, MultichannelSignal::mono(sources[0], kRate), WavEncoding::kFloat32);
    write_wav(s2, MultichannelSignal::mono(sources[1], kRate), WavEncoding::kFloat32);
    const std::string spec = ws.path("spec.json");
    write_text(spec, R"({"type":"gain","rows":[[1.0,0.6],[0.5,1.0]]})");
    REQUIRE(invoke({"mix", "--source", s1, "--source", s2, "--spec", spec, "-o", mix}).code == 0);
  }
};

std::vector<std::string> separate_args(const Fixture& f, const std::string& prefix) {
  return {"separate", "-i", f.mix, "-o", prefix, "--source-model", "oracle",
          "--reference", f.s1, "--reference", f.s2, "--window-ms", "64", "--hop-ms", "32",
          "--outer-rounds", "3", "--inner-iters", "5"};
}

std::vector<nlohmann::json> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  return lines;
}

std::vector<double> quiet_noise(std::size_t n, std::mt19937_64& rng) {
  auto x = testing::white_noise(n, rng);
  for (double& v : x) v = std::clamp(0.2 * v, -0.9, 0.9);
  return x;
}

std::vector<double> mono(const std::string& path) { return read_wav(path).samples.at(0); }

int run_binary(const std::string& args) {
  const int status = std::system((std::string(IDLMA_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("mix: identity gains stack the sources and echo the spec") {
  Workspace ws;
  std::mt19937_64 rng(1);
  const auto a = quiet_noise(500, rng), b = quiet_noise(500, rng);
  write_wav(ws.path("a.wav"), MultichannelSignal::mono(a, kRate), WavEncoding::kFloat32);
  write_wav(ws.path("b.wav"), MultichannelSignal::mono(b, kRate), WavEncoding::kFloat32);
  write_text(ws.path("id.json"), R"({"type":"gain","rows":[[1,0],[0,1]]})");
  const auto r = invoke({"mix", "--source", ws.path("a.wav"), "--source", ws.path("b.wav"),
                      "--spec", ws.path("id.json"), "-o", ws.path("m.wav")});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out.substr(0, r.out.find('\n'))) ==
        nlohmann::json::parse(R"({"type":"gain","rows":[[1.0,0.0],[0.0,1.0]]})"));
  const auto m = read_wav(ws.path("m.wav"));
  REQUIRE(m.channels() == 2);
  for (std::size_t t = 0; t < 500; ++t) {
    CHECK(m.samples[0][t] == static_cast<double>(static_cast<float>(a[t])));
    CHECK(m.samples[1][t] == static_cast<double>(static_cast<float>(b[t])));
  }

  write_text(ws.path("rir.json"), R"({"type":"rir","rows":[[[1],[0]],[[0],[1]]]})");
  REQUIRE(invoke({"mix", "--source", ws.path("a.wav"), "--source", ws.path("b.wav"), "--spec",
               ws.path("rir.json"), "-o", ws.path("r.wav")})
              .code == 0);
  CHECK(slurp(ws.path("r.wav")) == slurp(ws.path("m.wav")));
}

TEST_CASE("mix: convolutive spec matches the library mixer") {
  Workspace ws;
  std::mt19937_64 rng(2);
  const auto a = quiet_noise(300, rng), b = quiet_noise(300, rng);
  write_wav(ws.path("a.wav"), MultichannelSignal::mono(a, kRate), WavEncoding::kFloat32);
  write_wav(ws.path("b.wav"), MultichannelSignal::mono(b, kRate), WavEncoding::kFloat32);
  const std::string text = R"({"type":"rir","rows":[[[0.5,0.2],[0,0,0.3]],[[0.1],[1,-0.4]]]})";
  write_text(ws.path("rir.json"), text);
  REQUIRE(invoke({"mix", "--source", ws.path("a.wav"), "--source", ws.path("b.wav"), "--spec",
               ws.path("rir.json"), "-o", ws.path("m.wav"), "--encoding", "float32"})
              .code == 0);
  const auto lib = simulate_mixture({read_wav(ws.path("a.wav")), read_wav(ws.path("b.wav"))},
                                    cli::parse_mixing_spec(text));
  const auto m = read_wav(ws.path("m.wav"));
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t t = 0; t < 300; ++t)
      CHECK(m.samples[ch][t] == static_cast<double>(static_cast<float>(lib.samples[ch][t])));
}

TEST_CASE("mix: validation failures") {
  Workspace ws;
  std::mt19937_64 rng(3);
  write_wav(ws.path("a.wav"), MultichannelSignal::mono(testing::white_noise(100, rng), 8000.0));
  write_wav(ws.path("b.wav"), MultichannelSignal::mono(testing::white_noise(100, rng), 16000.0));
  write_text(ws.path("id.json"), R"({"type":"gain","rows":[[1,0],[0,1]]})");
  const auto r = invoke({"mix", "--source", ws.path("a.wav"), "--source", ws.path("b.wav"),
                      "--spec", ws.path("id.json"), "-o", ws.path("m.wav")});
  CHECK(r.code == cli::kValidation);
  CHECK(r.err.find("sample rate") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.path("m.wav")));

  write_text(ws.path("bad.json"), R"({"type":"gain","rows":[[0,0],[0,1]]})");
  CHECK(invoke({"mix", "--source", ws.path("a.wav"), "--source", ws.path("a.wav"), "--spec",
             ws.path("bad.json"), "-o", ws.path("m.wav")})
            .code == cli::kValidation);
  CHECK(invoke({"mix", "--source", ws.path("missing.wav"), "--spec", ws.path("id.json"), "-o",
             ws.path("m.wav")})
            .code == cli::kValidation);
}

TEST_CASE("parse_mixing_spec rejects malformed documents") {
  CHECK_THROWS_AS(cli::parse_mixing_spec("not json"), MixingError);
  CHECK_THROWS_AS(cli::parse_mixing_spec(R"({"type":"gain"})"), MixingError);
  CHECK_THROWS_AS(cli::parse_mixing_spec(R"({"type":"delay","rows":[[1]]})"), MixingError);
  CHECK_THROWS_AS(cli::parse_mixing_spec(R"({"type":"gain","rows":[[1,2],[3]]})"), MixingError);
  CHECK_THROWS_AS(cli::parse_mixing_spec(R"({"type":"rir","rows":[[[]]]})"), MixingError);
  CHECK_THROWS_AS(cli::parse_mixing_spec(R"({"type":"gain","rows":[["x"]]})"), MixingError);
}

TEST_CASE("ms_to_even_samples") {
  CHECK(cli::ms_to_even_samples(64.0, 8000.0) == 512);
  CHECK(cli::ms_to_even_samples(512.0, 16000.0) == 8192);
  CHECK(cli::ms_to_even_samples(1.0, 3000.0) == 4);
}

TEST_CASE("separate: oracle t-model run writes outputs and a monotone trace") {
  Workspace ws;
  const Fixture f(ws);
  auto args = separate_args(f, ws.path("out"));
  args.insert(args.end(), {"--model", "t", "--nu", "1000"});
  const auto r = invoke(args);
  REQUIRE(r.code == 0);
  CHECK(r.out == ws.path("out") + "_1.wav\n" + ws.path("out") + "_2.wav\n");
  const auto trace = read_lines(ws.path("out") + "_trace.jsonl");
  REQUIRE(trace.size() == 15);
  for (std::size_t k = 0; k < trace.size(); ++k) {
    CHECK(trace[k]["round"] == k / 5);
    CHECK(trace[k]["sweep"] == k % 5);
    CHECK(trace[k]["wall_ms"].is_null());
    if (k % 5 != 0)
      CHECK(trace[k]["cost"].get<double>() <= trace[k - 1]["cost"].get<double>() + 1e-9);
  }
  const auto e1 = mono(ws.path("out_1.wav")), e2 = mono(ws.path("out_2.wav"));
  const auto report = evaluate({e1, e2}, f.sources, read_wav(f.mix).samples[0]);
  CHECK(report.mean_improvement() > 10.0);
}

TEST_CASE("separate: gauss equals t with huge nu") {
  Workspace ws;
  const Fixture f(ws);
  auto g = separate_args(f, ws.path("g"));
  g.insert(g.end(), {"--model", "gauss"});
  auto t = separate_args(f, ws.path("t"));
  t.insert(t.end(), {"--model", "t", "--nu", "1e12"});
  REQUIRE(invoke(g).code == 0);
  REQUIRE(invoke(t).code == 0);
  for (const char* n : {"_1.wav", "_2.wav"}) {
    const auto a = mono(ws.path("g") + n), b = mono(ws.path("t") + n);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
    CHECK(worst <= 1e-3);
  }
}

TEST_CASE("separate: zero outer rounds copies the reference channel") {
  Workspace ws;
  const Fixture f(ws);
  auto args = separate_args(f, ws.path("z"));
  *std::find(args.begin(), args.end(), "3") = "0";
  args.insert(args.end(), {"--ref-channel", "2"});
  REQUIRE(invoke(args).code == 0);
  const auto ref = read_wav(f.mix).samples[1];
  CHECK(mono(ws.path("z_1.wav")) == ref);
  CHECK(mono(ws.path("z_2.wav")) == ref);
  CHECK(slurp(ws.path("z_trace.jsonl")).empty());
}

TEST_CASE("separate: seeded NMF runs are byte-identical") {
  Workspace ws;
  const Fixture f(ws, 8, 8000);
  const auto args = [&](const std::string& prefix) {
    return std::vector<std::string>{"separate", "-i", f.mix, "-o", ws.path(prefix),
                                    "--source-model", "nmf", "--model", "gauss", "--bases", "4",
                                    "--window-ms", "64", "--hop-ms", "32", "--outer-rounds", "2",
                                    "--seed", "11"};
  };
  REQUIRE(invoke(args("a")).code == 0);
  REQUIRE(invoke(args("b")).code == 0);
  for (const char* n : {"_1.wav", "_2.wav", "_trace.jsonl"})
    CHECK(slurp(ws.path("a") + n) == slurp(ws.path("b") + n));
  CHECK(read_lines(ws.path("a_trace.jsonl")).size() == 20);
}

TEST_CASE("separate: invalid flags fail before inputs are touched") {
  Workspace ws;
  const std::string missing = ws.path("missing.wav");
  const std::vector<std::vector<std::string>> cases = {
      {"--source-model", "oracle", "--model", "cauchy", "--reference", missing},
      {"--source-model", "oracle", "--nu", "-1", "--reference", missing},
      {"--source-model", "oracle"},
      {"--source-model", "dnn"},
      {"--source-model", "dnn", "--weights", missing, "--reference", missing},
      {"--source-model", "nmf"},
      {"--source-model", "nmf", "--model", "gauss", "--bases", "0"},
      {"--source-model", "magic"},
      {"--source-model", "oracle", "--reference", missing, "--hop-ms", "600"},
      {"--source-model", "oracle", "--reference", missing, "--ref-channel", "0"},
      {"--source-model", "oracle", "--reference", missing, "--floor-mode", "adaptive"},
      {"--source-model", "oracle", "--reference", missing, "--encoding", "mp3"},
      {"--source-model", "oracle", "--reference", missing, "--threads", "0"},
      {"--source-model", "oracle", "--reference", missing, "--unknown-flag"},
  };
  for (const auto& extra : cases) {
    std::vector<std::string> args{"separate", "-i", missing, "-o", ws.path("x")};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = invoke(args);
    CHECK(r.code == cli::kValidation);
    CHECK(r.err.find("cannot open") == std::string::npos);
  }
  CHECK_FALSE(fs::exists(ws.path("x_trace.jsonl")));

  const auto io = invoke({"separate", "-i", missing, "-o", ws.path("x"), "--source-model", "nmf",
                       "--model", "gauss"});
  CHECK(io.code == cli::kIo);
}

TEST_CASE("separate: per-source counts and singular data") {
  Workspace ws;
  const Fixture f(ws);
  CHECK(invoke({"separate", "-i", f.mix, "-o", ws.path("x"), "--source-model", "oracle",
             "--reference", f.s1})
            .code == cli::kValidation);

  write_wav(ws.path("silent.wav"),
            MultichannelSignal{{std::vector<double>(4000, 0.0), std::vector<double>(4000, 0.0)}, kRate},
            WavEncoding::kFloat32);
  const auto r = invoke({"separate", "-i", ws.path("silent.wav"), "-o", ws.path("s"),
                      "--source-model", "nmf", "--model", "gauss", "--window-ms", "64",
                      "--hop-ms", "32"});
  CHECK(r.code == cli::kNumerical);
  CHECK(r.err.find("round 0, sweep 0") != std::string::npos);
  CHECK(fs::exists(ws.path("s_trace.jsonl")));
}

TEST_CASE("eval: report matches the metrics library") {
  Workspace ws;
  const Fixture f(ws);
  auto args = separate_args(f, ws.path("e"));
  REQUIRE(invoke(args).code == 0);
  const auto r = invoke({"eval", "--estimate", ws.path("e_2.wav"), "--estimate", ws.path("e_1.wav"),
                      "--reference", f.s1, "--reference", f.s2, "--mixture", f.mix});
  REQUIRE(r.code == 0);
  const auto lib = evaluate({mono(ws.path("e_2.wav")), mono(ws.path("e_1.wav"))},
                            {mono(f.s1), mono(f.s2)}, read_wav(f.mix).samples[0]);
  std::istringstream lines(r.out);
  std::string line;
  std::vector<nlohmann::json> parsed;
  while (std::getline(lines, line)) parsed.push_back(nlohmann::json::parse(line));
  REQUIRE(parsed.size() == 3);
  for (std::size_t n = 0; n < 2; ++n) {
    CHECK(parsed[n]["si_sdr_db"].get<double>() == lib.si_sdr[n]);
    CHECK(parsed[n]["si_sdr_improvement_db"].get<double>() == lib.improvement[n]);
    CHECK(parsed[n]["estimate"].get<std::size_t>() == lib.permutation[n] + 1);
  }
  CHECK(parsed[2]["permutation"] == nlohmann::json::array({2, 1}));

  const auto same = invoke({"eval", "--estimate", f.s1, "--reference", f.s1, "--mixture", f.mix});
  REQUIRE(same.code == 0);
  CHECK(nlohmann::json::parse(same.out.substr(0, same.out.find('\n')))["si_sdr_db"] == kSiSdrCap);
}

TEST_CASE("inspect-weights") {
  Workspace ws;
  MlpNetwork net;
  net.meta = {513, 0, 1e-5f};
  std::size_t in = 513;
  for (std::size_t out : {1024u, 1024u, 1024u, 1024u, 513u}) {
    net.layers.push_back({out, in, std::vector<float>(out * in, 0.01f), std::vector<float>(out)});
    in = out;
  }
  save_network(ws.path("big.idlm1"), net);
  const auto r = invoke({"inspect-weights", ws.path("big.idlm1")});
  REQUIRE(r.code == 0);
  std::vector<std::string> widths;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);)
    if (line.rfind("input", 0) == 0 || line.rfind("hidden", 0) == 0 || line.rfind("output", 0) == 0)
      widths.push_back(line);
  CHECK(widths == std::vector<std::string>{"input: 513", "hidden 1: 1024", "hidden 2: 1024",
                                           "hidden 3: 1024", "hidden 4: 1024", "output: 513"});

  auto bytes = slurp(ws.path("big.idlm1"));
  bytes.resize(bytes.size() / 2);
  std::ofstream(ws.path("cut.idlm1"), std::ios::binary) << bytes;
  const auto cut = invoke({"inspect-weights", ws.path("cut.idlm1")});
  CHECK(cut.code == cli::kIo);
  CHECK(cut.err.find("truncated payload") != std::string::npos);

  std::ofstream(ws.path("magic.idlm1"), std::ios::binary) << "IDLM2";
  CHECK(invoke({"inspect-weights", ws.path("magic.idlm1")}).err.find("bad magic") != std::string::npos);
}

TEST_CASE("inspect-weights: golden checksum") {
  const std::string dir = IDLMA_TEST_DATA_DIR;
  std::ifstream js(dir + "/golden_small.json");
  const auto golden = nlohmann::json::parse(js);
  std::ostringstream hex;
  hex << std::hex << std::setw(8) << std::setfill('0') << golden["crc32"].get<std::uint32_t>();
  const auto r = invoke({"inspect-weights", dir + "/golden_small.idlm1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("crc32: " + hex.str() + "\n") != std::string::npos);
}

TEST_CASE("installed binary: exit codes") {
  const std::string dir = IDLMA_TEST_DATA_DIR;
  CHECK(run_binary("") == cli::kValidation);
  CHECK(run_binary("inspect-weights " + dir + "/golden_small.idlm1") == cli::kSuccess);
  CHECK(run_binary("inspect-weights /nonexistent.idlm1") == cli::kIo);
  CHECK(run_binary("--help") == cli::kSuccess);
}
