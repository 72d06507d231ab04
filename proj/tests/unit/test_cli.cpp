#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "microresnet/checkpoint.hpp"
#include "microresnet/gradcheck_suite.hpp"
#include "microresnet/metrics.hpp"

using namespace microresnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "microresnet_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string entry_lines(const std::string& report) {
  std::istringstream in(report);
  std::string out, line;
  while (std::getline(in, line))
    if (line.rfind("name:", 0) != 0) out += line + "\n";
  return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

const char* kMini = "Conv 8\nAvg 2\nBB 8\nAvg 4\nFC 4\n";

std::vector<std::string> mini_train(const fs::path& dir, const fs::path& arch, const std::string& epochs) {
  return {"train", "--arch", arch.string(), "--data", "synth:16x4x8", "--val", "synth:8x4x8", "--epochs", epochs,
          "--seed", "5", "--batch", "4", "--out", (dir / "run").string()};
}

}  // namespace

TEST_CASE("train: net1 on synthetic data writes two metric rows") {
  const fs::path dir = scratch("net1");
  const auto r = run({"train", "--arch", "net1", "--data", "synth:32x8", "--val", "synth:16x8", "--epochs", "2",
                      "--seed", "7", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = read_metrics_csv(dir / "metrics.csv");
  CHECK(rows.size() == 2);
  CHECK(fs::exists(dir / "final.ckpt"));
  const std::string resolved = slurp(dir / "resolved-config.txt");
  CHECK(resolved.find("crop-prob = 0.7\n") != std::string::npos);
  CHECK(resolved.find("flip-prob = 0.5\n") != std::string::npos);
  CHECK(r.out.find("crop-prob = 0.7") != std::string::npos);
}

TEST_CASE("train: exit codes") {
  const fs::path dir = scratch("codes");
  const auto unknown = run({"train", "--arch", "net7", "--data", "synth:8x4", "--val", "synth:8x4", "--out",
                            dir.string()});
  CHECK(unknown.code == 1);
  for (const char* name : {"net1", "net2", "net3", "net4", "net5", "net6"}) {
    CHECK(unknown.err.find(name) != std::string::npos);
  }
  CHECK(run({"train", "--arch", "net1", "--data", (dir / "missing").string(), "--val", "synth:8x4"}).code == 2);
  CHECK(run({"train", "--arch", "net1", "--data", "synth:8x4", "--val", "synth:8x4", "--lr", "0"}).code == 1);
  CHECK(run({"train", "--arch", "net1", "--data", "synth:8x4", "--val", "synth:8x4", "--augment", "maybe"}).code == 1);
  CHECK(run({"train", "--data", "synth:8x4", "--val", "synth:8x4"}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"--help"}).code == 0);

  std::ofstream(dir / "tiny.arch") << kMini;
  const auto nan = run({"train", "--arch", (dir / "tiny.arch").string(), "--data", "synth:16x4x8", "--val",
                        "synth:8x4x8", "--lr", "1e30", "--batch", "4", "--epochs", "3", "--out", dir.string()});
  CHECK(nan.code == 3);
  CHECK(nan.err.find("batch") != std::string::npos);
  // The aborted epoch leaves no partial row behind.
  CHECK(read_metrics_csv(dir / "metrics.csv").empty());
}

TEST_CASE("train: config file keys, normalization and precedence") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "tiny.arch") << kMini;
  std::ofstream(dir / "run.cfg") << "# experiment\narch = " << (dir / "tiny.arch").string()
                                 << "\ndata = synth:16x4x8\nval = synth:8x4x8\ncrop_prob = 0.25\n"
                                    "epochs = 1\nbatch = 8\nseed = 3\n";
  const auto r = run({"train", "--config", (dir / "run.cfg").string(), "--seed", "4", "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  const std::string resolved = slurp(dir / "a" / "resolved-config.txt");
  CHECK(resolved.find("crop-prob = 0.25\n") != std::string::npos);
  CHECK(resolved.find("seed = 4\n") != std::string::npos);
  CHECK(resolved.find("batch = 8\n") != std::string::npos);

  std::ofstream(dir / "typo.cfg") << "crop_probability = 0.3\n";
  const auto typo = run({"train", "--config", (dir / "typo.cfg").string(), "--arch", "net1", "--data", "synth:8x4",
                         "--val", "synth:8x4"});
  CHECK(typo.code == 1);
  CHECK(typo.err.find("crop-probability") != std::string::npos);

  std::ofstream(dir / "arch.cfg") << "to_plain = true\n";
  const auto plain = run({"arch", "net1", "--config", (dir / "arch.cfg").string()});
  CHECK(plain.code == 0);
  CHECK(plain.out.find("name: net1-plain") != std::string::npos);
}

TEST_CASE("train: repeated runs are byte-identical and resume continues the run") {
  const fs::path dir = scratch("determinism");
  const fs::path arch = dir / "tiny.arch";
  std::ofstream(arch) << kMini;
  auto first = mini_train(dir / "a", arch, "4");
  auto second = mini_train(dir / "b", arch, "4");
  REQUIRE(run(first).code == 0);
  REQUIRE(run(second).code == 0);
  CHECK(slurp(dir / "a/run/metrics.csv") == slurp(dir / "b/run/metrics.csv"));
  CHECK(slurp(dir / "a/run/final.ckpt") == slurp(dir / "b/run/final.ckpt"));

  REQUIRE(run(mini_train(dir / "c", arch, "2")).code == 0);
  auto resume = mini_train(dir / "c", arch, "4");
  resume.insert(resume.end(), {"--resume", (dir / "c/run/final.ckpt").string()});
  REQUIRE(run(resume).code == 0);
  CHECK(slurp(dir / "c/run/metrics.csv") == slurp(dir / "a/run/metrics.csv"));
  CHECK(slurp(dir / "c/run/final.ckpt") == slurp(dir / "a/run/final.ckpt"));

  auto mismatched = mini_train(dir / "d", "net1", "4");
  mismatched.insert(mismatched.end(), {"--resume", (dir / "c/run/final.ckpt").string()});
  CHECK(run(mismatched).code == 1);
}

TEST_CASE("arch command") {
  const auto net1 = run({"arch", "net1"});
  REQUIRE(net1.code == 0);
  CHECK(net1.out.find("layers: 15\n") != std::string::npos);
  CHECK(net1.out.find("512x2x2") != std::string::npos);
  CHECK(net1.out.find("warning") == std::string::npos);

  const auto net4 = run({"arch", "net4"});
  CHECK(net4.out.find("layers: 19\n") != std::string::npos);
  CHECK(net4.out.find("is 21; computed 19") != std::string::npos);
  const auto net5 = run({"arch", "net5"});
  CHECK(net5.out.find("is 15; computed 13") != std::string::npos);

  CHECK(entry_lines(run({"arch", "net1", "--to-plain"}).out) == entry_lines(run({"arch", "net6"}).out));

  const auto json = nlohmann::json::parse(run({"arch", "net2", "--json"}).out);
  CHECK(json["layers"] == 12);
  CHECK(json["entries"].size() == 12);
  CHECK(json["entries"][10]["shape"] == nlohmann::json::array({512, 1, 1}));

  const fs::path dir = scratch("arch");
  std::ofstream(dir / "bad.arch") << "Conv 8\nPool 2\nFC 2\n";
  const auto bad = run({"arch", (dir / "bad.arch").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("line 2") != std::string::npos);
  const auto shape = run({"arch", "net1", "--input", "3x63x63"});
  CHECK(shape.code == 1);
  CHECK(shape.err.find("Avg 2") != std::string::npos);
}

TEST_CASE("gradcheck command") {
  const auto relu = run({"gradcheck", "--op", "relu"});
  CHECK(relu.code == 0);
  CHECK(relu.out.find("pass") != std::string::npos);
  const auto all = run({"gradcheck", "--op", "all"});
  CHECK(all.code == 0);
  CHECK(count(all.out, " pass\n") == gradcheck_op_names().size());
  CHECK(run({"gradcheck", "--op", "tanh"}).code == 1);
}

TEST_CASE("augment-preview command") {
  const fs::path dir = scratch("preview");
  const auto a = run({"augment-preview", "--data", "synth:8x4", "--index", "3", "--n", "9", "--seed", "1", "--out",
                      (dir / "a").string()});
  REQUIRE(a.code == 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) files += entry.path().extension() == ".ppm";
  CHECK(files == 10);
  CHECK(slurp(dir / "a/original.ppm").rfind("P6\n32 32\n255\n", 0) == 0);
  CHECK(slurp(dir / "a/original.ppm").size() == 13 + 32 * 32 * 3);

  REQUIRE(run({"augment-preview", "--data", "synth:8x4", "--index", "3", "--n", "9", "--seed", "1", "--out",
               (dir / "b").string()})
              .code == 0);
  for (int i = 1; i <= 9; ++i) {
    const std::string name = "variant-" + std::to_string(i) + ".ppm";
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }

  REQUIRE(run({"augment-preview", "--data", "synth:8x4", "--index", "3", "--n", "4", "--crop-prob", "0",
               "--flip-prob", "0", "--out", (dir / "c").string()})
              .code == 0);
  for (int i = 1; i <= 4; ++i) {
    CHECK(slurp(dir / "c" / ("variant-" + std::to_string(i) + ".ppm")) == slurp(dir / "c/original.ppm"));
  }
  CHECK(run({"augment-preview", "--data", "synth:8x4", "--index", "8", "--out", (dir / "d").string()}).code == 1);
}

TEST_CASE("plot command") {
  const fs::path dir = scratch("plot");
  const std::string header = std::string(kMetricsHeader) + "\n";
  std::ofstream(dir / "resnet.csv") << header << format_metrics_row(MetricsRow::make(1, 2.0, 0.3, 2.1, 0.25)) << "\n"
                                    << format_metrics_row(MetricsRow::make(2, 1.5, 0.5, 1.8, 0.4)) << "\n";
  std::ofstream(dir / "plain.csv") << header << format_metrics_row(MetricsRow::make(1, 2.2, 0.2, 2.2, 0.2)) << "\n"
                                   << format_metrics_row(MetricsRow::make(2, 1.9, 0.3, 2.0, 0.3)) << "\n";
  const auto acc = run({"plot", "--metrics", (dir / "resnet.csv").string(), (dir / "plain.csv").string(), "--kind",
                        "acc", "--out", (dir / "acc.svg").string()});
  REQUIRE(acc.code == 0);
  const std::string svg = slurp(dir / "acc.svg");
  CHECK(count(svg, "<polyline") == 4);
  CHECK(count(svg, "stroke-dasharray") == 4);  // two val curves plus their legend samples
  CHECK(svg.find(">resnet train<") != std::string::npos);
  CHECK(svg.find(">plain val<") != std::string::npos);
  CHECK(svg.find(">epoch<") != std::string::npos);
  CHECK(svg.find(">accuracy<") != std::string::npos);

  REQUIRE(run({"plot", "--metrics", (dir / "resnet.csv").string(), (dir / "plain.csv").string(), "--kind", "loss",
               "--out", (dir / "loss.svg").string()})
              .code == 0);
  CHECK(count(slurp(dir / "loss.svg"), "<polyline") == 2);
  CHECK(slurp(dir / "acc.svg") == svg);

  std::ofstream(dir / "empty.csv").close();
  CHECK(run({"plot", "--metrics", (dir / "empty.csv").string(), "--out", (dir / "x.svg").string()}).code == 1);
  std::ofstream(dir / "header-only.csv") << header;
  CHECK(run({"plot", "--metrics", (dir / "header-only.csv").string(), "--out", (dir / "x.svg").string()}).code == 1);
  std::ofstream(dir / "bad.csv") << "epoch,acc\n1,0.5\n";
  CHECK(run({"plot", "--metrics", (dir / "bad.csv").string(), "--out", (dir / "x.svg").string()}).code == 1);
}

TEST_CASE("eval command") {
  const fs::path dir = scratch("eval");
  const fs::path arch = dir / "tiny.arch";
  std::ofstream(arch) << kMini;
  REQUIRE(run(mini_train(dir, arch, "1")).code == 0);
  const std::string ckpt = (dir / "run/final.ckpt").string();
  const auto a = run({"eval", "--ckpt", ckpt, "--data", "synth:16x4x8"});
  const auto b = run({"eval", "--ckpt", ckpt, "--data", "synth:16x4x8"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("accuracy: ") != std::string::npos);
  CHECK(a.out.find("loss: ") != std::string::npos);
  CHECK(run({"eval", "--ckpt", (dir / "nothing.ckpt").string(), "--data", "synth:16x4x8"}).code == 1);
  CHECK(run({"eval", "--ckpt", ckpt, "--data", "synth:16x4x16"}).code == 1);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK(run({"eval", "--ckpt", (dir / "junk.ckpt").string(), "--data", "synth:16x4x8"}).code == 1);
}

TEST_CASE("data specs and convert") {
  CHECK(cli::load_data("synth:12x3").height == 32);
  CHECK(cli::load_data("synth:12x3x8").height == 8);
  CHECK(cli::load_data("synth:12x3x8", cli::DataRole::train).pixels !=
        cli::load_data("synth:12x3x8", cli::DataRole::val).pixels);
  CHECK(cli::load_data("synth:12x3x8@4", cli::DataRole::train).pixels ==
        cli::load_data("synth:12x3x8@4", cli::DataRole::val).pixels);
  CHECK(cli::load_data("synth:12x3x8", cli::DataRole::train, 5).size() == 5);
  CHECK_THROWS(cli::load_data("synth:12"));
  CHECK_THROWS(cli::load_data("synth:axb"));

  const fs::path dir = scratch("convert");
  REQUIRE(run({"convert", "--data", "synth:12x3x8", "--out", (dir / "raw").string()}).code == 0);
  CHECK(load_raw_dataset(dir / "raw").pixels == cli::load_data("synth:12x3x8").pixels);
  CHECK(cli::load_data((dir / "raw").string()).size() == 12);
}
