#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "microresnet/errors.hpp"

namespace microresnet::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value == 0) {
    throw ValueError("bad " + std::string(what) + " '" + std::string(text) + "' in data spec");
  }
  return value;
}

Dataset load_synth(std::string_view body, DataRole role) {
  std::uint64_t seed = role == DataRole::train ? 0 : 1;
  if (const auto at = body.find('@'); at != std::string_view::npos) {
    seed = parse_count(body.substr(at + 1), "seed");
    body = body.substr(0, at);
  }
  std::vector<std::size_t> parts;
  std::size_t start = 0;
  while (true) {
    const auto x = body.find('x', start);
    parts.push_back(parse_count(body.substr(start, x - start), "size"));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) throw ValueError("synth spec must be synth:NxK or synth:NxKxS");
  return synth_dataset(parts[0], parts[1], parts.size() == 3 ? parts[2] : 32, seed);
}

// Moves "--config FILE" contents in front of the command's own flags, so
// flags given on the command line are parsed last and win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.empty()) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;

  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config_file(path)) {
    const CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ValueError(path + ": unknown key '" + key + "' for command " + args[0]);
    if (opt->get_expected_max() == 0) {
      injected.push_back("--" + key + "=" + value);
    } else {
      injected.push_back("--" + key);
      std::istringstream words(value);
      for (std::string w; words >> w;) injected.push_back(w);
    }
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

Dataset load_data(std::string_view spec, DataRole role, std::size_t limit) {
  if (spec.empty()) throw ValueError("missing data spec");
  Dataset ds;
  if (spec.rfind("synth:", 0) == 0) {
    ds = load_synth(spec.substr(6), role);
  } else if (spec.rfind("cifar:", 0) == 0) {
    std::vector<std::filesystem::path> paths;
    std::string_view rest = spec.substr(6);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      paths.emplace_back(std::string(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    ds = load_cifar10_bin(paths);
  } else {
    ds = load_raw_dataset(std::string(spec));
  }
  return limit > 0 ? ds.head(limit) : ds;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValueError(path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    entries.emplace_back(key, trim(std::string_view(body).substr(eq + 1)));
  }
  return entries;
}

void write_ppm(const ByteImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> rgb(img.width * img.height * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        rgb[(y * img.width + x) * 3 + c] = static_cast<char>(img.at(img.channels == 3 ? c : 0, y, x));
      }
  out.write(rgb.data(), static_cast<std::streamsize>(rgb.size()));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Small residual networks: training, inspection and diagnostics", "microresnet"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config;

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a network and write metrics.csv, final.ckpt, resolved-config.txt");
  t->add_option("--config", config, "File of 'key = value' lines; flags win");
  t->add_option("--arch", train.arch, "Preset name (net1..net6) or architecture file");
  t->add_option("--data", train.data, "Training data: <dir>, cifar:a.bin[,b.bin] or synth:NxK[xS][@seed]")->required();
  t->add_option("--val", train.val, "Validation data, same forms as --data")->required();
  t->add_option("--limit", train.limit, "Keep the first N training samples");
  t->add_option("--val-limit", train.val_limit, "Keep the first N validation samples");
  t->add_option("--epochs", train.epochs, "Total epochs")->capture_default_str();
  t->add_option("--seed", train.seed, "Seed for init, shuffling, augmentation and dropout")->capture_default_str();
  t->add_option("--lr", train.lr, "Learning rate")->capture_default_str();
  t->add_option("--momentum", train.momentum, "SGD momentum")->capture_default_str();
  t->add_option("--weight-decay", train.weight_decay, "L2 weight decay")->capture_default_str();
  t->add_option("--batch", train.batch, "Batch size")->capture_default_str();
  t->add_option("--augment", train.augment, "Online augmentation of training batches")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  t->add_option("--flip-prob", train.flip_prob, "Horizontal flip probability")->capture_default_str();
  t->add_option("--crop-prob", train.crop_prob, "Random crop probability")->capture_default_str();
  t->add_option("--crop-size", train.crop_size, "Crop side (default 7/8 of the image side)");
  t->add_option("--lr-decay", train.lr_decay, "Step decay factor")->capture_default_str();
  t->add_option("--lr-step", train.lr_step, "Apply --lr-decay every N epochs (0: constant rate)");
  t->add_option("--checkpoint-every", train.checkpoint_every, "Also write epoch-N.ckpt every N epochs");
  t->add_option("--workers", train.workers, "Augmentation workers")->capture_default_str();
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_option("--out", train.out, "Output directory")->capture_default_str();

  ArchOptions arch;
  auto* a = app.add_subcommand("arch", "Inspect an architecture: shapes, layer and parameter counts");
  a->add_option("--config", config, "File of 'key = value' lines; flags win");
  a->add_option("arch", arch.arch, "Preset name or architecture file")->required();
  a->add_option("--input", arch.input, "Input shape CxHxW")->capture_default_str();
  a->add_flag("--to-plain", arch.to_plain, "Show the plain ConvNet obtained by unrolling every BB");
  a->add_flag("--json", arch.json, "Machine-readable output");

  GradcheckOptions grad;
  auto* g = app.add_subcommand("gradcheck", "Compare op gradients with central finite differences");
  g->add_option("--config", config, "File of 'key = value' lines; flags win");
  g->add_option("--op", grad.op, "Op name or 'all'")->capture_default_str();
  g->add_option("--seed", grad.seed, "Seed for shapes and inputs")->capture_default_str();
  g->add_option("--eps", grad.eps, "Finite-difference step")->capture_default_str();
  g->add_option("--cases", grad.cases, "Random cases per op")->capture_default_str();

  PreviewOptions preview;
  auto* p = app.add_subcommand("augment-preview", "Write a sample and augmented variants as PPM files");
  p->add_option("--config", config, "File of 'key = value' lines; flags win");
  p->add_option("--data", preview.data, "Data spec")->required();
  p->add_option("--index", preview.index, "Sample index")->capture_default_str();
  p->add_option("--n", preview.n, "Number of variants")->capture_default_str();
  p->add_option("--seed", preview.seed, "Augmentation seed")->capture_default_str();
  p->add_option("--flip-prob", preview.flip_prob, "Horizontal flip probability")->capture_default_str();
  p->add_option("--crop-prob", preview.crop_prob, "Random crop probability")->capture_default_str();
  p->add_option("--crop-size", preview.crop_size, "Crop side (default 7/8 of the image side)");
  p->add_option("--out", preview.out, "Output directory")->capture_default_str();

  PlotOptions plot;
  auto* pl = app.add_subcommand("plot", "Render metrics CSV files as an SVG line chart");
  pl->add_option("--config", config, "File of 'key = value' lines; flags win");
  pl->add_option("--metrics", plot.metrics, "One or more metrics.csv files")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  pl->add_option("--kind", plot.kind, "acc or loss")->check(CLI::IsMember({"acc", "loss"}))->capture_default_str();
  pl->add_option("--out", plot.out, "SVG path")->capture_default_str();

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Loss and top-1 accuracy of a checkpoint on a dataset");
  e->add_option("--config", config, "File of 'key = value' lines; flags win");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint file")->required();
  e->add_option("--data", eval.data, "Data spec")->required();
  e->add_option("--limit", eval.limit, "Keep the first N samples");
  e->add_option("--batch", eval.batch, "Batch size")->capture_default_str();

  ConvertOptions convert;
  auto* c = app.add_subcommand("convert", "Write any data spec as a raw dataset directory");
  c->add_option("--config", config, "File of 'key = value' lines; flags win");
  c->add_option("--data", convert.data, "Data spec")->required();
  c->add_option("--limit", convert.limit, "Keep the first N samples");
  c->add_option("--out", convert.out, "Output directory")->required();

  try {
    std::vector<std::string> expanded = expand_config(args, app);
    std::reverse(expanded.begin(), expanded.end());
    try {
      app.parse(expanded);
    } catch (const CLI::ParseError& pe) {
      const int code = app.exit(pe, out, err);
      return code == 0 ? kOk : kConfigError;
    }
    if (t->parsed()) return cmd_train(train, out);
    if (a->parsed()) return cmd_arch(arch, out);
    if (g->parsed()) return cmd_gradcheck(grad, out);
    if (p->parsed()) return cmd_augment_preview(preview, out);
    if (pl->parsed()) return cmd_plot(plot, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (c->parsed()) return cmd_convert(convert, out);
    return kConfigError;
  } catch (const NumericalError& ex) {
    err << "error: " << ex.what() << '\n';
    return kNumericalError;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kConfigError;
  }
}

}  // namespace microresnet::cli
