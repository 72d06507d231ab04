#include "commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "cli.hpp"
#include "microresnet/arch.hpp"
#include "microresnet/checkpoint.hpp"
#include "microresnet/errors.hpp"
#include "microresnet/gradcheck_suite.hpp"
#include "microresnet/metrics.hpp"

namespace microresnet::cli {
namespace fs = std::filesystem;

namespace {

std::string number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

AugmentConfig augment_for(const Dataset& ds, double flip_prob, double crop_prob, std::size_t crop_size) {
  if (ds.height != ds.width) {
    throw ValueError("augmentation needs square images, data is " + std::to_string(ds.height) + "x" +
                     std::to_string(ds.width));
  }
  AugmentConfig cfg = AugmentConfig::for_side(ds.height);
  cfg.flip_prob = flip_prob;
  cfg.crop_prob = crop_prob;
  if (crop_size > 0) cfg.crop_size = crop_size;
  cfg.validate();
  if (cfg.crop_size > ds.height) {
    throw ValueError("crop size " + std::to_string(cfg.crop_size) + " exceeds the image side " +
                     std::to_string(ds.height));
  }
  return cfg;
}

void check_compatible(const ArchSpec& arch, ImageShape input, const Dataset& ds, std::string_view role) {
  const ImageShape data_shape{ds.channels, ds.height, ds.width};
  if (!(data_shape == input)) {
    throw ShapeError(std::string(role) + " images are " + to_string(data_shape) + " but the network expects " +
                     to_string(input));
  }
  const std::size_t units = arch.layers.back().value;
  if (units < ds.class_count) {
    throw ValueError("FC " + std::to_string(units) + " cannot score the " + std::to_string(ds.class_count) +
                     " classes of the " + std::string(role) + " data");
  }
}

std::vector<std::pair<std::string, std::string>> resolved(const TrainOptions& o, const TrainConfig& cfg,
                                                          const ArchSpec& arch, ImageShape input) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"arch", o.arch.empty() ? arch.name : o.arch},
      {"input", to_string(input)},
      {"data", o.data},
      {"val", o.val},
      {"limit", std::to_string(o.limit)},
      {"val-limit", std::to_string(o.val_limit)},
      {"epochs", std::to_string(cfg.epochs)},
      {"seed", std::to_string(cfg.seed)},
      {"lr", number(cfg.learning_rate)},
      {"momentum", number(cfg.momentum)},
      {"weight-decay", number(cfg.weight_decay)},
      {"batch", std::to_string(cfg.batch_size)},
      {"augment", cfg.augment ? "on" : "off"},
      {"flip-prob", number(o.flip_prob)},
      {"crop-prob", number(o.crop_prob)},
      {"crop-size", cfg.augment ? std::to_string(cfg.augment->crop_size) : std::to_string(o.crop_size)},
      {"lr-decay", number(o.lr_decay)},
      {"lr-step", std::to_string(o.lr_step)},
      {"checkpoint-every", std::to_string(o.checkpoint_every)},
      {"workers", std::to_string(cfg.workers)},
      {"resume", o.resume},
      {"out", o.out},
  };
  return kv;
}

std::string metrics_label(const fs::path& path) {
  const std::string stem = path.stem().string();
  const fs::path parent = path.parent_path().filename();
  return stem == "metrics" && !parent.empty() ? parent.string() : stem;
}

}  // namespace

int cmd_train(const TrainOptions& o, std::ostream& out) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.workers = o.workers;
  if (o.lr_step > 0) cfg.lr_schedule = StepSchedule{o.lr_decay, o.lr_step};
  if (o.arch.empty() && o.resume.empty()) throw ValueError("train needs --arch (or --resume)");

  const Dataset train = load_data(o.data, DataRole::train, o.limit);
  const Dataset val = load_data(o.val, DataRole::val, o.val_limit);
  if (o.augment == "on") cfg.augment = augment_for(train, o.flip_prob, o.crop_prob, o.crop_size);
  cfg.validate();

  TrainingState state;
  if (!o.resume.empty()) {
    state = restore_training(load_checkpoint(o.resume));
    if (!o.arch.empty() && !(load_arch(o.arch) == state.arch)) {
      throw ValueError("--arch " + o.arch + " differs from the architecture stored in " + o.resume);
    }
  } else {
    const ArchSpec arch = load_arch(o.arch);
    const ImageShape input{train.channels, train.height, train.width};
    infer_shapes(arch, input);
    state = init_training(arch, input, cfg, compute_normalization(train));
  }
  check_compatible(state.arch, state.input, train, "training");
  check_compatible(state.arch, state.input, val, "validation");

  const fs::path dir = o.out;
  fs::create_directories(dir);
  {
    std::ofstream resolved_file(dir / "resolved-config.txt");
    for (const auto& [key, value] : resolved(o, cfg, state.arch, state.input)) {
      resolved_file << key << " = " << value << '\n';
      out << key << " = " << value << '\n';
    }
  }

  std::vector<MetricsRow> kept;
  if (!o.resume.empty() && fs::exists(dir / "metrics.csv")) {
    for (const auto& row : read_metrics_csv(dir / "metrics.csv"))
      if (row.epoch <= state.epoch) kept.push_back(row);
  }
  std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + (dir / "metrics.csv").string());
  metrics << kMetricsHeader << '\n';
  for (const auto& row : kept) metrics << format_metrics_row(row) << '\n';
  metrics.flush();

  fit(state, train, val, cfg, [&](const MetricsRow& row, const TrainingState& s) {
    metrics << format_metrics_row(row) << '\n';
    metrics.flush();
    char line[256];
    std::snprintf(line, sizeof line,
                  "epoch %zu/%zu  train_loss %.4f  train_acc %.4f  val_loss %.4f  val_acc %.4f  gap %+.4f\n",
                  row.epoch, cfg.epochs, row.train_loss, row.train_acc, row.val_loss, row.val_acc, row.gap);
    out << line << std::flush;
    if (o.checkpoint_every > 0 && row.epoch % o.checkpoint_every == 0) {
      save_checkpoint(make_checkpoint(s), dir / ("epoch-" + std::to_string(row.epoch) + ".ckpt"));
    }
  });
  save_checkpoint(make_checkpoint(state), dir / "final.ckpt");
  out << "wrote " << (dir / "metrics.csv").string() << " and " << (dir / "final.ckpt").string() << '\n';
  return kOk;
}

int cmd_arch(const ArchOptions& o, std::ostream& out) {
  ArchSpec spec = load_arch(o.arch);
  if (o.to_plain) spec = to_plain_convnet(spec);
  const ImageShape input = parse_image_shape(o.input);
  const auto shapes = infer_shapes(spec, input);
  const std::size_t layers = count_layers(spec);
  const std::size_t params = count_params(spec, input);
  const auto published = published_layer_count_mismatch(spec.name);

  if (o.json) {
    nlohmann::ordered_json doc;
    doc["name"] = spec.name;
    doc["input"] = to_string(input);
    doc["entries"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      doc["entries"].push_back({{"entry", to_string(spec.layers[i])}, {"shape", shapes[i]}});
    }
    doc["layers"] = layers;
    doc["params"] = params;
    if (published) doc["published_layers"] = *published;
    out << doc.dump(2) << '\n';
    return kOk;
  }

  out << "name: " << spec.name << '\n' << "input: " << to_string(input) << '\n';
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    char line[128];
    std::snprintf(line, sizeof line, "%3zu  %-12s %s\n", i + 1, to_string(spec.layers[i]).c_str(),
                  shape_text(shapes[i]).c_str());
    out << line;
  }
  out << "layers: " << layers << '\n' << "params: " << params << '\n';
  if (published) {
    out << "warning: published layer count for " << spec.name << " is " << *published << "; computed " << layers
        << " (conv 1, BB 2, FC 1)\n";
  }
  return kOk;
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const std::vector<std::string> ops = o.op == "all" ? gradcheck_op_names() : std::vector<std::string>{o.op};
  for (const auto& op : ops) {
    const auto known = gradcheck_op_names();
    if (std::find(known.begin(), known.end(), op) == known.end()) run_op_gradcheck(op, o.seed, o.eps, 1);
  }
  std::size_t failed = 0;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %6s %10s %14s  %s\n", "op", "cases", "elements", "max_rel_error",
                "status");
  out << line;
  for (const auto& op : ops) {
    const OpCheckReport r = run_op_gradcheck(op, o.seed, o.eps, o.cases);
    failed += r.passed ? 0 : 1;
    std::snprintf(line, sizeof line, "%-24s %6zu %10zu %14.3e  %s\n", r.op.c_str(), r.cases, r.elements,
                  r.max_rel_error, r.passed ? "pass" : "FAIL");
    out << line;
  }
  out << (failed == 0 ? "all " + std::to_string(ops.size()) + " ops pass"
                      : std::to_string(failed) + " of " + std::to_string(ops.size()) + " ops fail")
      << " (tolerance " << number(kGradCheckTolerance) << ")\n";
  return failed == 0 ? kOk : kNumericalError;
}

int cmd_augment_preview(const PreviewOptions& o, std::ostream& out) {
  const Dataset ds = load_data(o.data);
  if (o.index >= ds.size()) {
    throw ValueError("index " + std::to_string(o.index) + " is out of range for " + std::to_string(ds.size()) +
                     " samples");
  }
  const AugmentConfig cfg = augment_for(ds, o.flip_prob, o.crop_prob, o.crop_size);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  const ByteImage original = ds.image(o.index);
  write_ppm(original, dir / "original.ppm");
  Rng rng(o.seed);
  for (std::size_t i = 1; i <= o.n; ++i) {
    AugmentTrace trace;
    const ByteImage variant = augment(original, cfg, rng, &trace);
    const std::string name = "variant-" + std::to_string(i) + ".ppm";
    write_ppm(variant, dir / name);
    out << name << ": flip " << (trace.flipped ? "yes" : "no");
    if (trace.cropped) out << ", crop " << cfg.crop_size << " at (" << trace.top << ", " << trace.left << ")";
    out << '\n';
  }
  out << "wrote " << o.n + 1 << " images to " << dir.string() << '\n';
  return kOk;
}

int cmd_plot(const PlotOptions& o, std::ostream& out) {
  std::vector<PlotSeries> series;
  for (const auto& path : o.metrics) {
    auto rows = read_metrics_csv(path);
    if (rows.empty()) throw ValueError(path + " has no metrics rows");
    series.push_back({metrics_label(path), std::move(rows)});
  }
  const std::string svg = render_plot_svg(series, o.kind == "acc" ? PlotKind::accuracy : PlotKind::loss);
  std::ofstream file(o.out, std::ios::binary);
  if (!file) throw DataError("cannot write " + o.out);
  file << svg;
  out << "wrote " << o.out << '\n';
  return kOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(o.ckpt);
  } catch (const DataError& e) {
    throw ValueError(e.what());
  }
  const TrainingState state = restore_training(ckpt);
  const Dataset ds = load_data(o.data, DataRole::train, o.limit);
  check_compatible(state.arch, state.input, ds, "evaluation");
  const EpochStats stats = evaluate(state.network, ds, o.batch, state.normalization);
  char line[128];
  std::snprintf(line, sizeof line, "samples: %zu\nloss: %.6f\naccuracy: %.6f\n", ds.size(), stats.loss,
                stats.accuracy);
  out << line;
  return kOk;
}

int cmd_convert(const ConvertOptions& o, std::ostream& out) {
  const Dataset ds = load_data(o.data, DataRole::train, o.limit);
  save_raw_dataset(ds, o.out);
  out << "wrote " << ds.size() << " samples (" << to_string(ImageShape{ds.channels, ds.height, ds.width}) << ", "
      << ds.class_count << " classes) to " << o.out << '\n';
  return kOk;
}

}  // namespace microresnet::cli
