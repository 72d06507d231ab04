#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace microresnet::cli {

struct TrainOptions {
  std::string arch;
  std::string data;
  std::string val;
  std::size_t limit = 0;
  std::size_t val_limit = 0;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch = 128;
  std::string augment = "on";
  double flip_prob = 0.5;
  double crop_prob = 0.7;
  std::size_t crop_size = 0;  // 0: 7/8 of the image side
  double lr_decay = 1.0;
  std::size_t lr_step = 0;
  std::size_t checkpoint_every = 0;
  std::size_t workers = 1;
  std::string resume;
  std::string out = "run";
};

struct ArchOptions {
  std::string arch;
  std::string input = "3x64x64";
  bool to_plain = false;
  bool json = false;
};

struct GradcheckOptions {
  std::string op = "all";
  std::uint64_t seed = 0;
  double eps = 1e-5;
  std::size_t cases = 20;
};

struct PreviewOptions {
  std::string data;
  std::size_t index = 0;
  std::size_t n = 9;
  std::uint64_t seed = 0;
  double flip_prob = 0.5;
  double crop_prob = 0.7;
  std::size_t crop_size = 0;
  std::string out = "preview";
};

struct PlotOptions {
  std::vector<std::string> metrics;
  std::string kind = "acc";
  std::string out = "plot.svg";
};

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::size_t limit = 0;
  std::size_t batch = 128;
};

struct ConvertOptions {
  std::string data;
  std::size_t limit = 0;
  std::string out;
};

int cmd_train(const TrainOptions& opts, std::ostream& out);
int cmd_arch(const ArchOptions& opts, std::ostream& out);
int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out);
int cmd_augment_preview(const PreviewOptions& opts, std::ostream& out);
int cmd_plot(const PlotOptions& opts, std::ostream& out);
int cmd_eval(const EvalOptions& opts, std::ostream& out);
int cmd_convert(const ConvertOptions& opts, std::ostream& out);

}  // namespace microresnet::cli
