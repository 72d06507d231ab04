#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "microresnet/data.hpp"
#include "microresnet/train.hpp"

namespace microresnet::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericalError = 3 };

/// Runs one command line (without the program name) and returns its exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

enum class DataRole { train, val };

/// Loads a data spec: a raw dataset directory, "cifar:a.bin[,b.bin]" or
/// "synth:NxK[xS][@seed]". Synthetic sets default to side 32 and seed 0 for
/// training data, seed 1 for validation data. `limit` keeps the first samples.
Dataset load_data(std::string_view spec, DataRole role = DataRole::train, std::size_t limit = 0);

/// "key = value" lines; '#' starts a comment. Keys are returned with '_'
/// replaced by '-'.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Binary PPM (P6). One-channel images are written as grey.
void write_ppm(const ByteImage& img, const std::filesystem::path& path);

enum class PlotKind { accuracy, loss };

struct PlotSeries {
  std::string label;
  std::vector<MetricsRow> rows;
};

/// Line chart over epochs. Accuracy draws train (solid) and validation
/// (dashed) per series; loss draws the training loss per series.
std::string render_plot_svg(const std::vector<PlotSeries>& series, PlotKind kind);

}  // namespace microresnet::cli
