#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "microresnet/train.hpp"

namespace microresnet {

inline constexpr const char* kMetricsHeader = "epoch,train_loss,train_acc,val_loss,val_acc,gap";

/// One CSV line (no newline), floats with six decimals.
std::string format_metrics_row(const MetricsRow& row);

std::vector<MetricsRow> parse_metrics_csv(std::istream& in);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace microresnet
