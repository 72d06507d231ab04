#include "microresnet/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include "microresnet/errors.hpp"

namespace microresnet {

std::string format_metrics_row(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f", row.epoch, row.train_loss, row.train_acc,
                row.val_loss, row.val_acc, row.gap);
  return buf;
}

std::vector<MetricsRow> parse_metrics_csv(std::istream& in) {
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw FormatError(0, "metrics file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw FormatError(0, "metrics header must be '" + std::string(kMetricsHeader) + "', got '" + line + "'");
  }
  offset += line.size() + 1;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    MetricsRow row;
    char trailing = 0;
    const int read = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf%c", &row.epoch, &row.train_loss,
                                 &row.train_acc, &row.val_loss, &row.val_acc, &row.gap, &trailing);
    if (read != 6) throw FormatError(offset, "malformed metrics row '" + line + "'");
    rows.push_back(row);
    offset += line.size() + 1;
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file " + path.string());
  return parse_metrics_csv(in);
}

}  // namespace microresnet
