#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "quann/errors.hpp"
#include "quann/harness.hpp"

namespace quann {
namespace {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::nan("");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw DataError(where + ": '" + s + "' is not a number");
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError(where + ": '" + s + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, std::span<const RunResult> results) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << kMetricsHeader << '\n';
  for (const RunResult& r : results) {
    os << r.family << ',' << r.task << ',' << r.replicate << ',' << fmt(r.best_lr) << ',' << fmt(r.val_mse) << ','
       << fmt(r.test_mse) << ',' << r.parameter_count << ',' << fmt(r.wall_time_seconds) << '\n';
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + ": empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw DataError(path.string() + ":1: unexpected header '" + line + "'");
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw DataError(where + ": expected 8 fields, got " + std::to_string(f.size()));
    if (f[0].empty() || f[1].empty()) throw DataError(where + ": empty family or task");
    rows.push_back(MetricRow{f[0], f[1], parse_count(f[2], where), parse_double(f[3], where),
                             parse_double(f[4], where), parse_double(f[5], where), parse_count(f[6], where),
                             parse_double(f[7], where)});
  }
  if (rows.empty()) throw DataError(path.string() + ": no metric rows");
  return rows;
}

void write_report_json(const std::filesystem::path& path, std::span<const RunResult> results, const WinLoss& wl) {
  json runs = json::array();
  for (const RunResult& r : results) {
    json v = json::array();
    for (double x : r.val_per_lr) v.push_back(nan_to_null(x));
    runs.push_back({{"family", r.family},
                    {"task", r.task},
                    {"replicate", r.replicate},
                    {"status", r.ok ? "ok" : "failed"},
                    {"error", r.error},
                    {"best_lr", nan_to_null(r.best_lr)},
                    {"val_mse", nan_to_null(r.val_mse)},
                    {"test_mse", nan_to_null(r.test_mse)},
                    {"val_mse_per_lr", v},
                    {"epoch_losses", r.epoch_losses},
                    {"params", r.parameter_count}});
  }
  json matrix = json::array();
  for (std::size_t a = 0; a < wl.models.size(); ++a) {
    for (std::size_t b = 0; b < wl.models.size(); ++b) {
      if (a == b) continue;
      matrix.push_back({{"row", wl.models[a]},
                        {"col", wl.models[b]},
                        {"wins", wl.wins[a][b]},
                        {"trials", wl.trials[a][b]},
                        {"fraction", wl.fraction[a][b]},
                        {"p_value", wl.p_value[a][b]},
                        {"stars", significance_stars(wl.p_value[a][b])}});
    }
  }
  std::vector<MetricRow> rows;
  for (const RunResult& r : results) rows.push_back(metric_row(r));
  json summary = json::array();
  for (const auto& [key, s] : summarize(rows)) {
    summary.push_back({{"family", key.first}, {"task", key.second}, {"mean", s.mean}, {"std", s.std}, {"n", s.count}});
  }
  const json report{{"models", wl.models}, {"win_loss", matrix}, {"summary", summary}, {"runs", runs}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << report.dump(2) << '\n';
}

}  // namespace quann
