#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "quann/errors.hpp"
#include "quann/harness.hpp"

namespace quann {

double binomial_test_one_tailed(std::size_t wins, std::size_t trials) {
  if (trials == 0 || wins > trials) {
    throw DomainError("binomial test needs 0 <= wins <= trials and trials >= 1, got " + std::to_string(wins) +
                      " of " + std::to_string(trials));
  }
  const double n = static_cast<double>(trials);
  if (trials <= 1000) {
    // term(k) = C(n, k) / 2^n, walked down from k = n
    double term = std::ldexp(1.0, -static_cast<int>(trials));
    double p = 0.0;
    for (std::size_t k = trials;; --k) {
      p += term;
      if (k == wins) break;
      term *= static_cast<double>(k) / (n - static_cast<double>(k) + 1.0);
    }
    return std::min(p, 1.0);
  }
  double p = 0.0;
  for (std::size_t k = wins; k <= trials; ++k) {
    const double kk = static_cast<double>(k);
    p += std::exp(std::lgamma(n + 1) - std::lgamma(kk + 1) - std::lgamma(n - kk + 1) - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

std::string significance_stars(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

Significance significance_flag(double mean_a, double std_a, double mean_b, double std_b) {
  if (std_a < 0.0 || std_b < 0.0) throw DomainError("standard deviations must be non-negative");
  const double spread = std_a + std_b;
  if (mean_b - mean_a > spread) return Significance::better;
  if (mean_a - mean_b > spread) return Significance::worse;
  return Significance::tie;
}

std::string_view significance_name(Significance s) {
  switch (s) {
    case Significance::better: return "better";
    case Significance::worse: return "worse";
    case Significance::tie: return "tie";
  }
  return "tie";
}

CellStats cell_stats(std::span<const double> values) {
  CellStats c;
  c.count = values.size();
  if (values.empty()) return c;
  double s = 0.0;
  for (double v : values) s += v;
  c.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - c.mean) * (v - c.mean);
    c.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return c;
}

MetricRow metric_row(const RunResult& r) {
  return {r.family, r.task, r.replicate, r.best_lr, r.val_mse, r.test_mse, r.parameter_count, r.wall_time_seconds};
}

WinLoss win_loss_matrix(std::span<const MetricRow> rows) {
  std::vector<std::string> models, tasks;
  std::map<std::pair<std::string, std::string>, std::size_t> replicates;
  for (const MetricRow& r : rows) {
    if (std::find(models.begin(), models.end(), r.family) == models.end()) models.push_back(r.family);
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
    ++replicates[{r.family, r.task}];
  }
  if (!replicates.empty()) {
    const std::size_t expected = replicates.begin()->second;
    for (const auto& [cell, count] : replicates) {
      if (count != expected) {
        throw DataError("win-loss: " + cell.first + "/" + cell.second + " has " + std::to_string(count) +
                        " replicates, expected " + std::to_string(expected));
      }
    }
  }
  const SummaryTable table = summarize(rows);
  const std::size_t m = models.size();
  WinLoss wl;
  wl.models = models;
  wl.fraction.assign(m, std::vector<double>(m, 0.0));
  wl.wins.assign(m, std::vector<std::size_t>(m, 0));
  wl.trials.assign(m, std::vector<std::size_t>(m, 0));
  wl.p_value.assign(m, std::vector<double>(m, 1.0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) continue;
      for (const std::string& t : tasks) {
        const auto ia = table.find({models[a], t});
        const auto ib = table.find({models[b], t});
        if (ia == table.end() || ib == table.end()) continue;
        ++wl.trials[a][b];
        if (ia->second.mean < ib->second.mean) ++wl.wins[a][b];
      }
      if (wl.trials[a][b] > 0) {
        wl.fraction[a][b] = static_cast<double>(wl.wins[a][b]) / static_cast<double>(wl.trials[a][b]);
        wl.p_value[a][b] = binomial_test_one_tailed(wl.wins[a][b], wl.trials[a][b]);
      }
    }
  }
  return wl;
}

SummaryTable summarize(std::span<const MetricRow> rows) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const MetricRow& r : rows) {
    if (std::isfinite(r.test_mse)) values[{r.family, r.task}].push_back(r.test_mse);
  }
  SummaryTable out;
  for (const auto& [key, v] : values) out[key] = cell_stats(v);
  return out;
}

std::string format_summary(const SummaryTable& table) {
  std::vector<std::string> families, tasks;
  for (const auto& [key, stats] : table) {
    if (std::find(families.begin(), families.end(), key.first) == families.end()) families.push_back(key.first);
    if (std::find(tasks.begin(), tasks.end(), key.second) == tasks.end()) tasks.push_back(key.second);
  }
  std::ostringstream os;
  os << "| task |";
  for (const auto& f : families) os << ' ' << f << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < families.size(); ++i) os << "---:|";
  os << '\n';

  std::ostringstream flags;
  for (const auto& t : tasks) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& f : families) {
      auto it = table.find({f, t});
      if (it != table.end()) ranked.emplace_back(it->second.mean, f);
    }
    std::sort(ranked.begin(), ranked.end());
    os << "| " << t << " |";
    for (const auto& f : families) {
      auto it = table.find({f, t});
      if (it == table.end()) {
        os << " - |";
        continue;
      }
      std::ostringstream cell;
      cell << std::setprecision(4) << std::fixed << it->second.mean << " ± " << it->second.std;
      std::string text = cell.str();
      if (!ranked.empty() && ranked[0].second == f) text = "**" + text + "**";
      else if (ranked.size() > 1 && ranked[1].second == f) text = "_" + text + "_";
      os << ' ' << text << " |";
    }
    os << '\n';
    if (ranked.size() > 1) {
      const CellStats& best = table.at({ranked[0].second, t});
      for (std::size_t i = 1; i < ranked.size(); ++i) {
        const CellStats& other = table.at({ranked[i].second, t});
        flags << "- " << t << ": " << ranked[0].second << " vs " << ranked[i].second << ": "
              << significance_name(significance_flag(best.mean, best.std, other.mean, other.std)) << '\n';
      }
    }
  }
  const std::string f = flags.str();
  if (!f.empty()) os << "\nSignificance (difference of means vs sum of stds):\n" << f;
  return os.str();
}

}  // namespace quann
