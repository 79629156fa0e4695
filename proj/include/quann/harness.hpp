#pragma once

// Training, model selection and the statistics used to compare families.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quann/models.hpp"
#include "quann/synthgen.hpp"

namespace quann {

struct TrainConfig {
  std::vector<double> learning_rates{1e-4, 5e-4, 1e-3, 5e-3};
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::size_t latent_dim = 16;
  std::uint64_t seed = 0;
  std::size_t replicates = 10;

  void validate() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterList params, AdamConfig config);
  // Applies one update from the accumulated gradients, then clears them.
  // Parameters without a gradient are left untouched.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParameterList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Padded batch plus stacked targets for records[indices].
SetBatch make_batch(std::span<const DatasetRecord> records, std::span<const std::size_t> indices);
Tensor make_targets(std::span<const DatasetRecord> records, std::span<const std::size_t> indices);

// Mini-batch Adam on the MSE loss. The shuffle order of epoch e comes from
// derive_seed(seed, {e}). Returns the mean training loss of each epoch.
// A non-finite loss or activation aborts with TrainingError naming the batch.
std::vector<double> train(SetModel& model, std::span<const DatasetRecord> records, const TrainConfig& config,
                          double lr, std::uint64_t seed);

// Mean squared error over all records and output dims.
double evaluate_mse(const SetModel& model, std::span<const DatasetRecord> records, std::size_t batch_size = 32);

// Argmin of val_mse; ties go to the smaller learning rate. NaN entries
// (failed candidates) are skipped; throws TrainingError if all are NaN.
std::size_t select_index(std::span<const double> val_mse, std::span<const double> learning_rates);

struct Candidate {
  double lr = 0.0;
  SetModel model;
  std::vector<double> epoch_losses;
};

struct RunResult {
  std::string family;
  std::string task;
  std::size_t replicate = 0;
  std::uint64_t replicate_seed = 0;
  double best_lr = 0.0;
  double val_mse = 0.0;
  double test_mse = 0.0;
  std::vector<double> epoch_losses;
  std::vector<double> val_per_lr;
  std::size_t parameter_count = 0;
  double wall_time_seconds = 0.0;
  bool ok = true;
  std::string error;
};

// Picks the candidate with the lowest validation MSE and evaluates the test
// set on it once.
RunResult select_and_test(std::span<const Candidate> candidates, std::span<const DatasetRecord> val,
                          std::span<const DatasetRecord> test, std::size_t batch_size = 32);

// One replicate: trains a fresh model per learning rate, selects, tests.
// Failures are reported in the result (ok = false), never thrown. When
// `selected` is given it receives the chosen model.
RunResult run_replicate(Family family, const Dataset& data, const TrainConfig& config, std::size_t replicate,
                        const PresetOptions& preset = {}, SetModel* selected = nullptr);

// ---- statistics ----

// P(X >= wins) for X ~ Binomial(trials, 1/2).
double binomial_test_one_tailed(std::size_t wins, std::size_t trials);
// "**" below 0.01, "*" below 0.05, otherwise empty.
std::string significance_stars(double p);

enum class Significance { better, worse, tie };
// Lower is better: a is better when mean_b - mean_a > std_a + std_b.
Significance significance_flag(double mean_a, double std_a, double mean_b, double std_b);
std::string_view significance_name(Significance s);

struct CellStats {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 for a single replicate
  std::size_t count = 0;
};
CellStats cell_stats(std::span<const double> values);

// One row of the metrics CSV.
struct MetricRow {
  std::string family;
  std::string task;
  std::size_t replicate = 0;
  double lr = 0.0;
  double val_mse = 0.0;
  double test_mse = 0.0;
  std::size_t params = 0;
  double seconds = 0.0;
};
MetricRow metric_row(const RunResult& r);

struct WinLoss {
  std::vector<std::string> models;
  // fraction[a][b]: share of common tasks where a's mean test MSE is lower
  // than b's. Exact ties count for neither side. Diagonal is 0.
  std::vector<std::vector<double>> fraction;
  std::vector<std::vector<std::size_t>> wins;
  std::vector<std::vector<std::size_t>> trials;
  std::vector<std::vector<double>> p_value;
};
// Rows with non-finite test MSE are ignored. Every (family, task) cell
// must hold the same number of replicates.
WinLoss win_loss_matrix(std::span<const MetricRow> rows);

// (family, task) -> stats of test MSE over finite rows.
using SummaryTable = std::map<std::pair<std::string, std::string>, CellStats>;
SummaryTable summarize(std::span<const MetricRow> rows);
// Markdown table, one row per task; best mean per task in **bold**, second
// in _italics_, and significance flags of the best vs the rest.
std::string format_summary(const SummaryTable& table);

// ---- files ----

inline constexpr const char* kMetricsHeader = "family,task,replicate,lr,val_mse,test_mse,params,seconds";

void write_metrics_csv(const std::filesystem::path& path, std::span<const RunResult> results);
// Throws DataError with the line number of a malformed row, or for an empty file.
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
void write_report_json(const std::filesystem::path& path, std::span<const RunResult> results, const WinLoss& wl);

}  // namespace quann
