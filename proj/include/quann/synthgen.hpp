#pragma once

// Synthetic set-regression tasks.
//
// Vector tasks: a cloud of n points drawn from (0,1)^dim, then mapped by
// a x + b with scalar a ~ U(0,1) and b ~ U(-10,10)^dim per cloud; the target
// is an aggregate of the transformed points (width dim).
// Scalar tasks: n integer values uniform in {1..9}; target width 1.
//
// Oracles sort the points lexicographically before aggregating, so results
// do not depend on input order down to the last bit.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quann {

enum class TaskKind {
  // vector
  marginal_median,
  geometric_median,
  medoid,
  quadratic_mean,
  midpoint,
  vec_max_norm,
  row_max,
  log_sum_exp,
  variance,
  skewness,
  // scalar
  mean,
  median,
  mode,
  geometric_mean,
  harmonic_mean,
  log_mean_exp,
  midrange,
  variance_s,
  max_s,
  sum_s,
};

std::string_view task_name(TaskKind kind);
// Throws ConfigError listing valid names.
TaskKind parse_task(std::string_view name);
const std::vector<TaskKind>& all_tasks();
bool is_vector_task(TaskKind kind);

inline constexpr int kScalarValueMin = 1;
inline constexpr int kScalarValueMax = 9;

struct TaskSpec {
  TaskKind kind = TaskKind::row_max;
  std::size_t n_min = 2;
  std::size_t n_max = 1024;
  std::size_t dim = 16;
  double scale_lo = 0.0, scale_hi = 1.0;
  double shift_lo = -10.0, shift_hi = 10.0;

  void validate() const;
  std::size_t target_width() const { return is_vector_task(kind) ? dim : 1; }
};

// Vector tasks: n in [2, 1024], dim 16. Scalar tasks: n in [2, 16], dim 1.
TaskSpec default_task(TaskKind kind);

struct DatasetRecord {
  std::size_t dim = 0;
  std::vector<double> points;  // size() * dim values, row-major
  std::vector<double> target;

  std::size_t size() const { return dim ? points.size() / dim : 0; }
};

enum class Split : std::uint64_t { train = 0, val = 1, test = 2 };
std::string_view split_name(Split s);

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

struct Dataset {
  TaskSpec task;
  SplitCounts counts;
  std::uint64_t seed = 0;
  std::vector<DatasetRecord> train, val, test;

  const std::vector<DatasetRecord>& split(Split s) const;
};

// Record i of split s uses its own stream derive_seed(seed, {s, i}).
DatasetRecord generate_record(const TaskSpec& task, std::uint64_t seed, Split split, std::size_t index);
Dataset generate_dataset(const TaskSpec& task, SplitCounts counts, std::uint64_t seed);

std::vector<double> oracle_vector(TaskKind kind, std::span<const double> points, std::size_t dim);
double oracle_scalar(TaskKind kind, std::span<const double> values);
// Dispatches on the task kind; scalar tasks return one value.
std::vector<double> oracle(TaskKind kind, std::span<const double> points, std::size_t dim);

// Sum of L1 distances from z to every point (the geometric-median objective).
double l1_objective(std::span<const double> points, std::size_t dim, std::span<const double> z);

inline constexpr int kGeneratorVersion = 1;

// Writes train.jsonl, val.jsonl, test.jsonl and manifest.json into dir.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
// Reads a directory written by write_dataset. Targets of a sample of
// records are recomputed and must match bit for bit (DataError otherwise).
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace quann
