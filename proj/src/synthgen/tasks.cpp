#include <array>

#include "quann/errors.hpp"
#include "quann/synthgen.hpp"

namespace quann {
namespace {

constexpr std::array<std::pair<TaskKind, std::string_view>, 20> kNames{{
    {TaskKind::marginal_median, "marginal_median"},
    {TaskKind::geometric_median, "geometric_median"},
    {TaskKind::medoid, "medoid"},
    {TaskKind::quadratic_mean, "quadratic_mean"},
    {TaskKind::midpoint, "midpoint"},
    {TaskKind::vec_max_norm, "vec_max_norm"},
    {TaskKind::row_max, "row_max"},
    {TaskKind::log_sum_exp, "log_sum_exp"},
    {TaskKind::variance, "variance"},
    {TaskKind::skewness, "skewness"},
    {TaskKind::mean, "mean"},
    {TaskKind::median, "median"},
    {TaskKind::mode, "mode"},
    {TaskKind::geometric_mean, "geometric_mean"},
    {TaskKind::harmonic_mean, "harmonic_mean"},
    {TaskKind::log_mean_exp, "log_mean_exp"},
    {TaskKind::midrange, "midrange"},
    {TaskKind::variance_s, "variance_s"},
    {TaskKind::max_s, "max_s"},
    {TaskKind::sum_s, "sum_s"},
}};

}  // namespace

std::string_view task_name(TaskKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  std::string valid;
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
    valid += (valid.empty() ? "" : ", ") + std::string(n);
  }
  throw ConfigError("unknown task '" + std::string(name) + "' (valid: " + valid + ")");
}

const std::vector<TaskKind>& all_tasks() {
  static const std::vector<TaskKind> all = [] {
    std::vector<TaskKind> v;
    for (const auto& [k, n] : kNames) v.push_back(k);
    return v;
  }();
  return all;
}

bool is_vector_task(TaskKind kind) { return static_cast<int>(kind) <= static_cast<int>(TaskKind::skewness); }

void TaskSpec::validate() const {
  const std::string name(task_name(kind));
  if (n_min < 2 || n_min > n_max) {
    throw ConfigError(name + ": need 2 <= n_min <= n_max, got [" + std::to_string(n_min) + ", " +
                      std::to_string(n_max) + "]");
  }
  if (dim == 0) throw ConfigError(name + ": dim must be positive");
  if (!is_vector_task(kind) && dim != 1) throw ConfigError(name + ": scalar tasks have dim 1");
  if (!(scale_lo >= 0.0 && scale_lo < scale_hi)) throw ConfigError(name + ": bad affine scale range");
  if (!(shift_lo < shift_hi)) throw ConfigError(name + ": bad affine shift range");
}

TaskSpec default_task(TaskKind kind) {
  TaskSpec t;
  t.kind = kind;
  if (!is_vector_task(kind)) {
    t.n_max = 16;
    t.dim = 1;
  }
  return t;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

const std::vector<DatasetRecord>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  throw ConfigError("unknown split");
}

}  // namespace quann
