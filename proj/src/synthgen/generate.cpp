#include "quann/errors.hpp"
#include "quann/rng.hpp"
#include "quann/synthgen.hpp"

namespace quann {

DatasetRecord generate_record(const TaskSpec& task, std::uint64_t seed, Split split, std::size_t index) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(split), index}));
  DatasetRecord r;
  r.dim = task.dim;
  const std::size_t n = rng.between(task.n_min, task.n_max);
  r.points.resize(n * task.dim);
  if (is_vector_task(task.kind)) {
    const double a = task.scale_lo + (task.scale_hi - task.scale_lo) * rng.uniform_open01();
    std::vector<double> b(task.dim);
    for (double& v : b) v = task.shift_lo + (task.shift_hi - task.shift_lo) * rng.uniform_open01();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < task.dim; ++k) r.points[i * task.dim + k] = a * rng.uniform_open01() + b[k];
    }
  } else {
    for (double& v : r.points) v = static_cast<double>(rng.between(kScalarValueMin, kScalarValueMax));
  }
  r.target = oracle(task.kind, r.points, task.dim);
  return r;
}

Dataset generate_dataset(const TaskSpec& task, SplitCounts counts, std::uint64_t seed) {
  task.validate();
  if (counts.train == 0 || counts.val == 0 || counts.test == 0) {
    throw ConfigError("dataset split counts must be positive");
  }
  Dataset d;
  d.task = task;
  d.counts = counts;
  d.seed = seed;
  for (auto [split, count, out] : {std::tuple{Split::train, counts.train, &d.train},
                                   std::tuple{Split::val, counts.val, &d.val},
                                   std::tuple{Split::test, counts.test, &d.test}}) {
    out->reserve(count);
    for (std::size_t i = 0; i < count; ++i) out->push_back(generate_record(task, seed, split, i));
  }
  return d;
}

}  // namespace quann
