#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "quann/errors.hpp"
#include "quann/harness.hpp"

namespace quann {

void TrainConfig::validate() const {
  if (learning_rates.empty()) throw ConfigError("at least one learning rate is required");
  for (double lr : learning_rates) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be positive, got " + std::to_string(lr));
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (latent_dim == 0) throw ConfigError("latent dim must be positive");
  if (replicates == 0) throw ConfigError("replicates must be positive");
}

SetBatch make_batch(std::span<const DatasetRecord> records, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  const std::size_t dim = records[indices[0]].dim;
  std::vector<std::vector<double>> sets;
  sets.reserve(indices.size());
  for (std::size_t i : indices) {
    if (records[i].dim != dim) throw DataError("records in one batch have different widths");
    sets.push_back(records[i].points);
  }
  return SetBatch::from_sets(dim, sets);
}

Tensor make_targets(std::span<const DatasetRecord> records, std::span<const std::size_t> indices) {
  const std::size_t width = records[indices[0]].target.size();
  std::vector<double> t;
  t.reserve(indices.size() * width);
  for (std::size_t i : indices) {
    if (records[i].target.size() != width) throw DataError("records in one batch have different target widths");
    t.insert(t.end(), records[i].target.begin(), records[i].target.end());
  }
  return Tensor({indices.size(), width}, std::move(t));
}

namespace {

// Batches are run in consecutive chunks of about this many element rows
// (pairs for binary families), each on its own tape, with gradients summed
// into the parameters. Activations of a chunk stay cache resident.
constexpr std::size_t kChunkRows = 512;

std::vector<std::span<const std::size_t>> chunks(const SetModel& model, std::span<const DatasetRecord> records,
                                                 std::span<const std::size_t> idx) {
  const bool pairs = family_arity(model.family()) == 2;
  std::vector<std::span<const std::size_t>> out;
  std::size_t begin = 0, rows = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t n = records[idx[i]].size();
    const std::size_t r = pairs ? n * (n > 0 ? n - 1 : 0) : n;
    if (i > begin && rows + r > kChunkRows) {
      out.push_back(idx.subspan(begin, i - begin));
      begin = i;
      rows = 0;
    }
    rows += r;
  }
  out.push_back(idx.subspan(begin));
  return out;
}

// Training allocates and frees the same few activation sizes thousands of
// times. glibc would serve them with mmap/munmap and trim the heap after
// each tape; keeping them on the heap removes most of the page-fault time.
void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
  });
#endif
}

}  // namespace

std::vector<double> train(SetModel& model, std::span<const DatasetRecord> records, const TrainConfig& config,
                          double lr, std::uint64_t seed) {
  if (records.empty()) throw TrainingError("no training records");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive, got " + std::to_string(lr));
  if (config.batch_size == 0 || config.epochs == 0) throw ConfigError("batch size and epochs must be positive");

  tune_allocator();
  Adam opt(model.parameters(), AdamConfig{.lr = lr});
  std::vector<std::size_t> order(records.size());
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, {epoch}));
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      double loss_value = 0.0;
      try {
        for (const auto part : chunks(model, records, idx)) {
          Tape tape;
          Tensor pred = model.forward(tape, make_batch(records, part));
          Tensor loss = loss_mse(tape, pred, make_targets(records, part));
          loss = ad::scale(tape, loss, static_cast<double>(part.size()) / static_cast<double>(idx.size()));
          loss_value += loss.item();
          tape.backward(loss);
        }
      } catch (const NonFiniteError& e) {
        throw TrainingError("non-finite value in epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index) + ": " + e.what());
      }
      opt.step();
      total += loss_value * static_cast<double>(idx.size());
    }
    epoch_losses.push_back(total / static_cast<double>(records.size()));
  }
  return epoch_losses;
}

double evaluate_mse(const SetModel& model, std::span<const DatasetRecord> records, std::size_t batch_size) {
  if (records.empty()) throw DataError("evaluate_mse: no records");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < idx.size(); begin += batch_size) {
    const std::span<const std::size_t> batch(idx.data() + begin, std::min(batch_size, idx.size() - begin));
    for (const auto part : chunks(model, records, batch)) {
      Tape tape(Tape::Mode::inference);
      const Tensor pred = model.forward(tape, make_batch(records, part));
      const Tensor target = make_targets(records, part);
      if (pred.shape() != target.shape()) throw ShapeError("evaluate_mse: model output does not match targets");
      const auto p = pred.data();
      const auto t = target.data();
      for (std::size_t i = 0; i < p.size(); ++i) sse += (p[i] - t[i]) * (p[i] - t[i]);
      count += p.size();
    }
  }
  return sse / static_cast<double>(count);
}

std::size_t select_index(std::span<const double> val_mse, std::span<const double> learning_rates) {
  if (val_mse.empty()) throw TrainingError("no candidates to select from");
  if (val_mse.size() != learning_rates.size()) throw ShapeError("one learning rate per candidate expected");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < val_mse.size(); ++i) {
    if (std::isnan(val_mse[i])) continue;
    if (!best || val_mse[i] < val_mse[*best] ||
        (val_mse[i] == val_mse[*best] && learning_rates[i] < learning_rates[*best])) {
      best = i;
    }
  }
  if (!best) throw TrainingError("every candidate failed");
  return *best;
}

RunResult select_and_test(std::span<const Candidate> candidates, std::span<const DatasetRecord> val,
                          std::span<const DatasetRecord> test, std::size_t batch_size) {
  if (candidates.empty()) throw TrainingError("select_and_test: empty candidate list");
  std::vector<double> vals, lrs;
  for (const Candidate& c : candidates) {
    double v = std::nan("");
    try {
      v = evaluate_mse(c.model, val, batch_size);
    } catch (const NonFiniteError&) {
    }
    vals.push_back(std::isfinite(v) ? v : std::nan(""));
    lrs.push_back(c.lr);
  }
  const std::size_t best = select_index(vals, lrs);
  const Candidate& c = candidates[best];
  RunResult r;
  r.family = std::string(family_name(c.model.family()));
  r.best_lr = c.lr;
  r.val_mse = vals[best];
  r.test_mse = evaluate_mse(c.model, test, batch_size);
  r.epoch_losses = c.epoch_losses;
  r.val_per_lr = vals;
  r.parameter_count = c.model.parameter_count();
  return r;
}

RunResult run_replicate(Family family, const Dataset& data, const TrainConfig& config, std::size_t replicate,
                        const PresetOptions& preset, SetModel* selected) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  r.family = std::string(family_name(family));
  r.task = std::string(task_name(data.task.kind));
  r.replicate = replicate;
  r.replicate_seed = derive_seed(config.seed, {replicate});
  try {
    config.validate();
    PresetOptions options = preset;
    options.latent_width = config.latent_dim;
    options.seed = r.replicate_seed;
    const ModelConfig cfg = preset_config(family, data.task.dim, data.task.target_width(), options);
    // The shuffle stream depends on the replicate only, so families see the same batches.
    const std::uint64_t shuffle_seed = derive_seed(r.replicate_seed, {0x5eed});

    std::vector<Candidate> candidates;
    std::vector<std::string> failures;
    for (double lr : config.learning_rates) {
      try {
        Candidate c{lr, SetModel(cfg), {}};
        c.epoch_losses = train(c.model, data.train, config, lr, shuffle_seed);
        candidates.push_back(std::move(c));
      } catch (const TrainingError& e) {
        failures.push_back("lr " + std::to_string(lr) + ": " + e.what());
      }
    }
    if (candidates.empty()) {
      std::string msg = "all learning rates failed";
      for (const auto& f : failures) msg += "; " + f;
      throw TrainingError(msg);
    }
    RunResult sel = select_and_test(candidates, data.val, data.test, config.batch_size);
    r.best_lr = sel.best_lr;
    r.val_mse = sel.val_mse;
    r.test_mse = sel.test_mse;
    r.epoch_losses = std::move(sel.epoch_losses);
    r.parameter_count = sel.parameter_count;
    if (selected) {
      for (const Candidate& c : candidates) {
        if (c.lr == sel.best_lr) *selected = c.model;
      }
    }
    for (double lr : config.learning_rates) {
      double v = std::nan("");
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].lr == lr) v = sel.val_per_lr[i];
      }
      r.val_per_lr.push_back(v);
    }
  } catch (const Error& e) {
    r.ok = false;
    r.error = e.what();
    r.best_lr = r.val_mse = r.test_mse = std::nan("");
  }
  r.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace quann
