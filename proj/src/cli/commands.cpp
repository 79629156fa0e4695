#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "quann/checkpoint.hpp"
#include "quann/cli.hpp"
#include "quann/errors.hpp"
#include "quann/harness.hpp"
#include "quann/kernels.hpp"
#include "quann/verify.hpp"

namespace quann {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::vector<std::string> tasks;
  std::vector<std::string> families;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::vector<double> lrs;
  std::optional<std::size_t> epochs, batch, latent, replicates, n_max;
  std::string data_dir;
  std::string out;
  std::optional<double> tolerance;
  std::string metrics;
};

std::vector<TaskKind> parse_tasks(const std::vector<std::string>& names) {
  std::vector<TaskKind> out;
  for (const auto& n : names) out.push_back(parse_task(n));
  return out;
}

std::vector<Family> parse_families(const std::vector<std::string>& names) {
  std::vector<Family> out;
  for (const auto& n : names) out.push_back(parse_family(n));
  return out;
}

TrainConfig train_config(const Options& o, const Profile& p) {
  TrainConfig c;
  c.epochs = p.epochs;
  c.replicates = p.replicates;
  c.seed = o.seed;
  if (!o.lrs.empty()) c.learning_rates = o.lrs;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch) c.batch_size = *o.batch;
  if (o.latent) c.latent_dim = *o.latent;
  if (o.replicates) c.replicates = *o.replicates;
  c.validate();
  return c;
}

TaskSpec task_spec(TaskKind kind, const Options& o) {
  TaskSpec t = default_task(kind);
  if (o.n_max) t.n_max = *o.n_max;
  t.validate();
  return t;
}

// Reads <data>/<task> when it exists; otherwise generates, and writes it
// there if a data directory was given.
Dataset obtain_dataset(TaskKind kind, const Options& o, const Profile& p) {
  if (!o.data_dir.empty()) {
    const fs::path dir = fs::path(o.data_dir) / std::string(task_name(kind));
    if (fs::exists(dir / "manifest.json")) {
      std::cerr << "reading " << dir.string() << '\n';
      return read_dataset(dir);
    }
    Dataset d = generate_dataset(task_spec(kind, o), p.counts, o.seed);
    write_dataset(dir, d);
    return d;
  }
  return generate_dataset(task_spec(kind, o), p.counts, o.seed);
}

json config_json(const ModelConfig& c) {
  json j{{"family", std::string(family_name(c.family))},
         {"element_width", c.element_width},
         {"latent_width", c.latent_width},
         {"output_width", c.output_width},
         {"encoder", c.encoder.widths},
         {"estimator", c.estimator.widths},
         {"equivariant", c.equivariant},
         {"seed", c.seed}};
  if (c.generator) {
    j["generator"] = {{"dim", c.generator->dim},
                      {"num_blocks", c.generator->num_blocks},
                      {"subnet_hidden", c.generator->subnet_hidden}};
  }
  return j;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

int cmd_gen(const Options& o) {
  if (o.tasks.size() != 1) throw ConfigError("gen needs exactly one --task");
  const Profile p = profile_by_name(o.profile);
  const TaskKind kind = parse_task(o.tasks[0]);
  const fs::path out = o.out.empty() ? fs::path("data") / std::string(task_name(kind)) : fs::path(o.out);
  const Dataset d = generate_dataset(task_spec(kind, o), p.counts, o.seed);
  write_dataset(out, d);
  std::cout << "wrote " << d.train.size() + d.val.size() + d.test.size() << " records (" << d.train.size() << '/'
            << d.val.size() << '/' << d.test.size() << ") to " << out.string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o) {
  if (o.tasks.size() != 1 || o.families.size() != 1) throw ConfigError("train needs exactly one --task and one --family");
  const Profile p = profile_by_name(o.profile);
  const TaskKind kind = parse_task(o.tasks[0]);
  const Family family = parse_family(o.families[0]);
  const TrainConfig cfg = train_config(o, p);
  const Dataset d = obtain_dataset(kind, o, p);
  SetModel best;
  const RunResult r = run_replicate(family, d, cfg, 0, {}, &best);
  if (!r.ok) throw TrainingError(r.error);

  const fs::path out = o.out.empty() ? fs::path("runs") : fs::path(o.out);
  ensure_dir(out);
  const std::string stem = r.family + "_" + r.task;
  save_checkpoint(out / (stem + ".qnn"), best.parameters(), r.family);
  json side{{"config", config_json(best.config())},
            {"best_lr", r.best_lr},
            {"val_mse", r.val_mse},
            {"test_mse", r.test_mse},
            {"epoch_losses", r.epoch_losses},
            {"params", r.parameter_count},
            {"seconds", r.wall_time_seconds}};
  std::ofstream(out / (stem + ".json")) << side.dump(2) << '\n';
  std::cout << r.family << " on " << r.task << ": lr " << r.best_lr << ", val " << r.val_mse << ", test " << r.test_mse
            << ", " << r.parameter_count << " params, " << std::fixed << std::setprecision(1) << r.wall_time_seconds
            << " s\n";
  return kExitOk;
}

std::size_t thread_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QUANN_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0' || v == 0) throw ConfigError("QUANN_THREADS must be a positive integer");
    n = v;
  }
  return std::min(n, jobs);
}

std::string format_win_loss(const WinLoss& wl) {
  std::ostringstream os;
  os << "win-loss (row beats column on mean test MSE; ** p<0.01, * p<0.05):\n";
  std::size_t w = 8;
  for (const auto& m : wl.models) w = std::max(w, m.size() + 2);
  os << std::setw(static_cast<int>(w)) << "";
  for (const auto& m : wl.models) os << std::setw(static_cast<int>(w)) << m;
  os << '\n';
  for (std::size_t a = 0; a < wl.models.size(); ++a) {
    os << std::left << std::setw(static_cast<int>(w)) << wl.models[a] << std::right;
    for (std::size_t b = 0; b < wl.models.size(); ++b) {
      std::ostringstream cell;
      if (a == b) {
        cell << "-";
      } else {
        cell << std::fixed << std::setprecision(2) << wl.fraction[a][b] << significance_stars(wl.p_value[a][b]);
      }
      os << std::setw(static_cast<int>(w)) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

int cmd_bench(const Options& o) {
  const Profile p = profile_by_name(o.profile);
  const TrainConfig cfg = train_config(o, p);
  const std::vector<TaskKind> tasks = parse_tasks(o.tasks.empty() ? std::vector<std::string>{"row_max", "log_sum_exp", "variance"} : o.tasks);
  const std::vector<Family> families = parse_families(
      o.families.empty() ? std::vector<std::string>{"quann1", "ablation1", "ablation2", "ablation3"} : o.families);
  const fs::path out = o.out.empty() ? fs::path("bench") : fs::path(o.out);
  ensure_dir(out);

  std::vector<Dataset> data;
  for (TaskKind t : tasks) data.push_back(obtain_dataset(t, o, p));

  struct Job {
    std::size_t task, family, replicate;
  };
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t f = 0; f < families.size(); ++f)
      for (std::size_t r = 0; r < cfg.replicates; ++r) jobs.push_back({t, f, r});

  std::vector<RunResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::size_t done = 0;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      results[i] = run_replicate(families[j.family], data[j.task], cfg, j.replicate);
      std::lock_guard lock(log_mutex);
      const RunResult& r = results[i];
      std::ostringstream line;
      line << '[' << ++done << '/' << jobs.size() << "] " << r.family << ' ' << r.task << " #" << r.replicate
           << (r.ok ? "" : " FAILED: " + r.error) << " test " << std::setprecision(6) << r.test_mse << " ("
           << std::fixed << std::setprecision(1) << r.wall_time_seconds << " s)\n";
      std::cerr << line.str();
    }
  };
  const std::size_t threads = thread_count(jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<MetricRow> rows;
  for (const RunResult& r : results) rows.push_back(metric_row(r));
  const WinLoss wl = win_loss_matrix(rows);
  write_metrics_csv(out / "metrics.csv", results);
  write_report_json(out / "report.json", results, wl);
  const std::string summary = format_summary(summarize(rows)) + "\n" + format_win_loss(wl);
  std::ofstream(out / "summary.md") << summary;
  std::cout << summary;
  std::size_t failed = 0;
  for (const RunResult& r : results) failed += r.ok ? 0 : 1;
  if (failed) std::cout << failed << " run(s) failed; see report.json\n";
  return kExitOk;
}

int cmd_verify(const Options& o) {
  const std::vector<PropositionCheck> checks = run_all_checks(o.seed, o.tolerance);
  const fs::path out = o.out.empty() ? fs::path("verify.json") : fs::path(o.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  std::ofstream os(out);
  if (!os) throw IoError("cannot open " + out.string() + " for writing");
  os << checks_to_json(checks) << '\n';
  std::vector<std::string> failed;
  for (const PropositionCheck& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    if (!c.passed) failed.push_back(c.name);
  }
  if (failed.empty()) return kExitOk;
  std::cerr << "failed checks:";
  for (const auto& f : failed) std::cerr << ' ' << f;
  std::cerr << '\n';
  return kExitVerifyFailed;
}

int cmd_report(const Options& o) {
  if (o.metrics.empty()) throw ConfigError("report needs a metrics CSV");
  const std::vector<MetricRow> rows = read_metrics_csv(o.metrics);
  std::cout << format_summary(summarize(rows)) << '\n' << format_win_loss(win_loss_matrix(rows));
  return kExitOk;
}

}  // namespace

Profile profile_by_name(std::string_view name) {
  if (name == "paper") return {"paper", {20000, 2000, 3000}, 20, 10};
  if (name == "desk") return {"desk", {2000, 500, 500}, 5, 5};
  throw ConfigError("unknown profile '" + std::string(name) + "' (valid: paper, desk)");
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Learnable set aggregation with neuralized Kolmogorov means"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--profile", o.profile, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--seed", o.seed, "Base random seed");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--family", o.families, "Model families")->delimiter(',');
    sub->add_option("--lr", o.lrs, "Learning rates")->delimiter(',');
    sub->add_option("--epochs", o.epochs);
    sub->add_option("--batch", o.batch);
    sub->add_option("--latent", o.latent);
    sub->add_option("--replicates", o.replicates);
    sub->add_option("--data", o.data_dir, "Dataset root; <root>/<task> is read or written");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--task", o.tasks, "Task kind")->required()->delimiter(',');
  gen->add_option("--n-max", o.n_max, "Largest set size");
  gen->add_option("--out", o.out, "Output directory");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "Train one family on one task and save the selected model");
  train->add_option("--task", o.tasks, "Task kind")->required()->delimiter(',');
  train->add_option("--n-max", o.n_max, "Largest set size");
  train->add_option("--out", o.out, "Output directory");
  add_common(train);
  add_training(train);

  CLI::App* bench = app.add_subcommand("bench", "Run the family x task x replicate grid");
  bench->add_option("--task", o.tasks, "Task kinds")->delimiter(',');
  bench->add_option("--n-max", o.n_max, "Largest set size");
  bench->add_option("--out", o.out, "Output directory");
  add_common(bench);
  add_training(bench);

  CLI::App* verify = app.add_subcommand("verify", "Run the numerical property checks");
  verify->add_option("--seed", o.seed, "Random seed");
  verify->add_option("--out", o.out, "Report path (JSON)");
  verify->add_option("--tolerance", o.tolerance, "Override every check's tolerance");

  CLI::App* report = app.add_subcommand("report", "Summarize a metrics CSV");
  report->add_option("metrics", o.metrics, "metrics.csv written by bench")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*train) return cmd_train(o);
    if (*bench) return cmd_bench(o);
    if (*verify) return cmd_verify(o);
    if (*report) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace quann
