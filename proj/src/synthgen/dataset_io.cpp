#include <fstream>

#include <json.hpp>

#include "quann/errors.hpp"
#include "quann/synthgen.hpp"

namespace quann {
namespace {

using nlohmann::json;

constexpr std::size_t kSpotCheckStride = 97;

json record_json(const DatasetRecord& r) {
  json points = json::array();
  for (std::size_t i = 0; i < r.size(); ++i) {
    points.push_back(std::vector<double>(r.points.begin() + static_cast<std::ptrdiff_t>(i * r.dim),
                                         r.points.begin() + static_cast<std::ptrdiff_t>((i + 1) * r.dim)));
  }
  return json{{"points", std::move(points)}, {"target", r.target}};
}

DatasetRecord parse_record(const std::string& line, const TaskSpec& task, const std::string& where) {
  DatasetRecord r;
  r.dim = task.dim;
  try {
    const json j = json::parse(line);
    for (const auto& p : j.at("points")) {
      if (p.size() != task.dim) throw DataError(where + ": point has " + std::to_string(p.size()) + " coordinates");
      for (const auto& v : p) r.points.push_back(v.get<double>());
    }
    r.target = j.at("target").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  if (r.size() < 2 || r.size() > task.n_max) {
    throw DataError(where + ": set size " + std::to_string(r.size()) + " outside [2, " + std::to_string(task.n_max) + "]");
  }
  if (r.target.size() != task.target_width()) throw DataError(where + ": target has the wrong width");
  return r;
}

std::filesystem::path split_path(const std::filesystem::path& dir, Split s) {
  return dir / (std::string(split_name(s)) + ".jsonl");
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto path = split_path(dir, s);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    for (const DatasetRecord& r : data.split(s)) os << record_json(r).dump() << '\n';
    if (!os) throw IoError("write failed for " + path.string());
  }
  const json manifest{
      {"task", std::string(task_name(data.task.kind))},
      {"counts", {{"train", data.counts.train}, {"val", data.counts.val}, {"test", data.counts.test}}},
      {"seed", data.seed},
      {"dim", data.task.dim},
      {"n_min", data.task.n_min},
      {"n_max", data.task.n_max},
      {"scale_range", {data.task.scale_lo, data.task.scale_hi}},
      {"shift_range", {data.task.shift_lo, data.task.shift_hi}},
      {"generator_version", kGeneratorVersion},
  };
  const auto path = dir / "manifest.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream ms(manifest_path);
  if (!ms) throw IoError("cannot open " + manifest_path.string());
  Dataset d;
  try {
    const json m = json::parse(ms);
    if (m.at("generator_version").get<int>() != kGeneratorVersion) {
      throw DataError(manifest_path.string() + ": unsupported generator version");
    }
    d.task.kind = parse_task(m.at("task").get<std::string>());
    d.task.dim = m.at("dim").get<std::size_t>();
    d.task.n_min = m.at("n_min").get<std::size_t>();
    d.task.n_max = m.at("n_max").get<std::size_t>();
    d.task.scale_lo = m.at("scale_range").at(0).get<double>();
    d.task.scale_hi = m.at("scale_range").at(1).get<double>();
    d.task.shift_lo = m.at("shift_range").at(0).get<double>();
    d.task.shift_hi = m.at("shift_range").at(1).get<double>();
    d.seed = m.at("seed").get<std::uint64_t>();
    d.counts.train = m.at("counts").at("train").get<std::size_t>();
    d.counts.val = m.at("counts").at("val").get<std::size_t>();
    d.counts.test = m.at("counts").at("test").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  d.task.validate();

  for (auto [split, out, count] : {std::tuple{Split::train, &d.train, d.counts.train},
                                   std::tuple{Split::val, &d.val, d.counts.val},
                                   std::tuple{Split::test, &d.test, d.counts.test}}) {
    const auto path = split_path(dir, split);
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      out->push_back(parse_record(line, d.task, path.string() + ":" + std::to_string(lineno)));
    }
    if (out->size() != count) {
      throw DataError(path.string() + ": manifest promises " + std::to_string(count) + " records, found " +
                      std::to_string(out->size()));
    }
    for (std::size_t i = 0; i < out->size(); ++i) {
      if (i % kSpotCheckStride != 0 && i + 1 != out->size()) continue;
      const DatasetRecord& r = (*out)[i];
      if (oracle(d.task.kind, r.points, r.dim) != r.target) {
        throw DataError(path.string() + ": record " + std::to_string(i) + " target does not match the oracle");
      }
    }
  }
  return d;
}

}  // namespace quann
