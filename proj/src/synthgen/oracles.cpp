#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "quann/errors.hpp"
#include "quann/synthgen.hpp"

namespace quann {
namespace {

// Points sorted lexicographically, one row per point.
struct Cloud {
  std::size_t n = 0, dim = 0;
  std::vector<double> v;
  const double* row(std::size_t i) const { return v.data() + i * dim; }
  double at(std::size_t i, std::size_t k) const { return v[i * dim + k]; }
};

Cloud sorted_cloud(std::span<const double> points, std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw ShapeError("oracle: points are not a multiple of dim");
  Cloud c;
  c.dim = dim;
  c.n = points.size() / dim;
  if (c.n == 0) throw EmptySetError("oracle: empty point set");
  std::vector<std::size_t> idx(c.n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(points.begin() + a * dim, points.begin() + (a + 1) * dim,
                                        points.begin() + b * dim, points.begin() + (b + 1) * dim);
  });
  c.v.reserve(points.size());
  for (std::size_t i : idx) c.v.insert(c.v.end(), points.begin() + i * dim, points.begin() + (i + 1) * dim);
  return c;
}

std::vector<double> column(const Cloud& c, std::size_t k) {
  std::vector<double> col(c.n);
  for (std::size_t i = 0; i < c.n; ++i) col[i] = c.at(i, k);
  return col;
}

// Median with the midpoint rule for even n.
double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

double distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

template <class F>
std::vector<double> per_coordinate(const Cloud& c, F f) {
  std::vector<double> out(c.dim);
  for (std::size_t k = 0; k < c.dim; ++k) out[k] = f(column(c, k));
  return out;
}

}  // namespace

double l1_objective(std::span<const double> points, std::size_t dim, std::span<const double> z) {
  if (z.size() != dim) throw ShapeError("l1_objective: candidate width differs from dim");
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); i += dim) {
    for (std::size_t k = 0; k < dim; ++k) s += std::abs(points[i + k] - z[k]);
  }
  return s;
}

std::vector<double> oracle_vector(TaskKind kind, std::span<const double> points, std::size_t dim) {
  if (!is_vector_task(kind)) throw ConfigError(std::string(task_name(kind)) + " is not a vector task");
  const Cloud c = sorted_cloud(points, dim);
  switch (kind) {
    case TaskKind::marginal_median:
    // The L1 objective separates over coordinates, so its minimizer is the
    // coordinatewise median.
    case TaskKind::geometric_median:
      return per_coordinate(c, median_of);
    case TaskKind::medoid: {
      std::size_t best = 0;
      double best_cost = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < c.n; ++i) {
        double cost = 0.0;
        for (std::size_t j = 0; j < c.n; ++j) cost += distance(c.row(i), c.row(j), dim);
        // Rows are visited in lexicographic order; costs within rounding of
        // the best so far count as ties and keep the earlier row.
        if (cost < best_cost * (1.0 - 1e-12)) {
          best_cost = cost;
          best = i;
        }
      }
      return {c.row(best), c.row(best) + dim};
    }
    case TaskKind::quadratic_mean:
      return per_coordinate(c, [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s / static_cast<double>(v.size()));
      });
    case TaskKind::midpoint: {
      if (c.n < 2) throw EmptySetError("midpoint needs at least two points");
      std::size_t bi = 0, bj = 1;
      double best = -1.0;
      for (std::size_t i = 0; i < c.n; ++i) {
        for (std::size_t j = i + 1; j < c.n; ++j) {
          const double d = distance(c.row(i), c.row(j), dim);
          if (d > best) {
            best = d;
            bi = i;
            bj = j;
          }
        }
      }
      std::vector<double> out(dim);
      for (std::size_t k = 0; k < dim; ++k) out[k] = 0.5 * (c.at(bi, k) + c.at(bj, k));
      return out;
    }
    case TaskKind::vec_max_norm: {
      std::size_t best = 0;
      double best_norm = -1.0;
      const std::vector<double> origin(dim, 0.0);
      for (std::size_t i = 0; i < c.n; ++i) {
        const double norm = distance(c.row(i), origin.data(), dim);
        if (norm > best_norm) {
          best_norm = norm;
          best = i;
        }
      }
      return {c.row(best), c.row(best) + dim};
    }
    case TaskKind::row_max:
      return per_coordinate(c, [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); });
    case TaskKind::log_sum_exp:
      return per_coordinate(c, [](const std::vector<double>& v) { return log_sum_exp(v); });
    case TaskKind::variance:
      return per_coordinate(c, [](const std::vector<double>& v) { return population_variance(v); });
    case TaskKind::skewness:
      return per_coordinate(c, [](const std::vector<double>& v) {
        const double m = mean_of(v);
        const double sigma = std::sqrt(population_variance(v));
        if (sigma == 0.0) return 0.0;
        double s = 0.0;
        for (double x : v) {
          const double z = (x - m) / sigma;
          s += z * z * z;
        }
        return s / static_cast<double>(v.size());
      });
    default:
      break;
  }
  throw ConfigError("unhandled vector task");
}

double oracle_scalar(TaskKind kind, std::span<const double> raw) {
  if (is_vector_task(kind)) throw ConfigError(std::string(task_name(kind)) + " is not a scalar task");
  if (raw.empty()) throw EmptySetError("oracle: empty value set");
  std::vector<double> v(raw.begin(), raw.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  switch (kind) {
    case TaskKind::mean:
      return mean_of(v);
    case TaskKind::median:
      return median_of(v);
    case TaskKind::mode: {
      // v is sorted: the first run of maximal length holds the smallest mode
      double best = v[0];
      std::size_t best_run = 0;
      for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        if (j - i > best_run) {
          best_run = j - i;
          best = v[i];
        }
        i = j;
      }
      return best;
    }
    case TaskKind::geometric_mean: {
      double s = 0.0;
      for (double x : v) {
        if (!(x > 0.0)) throw DomainError("geometric mean needs positive values");
        s += std::log(x);
      }
      return std::exp(s / n);
    }
    case TaskKind::harmonic_mean: {
      double s = 0.0;
      for (double x : v) {
        if (!(x > 0.0)) throw DomainError("harmonic mean needs positive values");
        s += 1.0 / x;
      }
      return n / s;
    }
    case TaskKind::log_mean_exp:
      return log_sum_exp(v) - std::log(n);
    case TaskKind::midrange:
      return 0.5 * (v.front() + v.back());
    case TaskKind::variance_s:
      return population_variance(v);
    case TaskKind::max_s:
      return v.back();
    case TaskKind::sum_s: {
      double s = 0.0;
      for (double x : v) s += x;
      return s;
    }
    default:
      break;
  }
  throw ConfigError("unhandled scalar task");
}

std::vector<double> oracle(TaskKind kind, std::span<const double> points, std::size_t dim) {
  if (is_vector_task(kind)) return oracle_vector(kind, points, dim);
  if (dim != 1) throw ShapeError("scalar tasks take one value per element");
  return {oracle_scalar(kind, points)};
}

}  // namespace quann
