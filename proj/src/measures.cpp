#include "mvl/measures.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvl/rng.hpp"

namespace mvl {

namespace {

struct WeightedValue {
  double value;
  double weight;
};

std::vector<WeightedValue> sorted_1d(const EmpiricalMeasure& m) {
  std::vector<WeightedValue> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[i] = {m.points()(0, i), m.weights()[i]};
  std::sort(out.begin(), out.end(),
            [](const WeightedValue& l, const WeightedValue& r) { return l.value < r.value; });
  return out;
}

double w1_weighted_sorted(const std::vector<WeightedValue>& a, const std::vector<WeightedValue>& b) {
  std::size_t i = 0, j = 0;
  double wa = a[0].weight, wb = b[0].weight;
  double total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double step = std::min(wa, wb);
    total += step * std::abs(a[i].value - b[j].value);
    const bool advance_a = wa <= wb;
    const bool advance_b = wb <= wa;
    wa -= step;
    wb -= step;
    if (advance_a && ++i < a.size()) wa = a[i].weight;
    if (advance_b && ++j < b.size()) wb = b[j].weight;
  }
  return total;
}

std::vector<double> projected_sorted(const EmpiricalMeasure& m, const Vector& direction) {
  const Eigen::RowVectorXd proj = direction.transpose() * m.points();
  std::vector<double> out(proj.data(), proj.data() + proj.size());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(Matrix points)
    : points_(std::move(points)), uniform_(true) {
  validate_points();
  weights_ = Vector::Constant(points_.cols(), 1.0 / static_cast<double>(points_.cols()));
  mean_ = points_.rowwise().mean();
}

EmpiricalMeasure::EmpiricalMeasure(Matrix points, Vector weights)
    : points_(std::move(points)), weights_(std::move(weights)), uniform_(false) {
  validate_points();
  if (weights_.size() != points_.cols()) throw std::invalid_argument("EmpiricalMeasure: weight count mismatch");
  if (!weights_.allFinite() || (weights_.array() < 0.0).any())
    throw std::invalid_argument("EmpiricalMeasure: weights must be finite and nonnegative");
  const double total = weights_.sum();
  if (!(total > 0.0)) throw std::invalid_argument("EmpiricalMeasure: weights sum to zero");
  weights_ /= total;
  mean_ = points_ * weights_;
}

void EmpiricalMeasure::validate_points() const {
  if (points_.rows() == 0 || points_.cols() == 0) throw std::invalid_argument("EmpiricalMeasure: empty");
  if (!points_.allFinite()) throw std::invalid_argument("EmpiricalMeasure: non-finite point");
}

EmpiricalMeasure EmpiricalMeasure::thinned(Eigen::Index max_points) const {
  if (!uniform_) throw std::logic_error("EmpiricalMeasure::thinned: weighted measures are not thinned");
  if (max_points < 1) throw std::invalid_argument("EmpiricalMeasure::thinned: max_points must be >= 1");
  const Eigen::Index n = size();
  const Eigen::Index stride = (n + max_points - 1) / max_points;
  if (stride <= 1) return *this;
  const Eigen::Index kept = (n + stride - 1) / stride;
  Matrix out(dim(), kept);
  for (Eigen::Index i = 0; i < kept; ++i) out.col(i) = points_.col(i * stride);
  return EmpiricalMeasure(std::move(out));
}

EmpiricalMeasure EmpiricalMeasure::coordinates(std::span<const Eigen::Index> rows) const {
  Matrix out(static_cast<Eigen::Index>(rows.size()), size());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = points_.row(rows[r]);
  if (uniform_) return EmpiricalMeasure(std::move(out));
  return EmpiricalMeasure(std::move(out), weights_);
}

RunningMean::RunningMean(Vector z0) : count_(1), mean_(std::move(z0)) {}

void RunningMean::update(const Vector& z) {
  if (z.size() != mean_.size()) throw std::invalid_argument("RunningMean: dimension mismatch");
  const double n = static_cast<double>(count_);
  mean_ = (n / (n + 1.0)) * mean_ + (1.0 / (n + 1.0)) * z;
  ++count_;
}

RunningMean running_mean_update(RunningMean m, const Vector& z) {
  m.update(z);
  return m;
}

double w1_exact_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dim() != 1 || b.dim() != 1) throw std::invalid_argument("w1_exact_1d: measures must be one-dimensional");
  return w1_weighted_sorted(sorted_1d(a), sorted_1d(b));
}

double w1_uniform_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w1_uniform_sorted: empty sample");
  // Each a-point carries |b| units of mass and each b-point |a| units.
  const auto na = static_cast<std::int64_t>(a.size());
  const auto nb = static_cast<std::int64_t>(b.size());
  std::size_t i = 0, j = 0;
  std::int64_t ra = nb, rb = na;
  double total = 0.0;
  while (i < a.size() && j < b.size()) {
    const std::int64_t step = std::min(ra, rb);
    total += static_cast<double>(step) * std::abs(a[i] - b[j]);
    ra -= step;
    rb -= step;
    if (ra == 0) { ++i; ra = nb; }
    if (rb == 0) { ++j; rb = na; }
  }
  return total / (static_cast<double>(na) * static_cast<double>(nb));
}

double transport_cost(const Matrix& cost, const Vector& supply, const Vector& demand) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  if (supply.size() != n || demand.size() != m) throw std::invalid_argument("transport_cost: shape mismatch");
  const Eigen::Index nodes = n + m;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  Matrix flow = Matrix::Zero(n, m);
  Vector left = supply;   // remaining supply
  Vector need = demand;   // remaining demand
  Vector potential = Vector::Zero(nodes);
  Vector dist(nodes);
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(nodes));
  std::vector<char> done(static_cast<std::size_t>(nodes));

  const double mass_floor = 1e-15 * std::max(supply.sum(), 1e-300);

  for (;;) {
    bool any_supply = false;
    for (Eigen::Index i = 0; i < n; ++i) any_supply |= left[i] > mass_floor;
    bool any_demand = false;
    for (Eigen::Index j = 0; j < m; ++j) any_demand |= need[j] > mass_floor;
    if (!any_supply || !any_demand) break;

    // Dense Dijkstra on the residual graph with reduced costs.
    dist.setConstant(kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i)
      if (left[i] > mass_floor) dist[i] = 0.0;

    for (Eigen::Index iter = 0; iter < nodes; ++iter) {
      Eigen::Index u = -1;
      double best = kInf;
      for (Eigen::Index k = 0; k < nodes; ++k)
        if (!done[k] && dist[k] < best) { best = dist[k]; u = k; }
      if (u < 0) break;
      done[u] = 1;
      if (u < n) {
        for (Eigen::Index j = 0; j < m; ++j) {
          const Eigen::Index t = n + j;
          if (done[t]) continue;
          const double rc = std::max(0.0, cost(u, j) + potential[u] - potential[t]);
          if (best + rc < dist[t]) { dist[t] = best + rc; parent[t] = u; }
        }
      } else {
        const Eigen::Index j = u - n;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (done[i] || flow(i, j) <= 0.0) continue;
          const double rc = std::max(0.0, -cost(i, j) + potential[u] - potential[i]);
          if (best + rc < dist[i]) { dist[i] = best + rc; parent[i] = u; }
        }
      }
    }

    Eigen::Index sink = -1;
    for (Eigen::Index j = 0; j < m; ++j)
      if (need[j] > mass_floor && (sink < 0 || dist[n + j] < dist[sink])) sink = n + j;
    if (sink < 0 || !std::isfinite(dist[sink])) throw std::runtime_error("transport_cost: no augmenting path");
    const double cutoff = dist[sink];
    for (Eigen::Index k = 0; k < nodes; ++k) potential[k] += std::min(dist[k], cutoff);

    // Bottleneck along the path sink <- ... <- source.
    double amount = need[sink - n];
    Eigen::Index node = sink;
    while (parent[node] >= 0) {
      const Eigen::Index prev = parent[node];
      if (prev >= n) amount = std::min(amount, flow(node, prev - n));  // reverse edge
      node = prev;
    }
    const Eigen::Index source = node;
    amount = std::min(amount, left[source]);

    node = sink;
    while (parent[node] >= 0) {
      const Eigen::Index prev = parent[node];
      if (prev < n) {
        flow(prev, node - n) += amount;
      } else {
        double& f = flow(node, prev - n);
        f = (f == amount) ? 0.0 : f - amount;
      }
      node = prev;
    }
    left[source] = (left[source] == amount) ? 0.0 : left[source] - amount;
    need[sink - n] = (need[sink - n] == amount) ? 0.0 : need[sink - n] - amount;
  }
  return (flow.array() * cost.array()).sum();
}

namespace {

// Total order on measures so that the solver sees the same problem whichever
// argument comes first; this makes the result exactly symmetric.
bool canonically_before(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  const auto pa = a.points().reshaped(), pb = b.points().reshaped();
  if (!std::ranges::equal(pa, pb))
    return std::ranges::lexicographical_compare(pa, pb);
  return std::ranges::lexicographical_compare(a.weights(), b.weights());
}

}  // namespace

double w1_exact_small(const EmpiricalMeasure& a_in, const EmpiricalMeasure& b_in) {
  if (a_in.dim() != b_in.dim()) throw std::invalid_argument("w1_exact_small: dimension mismatch");
  const bool swap = canonically_before(b_in, a_in);
  const EmpiricalMeasure& a = swap ? b_in : a_in;
  const EmpiricalMeasure& b = swap ? a_in : b_in;
  if (static_cast<std::int64_t>(a.size()) * b.size() > kExactTransportMaxCells)
    throw std::length_error("w1_exact_small: |a| * |b| exceeds the exact-solver cap");
  Matrix cost(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) cost(i, j) = (a.points().col(i) - b.points().col(j)).norm();
  return transport_cost(cost, a.weights(), b.weights());
}

double w1_sliced(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int n_projections,
                 std::uint64_t rng_seed) {
  if (a.dim() != b.dim()) throw std::invalid_argument("w1_sliced: dimension mismatch");
  if (a.dim() < 2) throw std::invalid_argument("w1_sliced: needs dim >= 2");
  if (n_projections < 1) throw std::invalid_argument("w1_sliced: n_projections must be >= 1");
  const Eigen::Index d = a.dim();
  double total = 0.0;
  for (int k = 0; k < n_projections; ++k) {
    DrawStream s(rng_seed, 0u, static_cast<std::uint64_t>(k));
    Vector dir(d);
    do {
      for (Eigen::Index i = 0; i < d; ++i) dir[i] = s.normal();
    } while (dir.norm() == 0.0);
    dir.normalize();
    if (a.is_uniform() && b.is_uniform()) {
      total += w1_uniform_sorted(projected_sorted(a, dir), projected_sorted(b, dir));
    } else {
      EmpiricalMeasure pa(Matrix(dir.transpose() * a.points()), a.weights());
      EmpiricalMeasure pb(Matrix(dir.transpose() * b.points()), b.weights());
      total += w1_exact_1d(pa, pb);
    }
  }
  return total / n_projections;
}

EmpiricalMeasure gaussian_sampler(const Vector& mean, const Vector& diag_variances, Eigen::Index n,
                                  std::uint64_t rng_seed) {
  if (mean.size() == 0 || mean.size() != diag_variances.size())
    throw std::invalid_argument("gaussian_sampler: mean/variance dimension mismatch");
  if (!(diag_variances.array() > 0.0).all()) throw std::invalid_argument("gaussian_sampler: variances must be > 0");
  if (n < 1) throw std::invalid_argument("gaussian_sampler: n must be >= 1");
  const Vector sd = diag_variances.cwiseSqrt();
  Matrix pts(mean.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    DrawStream s(rng_seed, 0u, static_cast<std::uint64_t>(i));
    for (Eigen::Index r = 0; r < mean.size(); ++r) pts(r, i) = mean[r] + sd[r] * s.normal();
  }
  return EmpiricalMeasure(std::move(pts));
}

void write_measure(std::ostream& out, const EmpiricalMeasure& m) {
  const auto old = out.precision(17);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (Eigen::Index r = 0; r < m.dim(); ++r) out << m.points()(r, i) << ' ';
    out << m.weights()[i] << '\n';
  }
  out.precision(old);
}

EmpiricalMeasure read_measure(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double value;
    while (ls >> value) row.push_back(value);
    if (!ls.eof()) throw std::invalid_argument("read_measure: malformed line: " + line);
    if (row.size() < 2) throw std::invalid_argument("read_measure: need at least one coordinate and a weight");
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("read_measure: inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("read_measure: no points");
  const auto dim = static_cast<Eigen::Index>(rows.front().size() - 1);
  Matrix pts(dim, static_cast<Eigen::Index>(rows.size()));
  Vector w(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index r = 0; r < dim; ++r) pts(r, static_cast<Eigen::Index>(i)) = rows[i][r];
    w[static_cast<Eigen::Index>(i)] = rows[i].back();
  }
  return EmpiricalMeasure(std::move(pts), std::move(w));
}

}  // namespace mvl
