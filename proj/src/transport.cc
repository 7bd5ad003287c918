#include "gomt/transport.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gomt/error.h"

namespace gomt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_problem(const Mat& cost, const DiscreteMeasure& source,
                   const DiscreteMeasure& target) {
  if (source.size() == 0 || target.size() == 0) {
    throw InvalidArgumentError("empty measure");
  }
  if (cost.rows() != source.size() || cost.cols() != target.size()) {
    throw InvalidArgumentError("cost matrix shape does not match the measures");
  }
  if (!cost.allFinite()) {
    throw InvalidArgumentError("cost matrix has non-finite entries");
  }
  const double gap = std::abs(source.weight_vector().sum() -
                              target.weight_vector().sum());
  if (gap > 1e-9) {
    throw MarginalMismatchError("source and target masses differ by " +
                                std::to_string(gap));
  }
}

void finish(Coupling& c, const Mat& cost) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < c.plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.plan.cols(); ++j) {
      if (c.plan(i, j) != 0.0) total += c.plan(i, j) * cost(i, j);
    }
  }
  c.cost = total;
  c.row_residual =
      (c.plan.rowwise().sum() - c.source.weight_vector()).cwiseAbs().maxCoeff();
  c.col_residual = (c.plan.colwise().sum().transpose() -
                    c.target.weight_vector())
                       .cwiseAbs()
                       .maxCoeff();
}

bool equal_weights(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.size() != b.size()) return false;
  const double w = 1.0 / a.size();
  const auto same = [w](double x) { return std::abs(x - w) <= 1e-15; };
  return std::all_of(a.weights().begin(), a.weights().end(), same) &&
         std::all_of(b.weights().begin(), b.weights().end(), same);
}

// Transportation simplex on the bipartite spanning-tree basis. Rows are tree
// nodes 0..m-1, columns m..m+n-1.
class TransportationSimplex {
 public:
  TransportationSimplex(const Mat& cost, const Vec& a, const Vec& b)
      : c_(cost), m_(cost.rows()), n_(cost.cols()), x_(Mat::Zero(m_, n_)),
        basic_(m_ * n_, false) {
    northwest_corner(a, b);
  }

  // Returns false if the pivot budget ran out.
  bool run(int& pivots) {
    const double scale = std::max(1.0, c_.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * scale;
    const long budget = 50L * m_ * n_ + 1000;
    int degenerate_run = 0;
    Vec u(m_), v(n_);
    for (pivots = 0; pivots < budget; ++pivots) {
      potentials(u, v);
      const bool bland = degenerate_run > m_ + n_;
      int ei = -1, ej = -1;
      double best = -tol;
      for (int i = 0; i < m_ && !(bland && ei >= 0); ++i) {
        for (int j = 0; j < n_; ++j) {
          if (basic_[i * n_ + j]) continue;
          const double r = c_(i, j) - u[i] - v[j];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) return true;
      if (pivot(ei, ej)) {
        degenerate_run = 0;
      } else {
        ++degenerate_run;
      }
    }
    return false;
  }

  const Mat& flow() const { return x_; }

 private:
  void add_basic(int i, int j, double x) {
    basic_[i * n_ + j] = true;
    x_(i, j) = x;
  }

  void northwest_corner(const Vec& a, const Vec& b) {
    Vec r = a;
    Vec c = b;
    int i = 0, j = 0;
    while (true) {
      const double x = std::max(0.0, std::min(r[i], c[j]));
      add_basic(i, j, x);
      r[i] -= x;
      c[j] -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (r[i] <= 0.0) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  void adjacency(std::vector<std::vector<int>>& nbr) const {
    nbr.assign(m_ + n_, {});
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (!basic_[i * n_ + j]) continue;
        nbr[i].push_back(m_ + j);
        nbr[m_ + j].push_back(i);
      }
    }
  }

  void potentials(Vec& u, Vec& v) const {
    std::vector<std::vector<int>> nbr;
    adjacency(nbr);
    std::vector<bool> seen(m_ + n_, false);
    std::vector<int> stack = {0};
    seen[0] = true;
    u[0] = 0.0;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int other : nbr[node]) {
        if (seen[other]) continue;
        seen[other] = true;
        if (node < m_) {
          v[other - m_] = c_(node, other - m_) - u[node];
        } else {
          u[other] = c_(other, node - m_) - v[node - m_];
        }
        stack.push_back(other);
      }
    }
  }

  // Returns true when the pivot moved a positive amount of mass.
  bool pivot(int ei, int ej) {
    std::vector<std::vector<int>> nbr;
    adjacency(nbr);
    std::vector<int> parent(m_ + n_, -1);
    std::vector<int> queue = {ei};
    parent[ei] = ei;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      for (int other : nbr[queue[q]]) {
        if (parent[other] >= 0) continue;
        parent[other] = queue[q];
        queue.push_back(other);
      }
    }
    // Tree path from column ej back to row ei.
    std::vector<std::pair<int, int>> path;
    for (int node = m_ + ej; node != ei; node = parent[node]) {
      const int up = parent[node];
      path.push_back(node < m_ ? std::make_pair(node, up - m_)
                               : std::make_pair(up, node - m_));
    }
    std::reverse(path.begin(), path.end());
    // Cells alternate -, +, -, ... starting next to row ei.
    double theta = kInf;
    int leave = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const auto [i, j] = path[k];
      const int idx = i * n_ + j;
      if (x_(i, j) < theta || (x_(i, j) == theta && idx < leave)) {
        theta = x_(i, j);
        leave = idx;
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      const auto [i, j] = path[k];
      x_(i, j) += (k % 2 == 0) ? -theta : theta;
    }
    add_basic(ei, ej, theta);
    basic_[leave] = false;
    x_(leave / n_, leave % n_) = 0.0;
    return theta > 0.0;
  }

  const Mat& c_;
  int m_;
  int n_;
  Mat x_;
  std::vector<bool> basic_;
};

double log_sum_exp(const double* values, int count) {
  double hi = -kInf;
  for (int k = 0; k < count; ++k) hi = std::max(hi, values[k]);
  if (hi == -kInf) return -kInf;
  double s = 0.0;
  for (int k = 0; k < count; ++k) s += std::exp(values[k] - hi);
  return hi + std::log(s);
}

struct LogSinkhorn {
  const Mat& cost;
  Vec log_a;
  Vec log_b;
  Vec f;
  Vec g;

  LogSinkhorn(const Mat& c, const Vec& a, const Vec& b)
      : cost(c),
        log_a(a.array().log()),
        log_b(b.array().log()),
        f(Vec::Zero(c.rows())),
        g(Vec::Zero(c.cols())) {}

  void update_g(double eps) {
    const int m = static_cast<int>(cost.rows());
    std::vector<double> buf(m);
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      for (int i = 0; i < m; ++i) buf[i] = (f[i] - cost(i, j)) / eps;
      g[j] = eps * (log_b[j] - log_sum_exp(buf.data(), m));
    }
  }

  void update_f(double eps) {
    const int n = static_cast<int>(cost.cols());
    std::vector<double> buf(n);
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
      for (int j = 0; j < n; ++j) buf[j] = (g[j] - cost(i, j)) / eps;
      f[i] = eps * (log_a[i] - log_sum_exp(buf.data(), n));
    }
  }

  // l1 distance of the column sums from b.
  double col_residual(double eps) const {
    return (plan(eps).colwise().sum().transpose() -
            log_b.array().exp().matrix())
        .lpNorm<1>();
  }

  // One g-update then one f-update; returns the l1 column residual.
  double iterate(double eps) {
    update_g(eps);
    update_f(eps);
    return col_residual(eps);
  }

  // Damped Newton step on the dual potentials followed by an f-update.
  // The last column potential is pinned to remove the constant shift.
  // Returns the new residual, or a negative value if no step helped.
  double newton(double eps, double current) {
    const Eigen::Index m = cost.rows();
    const Eigen::Index n = cost.cols();
    const Mat P = plan(eps);
    const Vec r = P.rowwise().sum();
    const Vec c = P.colwise().sum().transpose();
    const Eigen::Index k = m + n - 1;
    Mat H = Mat::Zero(k, k);
    Vec rhs(k);
    H.topLeftCorner(m, m) = r.asDiagonal();
    H.topRightCorner(m, n - 1) = P.leftCols(n - 1);
    H.bottomLeftCorner(n - 1, m) = P.leftCols(n - 1).transpose();
    H.bottomRightCorner(n - 1, n - 1) = c.head(n - 1).asDiagonal();
    rhs.head(m) = log_a.array().exp().matrix() - r;
    rhs.tail(n - 1) = log_b.head(n - 1).array().exp().matrix() - c.head(n - 1);
    const Vec delta = eps * H.ldlt().solve(rhs);
    if (!delta.allFinite()) return -1.0;
    const Vec f0 = f;
    const Vec g0 = g;
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      f = f0 + t * delta.head(m);
      g = g0;
      g.head(n - 1) += t * delta.tail(n - 1);
      update_f(eps);
      const double res = col_residual(eps);
      if (res < current) return res;
    }
    f = f0;
    g = g0;
    return -1.0;
  }

  Mat plan(double eps) const {
    Mat p(cost.rows(), cost.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        p(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / eps);
      }
    }
    return p;
  }
};

void normalize_rows(Mat& plan, const Vec& a) {
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    const double s = plan.row(i).sum();
    if (s > 0.0) plan.row(i) *= a[i] / s;
  }
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(std::vector<Vec> support,
                                 std::vector<double> weights)
    : support_(std::move(support)), weights_(std::move(weights)) {
  if (support_.size() != weights_.size()) {
    throw InvalidArgumentError("support and weights differ in length");
  }
  if (support_.empty()) throw InvalidArgumentError("empty measure");
  const Eigen::Index dim = support_.front().size();
  double total = 0.0;
  for (std::size_t k = 0; k < support_.size(); ++k) {
    if (support_[k].size() != dim || !support_[k].allFinite()) {
      throw InvalidArgumentError("support point " + std::to_string(k) +
                                 " is not a finite vector of the common "
                                 "dimension");
    }
    if (!(weights_[k] >= 0.0) || !std::isfinite(weights_[k])) {
      throw InvalidArgumentError("weight " + std::to_string(k) +
                                 " is negative or non-finite");
    }
    total += weights_[k];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidArgumentError("weights sum to " + std::to_string(total) +
                               ", not 1");
  }
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Vec> support) {
  const std::size_t n = support.size();
  if (n == 0) throw InvalidArgumentError("empty measure");
  return DiscreteMeasure(std::move(support),
                         std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Vec DiscreteMeasure::weight_vector() const {
  return Eigen::Map<const Vec>(weights_.data(),
                               static_cast<Eigen::Index>(weights_.size()));
}

DiscreteMeasure sample_gaussian(const GaussianSpec& spec, int n,
                                std::uint64_t seed) {
  if (n < 1) throw InvalidArgumentError("sample count must be at least 1");
  const Eigen::Matrix3d& cov = spec.covariance;
  if (!cov.allFinite() || !spec.mean.allFinite() ||
      (cov - cov.transpose()).cwiseAbs().maxCoeff() >
          1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw InvalidArgumentError("covariance must be finite and symmetric");
  }
  const Eigen::LLT<Eigen::Matrix3d> llt(cov);
  if (llt.info() != Eigen::Success ||
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov, Eigen::EigenvaluesOnly)
              .eigenvalues()
              .minCoeff() <= 0.0) {
    throw InvalidArgumentError("covariance is not positive definite");
  }
  const Eigen::Matrix3d L = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec> points;
  points.reserve(n);
  for (int k = 0; k < n; ++k) {
    Eigen::Vector3d g;
    for (int d = 0; d < 3; ++d) g[d] = normal(rng);
    points.emplace_back(spec.mean + L * g);
  }
  return DiscreteMeasure::uniform(std::move(points));
}

DiscreteMeasure pushforward_inertia(const DiscreteMeasure& omega,
                                    const InertiaBody& body) {
  std::vector<Vec> support;
  support.reserve(omega.size());
  for (const Vec& w : omega.support()) {
    if (w.size() != 3) throw InvalidArgumentError("support must be 3-D");
    support.emplace_back(body.moments().cwiseProduct(Eigen::Vector3d(w)));
  }
  return DiscreteMeasure(std::move(support), omega.weights());
}

DiscreteMeasure pullback_inertia(const DiscreteMeasure& x,
                                 const InertiaBody& body) {
  std::vector<Vec> support;
  support.reserve(x.size());
  for (const Vec& p : x.support()) {
    if (p.size() != 3) throw InvalidArgumentError("support must be 3-D");
    support.emplace_back(Eigen::Vector3d(p).cwiseQuotient(body.moments()));
  }
  return DiscreteMeasure(std::move(support), x.weights());
}

double second_moment(const DiscreteMeasure& measure) {
  double s = 0.0;
  for (int k = 0; k < measure.size(); ++k) {
    s += measure.weights()[k] * measure.support()[k].squaredNorm();
  }
  return s;
}

std::vector<int> hungarian(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw InvalidArgumentError("assignment needs a square matrix");
  // Shortest augmenting paths with row/column potentials, 1-based with a
  // virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

Coupling solve_exact(const Mat& cost, const DiscreteMeasure& source,
                     const DiscreteMeasure& target) {
  check_problem(cost, source, target);
  Coupling c;
  c.source = source;
  c.target = target;
  if (equal_weights(source, target)) {
    const std::vector<int> perm = hungarian(cost);
    c.plan = Mat::Zero(cost.rows(), cost.cols());
    for (int i = 0; i < source.size(); ++i) {
      c.plan(i, perm[i]) = source.weights()[i];
    }
    c.solver = "hungarian";
  } else {
    TransportationSimplex simplex(cost, source.weight_vector(),
                                  target.weight_vector());
    c.converged = simplex.run(c.iterations);
    c.plan = simplex.flow().cwiseMax(0.0);
    c.solver = "network-simplex";
  }
  finish(c, cost);
  return c;
}

double median(const Mat& values) {
  if (values.size() == 0) throw InvalidArgumentError("median of empty matrix");
  std::vector<double> v(values.data(), values.data() + values.size());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

Coupling solve_sinkhorn(const Mat& cost, const DiscreteMeasure& source,
                        const DiscreteMeasure& target,
                        const SinkhornOptions& options) {
  check_problem(cost, source, target);
  if (options.max_iter < 1 || !(options.tol > 0.0)) {
    throw InvalidArgumentError("Sinkhorn needs max_iter >= 1 and tol > 0");
  }
  const double med = median(cost);
  const double cmax = cost.cwiseAbs().maxCoeff();
  double eps = options.epsilon.value_or(0.05 * (med > 0.0 ? med : cmax));
  if (!options.epsilon && eps == 0.0) eps = 1.0;  // all-zero cost
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw InvalidArgumentError("epsilon must be positive and finite");
  }
  const bool log_domain = options.log_domain.value_or(eps < 0.05 * med);
  const Vec a = source.weight_vector();
  const Vec b = target.weight_vector();

  Coupling c;
  c.source = source;
  c.target = target;
  c.epsilon = eps;
  c.converged = false;

  if (!log_domain) {
    c.solver = "sinkhorn";
    // Eigen's vectorized exp clamps its argument, so underflow is checked
    // with std::exp.
    const Mat K = (-cost / eps).unaryExpr([](double v) { return std::exp(v); });
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
      if (a[i] > 0.0 && K.row(i).maxCoeff() == 0.0) {
        throw EpsilonTooSmallError(
            "kernel row underflows; retry in the log domain");
      }
    }
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      if (b[j] > 0.0 && K.col(j).maxCoeff() == 0.0) {
        throw EpsilonTooSmallError(
            "kernel column underflows; retry in the log domain");
      }
    }
    Vec u = Vec::Ones(K.rows());
    Vec v = Vec::Ones(K.cols());
    for (int it = 0; it < options.max_iter; ++it) {
      const Vec Ktu = K.transpose() * u;
      v = b.cwiseQuotient(Ktu);
      const Vec Kv = K * v;
      u = a.cwiseQuotient(Kv);
      if (!u.allFinite() || !v.allFinite()) {
        throw EpsilonTooSmallError(
            "Sinkhorn scaling overflowed; retry in the log domain");
      }
      const double residual =
          (v.cwiseProduct(K.transpose() * u) - b).lpNorm<1>();
      c.residual_history.push_back(residual);
      c.iterations = it + 1;
      if (residual <= options.tol) {
        c.converged = true;
        break;
      }
    }
    c.plan = u.asDiagonal() * K * v.asDiagonal();
  } else {
    c.solver = "sinkhorn-log";
    LogSinkhorn solver(cost, a, b);
    std::vector<double> schedule;
    if (options.epsilon_scaling) {
      for (double e = cmax; e > eps; e *= 0.5) schedule.push_back(e);
    }
    schedule.push_back(eps);
    int used = 0;
    for (std::size_t s = 0; s + 1 < schedule.size(); ++s) {
      for (int it = 0; it < 200 && used < options.max_iter; ++it, ++used) {
        if (solver.iterate(schedule[s]) <= 1e-4) break;
      }
    }
    int stage_iterations = 0;
    double residual = kInf;
    for (; used < options.max_iter; ++used, ++stage_iterations) {
      if (options.newton_after && stage_iterations >= *options.newton_after) {
        break;
      }
      residual = solver.iterate(eps);
      c.residual_history.push_back(residual);
      if (residual <= options.tol) {
        c.converged = true;
        ++used;
        break;
      }
    }
    // Near-degenerate instances stall; the Newton polish converges
    // quadratically from the Sinkhorn iterate.
    while (!c.converged && used < options.max_iter && c.newton_steps < 50) {
      const double next = solver.newton(eps, residual);
      ++used;
      if (next < 0.0) break;
      ++c.newton_steps;
      residual = next;
      c.converged = residual <= options.tol;
    }
    c.iterations = used;
    c.plan = solver.plan(eps);
  }
  normalize_rows(c.plan, a);
  finish(c, cost);
  return c;
}

Coupling product_coupling(const Mat& cost, const DiscreteMeasure& source,
                          const DiscreteMeasure& target) {
  check_problem(cost, source, target);
  Coupling c;
  c.source = source;
  c.target = target;
  c.plan = source.weight_vector() * target.weight_vector().transpose();
  c.solver = "product";
  finish(c, cost);
  return c;
}

EnsembleResult ensemble_steer(const Coupling& coupling,
                              const GroundCostSpec& spec,
                              const EnsembleOptions& options) {
  spec.validate();
  if (coupling.plan.rows() != coupling.source.size() ||
      coupling.plan.cols() != coupling.target.size()) {
    throw InvalidArgumentError("coupling plan does not match its marginals");
  }
  if (options.policy == PolicyKind::kOpenLoop) {
    throw InvalidArgumentError("ensemble steering needs a feedback policy");
  }
  const Drift drift = spec.dynamics();
  std::vector<SteeredPair> jobs;
  for (int i = 0; i < coupling.plan.rows(); ++i) {
    for (int j = 0; j < coupling.plan.cols(); ++j) {
      const double mass = coupling.plan(i, j);
      if (mass > options.mass_threshold && mass > 0.0) {
        jobs.push_back(SteeredPair{i, j, mass, 0.0, 0.0});
      }
    }
  }
  std::vector<Vec> terminal(jobs.size());
  std::vector<std::string> errors(jobs.size());

  auto steer = [&](std::size_t k) {
    SteeredPair& job = jobs[k];
    const Vec& x0 = coupling.source.support()[job.i];
    const Vec& x_f = coupling.target.support()[job.j];
    try {
      const SteeringPolicy policy = [&] {
        switch (options.policy) {
          case PolicyKind::kNormInvUstarstar:
            return norminv_policy(drift, x0, x_f, spec.t_f);
          case PolicyKind::kTwoPhase:
            return two_phase_policy(drift, x0, x_f, spec.t_f, options.step);
          default:
            return feasible_policy(drift, x0, x_f, spec.t_f);
        }
      }();
      const Trajectory traj =
          integrate(drift, policy, x0, x_f, spec.t_f, options.step);
      job.cost = policy_cost(traj);
      job.terminal_error = traj.terminal_error();
      terminal[k] = traj.states.back();
    } catch (const DivergenceError& e) {
      errors[k] = "pair (" + std::to_string(job.i) + "," +
                  std::to_string(job.j) + ") diverged at t=" +
                  std::to_string(e.time()) + ": " + e.what();
    }
  };

  int threads = options.threads > 0
                    ? options.threads
                    : static_cast<int>(
                          std::max(1u, std::thread::hardware_concurrency()));
  threads = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) steer(k);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  EnsembleResult out;
  std::vector<Vec> support;
  std::vector<double> mass;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!errors[k].empty()) {
      if (!options.continue_on_divergence) {
        throw DivergenceError(errors[k], spec.t_f);
      }
      out.failures.push_back(errors[k]);
      continue;
    }
    out.total_cost += jobs[k].mass * jobs[k].cost;
    out.max_terminal_error =
        std::max(out.max_terminal_error, jobs[k].terminal_error);
    support.push_back(terminal[k]);
    mass.push_back(jobs[k].mass);
    out.pairs.push_back(jobs[k]);
  }
  if (!support.empty()) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (double& w : mass) w /= total;
    out.terminal = DiscreteMeasure(std::move(support), std::move(mass));
  }
  return out;
}

void write_measure_csv(const DiscreteMeasure& measure, std::ostream& out) {
  char buf[160];
  out << "x1,x2,x3,weight\n";
  for (int k = 0; k < measure.size(); ++k) {
    const Vec& p = measure.support()[k];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p[0], p[1],
                  p[2], measure.weights()[k]);
    out << buf;
  }
}

void write_coupling_csv(const Coupling& coupling, const Mat& cost,
                        std::ostream& out) {
  char buf[128];
  out << "i,j,mass,cost\n";
  for (Eigen::Index i = 0; i < coupling.plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < coupling.plan.cols(); ++j) {
      if (coupling.plan(i, j) == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g\n",
                    static_cast<long>(i), static_cast<long>(j),
                    coupling.plan(i, j), cost(i, j));
      out << buf;
    }
  }
}

}  // namespace gomt
