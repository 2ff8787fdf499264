#include "kdpe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>

#include "kdpe/errors.hpp"

namespace kdpe {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kBacktrack = 0.5;
constexpr double kToBoundary = 0.99;
constexpr int kMaxHalvings = 60;
constexpr double kNearBound = 1e-6;
constexpr double kBoundWiden = 1e-13;

double log_term(const Eigen::VectorXd& u) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) s += std::log1p(u(i));
  return s;
}

// Columns of the stacked matrix [sqrt(wh) H; sqrt(wa) A; sqrt(wg) G^{1/2}] that
// are numerically independent, chosen by pivoted Cholesky of its Gram matrix.
// Only the pivot columns of that Gram matrix are ever formed.
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& h, const Eigen::MatrixXd& a,
                                              const Eigen::MatrixXd& g, double lambda, double rank_tol) {
  const Eigen::Index p = h.cols();
  const double hn = h.squaredNorm();
  const double an = a.squaredNorm();
  const double gt = g.trace();
  const double wh = hn > 0.0 ? 1.0 / hn : 0.0;
  const double wa = an > 0.0 ? 1.0 / an : 0.0;
  const double wg = lambda > 0.0 && gt > 0.0 ? 1.0 / gt : 0.0;

  Eigen::VectorXd diag(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    diag(j) = wh * h.col(j).squaredNorm() + wa * a.col(j).squaredNorm() + wg * g(j, j);
  }
  const double floor = rank_tol * diag.sum();
  Eigen::MatrixXd factor(p, 0);
  std::vector<Eigen::Index> pivots;
  std::vector<char> used(static_cast<std::size_t>(p), 0);
  while (static_cast<Eigen::Index>(pivots.size()) < p) {
    Eigen::Index j = -1;
    double best = floor;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (!used[static_cast<std::size_t>(k)] && diag(k) > best) {
        best = diag(k);
        j = k;
      }
    }
    if (j < 0) break;
    Eigen::VectorXd col = wh * (h.transpose() * h.col(j)) + wa * (a.transpose() * a.col(j));
    if (wg > 0.0) col += wg * g.col(j);
    const Eigen::Index r = factor.cols();
    if (r > 0) col.noalias() -= factor * factor.row(j).transpose();
    col /= std::sqrt(best);
    factor.conservativeResize(Eigen::NoChange, r + 1);
    factor.col(r) = col;
    diag -= col.cwiseAbs2();
    used[static_cast<std::size_t>(j)] = 1;
    pivots.push_back(j);
  }
  std::sort(pivots.begin(), pivots.end());
  return pivots;
}

// Log-barrier Newton method on the (possibly reduced) problem.
class BarrierSolver {
 public:
  BarrierSolver(const Eigen::MatrixXd& h, const Eigen::MatrixXd& a, const Eigen::MatrixXd& g, double lambda,
                const Eigen::VectorXd& lo_slack, const Eigen::VectorXd& up_slack, const SolverOptions& opt)
      : h_(h), a_(a), g_(g), lambda_(lambda), lo0_(lo_slack), up0_(up_slack), opt_(opt) {
    n_ = static_cast<double>(h.rows());
  }

  FluctuationSolution run() {
    const Eigen::Index r = h_.cols();
    beta_ = Eigen::VectorXd::Zero(r);
    const double m = 2.0 * static_cast<double>(a_.rows());
    double mu = a_.rows() > 0 ? opt_.mu0 : 0.0;
    FluctuationSolution sol;
    bool capped = false;
    while (true) {
      ++sol.barrier_outer_rounds;
      capped = !center(mu, sol.newton_iterations);
      if (capped || m * mu < opt_.tol) break;
      mu /= 10.0;
    }
    sol.kkt_residual = last_grad_norm_;
    sol.status = capped ? SolveStatus::MaxIterations : SolveStatus::ConvergedInterior;
    sol.alpha = beta_;
    return sol;
  }

 private:
  struct Eval {
    Eigen::VectorXd u, lo, up;
    double value = 0.0;
    bool finite = false;
  };

  Eval evaluate(const Eigen::VectorXd& beta, double mu) const {
    Eval e;
    e.u = h_ * beta;
    const Eigen::VectorXd v = a_ * beta;
    e.lo = lo0_ + v;
    e.up = up0_ - v;
    if ((e.u.array() <= -1.0).any() || (e.lo.array() <= 0.0).any() || (e.up.array() <= 0.0).any()) return e;
    double val = -log_term(e.u) / n_;
    if (lambda_ > 0.0) val += lambda_ * beta.dot(g_ * beta);
    if (mu > 0.0) val -= mu * (e.lo.array().log().sum() + e.up.array().log().sum());
    e.value = val;
    e.finite = std::isfinite(val);
    return e;
  }

  // Largest step in direction d keeping every domain term positive.
  double max_step(const Eval& e, const Eigen::VectorXd& d) const {
    double t = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd du = h_ * d;
    for (Eigen::Index i = 0; i < du.size(); ++i) {
      if (du(i) < 0.0) t = std::min(t, (1.0 + e.u(i)) / -du(i));
    }
    const Eigen::VectorXd dv = a_ * d;
    for (Eigen::Index i = 0; i < dv.size(); ++i) {
      if (dv(i) < 0.0) t = std::min(t, e.lo(i) / -dv(i));
      if (dv(i) > 0.0) t = std::min(t, e.up(i) / dv(i));
    }
    return t;
  }

  // Damped Newton on the barrier objective for one value of mu. Returns false
  // when the Newton budget runs out.
  bool center(double mu, int& newton_total) {
    Eval cur = evaluate(beta_, mu);
    if (!cur.finite) throw InternalError("barrier iterate left the feasible region");
    while (true) {
      const Eigen::ArrayXd w = 1.0 / (1.0 + cur.u.array());
      Eigen::VectorXd grad = -(h_.transpose() * w.matrix()) / n_;
      Eigen::MatrixXd hess = (h_.transpose() * (w.square().matrix().asDiagonal() * h_)) / n_;
      if (lambda_ > 0.0) {
        grad.noalias() += 2.0 * lambda_ * (g_ * beta_);
        hess.noalias() += 2.0 * lambda_ * g_;
      }
      if (mu > 0.0) {
        const Eigen::ArrayXd il = 1.0 / cur.lo.array();
        const Eigen::ArrayXd iu = 1.0 / cur.up.array();
        grad.noalias() -= mu * (a_.transpose() * (il - iu).matrix());
        hess.noalias() += mu * (a_.transpose() * ((il.square() + iu.square()).matrix().asDiagonal() * a_));
      }
      last_grad_norm_ = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
      const Eigen::VectorXd step = newton_direction(hess, grad);
      const double decrement = -grad.dot(step);
      if (!(decrement / 2.0 > opt_.tol)) return true;
      if (newton_total >= opt_.max_newton) return false;
      ++newton_total;

      double t = std::min(1.0, kToBoundary * max_step(cur, step));
      bool accepted = false;
      for (int k = 0; k < kMaxHalvings; ++k, t *= kBacktrack) {
        const Eigen::VectorXd trial = beta_ + t * step;
        Eval next = evaluate(trial, mu);
        if (next.finite && next.value <= cur.value - kArmijo * t * decrement) {
          beta_ = trial;
          cur = std::move(next);
          accepted = true;
          break;
        }
      }
      if (!accepted) return true;  // no further progress possible at this mu
    }
  }

  static Eigen::VectorXd newton_direction(Eigen::MatrixXd& hess, const Eigen::VectorXd& grad) {
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() == Eigen::Success) return llt.solve(-grad);
    const double scale = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (double ridge = 1e-12 * scale;; ridge *= 10.0) {
      hess.diagonal().array() += ridge;
      llt.compute(hess);
      if (llt.info() == Eigen::Success) return llt.solve(-grad);
    }
  }

  const Eigen::MatrixXd& h_;
  const Eigen::MatrixXd& a_;
  const Eigen::MatrixXd& g_;
  double lambda_;
  const Eigen::VectorXd& lo0_;
  const Eigen::VectorXd& up0_;
  SolverOptions opt_;
  double n_ = 1.0;
  Eigen::VectorXd beta_;
  double last_grad_norm_ = 0.0;
};

}  // namespace

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::ConvergedInterior: return "converged_interior";
    case SolveStatus::ConvergedNearBound: return "converged_near_bound";
    case SolveStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

void FluctuationProblem::set_uniform_bounds(double c_bound, double margin) {
  if (!(c_bound > 0.0 && c_bound < 0.5)) throw InvalidInput("c_bound must lie in (0, 0.5)");
  if (!(margin >= 0.0 && c_bound + margin < 0.5)) throw InvalidInput("bound margin out of range");
  lower.resize(bound_base.size());
  upper.resize(bound_base.size());
  for (Eigen::Index r = 0; r < bound_base.size(); ++r) {
    const double q = bound_base(r);
    lower(r) = std::min(c_bound + margin, q * (1.0 - kBoundWiden));
    upper(r) = std::max(1.0 - c_bound - margin, q + (1.0 - q) * kBoundWiden);
  }
}

void FluctuationProblem::validate() const {
  const Eigen::Index p = observed_values.cols();
  if (observed_values.rows() == 0) throw InvalidInput("fluctuation problem needs observations");
  if (gram.rows() != p || gram.cols() != p) throw InvalidInput("gram dimension does not match H");
  if (bound_directions.cols() != p && bound_directions.rows() > 0) {
    throw InvalidInput("bound directions dimension does not match H");
  }
  const Eigen::Index r = bound_directions.rows();
  if (bound_base.size() != r || lower.size() != r || upper.size() != r) {
    throw InvalidInput("bound rows are inconsistent");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and >= 0");
  if (!observed_values.allFinite() || !gram.allFinite() || !bound_directions.allFinite()) {
    throw InvalidInput("fluctuation problem has non-finite entries");
  }
  for (Eigen::Index k = 0; k < r; ++k) {
    if (!(lower(k) < bound_base(k) && bound_base(k) < upper(k))) {
      throw InvalidInput("alpha = 0 is not strictly feasible");
    }
  }
}

double fluctuation_objective(const FluctuationProblem& prob, const Eigen::VectorXd& alpha) {
  const Eigen::VectorXd u = prob.observed_values * alpha;
  if ((u.array() <= -1.0).any()) return std::numeric_limits<double>::infinity();
  double f = -log_term(u) / static_cast<double>(u.size());
  if (prob.lambda > 0.0) f += prob.lambda * alpha.dot(prob.gram * alpha);
  return f;
}

Eigen::VectorXd fluctuation_gradient(const FluctuationProblem& prob, const Eigen::VectorXd& alpha) {
  const Eigen::VectorXd u = prob.observed_values * alpha;
  const Eigen::VectorXd w = (1.0 + u.array()).inverse().matrix();
  Eigen::VectorXd g = -(prob.observed_values.transpose() * w) / static_cast<double>(u.size());
  if (prob.lambda > 0.0) g += 2.0 * prob.lambda * (prob.gram * alpha);
  return g;
}

bool is_feasible(const FluctuationProblem& prob, const Eigen::VectorXd& alpha) {
  if ((prob.observed_values * alpha).array().minCoeff() <= -1.0) return false;
  if (prob.bound_directions.rows() == 0) return true;
  const Eigen::ArrayXd v =
      prob.bound_base.array() * (1.0 + (prob.bound_directions * alpha).array());
  return (v >= prob.lower.array()).all() && (v <= prob.upper.array()).all();
}

FluctuationSolution solve_fluctuation(const FluctuationProblem& prob, const SolverOptions& opt) {
  prob.validate();
  const Eigen::Index p = prob.dimension();
  // Linear form of the bound rows: base + A alpha with A = diag(base) D.
  const Eigen::MatrixXd a_full = prob.bound_base.asDiagonal() * prob.bound_directions;

  std::vector<Eigen::Index> keep;
  if (opt.reduce) {
    keep = independent_columns(prob.observed_values, a_full, prob.gram, prob.lambda, opt.rank_tol);
  } else {
    keep.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) keep[static_cast<std::size_t>(j)] = j;
  }

  FluctuationSolution sol;
  sol.alpha = Eigen::VectorXd::Zero(p);
  sol.rank = static_cast<Eigen::Index>(keep.size());
  if (!keep.empty()) {
    const Eigen::MatrixXd h = prob.observed_values(Eigen::all, keep);
    const Eigen::MatrixXd a = a_full(Eigen::all, keep);
    const Eigen::MatrixXd g = prob.gram(keep, keep);
    const Eigen::VectorXd lo_slack = prob.bound_base - prob.lower;
    const Eigen::VectorXd up_slack = prob.upper - prob.bound_base;
    BarrierSolver inner(h, a, g, prob.lambda, lo_slack, up_slack, opt);
    FluctuationSolution red = inner.run();
    sol.kkt_residual = red.kkt_residual;
    sol.newton_iterations = red.newton_iterations;
    sol.barrier_outer_rounds = red.barrier_outer_rounds;
    sol.status = red.status;
    for (std::size_t k = 0; k < keep.size(); ++k) sol.alpha(keep[k]) = red.alpha(static_cast<Eigen::Index>(k));
  }

  sol.objective = fluctuation_objective(prob, sol.alpha);
  if (!(sol.objective <= 0.0) || !is_feasible(prob, sol.alpha)) {
    // Never worse than leaving the model unchanged.
    sol.alpha.setZero();
    sol.objective = 0.0;
  }
  if (a_full.rows() > 0) {
    const Eigen::ArrayXd v = prob.bound_base.array() + (a_full * sol.alpha).array();
    const Eigen::ArrayXd slack = (v - prob.lower.array()).min(prob.upper.array() - v);
    sol.active_bounds = static_cast<int>((slack <= kNearBound).count());
  }
  if (sol.status == SolveStatus::ConvergedInterior && sol.active_bounds > 0) {
    sol.status = SolveStatus::ConvergedNearBound;
  }
  return sol;
}

}  // namespace kdpe
