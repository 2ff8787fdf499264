#include "kdpe/kernel.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "kdpe/errors.hpp"

namespace kdpe {

namespace {

constexpr double kGramJitter = 1e-10;

void check_schema(const BaseKernel& k, Schema s) {
  if (k.dimension() != static_cast<std::size_t>(1 + discrete_count(s))) {
    throw InvalidInput("kernel has " + std::to_string(k.dimension()) + " length scales, schema needs " +
                       std::to_string(1 + discrete_count(s)));
  }
  for (double v : k.length_scales) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("length scales must be positive");
  }
}

}  // namespace

BaseKernel BaseKernel::gaussian(Schema schema, double x_scale) {
  BaseKernel k;
  k.length_scales.assign(static_cast<std::size_t>(1 + discrete_count(schema)), 1.0);
  k.length_scales[0] = x_scale;
  check_schema(k, schema);
  return k;
}

BaseKernel BaseKernel::default_for(Schema schema) { return gaussian(schema, default_x_scale(schema)); }

double eval_base(const BaseKernel& k, const Observation& o, const Observation& o2) {
  if (o.schema != o2.schema) throw InvalidInput("kernel arguments come from different schemas");
  check_schema(k, o.schema);
  double dx = k.length_scales[0] * (o.x - o2.x);
  double sq = dx * dx;
  for (int d = 0; d < discrete_count(o.schema); ++d) {
    const double s = k.length_scales[static_cast<std::size_t>(d + 1)] * (o.bit(d) - o2.bit(d));
    sq += s * s;
  }
  return std::exp(-sq);
}

CenteredKernel center_kernel(const BaseKernel& k, const FiniteModel& m) {
  check_schema(k, m.schema());
  CenteredKernel ck;
  ck.base_ = k;
  ck.schema_ = m.schema();
  ck.n_ = m.size();
  ck.combos_ = m.combos();
  ck.fingerprint_ = m.fingerprint();

  const auto n = static_cast<Eigen::Index>(m.size());
  const Eigen::Index combos = m.combos();
  const double sx = k.length_scales[0];
  ck.x_factor_.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    ck.x_factor_(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double d = sx * (m.x(static_cast<std::size_t>(i)) - m.x(static_cast<std::size_t>(j)));
      ck.x_factor_(i, j) = ck.x_factor_(j, i) = std::exp(-d * d);
    }
  }
  ck.discrete_factor_.resize(combos, combos);
  for (Eigen::Index a = 0; a < combos; ++a) {
    for (Eigen::Index b = 0; b < combos; ++b) {
      double sq = 0.0;
      for (int d = 0; d < discrete_count(m.schema()); ++d) {
        const double s = k.length_scales[static_cast<std::size_t>(d + 1)] *
                         (code_bit(m.schema(), static_cast<int>(a), d) - code_bit(m.schema(), static_cast<int>(b), d));
        sq += s * s;
      }
      ck.discrete_factor_(a, b) = std::exp(-sq);
    }
  }

  // f(i', c') = sum_i kx(i', i) sum_c p(i, c) kd(c', c)
  Eigen::MatrixXd mass(n, combos);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < combos; ++c) mass(i, c) = m.joint(static_cast<std::size_t>(i), static_cast<int>(c));
  }
  const Eigen::MatrixXd f = ck.x_factor_ * (mass * ck.discrete_factor_);
  ck.f_.resize(m.support_size());
  double c_total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < combos; ++c) {
      ck.f_[static_cast<std::size_t>(i * combos + c)] = f(i, c);
      c_total += mass(i, c) * f(i, c);
    }
  }
  if (!(c_total > 0.0) || !std::isfinite(c_total)) {
    throw InternalError("centering scalar is not positive");
  }
  ck.c_ = c_total;
  return ck;
}

void CenteredKernel::require_model(const FiniteModel& m) const {
  if (m.fingerprint() != fingerprint_) {
    throw StaleKernel("centered kernel used with a model other than the one it was centered on");
  }
}

std::size_t CenteredKernel::locate(const FiniteModel& m, const Observation& o) const {
  if (o.schema != schema_) throw InvalidInput("observation schema does not match kernel");
  const auto atom = m.find_atom(o.x);
  if (!atom) throw OffSupport("point is not on the centering model's support");
  return m.cell(*atom, o.code());
}

double CenteredKernel::eval(const FiniteModel& m, const Observation& o, const Observation& o2) const {
  require_model(m);
  return eval_cells(locate(m, o), locate(m, o2));
}

GramMatrix CenteredKernel::gram(const FiniteModel& m, std::span<const Observation> points) const {
  require_model(m);
  if (points.empty()) throw InvalidInput("gram needs at least one point");
  std::vector<std::size_t> cells;
  cells.reserve(points.size());
  for (const auto& o : points) cells.push_back(locate(m, o));
  return gram_cells(cells);
}

GramMatrix CenteredKernel::gram_cells(std::span<const std::size_t> cells) const {
  const auto size = static_cast<Eigen::Index>(cells.size());
  GramMatrix g;
  g.values.resize(size, size);
  for (Eigen::Index j = 0; j < size; ++j) {
    for (Eigen::Index i = j; i < size; ++i) {
      const double v = eval_cells(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(j)]);
      g.values(i, j) = v;
      g.values(j, i) = v;
    }
  }
  // Definiteness probe; duplicate points make the matrix singular.
  Eigen::LLT<Eigen::MatrixXd> llt(g.values);
  if (llt.info() != Eigen::Success) {
    g.values.diagonal().array() += kGramJitter;
    g.jittered = true;
  }
  return g;
}

Eigen::MatrixXd CenteredKernel::columns(std::span<const std::size_t> cells) const {
  const auto rows = static_cast<Eigen::Index>(n_ * static_cast<std::size_t>(combos_));
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(cells.size()));
  const auto c = static_cast<std::size_t>(combos_);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t j = cells[k] / c;
    const auto code_j = static_cast<Eigen::Index>(cells[k] % c);
    const double fj = f_[cells[k]] / c_;
    auto col = out.col(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n_; ++i) {
      const double kx = x_factor_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      for (std::size_t code = 0; code < c; ++code) {
        const std::size_t cell = i * c + code;
        col(static_cast<Eigen::Index>(cell)) =
            kx * discrete_factor_(static_cast<Eigen::Index>(code), code_j) - f_[cell] * fj;
      }
    }
  }
  return out;
}

}  // namespace kdpe
