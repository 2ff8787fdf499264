#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "kdpe/distribution.hpp"
#include "kdpe/observation.hpp"

namespace kdpe {

enum class KernelFamily { Gaussian };

// K(o, o') = exp(-sum_d (s_d (o_d - o'_d))^2) over (x, binary coordinates...).
struct BaseKernel {
  KernelFamily family = KernelFamily::Gaussian;
  std::vector<double> length_scales;  // multipliers; x first

  // Unit multipliers, except x scaled by `x_scale`.
  static BaseKernel gaussian(Schema schema, double x_scale);
  // DGP1: raw coordinates. DGP2: X in [0, 8] mapped to [0, 1].
  static BaseKernel default_for(Schema schema);
  static double default_x_scale(Schema schema) { return schema == Schema::Dgp1 ? 1.0 : 0.125; }

  [[nodiscard]] std::size_t dimension() const { return length_scales.size(); }
};

double eval_base(const BaseKernel& k, const Observation& o, const Observation& o2);

struct GramMatrix {
  Eigen::MatrixXd values;
  bool jittered = false;
};

// The P-mean-zero kernel K_P(o, o') = K(o, o') - f(o) f(o') / c with
//   f(o) = sum_s p(s) K(o, s),  c = sum_s p(s) f(s),
// where the sums run over the model's finite support. f is cached on every
// support cell; evaluation is limited to support points of the centering model.
class CenteredKernel {
 public:
  [[nodiscard]] const BaseKernel& base() const { return base_; }
  [[nodiscard]] Schema schema() const { return schema_; }
  [[nodiscard]] double c_scalar() const { return c_; }
  [[nodiscard]] std::span<const double> f_values() const { return f_; }
  [[nodiscard]] std::uint64_t model_fingerprint() const { return fingerprint_; }
  [[nodiscard]] std::size_t atoms() const { return n_; }

  // Throws StaleKernel when `m` is not the centering model, OffSupport when a
  // point is not on its support.
  [[nodiscard]] double eval(const FiniteModel& m, const Observation& o, const Observation& o2) const;
  [[nodiscard]] GramMatrix gram(const FiniteModel& m, std::span<const Observation> points) const;

  // Unchecked cell-indexed access (cells as laid out by FiniteModel::cell).
  [[nodiscard]] double eval_cells(std::size_t cell, std::size_t cell2) const {
    const auto c = static_cast<std::size_t>(combos_);
    const std::size_t i = cell / c;
    const std::size_t j = cell2 / c;
    return x_factor_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
               discrete_factor_(static_cast<Eigen::Index>(cell % c), static_cast<Eigen::Index>(cell2 % c)) -
           f_[cell] * f_[cell2] / c_;
  }
  [[nodiscard]] GramMatrix gram_cells(std::span<const std::size_t> cells) const;
  // Column k holds K_P(., cells[k]) on every support cell.
  [[nodiscard]] Eigen::MatrixXd columns(std::span<const std::size_t> cells) const;

  void require_model(const FiniteModel& m) const;

 private:
  friend CenteredKernel center_kernel(const BaseKernel& k, const FiniteModel& m);
  CenteredKernel() = default;

  [[nodiscard]] std::size_t locate(const FiniteModel& m, const Observation& o) const;

  BaseKernel base_;
  Schema schema_ = Schema::Dgp1;
  std::size_t n_ = 0;
  int combos_ = 0;
  Eigen::MatrixXd x_factor_;         // n x n
  Eigen::MatrixXd discrete_factor_;  // combos x combos
  std::vector<double> f_;            // per support cell
  double c_ = 0.0;
  std::uint64_t fingerprint_ = 0;
};

CenteredKernel center_kernel(const BaseKernel& k, const FiniteModel& m);

}  // namespace kdpe
