#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <string_view>

namespace gmgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelFamily { SquaredExponential, Matern52 };

std::string_view to_string(KernelFamily family);
KernelFamily kernel_family_from_string(std::string_view name);

/// Stationary, anisotropic kernel: one lengthscale per input dimension.
///
/// SE:          exp(-1/2 * sum_l ((x_l - x'_l) / l_l)^2)
/// Matern 5/2:  prod_l (1 + sqrt5 d_l + 5 d_l^2 / 3) exp(-sqrt5 d_l),  d_l = |x_l - x'_l| / l_l
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  Vector lengthscales;
  double variance = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(lengthscales.size()); }
  void validate() const;
};

KernelSpec make_kernel(KernelFamily family, std::size_t dim, double lengthscale = 1.0, double variance = 1.0);

namespace detail {
[[noreturn]] void corr_dim_error(Eigen::Index want, Eigen::Index a, Eigen::Index b);
double matern52_factor(double d);
}  // namespace detail

/// Correlation r(x, x') in (0, 1]; exactly 1 at x == x'. Accepts row or
/// column vectors.
template <typename A, typename B>
double corr(const KernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
  const Eigen::Index d = spec.lengthscales.size();
  if (x.size() != d || xp.size() != d) detail::corr_dim_error(d, x.size(), xp.size());
  if (spec.family == KernelFamily::SquaredExponential) {
    double s = 0.0;
    for (Eigen::Index l = 0; l < d; ++l) {
      const double u = (x(l) - xp(l)) / spec.lengthscales[l];
      s += u * u;
    }
    return std::exp(-0.5 * s);
  }
  double r = 1.0;
  for (Eigen::Index l = 0; l < d; ++l) r *= detail::matern52_factor(std::abs(x(l) - xp(l)) / spec.lengthscales[l]);
  return r;
}

/// Entry (i, j) = corr(X_i, X'_j).
Matrix corr_matrix(const KernelSpec& spec, const Matrix& X, const Matrix& Xp);

/// Composite kernel over (x, z) where z holds the outputs of the parent nodes:
///   K = s_o^2 r_o(x, x') [s_lin^2 z'z + s_z^2 r_z(z, z')] + s_b^2 r_b(x, x')
/// A zero `z_linear_variance` or `z_se.variance` switches that term off.
struct DeepKernelSpec {
  KernelSpec x_outer;
  double z_linear_variance = 1.0;
  KernelSpec z_se;
  KernelSpec x_bias;

  std::size_t x_dim() const { return x_outer.dim(); }
  std::size_t z_dim() const { return z_se.dim(); }
  void validate() const;
};

double deep_kernel(const DeepKernelSpec& spec, const Vector& x, const Vector& z, const Vector& xp, const Vector& zp);

/// Gram/cross matrix of the deep kernel over augmented rows [x | z].
Matrix deep_kernel_matrix(const DeepKernelSpec& spec, const Matrix& A, const Matrix& Ap);

}  // namespace gmgp
