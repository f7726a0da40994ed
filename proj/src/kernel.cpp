#include "gmgp/kernel.hpp"

#include <cmath>

#include "gmgp/error.hpp"

namespace gmgp {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;

}  // namespace

std::string_view to_string(KernelFamily family) {
  return family == KernelFamily::SquaredExponential ? "squared_exponential" : "matern52";
}

KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "squared_exponential" || name == "se" || name == "SE") return KernelFamily::SquaredExponential;
  if (name == "matern52" || name == "matern5_2" || name == "Matern52") return KernelFamily::Matern52;
  fail(ErrorKind::Parse, "unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  for (Eigen::Index l = 0; l < lengthscales.size(); ++l) {
    if (!std::isfinite(lengthscales[l]) || lengthscales[l] <= 0.0) {
      fail(ErrorKind::InvalidArgument, "lengthscales must be finite and positive");
    }
  }
  if (!std::isfinite(variance) || variance <= 0.0) fail(ErrorKind::InvalidArgument, "kernel variance must be > 0");
}

KernelSpec make_kernel(KernelFamily family, std::size_t dim, double lengthscale, double variance) {
  KernelSpec spec{family, Vector::Constant(static_cast<Eigen::Index>(dim), lengthscale), variance};
  spec.validate();
  return spec;
}

namespace detail {

void corr_dim_error(Eigen::Index want, Eigen::Index a, Eigen::Index b) {
  fail(ErrorKind::DimensionMismatch,
       "kernel expects " + std::to_string(want) + " inputs, got " + std::to_string(a) + " and " + std::to_string(b));
}

double matern52_factor(double d) { return (1.0 + kSqrt5 * d + 5.0 * d * d / 3.0) * std::exp(-kSqrt5 * d); }

}  // namespace detail

Matrix corr_matrix(const KernelSpec& spec, const Matrix& X, const Matrix& Xp) {
  const Eigen::Index d = spec.lengthscales.size();
  if (X.cols() != d || Xp.cols() != d) {
    fail(ErrorKind::DimensionMismatch, "corr_matrix expects " + std::to_string(d) + " columns");
  }
  Matrix out(X.rows(), Xp.rows());
  const Eigen::ArrayXd inv = spec.lengthscales.array().inverse();
  const Matrix Xs = X * inv.matrix().asDiagonal();
  const Matrix Xps = Xp * inv.matrix().asDiagonal();
  for (Eigen::Index j = 0; j < Xp.rows(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (spec.family == KernelFamily::SquaredExponential) {
        out(i, j) = std::exp(-0.5 * (Xs.row(i) - Xps.row(j)).squaredNorm());
      } else {
        double r = 1.0;
        for (Eigen::Index l = 0; l < d; ++l) r *= detail::matern52_factor(std::abs(Xs(i, l) - Xps(j, l)));
        out(i, j) = r;
      }
    }
  }
  return out;
}

void DeepKernelSpec::validate() const {
  x_outer.validate();
  x_bias.validate();
  if (x_outer.dim() != x_bias.dim()) fail(ErrorKind::DimensionMismatch, "outer and bias kernels differ in dimension");
  for (Eigen::Index l = 0; l < z_se.lengthscales.size(); ++l) {
    if (!std::isfinite(z_se.lengthscales[l]) || z_se.lengthscales[l] <= 0.0) {
      fail(ErrorKind::InvalidArgument, "z lengthscales must be finite and positive");
    }
  }
  if (!(z_linear_variance >= 0.0) || !(z_se.variance >= 0.0)) {
    fail(ErrorKind::InvalidArgument, "z variances must be non-negative");
  }
}

double deep_kernel(const DeepKernelSpec& spec, const Vector& x, const Vector& z, const Vector& xp, const Vector& zp) {
  if (static_cast<std::size_t>(z.size()) != spec.z_dim() || static_cast<std::size_t>(zp.size()) != spec.z_dim()) {
    fail(ErrorKind::DimensionMismatch, "deep kernel expects " + std::to_string(spec.z_dim()) + " parent outputs");
  }
  const double outer = spec.x_outer.variance * corr(spec.x_outer, x, xp);
  const double lin = spec.z_linear_variance * z.dot(zp);
  const double zse = spec.z_dim() == 0 ? spec.z_se.variance : spec.z_se.variance * corr(spec.z_se, z, zp);
  const double bias = spec.x_bias.variance * corr(spec.x_bias, x, xp);
  return outer * (lin + zse) + bias;
}

Matrix deep_kernel_matrix(const DeepKernelSpec& spec, const Matrix& A, const Matrix& Ap) {
  const auto dx = static_cast<Eigen::Index>(spec.x_dim());
  const auto dz = static_cast<Eigen::Index>(spec.z_dim());
  if (A.cols() != dx + dz || Ap.cols() != dx + dz) {
    fail(ErrorKind::DimensionMismatch, "deep kernel expects " + std::to_string(dx + dz) + " augmented columns");
  }
  const Matrix Kx = corr_matrix(spec.x_outer, A.leftCols(dx), Ap.leftCols(dx));
  const Matrix Kb = corr_matrix(spec.x_bias, A.leftCols(dx), Ap.leftCols(dx));
  Matrix inner = spec.z_linear_variance * (A.rightCols(dz) * Ap.rightCols(dz).transpose());
  if (dz > 0) {
    inner += spec.z_se.variance * corr_matrix(spec.z_se, A.rightCols(dz), Ap.rightCols(dz));
  } else {
    inner.array() += spec.z_se.variance;
  }
  return spec.x_outer.variance * Kx.cwiseProduct(inner) + spec.x_bias.variance * Kb;
}

}  // namespace gmgp
