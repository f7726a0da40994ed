#include "gmgp/correlation.hpp"

#include <cmath>

#include "gmgp/error.hpp"

namespace gmgp {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;

// d log r / d log l for one Matern 5/2 factor at scaled distance u
inline double matern52_dlog(double u) {
  return (5.0 / 3.0) * u * u * (1.0 + kSqrt5 * u) / (1.0 + kSqrt5 * u + 5.0 * u * u / 3.0);
}

void check_cols(const Matrix& X, Eigen::Index d, const char* who) {
  if (X.cols() != d) {
    fail(ErrorKind::DimensionMismatch,
         std::string(who) + " expects " + std::to_string(d) + " columns, got " + std::to_string(X.cols()));
  }
}

}  // namespace

StationaryCorrelation::StationaryCorrelation(KernelSpec spec, ParamBounds bounds)
    : spec_(std::move(spec)), bounds_(bounds) {
  spec_.variance = 1.0;
  spec_.validate();
}

std::unique_ptr<CorrelationModel> StationaryCorrelation::clone() const {
  return std::make_unique<StationaryCorrelation>(*this);
}

Vector StationaryCorrelation::log_params() const { return spec_.lengthscales.array().log(); }

void StationaryCorrelation::set_log_params(const Vector& theta) {
  if (theta.size() != num_params()) fail(ErrorKind::DimensionMismatch, "wrong parameter count");
  spec_.lengthscales = theta.array().exp();
}

Vector StationaryCorrelation::lower_bounds() const {
  return Vector::Constant(num_params(), std::log(bounds_.lengthscale_lo));
}

Vector StationaryCorrelation::upper_bounds() const {
  return Vector::Constant(num_params(), std::log(bounds_.lengthscale_hi));
}

Matrix StationaryCorrelation::gram(const Matrix& X) const {
  check_cols(X, input_dim(), "correlation");
  return corr_matrix(spec_, X, X);
}

Matrix StationaryCorrelation::cross(const Matrix& Xq, const Matrix& X) const {
  check_cols(Xq, input_dim(), "correlation");
  return corr_matrix(spec_, Xq, X);
}

Vector StationaryCorrelation::diag(const Matrix& Xq) const {
  check_cols(Xq, input_dim(), "correlation");
  return Vector::Ones(Xq.rows());
}

Vector StationaryCorrelation::gram_gradient_dot(const Matrix& X, const Matrix& K, const Matrix& W) const {
  const Eigen::Index n = X.rows(), d = input_dim();
  Vector g = Vector::Zero(d);
  const Eigen::ArrayXd inv = spec_.lengthscales.array().inverse();
  const bool se = spec_.family == KernelFamily::SquaredExponential;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double w = 2.0 * W(i, j) * K(i, j);
      if (w == 0.0) continue;
      for (Eigen::Index l = 0; l < d; ++l) {
        const double u = std::abs(X(i, l) - X(j, l)) * inv[l];
        g[l] += w * (se ? u * u : matern52_dlog(u));
      }
    }
  }
  return g;
}

DeepCorrelation::DeepCorrelation(DeepKernelSpec spec, ParamBounds bounds) : spec_(std::move(spec)), bounds_(bounds) {
  spec_.validate();
  const double v = spec_.x_outer.variance;
  spec_.x_bias.variance /= v;
  spec_.x_outer.variance = 1.0;
}

std::unique_ptr<CorrelationModel> DeepCorrelation::clone() const { return std::make_unique<DeepCorrelation>(*this); }

Eigen::Index DeepCorrelation::input_dim() const {
  return static_cast<Eigen::Index>(spec_.x_dim() + spec_.z_dim());
}

Eigen::Index DeepCorrelation::num_params() const {
  return static_cast<Eigen::Index>(2 * spec_.x_dim() + spec_.z_dim() + 3);
}

Vector DeepCorrelation::log_params() const {
  const auto d = static_cast<Eigen::Index>(spec_.x_dim());
  const auto p = static_cast<Eigen::Index>(spec_.z_dim());
  Vector t(num_params());
  t.segment(0, d) = spec_.x_outer.lengthscales.array().log();
  t[d] = std::log(spec_.z_linear_variance);
  t[d + 1] = std::log(spec_.z_se.variance);
  t.segment(d + 2, p) = spec_.z_se.lengthscales.array().log();
  t[d + 2 + p] = std::log(spec_.x_bias.variance);
  t.segment(d + 3 + p, d) = spec_.x_bias.lengthscales.array().log();
  return t;
}

void DeepCorrelation::set_log_params(const Vector& t) {
  if (t.size() != num_params()) fail(ErrorKind::DimensionMismatch, "wrong parameter count");
  const auto d = static_cast<Eigen::Index>(spec_.x_dim());
  const auto p = static_cast<Eigen::Index>(spec_.z_dim());
  spec_.x_outer.lengthscales = t.segment(0, d).array().exp();
  spec_.z_linear_variance = std::exp(t[d]);
  spec_.z_se.variance = std::exp(t[d + 1]);
  spec_.z_se.lengthscales = t.segment(d + 2, p).array().exp();
  spec_.x_bias.variance = std::exp(t[d + 2 + p]);
  spec_.x_bias.lengthscales = t.segment(d + 3 + p, d).array().exp();
}

Vector DeepCorrelation::lower_bounds() const {
  const auto d = static_cast<Eigen::Index>(spec_.x_dim());
  const auto p = static_cast<Eigen::Index>(spec_.z_dim());
  Vector b = Vector::Constant(num_params(), std::log(bounds_.lengthscale_lo));
  b[d] = b[d + 1] = b[d + 2 + p] = std::log(bounds_.variance_lo);
  return b;
}

Vector DeepCorrelation::upper_bounds() const {
  const auto d = static_cast<Eigen::Index>(spec_.x_dim());
  const auto p = static_cast<Eigen::Index>(spec_.z_dim());
  Vector b = Vector::Constant(num_params(), std::log(bounds_.lengthscale_hi));
  b[d] = b[d + 1] = b[d + 2 + p] = std::log(bounds_.variance_hi);
  return b;
}

Matrix DeepCorrelation::gram(const Matrix& X) const {
  check_cols(X, input_dim(), "deep correlation");
  return deep_kernel_matrix(spec_, X, X);
}

Matrix DeepCorrelation::cross(const Matrix& Xq, const Matrix& X) const {
  check_cols(Xq, input_dim(), "deep correlation");
  return deep_kernel_matrix(spec_, Xq, X);
}

Vector DeepCorrelation::diag(const Matrix& Xq) const {
  check_cols(Xq, input_dim(), "deep correlation");
  const auto p = static_cast<Eigen::Index>(spec_.z_dim());
  Vector out(Xq.rows());
  for (Eigen::Index i = 0; i < Xq.rows(); ++i) {
    const double zz = p > 0 ? Xq.row(i).tail(p).squaredNorm() : 0.0;
    out[i] = spec_.x_outer.variance * (spec_.z_linear_variance * zz + spec_.z_se.variance) + spec_.x_bias.variance;
  }
  return out;
}

Vector DeepCorrelation::gram_gradient_dot(const Matrix& X, const Matrix& /*K*/, const Matrix& W) const {
  const auto d = static_cast<Eigen::Index>(spec_.x_dim());
  const auto p = static_cast<Eigen::Index>(spec_.z_dim());
  const Eigen::Index n = X.rows();
  const Matrix Xx = X.leftCols(d);
  const Matrix Z = X.rightCols(p);
  const Matrix Kx = corr_matrix(spec_.x_outer, Xx, Xx);
  const Matrix Kb = corr_matrix(spec_.x_bias, Xx, Xx);
  const Matrix Kz = p > 0 ? corr_matrix(spec_.z_se, Z, Z) : Matrix::Ones(n, n);
  const Matrix L = Z * Z.transpose();
  const double a = spec_.z_linear_variance, b = spec_.z_se.variance, c = spec_.x_bias.variance;
  const Eigen::ArrayXd inv_x = spec_.x_outer.lengthscales.array().inverse();
  const Eigen::ArrayXd inv_b = spec_.x_bias.lengthscales.array().inverse();
  const Eigen::ArrayXd inv_z = spec_.z_se.lengthscales.array().inverse();

  Vector g = Vector::Zero(num_params());
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double w = (i == j ? 1.0 : 2.0) * W(i, j);
      if (w == 0.0) continue;
      const double lin = a * L(i, j);
      const double zse = b * Kz(i, j);
      const double outer = w * Kx(i, j) * (lin + zse);
      const double bias = w * c * Kb(i, j);
      g[d] += w * Kx(i, j) * lin;
      g[d + 1] += w * Kx(i, j) * zse;
      g[d + 2 + p] += bias;
      if (i == j) continue;
      for (Eigen::Index l = 0; l < d; ++l) {
        const double dx = X(i, l) - X(j, l);
        g[l] += outer * dx * dx * inv_x[l] * inv_x[l];
        g[d + 3 + p + l] += bias * dx * dx * inv_b[l] * inv_b[l];
      }
      const double zk = w * Kx(i, j) * zse;
      for (Eigen::Index k = 0; k < p; ++k) {
        const double dz = Z(i, k) - Z(j, k);
        g[d + 2 + k] += zk * dz * dz * inv_z[k] * inv_z[k];
      }
    }
  }
  return g;
}

}  // namespace gmgp
