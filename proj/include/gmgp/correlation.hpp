#pragma once

#include <memory>

#include "gmgp/kernel.hpp"

namespace gmgp {

struct ParamBounds {
  double lengthscale_lo = 0.05;
  double lengthscale_hi = 10.0;
  double variance_lo = 1e-4;
  double variance_hi = 1e2;
};

/// Correlation structure with a log-space parameter vector, as seen by the
/// likelihood optimiser. The overall process variance is not part of it; the
/// GP profiles that out.
class CorrelationModel {
 public:
  virtual ~CorrelationModel() = default;

  virtual std::unique_ptr<CorrelationModel> clone() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index num_params() const = 0;
  virtual Vector log_params() const = 0;
  virtual void set_log_params(const Vector& theta) = 0;
  virtual Vector lower_bounds() const = 0;
  virtual Vector upper_bounds() const = 0;

  virtual Matrix gram(const Matrix& X) const = 0;
  /// m x n matrix of k(Xq_i, X_j).
  virtual Matrix cross(const Matrix& Xq, const Matrix& X) const = 0;
  virtual Vector diag(const Matrix& Xq) const = 0;

  /// g_k = sum_ij dK_ij/dtheta_k * W_ij for a symmetric weight matrix W.
  virtual Vector gram_gradient_dot(const Matrix& X, const Matrix& K, const Matrix& W) const = 0;
};

class StationaryCorrelation final : public CorrelationModel {
 public:
  explicit StationaryCorrelation(KernelSpec spec, ParamBounds bounds = {});

  const KernelSpec& spec() const { return spec_; }

  std::unique_ptr<CorrelationModel> clone() const override;
  Eigen::Index input_dim() const override { return spec_.lengthscales.size(); }
  Eigen::Index num_params() const override { return spec_.lengthscales.size(); }
  Vector log_params() const override;
  void set_log_params(const Vector& theta) override;
  Vector lower_bounds() const override;
  Vector upper_bounds() const override;
  Matrix gram(const Matrix& X) const override;
  Matrix cross(const Matrix& Xq, const Matrix& X) const override;
  Vector diag(const Matrix& Xq) const override;
  Vector gram_gradient_dot(const Matrix& X, const Matrix& K, const Matrix& W) const override;

 private:
  KernelSpec spec_;
  ParamBounds bounds_;
};

/// Deep composite kernel with the outer variance pinned to 1; the profiled
/// process variance rescales the whole expression. Parameter layout:
/// [log l_outer (d), log s_lin^2, log s_z^2, log l_z (p), log s_bias^2, log l_bias (d)].
class DeepCorrelation final : public CorrelationModel {
 public:
  explicit DeepCorrelation(DeepKernelSpec spec, ParamBounds bounds = {});

  const DeepKernelSpec& spec() const { return spec_; }

  std::unique_ptr<CorrelationModel> clone() const override;
  Eigen::Index input_dim() const override;
  Eigen::Index num_params() const override;
  Vector log_params() const override;
  void set_log_params(const Vector& theta) override;
  Vector lower_bounds() const override;
  Vector upper_bounds() const override;
  Matrix gram(const Matrix& X) const override;
  Matrix cross(const Matrix& Xq, const Matrix& X) const override;
  Vector diag(const Matrix& Xq) const override;
  Vector gram_gradient_dot(const Matrix& X, const Matrix& K, const Matrix& W) const override;

 private:
  DeepKernelSpec spec_;
  ParamBounds bounds_;
};

}  // namespace gmgp
