#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "gmgp/correlation.hpp"
#include "gmgp/optimize.hpp"

namespace gmgp {

enum class TrendKind { None, Constant, Linear };

/// Regression functions h(x). None means a fixed offset (the centre of the
/// training outputs) with no estimated coefficients.
struct TrendBasis {
  TrendKind kind = TrendKind::Constant;
  Eigen::Index dim = 0;

  static TrendBasis none(Eigen::Index d) { return {TrendKind::None, d}; }
  static TrendBasis constant(Eigen::Index d) { return {TrendKind::Constant, d}; }
  static TrendBasis linear(Eigen::Index d) { return {TrendKind::Linear, d}; }

  Eigen::Index size() const;
  /// Row i = h(X_i)^T.
  Matrix evaluate(const Matrix& X) const;
};

std::string_view to_string(TrendKind kind);
TrendKind trend_kind_from_string(std::string_view name);

struct NodeDataset {
  Matrix X;
  Vector y;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  /// Throws InvalidDataset on empty data, non-finite values, mismatched
  /// lengths or duplicate rows.
  void validate() const;
};

struct PosteriorSummary {
  Vector mean;
  Vector variance;
};

enum class OptimizerChoice { Auto, Simplex, Bfgs };

struct MleConfig {
  int starts = 10;
  LocalSearchOptions local;
  OptimizerChoice optimizer = OptimizerChoice::Auto;
  /// Auto switches to gradient search above this many parameters.
  Eigen::Index simplex_max_params = 3;
  std::uint64_t seed = 20240917;
  double nugget_start = 1e-8;
  double nugget_max = 1e-4;
  /// Parameter values whose conditioned model misses a training output by
  /// more than this fraction of the output range are avoided when any start
  /// finds better ones. 0 disables the check.
  double interpolation_tol = 1e-7;
};

/// Correlation parameters to condition on instead of estimating them
/// (e.g. when a saved model is restored).
struct FixedCorrelation {
  Vector log_params;
  double nugget = 1e-8;
};

/// A GP conditioned on data with fixed correlation parameters.
/// Covariance is sigma2 * R where R comes from `corr`; the factor `chol`
/// is of G = R + nugget * diag(R).
struct FittedGp {
  std::shared_ptr<const CorrelationModel> corr;
  Matrix X;
  Vector y;
  Matrix H;  // trend regressors at X (n x p, p may be 0)
  Vector beta;
  double sigma2 = 1.0;
  double nugget = 0.0;
  double offset = 0.0;  // fixed mean added on top of H beta
  Matrix chol;
  Vector alpha;  // G^{-1} (y - H beta - offset)
  double nll = 0.0;

  /// Only set by fit_gp; needed by gp_posterior to build h(x) at queries.
  std::optional<TrendBasis> basis;
  std::optional<KernelFamily> family;

  Eigen::Index size() const { return X.rows(); }
  /// Stationary kernel with variance sigma2 (only for stationary fits).
  KernelSpec kernel_spec() const;
};

/// GLS estimate of beta and sigma2 for the correlation parameters currently
/// held by `corr`. The nugget escalates x10 from `cfg.nugget_start` until the
/// Cholesky succeeds. With p == 0 the outputs are centred on their mean.
FittedGp condition_gp(std::shared_ptr<const CorrelationModel> corr, const Matrix& X, const Vector& y, const Matrix& H,
                      const MleConfig& cfg = {});

/// condition_gp on `corr` with its parameters replaced by `fixed`.
FittedGp condition_fixed(std::unique_ptr<CorrelationModel> corr, const FixedCorrelation& fixed, const Matrix& X,
                         const Vector& y, const Matrix& H, const MleConfig& cfg = {});

/// Conditions with user-supplied beta, sigma2 and offset (no estimation).
FittedGp condition_gp_fixed(std::shared_ptr<const CorrelationModel> corr, const Matrix& X, const Vector& y,
                            const Matrix& H, const Vector& beta, double sigma2, double offset = 0.0,
                            double nugget = 1e-8);

/// Concentrated MLE over the parameters of `corr`, then GLS conditioning.
FittedGp fit_gp_general(std::unique_ptr<CorrelationModel> corr, const Matrix& X, const Vector& y, const Matrix& H,
                        const MleConfig& cfg = {});

FittedGp fit_gp(const NodeDataset& data, KernelFamily family, TrendBasis basis, const MleConfig& cfg = {});

/// Posterior at Xq with trend regressors Hq (m x p).
PosteriorSummary posterior_with_trend(const FittedGp& model, const Matrix& Xq, const Matrix& Hq);
PosteriorSummary gp_posterior(const FittedGp& model, const Matrix& Xq);

/// Negative concentrated log-likelihood, 1/2 (n-p) log s2 + 1/2 log det G,
/// at the parameters held by `corr`. Throws SingularCorrelation if G cannot be
/// factorised at `nugget`; fills `grad` (w.r.t. log-parameters) when non-null.
double concentrated_nll(const CorrelationModel& corr, const Matrix& X, const Vector& y, const Matrix& H,
                        double nugget, Vector* grad = nullptr, double* max_train_error = nullptr);

double concentrated_nll(const NodeDataset& data, KernelFamily family, TrendBasis basis, const Vector& lengthscales,
                        double nugget = 1e-8);

}  // namespace gmgp
