#include "gmgp/gp.hpp"

#include <cmath>
#include <limits>

#include "gmgp/error.hpp"

namespace gmgp {

namespace {

constexpr double kSigma2Floor = 1e-12;
constexpr double kMissPenalty = 1e10;

struct Factorised {
  Matrix L;
  double nugget;
};

std::optional<Matrix> try_cholesky(const Matrix& R, double nugget) {
  Matrix G = R;
  G.diagonal() += nugget * R.diagonal();
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Matrix L = llt.matrixL();
  if (!L.diagonal().allFinite() || (L.diagonal().array() <= 0.0).any()) return std::nullopt;
  return L;
}

std::optional<Factorised> factorise(const Matrix& R, const MleConfig& cfg) {
  for (double eta = cfg.nugget_start; eta <= cfg.nugget_max * (1.0 + 1e-9); eta *= 10.0) {
    if (auto L = try_cholesky(R, eta)) return Factorised{std::move(*L), eta};
  }
  return std::nullopt;
}

void check_shapes(const CorrelationModel& corr, const Matrix& X, const Vector& y, const Matrix& H, bool gls = true) {
  if (X.rows() == 0) fail(ErrorKind::EmptyInput, "no training points");
  if (X.cols() != corr.input_dim()) {
    fail(ErrorKind::DimensionMismatch, "training inputs have " + std::to_string(X.cols()) + " columns, model expects " +
                                           std::to_string(corr.input_dim()));
  }
  if (y.size() != X.rows() || H.rows() != X.rows()) fail(ErrorKind::DimensionMismatch, "inconsistent training sizes");
  if (gls && H.cols() >= X.rows()) {
    fail(ErrorKind::RankDeficientTrend, "need more points (" + std::to_string(X.rows()) + ") than trend coefficients (" +
                                            std::to_string(H.cols()) + ")");
  }
}

double spread(const Vector& y) {
  if (y.size() < 2) return 1.0;
  const double m = y.mean();
  const double s = std::sqrt((y.array() - m).square().sum() / static_cast<double>(y.size() - 1));
  return s > 0.0 && std::isfinite(s) ? s : 1.0;
}

struct Gls {
  Vector beta;
  double sigma2;
  Vector alpha;
  double nll;
};

// Solves the GLS problem for a factor L of G; y must already be offset-corrected.
Gls solve_gls(const Matrix& L, const Vector& y, const Matrix& H) {
  const Eigen::Index n = y.size(), p = H.cols();
  const auto tri = L.triangularView<Eigen::Lower>();
  const Vector ys = tri.solve(y);
  Vector beta = Vector::Zero(p);
  Vector e = ys;
  if (p > 0) {
    const Matrix Hs = tri.solve(H);
    Eigen::ColPivHouseholderQR<Matrix> qr(Hs);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      fail(ErrorKind::RankDeficientTrend,
           "trend matrix has rank " + std::to_string(qr.rank()) + " < " + std::to_string(p) + " columns");
    }
    beta = qr.solve(ys);
    e = ys - Hs * beta;
  }
  Gls out;
  out.beta = std::move(beta);
  out.sigma2 = std::max(e.squaredNorm() / static_cast<double>(n - p), kSigma2Floor);
  out.alpha = L.transpose().triangularView<Eigen::Upper>().solve(e);
  out.nll = 0.5 * static_cast<double>(n - p) * std::log(out.sigma2) + L.diagonal().array().log().sum();
  return out;
}

FittedGp assemble(std::shared_ptr<const CorrelationModel> corr, const Matrix& X, const Vector& y, const Matrix& H,
                  Matrix L, double nugget) {
  FittedGp m;
  m.corr = std::move(corr);
  m.X = X;
  m.y = y;
  m.H = H;
  m.nugget = nugget;
  m.offset = H.cols() == 0 ? y.mean() : 0.0;
  const double s = spread(y);
  Gls g = solve_gls(L, (y.array() - m.offset).matrix() / s, H);
  m.beta = s * g.beta;
  m.sigma2 = std::max(s * s * g.sigma2, kSigma2Floor);
  m.alpha = s * g.alpha;
  m.nll = g.nll + static_cast<double>(y.size() - H.cols()) * std::log(s);
  m.chol = std::move(L);
  return m;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Eigen::Index TrendBasis::size() const {
  switch (kind) {
    case TrendKind::None:
      return 0;
    case TrendKind::Constant:
      return 1;
    case TrendKind::Linear:
      return 1 + dim;
  }
  return 0;
}

Matrix TrendBasis::evaluate(const Matrix& X) const {
  if (kind == TrendKind::Linear && X.cols() != dim) {
    fail(ErrorKind::DimensionMismatch, "linear trend expects " + std::to_string(dim) + " columns");
  }
  Matrix H(X.rows(), size());
  if (kind == TrendKind::None) return H;
  H.col(0).setOnes();
  if (kind == TrendKind::Linear) H.rightCols(dim) = X;
  return H;
}

std::string_view to_string(TrendKind kind) {
  switch (kind) {
    case TrendKind::None:
      return "none";
    case TrendKind::Constant:
      return "constant";
    case TrendKind::Linear:
      return "linear";
  }
  return "?";
}

TrendKind trend_kind_from_string(std::string_view name) {
  if (name == "none") return TrendKind::None;
  if (name == "constant") return TrendKind::Constant;
  if (name == "linear") return TrendKind::Linear;
  fail(ErrorKind::Parse, "unknown trend '" + std::string(name) + "'");
}

void NodeDataset::validate() const {
  if (X.rows() == 0) fail(ErrorKind::InvalidDataset, "dataset is empty");
  if (X.cols() == 0) fail(ErrorKind::InvalidDataset, "dataset has no input columns");
  if (y.size() != X.rows()) {
    fail(ErrorKind::InvalidDataset,
         std::to_string(X.rows()) + " input rows but " + std::to_string(y.size()) + " outputs");
  }
  if (!X.allFinite() || !y.allFinite()) fail(ErrorKind::InvalidDataset, "non-finite value in dataset");
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
      if ((X.row(i) - X.row(j)).norm() <= 1e-10) {
        fail(ErrorKind::InvalidDataset, "duplicate input rows " + std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
}

KernelSpec FittedGp::kernel_spec() const {
  const auto* st = dynamic_cast<const StationaryCorrelation*>(corr.get());
  if (st == nullptr) fail(ErrorKind::InvalidArgument, "model does not use a stationary kernel");
  KernelSpec spec = st->spec();
  spec.variance = sigma2;
  return spec;
}

double concentrated_nll(const CorrelationModel& corr, const Matrix& X, const Vector& y, const Matrix& H,
                        double nugget, Vector* grad, double* max_train_error) {
  check_shapes(corr, X, y, H);
  const Matrix R = corr.gram(X);
  auto L = try_cholesky(R, nugget);
  if (!L) fail(ErrorKind::SingularCorrelation, "correlation matrix not positive definite at nugget " +
                                                    std::to_string(nugget));
  const double offset = H.cols() == 0 ? y.mean() : 0.0;
  const double s = spread(y);
  const Gls g = solve_gls(*L, (y.array() - offset).matrix() / s, H);
  if (max_train_error != nullptr) {
    // The fitted mean at X_i misses y_i by nugget * R_ii * alpha_i.
    *max_train_error = s * nugget * R.diagonal().cwiseProduct(g.alpha).cwiseAbs().maxCoeff();
  }
  if (grad != nullptr) {
    const Eigen::Index n = X.rows();
    Matrix W = L->triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
    W = W.transpose() * W;  // G^{-1}
    W.noalias() -= g.alpha * g.alpha.transpose() / g.sigma2;
    // G = R + nugget * diag(R): diagonal entries of dR carry an extra factor.
    W.diagonal() *= 1.0 + nugget;
    *grad = 0.5 * corr.gram_gradient_dot(X, R, W);
  }
  return g.nll + static_cast<double>(y.size() - H.cols()) * std::log(s);
}

double concentrated_nll(const NodeDataset& data, KernelFamily family, TrendBasis basis, const Vector& lengthscales,
                        double nugget) {
  data.validate();
  StationaryCorrelation corr(KernelSpec{family, lengthscales, 1.0});
  return concentrated_nll(corr, data.X, data.y, basis.evaluate(data.X), nugget);
}

FittedGp condition_gp(std::shared_ptr<const CorrelationModel> corr, const Matrix& X, const Vector& y, const Matrix& H,
                      const MleConfig& cfg) {
  check_shapes(*corr, X, y, H);
  auto f = factorise(corr->gram(X), cfg);
  if (!f) fail(ErrorKind::SingularCorrelation, "Cholesky failed up to nugget " + std::to_string(cfg.nugget_max));
  return assemble(std::move(corr), X, y, H, std::move(f->L), f->nugget);
}

FittedGp condition_fixed(std::unique_ptr<CorrelationModel> corr, const FixedCorrelation& fixed, const Matrix& X,
                         const Vector& y, const Matrix& H, const MleConfig& cfg) {
  if (fixed.log_params.size() != corr->num_params()) {
    fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(corr->num_params()) + " correlation parameters, got " +
                                           std::to_string(fixed.log_params.size()));
  }
  corr->set_log_params(fixed.log_params);
  MleConfig c = cfg;
  c.nugget_start = fixed.nugget;
  c.nugget_max = std::max(fixed.nugget, cfg.nugget_max);
  return condition_gp(std::shared_ptr<const CorrelationModel>(std::move(corr)), X, y, H, c);
}

FittedGp condition_gp_fixed(std::shared_ptr<const CorrelationModel> corr, const Matrix& X, const Vector& y,
                            const Matrix& H, const Vector& beta, double sigma2, double offset, double nugget) {
  check_shapes(*corr, X, y, H, false);
  if (beta.size() != H.cols()) fail(ErrorKind::DimensionMismatch, "beta length does not match trend columns");
  if (!(sigma2 > 0.0)) fail(ErrorKind::InvalidArgument, "sigma2 must be positive");
  MleConfig cfg;
  cfg.nugget_start = nugget;
  cfg.nugget_max = std::max(nugget, cfg.nugget_max);
  auto f = factorise(corr->gram(X), cfg);
  if (!f) fail(ErrorKind::SingularCorrelation, "Cholesky failed for fixed-parameter model");
  FittedGp m;
  m.corr = std::move(corr);
  m.X = X;
  m.y = y;
  m.H = H;
  m.beta = beta;
  m.sigma2 = sigma2;
  m.offset = offset;
  m.nugget = f->nugget;
  const Vector e = y - H * beta - Vector::Constant(y.size(), offset);
  const auto tri = f->L.triangularView<Eigen::Lower>();
  const Vector es = tri.solve(e);
  m.alpha = f->L.transpose().triangularView<Eigen::Upper>().solve(es);
  m.nll = 0.5 * es.squaredNorm() / sigma2 + 0.5 * static_cast<double>(y.size()) * std::log(sigma2) +
          f->L.diagonal().array().log().sum();
  m.chol = std::move(f->L);
  return m;
}

FittedGp fit_gp_general(std::unique_ptr<CorrelationModel> corr, const Matrix& X, const Vector& y, const Matrix& H,
                        const MleConfig& cfg) {
  check_shapes(*corr, X, y, H);
  const Eigen::Index k = corr->num_params();
  if (k == 0) return condition_gp(std::shared_ptr<const CorrelationModel>(std::move(corr)), X, y, H, cfg);

  const Vector lo = corr->lower_bounds();
  const Vector width = corr->upper_bounds() - lo;
  // Box constraints via theta = lo + width * sigmoid(v), v unconstrained.
  auto to_theta = [&](const Vector& v) {
    Vector t(k);
    for (Eigen::Index i = 0; i < k; ++i) t[i] = lo[i] + width[i] * sigmoid(v[i]);
    return t;
  };
  const bool use_bfgs = cfg.optimizer == OptimizerChoice::Bfgs ||
                        (cfg.optimizer == OptimizerChoice::Auto && k > cfg.simplex_max_params);
  const Matrix starts = latin_hypercube(cfg.starts, k, cfg.seed);

  const double range = y.maxCoeff() - y.minCoeff();
  const double max_error = cfg.interpolation_tol * range;
  std::unique_ptr<CorrelationModel> work = corr->clone();
  // Each nugget level is tried with the interpolation guard first; the plain
  // likelihood is only used if every guarded start failed to factorise.
  for (double eta = cfg.nugget_start; eta <= cfg.nugget_max * (1.0 + 1e-9); eta *= 10.0) {
    for (const bool guarded : {true, false}) {
      if (!guarded && !(max_error > 0.0)) break;
      auto value = [&](const Vector& v, Vector* grad, bool guard) -> double {
        work->set_log_params(to_theta(v));
        try {
          Vector g;
          double miss = 0.0;
          const double f = concentrated_nll(*work, X, y, H, eta, grad != nullptr ? &g : nullptr, &miss);
          // Lexicographic: any interpolating point beats any other, and among
          // the rest the smaller miss wins.
          if (guard && max_error > 0.0 && miss > max_error) return kMissPenalty + std::log(miss / max_error);
          if (grad != nullptr) {
            grad->resize(k);
            for (Eigen::Index i = 0; i < k; ++i) {
              const double s = sigmoid(v[i]);
              (*grad)[i] = g[i] * width[i] * s * (1.0 - s);
            }
          }
          return f;
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::SingularCorrelation) return std::numeric_limits<double>::infinity();
          throw;
        }
      };
      Vector best;
      double best_value = std::numeric_limits<double>::infinity();
      for (Eigen::Index s = 0; s < starts.rows(); ++s) {
        Vector v0(k);
        for (Eigen::Index i = 0; i < k; ++i) {
          const double u = std::clamp(starts(s, i), 1e-6, 1.0 - 1e-6);
          v0[i] = std::log(u / (1.0 - u));
        }
        OptimResult r;
        if (use_bfgs) {
          // The guard penalty carries no gradient, so a quasi-Newton run that
          // stalls there is handed to the simplex and resumed from its result.
          r = minimize_bfgs([&](const Vector& v, Vector& g) { return value(v, &g, guarded); }, v0, cfg.local);
          for (int round = 0; round < 4 && r.value >= kMissPenalty; ++round) {
            OptimResult p = minimize_simplex([&](const Vector& v) { return value(v, nullptr, guarded); }, r.x, cfg.local);
            if (!(p.value < r.value - cfg.local.rel_tol * std::max(1.0, std::abs(r.value)))) break;
            r = minimize_bfgs([&](const Vector& v, Vector& g) { return value(v, &g, guarded); }, p.x, cfg.local);
            if (p.value < r.value) r = p;
          }
        } else {
          r = minimize_simplex([&](const Vector& v) { return value(v, nullptr, guarded); }, v0, cfg.local);
        }
        if (r.value < best_value) {
          best_value = r.value;
          best = r.x;
        }
      }
      if (!std::isfinite(best_value)) continue;
      corr->set_log_params(to_theta(best));
      auto L = try_cholesky(corr->gram(X), eta);
      if (!L) continue;
      return assemble(std::shared_ptr<const CorrelationModel>(std::move(corr)), X, y, H, std::move(*L), eta);
    }
  }
  fail(ErrorKind::SingularCorrelation,
       "no start produced a positive definite correlation up to nugget " + std::to_string(cfg.nugget_max));
}

FittedGp fit_gp(const NodeDataset& data, KernelFamily family, TrendBasis basis, const MleConfig& cfg) {
  data.validate();
  basis.dim = data.dim();
  KernelSpec spec = make_kernel(family, static_cast<std::size_t>(data.dim()));
  FittedGp m = fit_gp_general(std::make_unique<StationaryCorrelation>(spec), data.X, data.y, basis.evaluate(data.X), cfg);
  m.basis = basis;
  m.family = family;
  return m;
}

PosteriorSummary posterior_with_trend(const FittedGp& model, const Matrix& Xq, const Matrix& Hq) {
  if (Xq.cols() != model.X.cols()) {
    fail(ErrorKind::DimensionMismatch,
         "query has " + std::to_string(Xq.cols()) + " columns, model expects " + std::to_string(model.X.cols()));
  }
  if (Hq.rows() != Xq.rows() || Hq.cols() != model.beta.size()) {
    fail(ErrorKind::DimensionMismatch, "query trend matrix has wrong shape");
  }
  const Matrix Rq = model.corr->cross(Xq, model.X);  // m x n
  PosteriorSummary out;
  out.mean = Hq * model.beta + Rq * model.alpha;
  out.mean.array() += model.offset;
  const Matrix V = model.chol.triangularView<Eigen::Lower>().solve(Rq.transpose());  // n x m
  out.variance = model.sigma2 * (model.corr->diag(Xq) - V.colwise().squaredNorm().transpose());
  out.variance = out.variance.cwiseMax(0.0);
  return out;
}

PosteriorSummary gp_posterior(const FittedGp& model, const Matrix& Xq) {
  if (!model.basis) fail(ErrorKind::InvalidArgument, "model has no trend basis; use posterior_with_trend");
  if (Xq.cols() != model.X.cols()) {
    fail(ErrorKind::DimensionMismatch,
         "query has " + std::to_string(Xq.cols()) + " columns, model expects " + std::to_string(model.X.cols()));
  }
  return posterior_with_trend(model, Xq, model.basis->evaluate(Xq));
}

}  // namespace gmgp
