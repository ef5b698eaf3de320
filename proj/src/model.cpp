#include "envcore/model.hpp"

#include <cmath>

#include "envcore/errors.hpp"

namespace envcore {

namespace {

MatrixXd moment_inverse(const MatrixXd& m, const std::string& name) {
  try {
    return inverse_pd(m, name);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularMoment, name + " is singular");
  }
}

MatrixXd centered(const MatrixXd& a) { return a.rowwise() - a.colwise().mean(); }

}  // namespace

const char* to_string(InterceptMode mode) { return mode == InterceptMode::model2 ? "model2" : "model3"; }

InterceptMode intercept_mode_from_string(const std::string& s) {
  if (s == "model2") return InterceptMode::model2;
  if (s == "model3") return InterceptMode::model3;
  throw Error(ErrorCode::ParseError, "intercept mode must be model2 or model3, got '" + s + "'");
}

void validate_dataset(const Dataset& d) {
  if (d.Y.rows() != d.X.rows())
    throw Error(ErrorCode::DimensionMismatch, "Y has " + std::to_string(d.Y.rows()) + " rows but X has " +
                                                  std::to_string(d.X.rows()));
  if (d.n() < 2) throw Error(ErrorCode::InvalidData, "need at least 2 observations");
  if (d.r() < 1 || d.p() < 1) throw Error(ErrorCode::InvalidData, "need at least one response and one predictor");
  for (int i = 0; i < d.n(); ++i) {
    for (int j = 0; j < d.r(); ++j)
      if (!std::isfinite(d.Y(i, j)))
        throw Error(ErrorCode::InvalidData, "non-finite response at row " + std::to_string(i + 1) +
                                                ", column " + std::to_string(j + 1));
    for (int j = 0; j < d.p(); ++j)
      if (!std::isfinite(d.X(i, j)))
        throw Error(ErrorCode::InvalidData, "non-finite predictor at row " + std::to_string(i + 1) +
                                                ", column " + std::to_string(j + 1));
  }
  if (!d.response_names.empty() && static_cast<int>(d.response_names.size()) != d.r())
    throw Error(ErrorCode::DimensionMismatch, "response name count differs from r");
  if (!d.predictor_names.empty() && static_cast<int>(d.predictor_names.size()) != d.p())
    throw Error(ErrorCode::DimensionMismatch, "predictor name count differs from p");
}

Dataset make_dataset(MatrixXd Y, MatrixXd X, std::vector<std::string> response_names,
                     std::vector<std::string> predictor_names) {
  Dataset d{std::move(Y), std::move(X), std::move(response_names), std::move(predictor_names)};
  validate_dataset(d);
  if (d.response_names.empty())
    for (int j = 0; j < d.r(); ++j) d.response_names.push_back("y" + std::to_string(j + 1));
  if (d.predictor_names.empty())
    for (int j = 0; j < d.p(); ++j) d.predictor_names.push_back("x" + std::to_string(j + 1));
  return d;
}

std::vector<std::string> dataset_warnings(const Dataset& d) {
  std::vector<std::string> w;
  if (d.n() <= d.p() + d.r())
    w.push_back("n = " + std::to_string(d.n()) + " does not exceed p + r = " + std::to_string(d.p() + d.r()));
  return w;
}

SemiOrthBasis constraint_complement(const MatrixXd& U) {
  SemiOrthBasis span;
  try {
    span = SemiOrthBasis::of_span(U);
  } catch (const Error&) {
    throw Error(ErrorCode::RankDeficientU, "U does not have full column rank");
  }
  return complete_basis(span);
}

TransformedData transform_responses(const Dataset& data, const MatrixXd& U) {
  if (U.rows() != data.r())
    throw Error(ErrorCode::DimensionMismatch, "U has " + std::to_string(U.rows()) + " rows but r = " +
                                                  std::to_string(data.r()));
  if (U.cols() < 1 || U.cols() > U.rows())
    throw Error(ErrorCode::RankDeficientU, "U must have between 1 and r columns");
  TransformedData t;
  t.U = U;
  const MatrixXd utu = U.transpose() * U;
  Eigen::LLT<MatrixXd> llt(utu);
  const SemiOrthBasis u0 = constraint_complement(U);  // throws on rank deficiency
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::RankDeficientU, "UᵀU is singular");
  t.W1 = U * llt.solve(MatrixXd::Identity(U.cols(), U.cols()));
  t.W2 = u0.matrix();
  t.W.resize(U.rows(), U.rows());
  t.W << t.W1, t.W2;
  t.logdetW = -0.5 * logdet_pd(utu, "UᵀU");
  t.Y_D = data.Y * t.W1;
  t.Y_S = data.Y * t.W2;
  return t;
}

MatrixXd cross_moment(const MatrixXd& a, const MatrixXd& b) {
  return centered(a).transpose() * centered(b) / static_cast<double>(a.rows());
}

MatrixXd residual_covariance(const MatrixXd& a, const MatrixXd& b, const std::string& what) {
  const MatrixXd saa = cross_moment(a, a);
  if (b.cols() == 0) return saa;
  const MatrixXd sab = cross_moment(a, b);
  const MatrixXd sbb = cross_moment(b, b);
  const MatrixXd out = saa - sab * moment_inverse(sbb, what) * sab.transpose();
  return 0.5 * (out + out.transpose());
}

MomentSet compute_moments(const TransformedData& t, const MatrixXd& X, InterceptMode mode) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int s = static_cast<int>(t.Y_S.cols());
  if (t.Y_D.rows() != n) throw Error(ErrorCode::DimensionMismatch, "X and transformed responses differ in n");
  if (n <= std::max(p, s) + 1)
    throw Error(ErrorCode::SingularMoment, "n = " + std::to_string(n) + " too small for p = " +
                                               std::to_string(p) + " and r - k = " + std::to_string(s));
  MomentSet m;
  m.n = n;
  m.mode = mode;
  m.x_bar = X.colwise().mean().transpose();
  m.d_bar = t.Y_D.colwise().mean().transpose();
  m.s_bar = t.Y_S.colwise().mean().transpose();
  m.S_X = cross_moment(X, X);
  m.S_D = cross_moment(t.Y_D, t.Y_D);
  m.S_S = cross_moment(t.Y_S, t.Y_S);
  m.S_DS = cross_moment(t.Y_D, t.Y_S);
  m.S_DX = cross_moment(t.Y_D, X);
  m.S_SX = cross_moment(t.Y_S, X);
  m.T_S = t.Y_S.transpose() * t.Y_S / static_cast<double>(n);
  moment_inverse(m.S_X, "S_X");

  MatrixXd dx_s = m.S_DX;
  if (s > 0) {
    const MatrixXd ss_inv = moment_inverse(m.S_S, "S_S");
    m.S_X_given_S = m.S_X - m.S_SX.transpose() * ss_inv * m.S_SX;
    m.S_D_given_S = m.S_D - m.S_DS * ss_inv * m.S_DS.transpose();
    dx_s = m.S_DX - m.S_DS * ss_inv * m.S_SX;
    if (mode == InterceptMode::model2) moment_inverse(m.T_S, "T_S");
  } else {
    m.S_X_given_S = m.S_X;
    m.S_D_given_S = m.S_D;
  }
  m.S_X_given_S = 0.5 * (m.S_X_given_S + m.S_X_given_S.transpose()).eval();
  m.S_D_given_S = 0.5 * (m.S_D_given_S + m.S_D_given_S.transpose()).eval();
  const MatrixXd xs_inv = moment_inverse(m.S_X_given_S, "S_{X|S}");
  m.S_D_given_XS = m.S_D_given_S - dx_s * xs_inv * dx_s.transpose();
  m.S_D_given_XS = 0.5 * (m.S_D_given_XS + m.S_D_given_XS.transpose()).eval();
  return m;
}

MatrixXd assemble_sigma(const MatrixXd& U, const MatrixXd& U0, const MatrixXd& phi,
                        const MatrixXd& Sigma_DS, const MatrixXd& Sigma_S) {
  const int k = static_cast<int>(U.cols());
  const int s = static_cast<int>(U0.cols());
  MatrixXd v(k + s, k + s);
  v.topLeftCorner(k, k) = Sigma_DS + phi * Sigma_S * phi.transpose();
  if (s > 0) {
    v.topRightCorner(k, s) = phi * Sigma_S;
    v.bottomLeftCorner(s, k) = (phi * Sigma_S).transpose();
    v.bottomRightCorner(s, s) = Sigma_S;
  }
  MatrixXd winv_t(U.rows(), k + s);
  winv_t << U, U0;
  const MatrixXd sigma = winv_t * v * winv_t.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

CovDecomposition conditional_decomposition(const SymMatrix& Sigma, const MatrixXd& U) {
  if (!Sigma.is_positive_definite()) throw Error(ErrorCode::NonPositiveDefinite, "Σ is not positive definite");
  if (U.rows() != Sigma.dim()) throw Error(ErrorCode::DimensionMismatch, "U rows differ from dim(Σ)");
  const MatrixXd U0 = constraint_complement(U).matrix();
  const MatrixXd W1 = U * inverse_pd(U.transpose() * U, "UᵀU");
  const MatrixXd& S = Sigma.matrix();
  const MatrixXd sig_s = U0.transpose() * S * U0;
  const MatrixXd cross = W1.transpose() * S * U0;
  const MatrixXd phi = U0.cols() > 0 ? MatrixXd(cross * inverse_pd(sig_s, "Σ_S")) : MatrixXd(U.cols(), 0);
  const MatrixXd sig_ds = W1.transpose() * S * W1 - phi * sig_s * phi.transpose();

  CovDecomposition out{phi, SymMatrix::symmetrize(sig_s), SymMatrix::symmetrize(sig_ds), Sigma};
  if (!out.Sigma_DS.is_positive_definite())
    throw Error(ErrorCode::NonPositiveDefinite, "Σ_{D|S} is not positive definite");
  const MatrixXd back = assemble_sigma(U, U0, phi, sig_ds, sig_s);
  if ((back - S).norm() > 1e-8 * std::max(1.0, S.norm()))
    throw Error(ErrorCode::NonPositiveDefinite, "conditional decomposition failed its round trip");
  return out;
}

}  // namespace envcore
