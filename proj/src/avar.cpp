#include "envcore/errors.hpp"
#include "envcore/estimators.hpp"

namespace envcore {

MatrixXd envelope_avar(const MatrixXd& Sigma_X, const MatrixXd& G, const MatrixXd& G0,
                       const MatrixXd& Omega, const MatrixXd& Omega0, const MatrixXd& eta,
                       double pinv_cutoff) {
  const int r = static_cast<int>(G.rows());
  const int u = static_cast<int>(G.cols());
  const int p = static_cast<int>(Sigma_X.rows());
  if (u == 0) return MatrixXd::Zero(r * p, r * p);
  const MatrixXd sx_inv = inverse_pd(Sigma_X, "Σ_X");
  MatrixXd out = kron(sx_inv, G * Omega * G.transpose());
  if (G0.cols() == 0) return out;
  const MatrixXd o0_inv = inverse_pd(Omega0, "Ω0");
  const MatrixXd o_inv = inverse_pd(Omega, "Ω");
  const int m = u * static_cast<int>(G0.cols());
  MatrixXd M = kron(eta * Sigma_X * eta.transpose(), o0_inv) + kron(Omega, o0_inv) +
               kron(o_inv, Omega0) - 2.0 * MatrixXd::Identity(m, m);
  const MatrixXd left = kron(eta.transpose(), G0);
  out += left * pinv_sym(M, pinv_cutoff) * left.transpose();
  return 0.5 * (out + out.transpose());
}

MatrixXd scaled_envelope_avar(const MatrixXd& Sigma_X, const VectorXd& scales, const MatrixXd& Theta,
                              const MatrixXd& Theta0, const MatrixXd& Omega, const MatrixXd& Omega0,
                              const MatrixXd& eta, bool free_scales, double pinv_cutoff) {
  const int k = static_cast<int>(Theta.rows());
  const int v = static_cast<int>(Theta.cols());
  const int w = k - v;
  const int p = static_cast<int>(Sigma_X.rows());
  if (scales.size() != k) throw Error(ErrorCode::DimensionMismatch, "scale vector length differs from k");
  const int kk = k * (k + 1) / 2;
  const int nd = free_scales ? k - 1 : 0;
  const int n_eta = v * p, n_theta = k * v, n_om = v * (v + 1) / 2, n_om0 = w * (w + 1) / 2;
  const int n_psi = nd + n_eta + n_theta + n_om + n_om0;
  const int n_h = p * k + kk;

  const MatrixXd D = scales.asDiagonal();
  const MatrixXd B = w > 0 ? MatrixXd(Theta0 * Omega0 * Theta0.transpose()) : MatrixXd::Zero(k, k);
  const MatrixXd C = Theta * Omega * Theta.transpose() + B;
  const MatrixXd Sigma = D * C * D;
  const MatrixXd L = elimination_matrix(k);
  const MatrixXd DD = kron(D, D);
  const MatrixXd Ik = MatrixXd::Identity(k, k);

  MatrixXd H = MatrixXd::Zero(n_h, n_psi);
  int col = 0;
  const MatrixXd theta_eta = Theta * eta;
  for (int j = 1; j <= nd; ++j, ++col) {
    MatrixXd da = MatrixXd::Zero(k, p);
    da.row(j) = theta_eta.row(j);
    H.block(0, col, p * k, 1) = vec(da);
    MatrixXd E = MatrixXd::Zero(k, k);
    E(j, j) = 1.0;
    H.block(p * k, col, kk, 1) = vech(E * C * D + D * C * E);
  }
  if (n_eta > 0) H.block(0, col, p * k, n_eta) = kron(MatrixXd::Identity(p, p), D * Theta);
  col += n_eta;
  {
    H.block(0, col, p * k, n_theta) = kron(eta.transpose(), D);
    const MatrixXd K = commutation_matrix(k, v);
    const MatrixXd TO = Theta * Omega;
    const MatrixXd dC = kron(TO, Ik) + kron(Ik, TO) * K - kron(Theta, B) - kron(B, Theta) * K;
    H.block(p * k, col, kk, n_theta) = L * DD * dC;
    col += n_theta;
  }
  H.block(p * k, col, kk, n_om) = L * DD * kron(Theta, Theta) * duplication_matrix(v);
  col += n_om;
  if (n_om0 > 0) H.block(p * k, col, kk, n_om0) = L * DD * kron(Theta0, Theta0) * duplication_matrix(w);

  const MatrixXd sig_inv = inverse_pd(Sigma, "Σ_{D|S}");
  MatrixXd J = MatrixXd::Zero(n_h, n_h);
  J.topLeftCorner(p * k, p * k) = kron(Sigma_X, sig_inv);
  const MatrixXd Ek = duplication_matrix(k);
  J.bottomRightCorner(kk, kk) = 0.5 * Ek.transpose() * kron(sig_inv, sig_inv) * Ek;

  const MatrixXd V = H * pinv_sym(H.transpose() * J * H, pinv_cutoff) * H.transpose();
  const MatrixXd a = V.topLeftCorner(p * k, p * k);
  return 0.5 * (a + a.transpose());
}

}  // namespace envcore
