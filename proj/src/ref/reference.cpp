#include "reference.hpp"

#include <cmath>

namespace cfisac::ref {

namespace {

// Local copies of the elementary models, kept separate from the library
// versions on purpose.
cdouble steer_n(double theta, int n) {
  return std::polar(1.0, kPi * n * std::sin(theta));
}

double pl(double d, double alpha, double f_c) {
  const double lam = kSpeedOfLight / f_c;
  return std::pow(lam / (4.0 * kPi), 2.0) * std::pow(d, -alpha);
}

}  // namespace

std::vector<cdouble> assemble_tx_naive(const ScenarioConfig& config,
                                       const std::vector<int>& kappa,
                                       const std::vector<int>& Lambda,
                                       const std::vector<cdouble>& W,
                                       const std::vector<cdouble>& s_c,
                                       const std::vector<cdouble>& s_r) {
  const int J = config.J, K = config.K, M = config.M, N_s = config.N_s,
            L = config.L;
  const int cols = M + K;
  std::vector<cdouble> x(static_cast<std::size_t>(J) * N_s * L * M);
  for (int j = 0; j < J; ++j) {
    // Tx rank = number of transmit APs before j.
    int t = 0;
    for (int jj = 0; jj < j; ++jj) t += kappa[jj] ? 1 : 0;
    for (int i = 0; i < N_s; ++i)
      for (int l = 0; l < L; ++l)
        for (int m = 0; m < M; ++m) {
          cdouble v{0.0, 0.0};
          for (int s = 0; s < M; ++s)
            v += static_cast<double>(kappa[j]) *
                 W[idx4(j, i, m, s, N_s, M, cols)] *
                 s_r[idx4(t, s, i, l, M, N_s, L)];
          for (int k = 0; k < K; ++k)
            v += static_cast<double>(kappa[j]) *
                 static_cast<double>(Lambda[idx2(j, k, K)]) *
                 W[idx4(j, i, m, M + k, N_s, M, cols)] *
                 s_c[idx3(i, l, k, L, K)];
          x[idx4(j, i, l, m, N_s, L, M)] = v;
        }
  }
  return x;
}

SinrNaive sinr_naive(const ChannelSet& H, const std::vector<cdouble>& W,
                     const std::vector<int>& kappa,
                     const std::vector<int>& Lambda, double sigma_c2,
                     bool printed_mu) {
  const int J = H.J, K = H.K, M = H.M, N_s = H.N_s;
  const int cols = M + K;
  SinrNaive out;
  out.sinr.assign(static_cast<std::size_t>(N_s) * K, 0.0);
  out.mu.assign(static_cast<std::size_t>(N_s) * K, 0.0);
  out.iota.assign(static_cast<std::size_t>(N_s) * K, 0.0);
  for (int i = 0; i < N_s; ++i)
    for (int k = 0; k < K; ++k) {
      cdouble num{0.0, 0.0};
      for (int j = 0; j < J; ++j)
        for (int m = 0; m < M; ++m)
          num += static_cast<double>(kappa[j]) *
                 static_cast<double>(Lambda[idx2(j, k, K)]) *
                 std::conj(H.h[idx4(j, i, k, m, N_s, K, M)]) *
                 W[idx4(j, i, m, M + k, N_s, M, cols)];
      double mu = 0.0;
      for (int n = 0; n < K; ++n) {
        if (n == k) continue;
        cdouble c{0.0, 0.0};
        for (int j = 0; j < J; ++j) {
          const int gate = printed_mu ? Lambda[idx2(j, k, K)] : Lambda[idx2(j, n, K)];
          for (int m = 0; m < M; ++m)
            c += static_cast<double>(kappa[j]) * static_cast<double>(gate) *
                 std::conj(H.h[idx4(j, i, k, m, N_s, K, M)]) *
                 W[idx4(j, i, m, M + n, N_s, M, cols)];
        }
        mu += std::abs(c) * std::abs(c);
      }
      double iota = 0.0;
      for (int s = 0; s < M; ++s) {
        cdouble c{0.0, 0.0};
        for (int j = 0; j < J; ++j)
          for (int m = 0; m < M; ++m)
            c += static_cast<double>(kappa[j]) *
                 std::conj(H.h[idx4(j, i, k, m, N_s, K, M)]) *
                 W[idx4(j, i, m, s, N_s, M, cols)];
        iota += std::abs(c) * std::abs(c);
      }
      out.mu[idx2(i, k, K)] = mu;
      out.iota[idx2(i, k, K)] = iota;
      out.sinr[idx2(i, k, K)] =
          std::abs(num) * std::abs(num) / (mu + iota + sigma_c2);
    }
  for (int i = 0; i < N_s; ++i)
    for (int k = 0; k < K; ++k)
      out.R_c += std::log2(1.0 + out.sinr[idx2(i, k, K)]);
  return out;
}

std::vector<cdouble> echo_naive(const Placement& p, const BistaticGeometry& geo,
                                const ChannelSet& channels,
                                const std::vector<cdouble>& x,
                                const std::vector<int>& kappa,
                                const ScenarioConfig& config,
                                const EchoDraws& draws, bool direct_path) {
  const int J = config.J, Q = config.Q, U = config.U, M = config.M,
            N_s = config.N_s, L = config.L;
  std::vector<int> rx;
  for (int j = 0; j < J; ++j)
    if (!kappa[j]) rx.push_back(j);
  const int R = static_cast<int>(rx.size());
  const double df = config.B / config.N_s;
  const double t_sym = config.N_s / config.B + (config.T_p > 0.0
                                                    ? config.T_p
                                                    : 0.25 * config.N_s / config.B);
  std::vector<cdouble> Y(static_cast<std::size_t>(R) * N_s * L * M);
  for (int ri = 0; ri < R; ++ri) {
    const int r = rx[ri];
    for (int i = 0; i < N_s; ++i)
      for (int l = 0; l < L; ++l)
        for (int m = 0; m < M; ++m) {
          cdouble v{0.0, 0.0};
          for (int j = 0; j < J; ++j) {
            if (!kappa[j]) continue;
            for (int q = 0; q < Q; ++q) {
              const double drq = geo.tgt_dist[idx2(r, q, Q)];
              const double djq = geo.tgt_dist[idx2(j, q, Q)];
              cdouble proj{0.0, 0.0};
              for (int mm = 0; mm < M; ++mm)
                proj += steer_n(geo.tgt_theta[idx2(j, q, Q)], mm) *
                        x[idx4(j, i, l, mm, N_s, L, M)];
              v += draws.beta[idx3(j, r, q, J, Q)] *
                   std::sqrt(pl(drq, p.alpha_tgt[idx2(r, q, Q)], config.f_c) *
                             pl(djq, p.alpha_tgt[idx2(j, q, Q)], config.f_c)) *
                   steer_n(geo.tgt_theta[idx2(r, q, Q)], m) * proj *
                   std::exp(cdouble(0.0, -2.0 * kPi * i * df * (drq + djq) /
                                             kSpeedOfLight)) *
                   std::exp(cdouble(0.0, 2.0 * kPi * l * t_sym *
                                             geo.f_d[idx3(j, r, q, J, Q)]));
            }
            for (int u = 0; u < U; ++u) {
              const double dru = geo.clu_dist[idx2(r, u, U)];
              const double dju = geo.clu_dist[idx2(j, u, U)];
              cdouble proj{0.0, 0.0};
              for (int mm = 0; mm < M; ++mm)
                proj += steer_n(geo.clu_theta[idx2(j, u, U)], mm) *
                        x[idx4(j, i, l, mm, N_s, L, M)];
              v += draws.eta[idx3(j, r, u, J, U)] *
                   std::sqrt(pl(dru, p.alpha_clu[idx2(r, u, U)], config.f_c) *
                             pl(dju, p.alpha_clu[idx2(j, u, U)], config.f_c)) *
                   steer_n(geo.clu_theta[idx2(r, u, U)], m) * proj *
                   std::exp(cdouble(0.0, -2.0 * kPi * i * df * (dru + dju) /
                                             kSpeedOfLight));
            }
            if (direct_path) {
              const double djr = channels.ap_ap_dist[idx2(j, r, J)];
              cdouble gx{0.0, 0.0};
              for (int mm = 0; mm < M; ++mm)
                gx += channels.G[idx4(j, r, m, mm, J, M, M)] *
                      x[idx4(j, i, l, mm, N_s, L, M)];
              v += std::sqrt(pl(djr, p.alpha_ap[idx2(j, r, J)], config.f_c)) *
                   gx *
                   std::exp(cdouble(0.0, -2.0 * kPi * i * df * djr /
                                             kSpeedOfLight));
            }
          }
          v += std::sqrt(config.sigma_r2) *
               draws.noise[idx4(ri, i, l, m, N_s, L, M)];
          Y[idx4(ri, i, l, m, N_s, L, M)] = v;
        }
  }
  return Y;
}

}  // namespace cfisac::ref
