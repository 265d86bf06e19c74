#include "cfisac/echo.hpp"

#include <cmath>
#include <stdexcept>

#include "cfisac/rng.hpp"

namespace cfisac {

std::vector<int> rx_ids_from_kappa(const std::vector<int>& kappa) {
  std::vector<int> ids;
  for (std::size_t j = 0; j < kappa.size(); ++j)
    if (!kappa[j]) ids.push_back(static_cast<int>(j));
  return ids;
}

EchoDraws make_echo_draws(const ScenarioConfig& config, const Placement& p,
                          std::uint64_t seed) {
  const int J = config.J, Q = config.Q, U = config.U;
  EchoDraws d;
  d.beta.resize(static_cast<std::size_t>(J) * J * Q);
  d.eta.resize(static_cast<std::size_t>(J) * J * U);
  d.noise.resize(static_cast<std::size_t>(config.R) * config.N_s * config.L *
                 config.M);
  Rng rng_beta(split_seed(seed, 1));
  for (int j = 0; j < J; ++j)
    for (int r = 0; r < J; ++r)
      for (int q = 0; q < Q; ++q)
        d.beta[idx3(j, r, q, J, Q)] = rng_beta.cnormal(p.tgt_rcs[q]);
  Rng rng_eta(split_seed(seed, 2));
  for (int j = 0; j < J; ++j)
    for (int r = 0; r < J; ++r)
      for (int u = 0; u < U; ++u)
        d.eta[idx3(j, r, u, J, U)] = rng_eta.cnormal(p.clutter_rcs[u]);
  Rng rng_noise(split_seed(seed, 3));
  for (auto& z : d.noise) z = rng_noise.cnormal(1.0);
  return d;
}

EchoTensor synthesize_echo(const Placement& p, const BistaticGeometry& geo,
                           const ChannelSet& channels,
                           const std::vector<cdouble>& x,
                           const std::vector<int>& kappa,
                           const ScenarioConfig& config, const EchoDraws& draws,
                           const EchoOptions& opts) {
  const int J = config.J, Q = config.Q, U = config.U, M = config.M,
            N_s = config.N_s, L = config.L;
  if (x.size() != static_cast<std::size_t>(J) * N_s * L * M)
    throw std::invalid_argument("synthesize_echo: x shape mismatch");
  if (static_cast<int>(kappa.size()) != J)
    throw std::invalid_argument("synthesize_echo: kappa length mismatch");

  EchoTensor out;
  out.rx_ids = rx_ids_from_kappa(kappa);
  const int R = static_cast<int>(out.rx_ids.size());
  if (R != config.R)
    throw std::invalid_argument("synthesize_echo: kappa receive count != R");
  out.R = R;
  out.N_s = N_s;
  out.L = L;
  out.M = M;
  const std::size_t total = static_cast<std::size_t>(R) * N_s * L * M;
  out.Y.assign(total, {0.0, 0.0});
  if (opts.keep_parts) {
    out.target_part.assign(total, {0.0, 0.0});
    out.clutter_part.assign(total, {0.0, 0.0});
    out.direct_part.assign(total, {0.0, 0.0});
    out.noise_part.assign(total, {0.0, 0.0});
  }

  std::vector<int> tx_ids;
  for (int j = 0; j < J; ++j)
    if (kappa[j]) tx_ids.push_back(j);

  // Transmit-side array projections a_t(theta)^T x_{j,i}[l], shared by all
  // receive APs. Computed once per (Tx, scatterer).
  const int n_tx = static_cast<int>(tx_ids.size());
  std::vector<cdouble> tgt_proj(static_cast<std::size_t>(n_tx) * Q * N_s * L);
  std::vector<cdouble> clu_proj(static_cast<std::size_t>(n_tx) * U * N_s * L);
#pragma omp parallel for schedule(static)
  for (int ti = 0; ti < n_tx; ++ti) {
    const int j = tx_ids[ti];
    for (int q = 0; q < Q; ++q) {
      const auto a_t = steering(geo.tgt_theta[idx2(j, q, Q)], M);
      for (int i = 0; i < N_s; ++i)
        for (int l = 0; l < L; ++l) {
          const cdouble* xv = x.data() + idx4(j, i, l, 0, N_s, L, M);
          cdouble acc{0.0, 0.0};
          for (int m = 0; m < M; ++m) acc += a_t[m] * xv[m];
          tgt_proj[idx4(ti, q, i, l, Q, N_s, L)] = acc;
        }
    }
    for (int u = 0; u < U; ++u) {
      const auto a_t = steering(geo.clu_theta[idx2(j, u, U)], M);
      for (int i = 0; i < N_s; ++i)
        for (int l = 0; l < L; ++l) {
          const cdouble* xv = x.data() + idx4(j, i, l, 0, N_s, L, M);
          cdouble acc{0.0, 0.0};
          for (int m = 0; m < M; ++m) acc += a_t[m] * xv[m];
          clu_proj[idx4(ti, u, i, l, U, N_s, L)] = acc;
        }
    }
  }

  const double df = config.delta_f();
  const double t_sym = config.t_sym();
  const double sigma_r = std::sqrt(config.sigma_r2);

#pragma omp parallel for collapse(2) schedule(static)
  for (int ri = 0; ri < R; ++ri) {
    for (int i = 0; i < N_s; ++i) {
      const int r = out.rx_ids[ri];
      for (int l = 0; l < L; ++l) {
        cdouble* y = out.Y.data() + idx4(ri, i, l, 0, N_s, L, M);
        cdouble* tp = opts.keep_parts
                          ? out.target_part.data() + idx4(ri, i, l, 0, N_s, L, M)
                          : nullptr;
        cdouble* cp = opts.keep_parts
                          ? out.clutter_part.data() + idx4(ri, i, l, 0, N_s, L, M)
                          : nullptr;
        cdouble* dp = opts.keep_parts
                          ? out.direct_part.data() + idx4(ri, i, l, 0, N_s, L, M)
                          : nullptr;
        cdouble* np = opts.keep_parts
                          ? out.noise_part.data() + idx4(ri, i, l, 0, N_s, L, M)
                          : nullptr;

        for (int ti = 0; ti < n_tx; ++ti) {
          const int j = tx_ids[ti];
          // Moving targets: delay ramp over subcarriers, Doppler ramp over
          // symbols, receive array response over antennas.
          for (int q = 0; q < Q; ++q) {
            const double d_rx = geo.tgt_dist[idx2(r, q, Q)];
            const double d_tx = geo.tgt_dist[idx2(j, q, Q)];
            const double pl = std::sqrt(
                path_loss(d_rx, p.alpha_tgt[idx2(r, q, Q)], config.f_c) *
                path_loss(d_tx, p.alpha_tgt[idx2(j, q, Q)], config.f_c));
            const cdouble coef =
                draws.beta[idx3(j, r, q, J, Q)] * pl *
                std::polar(1.0, -2.0 * kPi * i * df * (d_rx + d_tx) / kSpeedOfLight) *
                std::polar(1.0, 2.0 * kPi * l * t_sym * geo.doppler(j, r, q)) *
                tgt_proj[idx4(ti, q, i, l, Q, N_s, L)];
            const double theta_r = geo.tgt_theta[idx2(r, q, Q)];
            for (int m = 0; m < M; ++m) {
              const cdouble val = coef * std::polar(1.0, kPi * m * std::sin(theta_r));
              y[m] += val;
              if (tp) tp[m] += val;
            }
          }
          // Static clutter: same structure with zero Doppler.
          for (int u = 0; u < U; ++u) {
            const double d_rx = geo.clu_dist[idx2(r, u, U)];
            const double d_tx = geo.clu_dist[idx2(j, u, U)];
            const double pl = std::sqrt(
                path_loss(d_rx, p.alpha_clu[idx2(r, u, U)], config.f_c) *
                path_loss(d_tx, p.alpha_clu[idx2(j, u, U)], config.f_c));
            const cdouble coef =
                draws.eta[idx3(j, r, u, J, U)] * pl *
                std::polar(1.0, -2.0 * kPi * i * df * (d_rx + d_tx) / kSpeedOfLight) *
                clu_proj[idx4(ti, u, i, l, U, N_s, L)];
            const double theta_r = geo.clu_theta[idx2(r, u, U)];
            for (int m = 0; m < M; ++m) {
              const cdouble val = coef * std::polar(1.0, kPi * m * std::sin(theta_r));
              y[m] += val;
              if (cp) cp[m] += val;
            }
          }
          // Direct AP-to-AP leakage through the LoS matrix G.
          if (opts.direct_path) {
            const double d_jr = channels.ap_ap_dist[idx2(j, r, J)];
            const double amp =
                std::sqrt(path_loss(d_jr, p.alpha_ap[idx2(j, r, J)], config.f_c));
            const cdouble phase =
                std::polar(1.0, -2.0 * kPi * i * df * d_jr / kSpeedOfLight);
            const cdouble* G = channels.G_at(j, r);
            const cdouble* xv = x.data() + idx4(j, i, l, 0, N_s, L, M);
            for (int m = 0; m < M; ++m) {
              cdouble gx{0.0, 0.0};
              for (int mm = 0; mm < M; ++mm) gx += G[idx2(m, mm, M)] * xv[mm];
              const cdouble val = amp * phase * gx;
              y[m] += val;
              if (dp) dp[m] += val;
            }
          }
        }
        // Receiver noise.
        for (int m = 0; m < M; ++m) {
          const cdouble val =
              sigma_r * draws.noise[idx4(ri, i, l, m, N_s, L, M)];
          y[m] += val;
          if (np) np[m] += val;
        }
      }
    }
  }
  return out;
}

EchoTensor synthesize_echo(const Placement& p, const BistaticGeometry& geo,
                           const ChannelSet& channels,
                           const std::vector<cdouble>& x,
                           const std::vector<int>& kappa,
                           const ScenarioConfig& config, std::uint64_t seed,
                           const EchoOptions& opts) {
  return synthesize_echo(p, geo, channels, x, kappa, config,
                         make_echo_draws(config, p, seed), opts);
}

}  // namespace cfisac
