#include "cfisac/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfisac/rng.hpp"

namespace cfisac {

double path_loss(double d, double alpha, double f_c) {
  if (d <= 0.0) throw std::domain_error("path_loss: distance must be positive");
  const double lambda = kSpeedOfLight / f_c;
  const double fs = lambda / (4.0 * kPi);  // free-space amplitude scale at 1 m
  return fs * fs * std::pow(d, -alpha);
}

std::vector<cdouble> steering(double theta, int M) {
  std::vector<cdouble> a(M);
  const double step = kPi * std::sin(theta);
  for (int n = 0; n < M; ++n) a[n] = std::polar(1.0, step * n);
  return a;
}

double broadside_angle(const Vec2& origin, const Vec2& target) {
  const Vec2 u = target - origin;
  const double d = u.norm();
  if (d <= 0.0)
    throw std::domain_error("broadside_angle: coincident points");
  // Arrays lie along x, broadside along y: sin(theta) = u_x / |u|.
  return std::asin(std::clamp(u.x / d, -1.0, 1.0));
}

ChannelSet build_channels(const Placement& p, const ScenarioConfig& config,
                          std::uint64_t seed) {
  const int J = config.J, K = config.K, M = config.M, N_s = config.N_s;
  ChannelSet cs;
  cs.J = J;
  cs.N_s = N_s;
  cs.K = K;
  cs.M = M;
  cs.h.assign(static_cast<std::size_t>(J) * N_s * K * M, {0.0, 0.0});
  cs.G.assign(static_cast<std::size_t>(J) * J * M * M, {0.0, 0.0});
  cs.ap_ap_dist.assign(static_cast<std::size_t>(J) * J, 0.0);

  // Scalar fading gains first so that they are independent of loop order.
  std::vector<cdouble> gains(static_cast<std::size_t>(J) * K);
  {
    Rng rng(split_seed(seed, 0x636861)); // dedicated fading stream
    for (auto& g : gains) g = rng.cnormal(1.0);
  }

  const double df = config.delta_f();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < K; ++k) {
      const double d = distance(p.ap_pos[j], p.cu_pos[k]);
      const double alpha = p.alpha_cu[idx2(j, k, K)];
      const double amp = std::sqrt(path_loss(d, alpha, config.f_c));
      const auto a = steering(broadside_angle(p.ap_pos[j], p.cu_pos[k]), M);
      const cdouble g = gains[idx2(j, k, K)];
      for (int i = 0; i < N_s; ++i) {
        const cdouble ramp = std::polar(1.0, -2.0 * kPi * i * df * d / kSpeedOfLight);
        const cdouble scale = amp * ramp * g;
        cdouble* dst = cs.h.data() + idx4(j, i, k, 0, N_s, K, M);
        for (int m = 0; m < M; ++m) dst[m] = scale * a[m];
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (int j = 0; j < J; ++j) {
    for (int r = 0; r < J; ++r) {
      if (r == j) continue;
      const double d = distance(p.ap_pos[j], p.ap_pos[r]);
      cs.ap_ap_dist[idx2(j, r, J)] = d;
      const auto a_rx = steering(broadside_angle(p.ap_pos[r], p.ap_pos[j]), M);
      const auto a_tx = steering(broadside_angle(p.ap_pos[j], p.ap_pos[r]), M);
      cdouble* blk = cs.G.data() + idx4(j, r, 0, 0, J, M, M);
      for (int n = 0; n < M; ++n)
        for (int m = 0; m < M; ++m) blk[idx2(n, m, M)] = a_rx[n] * a_tx[m];
    }
  }
  return cs;
}

BistaticGeometry bistatic_geometry(const Placement& p, const ScenarioConfig& config) {
  const int J = config.J, Q = config.Q, U = config.U;
  BistaticGeometry g;
  g.J = J;
  g.Q = Q;
  g.U = U;
  g.tgt_dist.assign(static_cast<std::size_t>(J) * Q, 0.0);
  g.tgt_theta.assign(static_cast<std::size_t>(J) * Q, 0.0);
  g.f_d.assign(static_cast<std::size_t>(J) * J * Q, 0.0);
  g.clu_dist.assign(static_cast<std::size_t>(J) * U, 0.0);
  g.clu_theta.assign(static_cast<std::size_t>(J) * U, 0.0);

  const double lambda = config.lambda_c();
  for (int j = 0; j < J; ++j) {
    for (int q = 0; q < Q; ++q) {
      const double d = distance(p.ap_pos[j], p.tgt_pos[q]);
      if (d <= 0.0)
        throw std::domain_error("bistatic_geometry: target colocated with AP");
      g.tgt_dist[idx2(j, q, Q)] = d;
      g.tgt_theta[idx2(j, q, Q)] = broadside_angle(p.ap_pos[j], p.tgt_pos[q]);
    }
    for (int u = 0; u < U; ++u) {
      const double d = distance(p.ap_pos[j], p.clutter_pos[u]);
      if (d <= 0.0)
        throw std::domain_error("bistatic_geometry: clutter colocated with AP");
      g.clu_dist[idx2(j, u, U)] = d;
      g.clu_theta[idx2(j, u, U)] = broadside_angle(p.ap_pos[j], p.clutter_pos[u]);
    }
  }

  // Doppler from the projection of target velocity onto the unit vectors
  // pointing from target to each end of the bistatic pair. An approaching
  // target shortens the path, giving positive f_d.
  for (int tx = 0; tx < J; ++tx) {
    for (int rx = 0; rx < J; ++rx) {
      for (int q = 0; q < Q; ++q) {
        const Vec2 to_tx = p.ap_pos[tx] - p.tgt_pos[q];
        const Vec2 to_rx = p.ap_pos[rx] - p.tgt_pos[q];
        const Vec2 u_tx = to_tx * (1.0 / to_tx.norm());
        const Vec2 u_rx = to_rx * (1.0 / to_rx.norm());
        g.f_d[idx3(tx, rx, q, J, Q)] =
            (p.tgt_vel[q].dot(u_tx) + p.tgt_vel[q].dot(u_rx)) / lambda;
      }
    }
  }
  return g;
}

}  // namespace cfisac
