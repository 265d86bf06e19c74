#include "cfisac/classical_est.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include "cfisac/waveform.hpp"

namespace cfisac {

namespace {

// FFTW plan creation/destruction is not thread-safe; executions are.
std::mutex g_fftw_mutex;

constexpr double kTinyPower = 1e-300;

inline double sq(double v) { return v * v; }

}  // namespace

std::vector<cdouble> matched_filter(const EchoTensor& echo, int rx_row,
                                    const std::vector<cdouble>& s_r, int t,
                                    const std::vector<cdouble>& W, int tx_ap,
                                    const ScenarioConfig& config) {
  const int N_s = config.N_s, L = config.L, M = config.M;
  const int cols = M + config.K;
  if (rx_row < 0 || rx_row >= echo.R)
    throw std::invalid_argument("matched_filter: rx_row out of range");
  if (t < 0 || t >= config.T)
    throw std::invalid_argument("matched_filter: sequence index out of range");

  std::vector<cdouble> cube(static_cast<std::size_t>(N_s) * L * M);
  for (int i = 0; i < N_s; ++i) {
    const cdouble* Wji = W.data() + idx4(tx_ap, i, 0, 0, N_s, M, cols);
    for (int l = 0; l < L; ++l) {
      // Emitted radar reference summed over antenna streams:
      //   ref(i,l) = sum_n sum_s W_r[n,s] s_r[t,s,i,l].
      cdouble ref{0.0, 0.0};
      for (int s = 0; s < M; ++s) {
        cdouble col_sum{0.0, 0.0};
        for (int n = 0; n < M; ++n) col_sum += Wji[idx2(n, s, cols)];
        ref += col_sum * s_r[idx4(t, s, i, l, M, N_s, L)];
      }
      const cdouble cref = std::conj(ref);
      const cdouble* y = echo.at(rx_row, i, l);
      cdouble* out = cube.data() + idx3(i, l, 0, L, M);
      for (int m = 0; m < M; ++m) out[m] = y[m] * cref;
    }
  }
  return cube;
}

std::vector<CoarsePeak> fft3_peaks(const std::vector<cdouble>& cube, int N_s,
                                   int L, int M, int Q) {
  if (cube.size() != static_cast<std::size_t>(N_s) * L * M)
    throw std::invalid_argument("fft3_peaks: cube shape mismatch");
  if (Q <= 0) return {};

  std::vector<cdouble> spec(cube.size());
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_plan plan = fftw_plan_dft_3d(
        N_s, L, M,
        reinterpret_cast<fftw_complex*>(const_cast<cdouble*>(cube.data())),
        reinterpret_cast<fftw_complex*>(spec.data()), FFTW_BACKWARD,
        FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  std::vector<double> power(spec.size());
  for (std::size_t n = 0; n < spec.size(); ++n) power[n] = std::norm(spec[n]);
  std::vector<double> sorted = power;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                   sorted.end());
  const double floor = sorted[sorted.size() / 2];

  std::vector<CoarsePeak> peaks;
  for (int found = 0; found < Q; ++found) {
    const auto it = std::max_element(power.begin(), power.end());
    if (*it <= 0.0) break;
    const int flat = static_cast<int>(it - power.begin());
    CoarsePeak pk;
    pk.range_bin = flat / (L * M);
    pk.doppler_bin = (flat / M) % L;
    pk.angle_bin = flat % M;
    pk.power = *it;
    pk.floor = floor;
    peaks.push_back(pk);
    // Knock out the peak and its 1-bin guard neighborhood (cyclic).
    for (int di = -1; di <= 1; ++di)
      for (int dl = -1; dl <= 1; ++dl)
        for (int dm = -1; dm <= 1; ++dm) {
          const int i = (pk.range_bin + di + N_s) % N_s;
          const int l = (pk.doppler_bin + dl + L) % L;
          const int m = (pk.angle_bin + dm + M) % M;
          power[idx3(i, l, m, L, M)] = 0.0;
        }
  }
  return peaks;
}

PairMeasurement refine(const std::vector<cdouble>& cube, const CoarsePeak& peak,
                       const ScenarioConfig& config) {
  const int N_s = config.N_s, L = config.L, M = config.M;
  if (cube.size() != static_cast<std::size_t>(N_s) * L * M)
    throw std::invalid_argument("refine: cube shape mismatch");
  const double df = config.delta_f();
  const double t_sym = config.t_sym();
  const double period = kSpeedOfLight / df;

  // Coarse starting point from the bin indices.
  double rho = peak.range_bin * kSpeedOfLight / (N_s * df);
  double f_d = L > 1 ? -wrap_pm(peak.doppler_bin, L) / (L * t_sym) : 0.0;
  double sin_th =
      M > 1 ? std::clamp(-2.0 * wrap_pm(peak.angle_bin, M) / M, -1.0, 1.0)
            : 0.0;

  // The subcarrier lag stride: multiples of M cancel the matched filter's
  // residue-periodic amplitude pattern (exact when N_s % M == 0).
  const int stride = (N_s > M) ? M : 1;
  const double sub_period = kSpeedOfLight / (stride * df);

  std::vector<cdouble> g(std::max({N_s, L, M}));
  for (int pass = 0; pass < 6; ++pass) {
    // Delay: collapse symbols/antennas with current Doppler/angle removed,
    // then read the phase slope across subcarriers at the chosen stride.
    if (N_s > stride) {
      for (int i = 0; i < N_s; ++i) {
        cdouble acc{0.0, 0.0};
        for (int l = 0; l < L; ++l) {
          const cdouble dop = std::polar(1.0, -2.0 * kPi * l * t_sym * f_d);
          const cdouble* row = cube.data() + idx3(i, l, 0, L, M);
          cdouble inner{0.0, 0.0};
          for (int m = 0; m < M; ++m)
            inner += row[m] * std::polar(1.0, -kPi * m * sin_th);
          acc += inner * dop;
        }
        g[i] = acc;
      }
      cdouble z{0.0, 0.0};
      for (int i = 0; i + stride < N_s; ++i) z += g[i + stride] * std::conj(g[i]);
      if (std::abs(z) > 0.0) {
        const double rho_arg =
            -std::arg(z) * kSpeedOfLight / (2.0 * kPi * stride * df);
        rho = rho_arg + sub_period * std::round((rho - rho_arg) / sub_period);
      }
    }
    // Doppler across symbols.
    if (L > 1) {
      for (int l = 0; l < L; ++l) {
        cdouble acc{0.0, 0.0};
        for (int i = 0; i < N_s; ++i) {
          const cdouble del =
              std::polar(1.0, 2.0 * kPi * i * df * rho / kSpeedOfLight);
          const cdouble* row = cube.data() + idx3(i, l, 0, L, M);
          cdouble inner{0.0, 0.0};
          for (int m = 0; m < M; ++m)
            inner += row[m] * std::polar(1.0, -kPi * m * sin_th);
          acc += inner * del;
        }
        g[l] = acc;
      }
      cdouble z{0.0, 0.0};
      for (int l = 0; l + 1 < L; ++l) z += g[l + 1] * std::conj(g[l]);
      if (std::abs(z) > 0.0) f_d = std::arg(z) / (2.0 * kPi * t_sym);
    }
    // Angle across antennas.
    if (M > 1) {
      for (int m = 0; m < M; ++m) {
        cdouble acc{0.0, 0.0};
        for (int i = 0; i < N_s; ++i) {
          const cdouble del =
              std::polar(1.0, 2.0 * kPi * i * df * rho / kSpeedOfLight);
          for (int l = 0; l < L; ++l)
            acc += cube[idx3(i, l, m, L, M)] * del *
                   std::polar(1.0, -2.0 * kPi * l * t_sym * f_d);
        }
        g[m] = acc;
      }
      cdouble z{0.0, 0.0};
      for (int m = 0; m + 1 < M; ++m) z += g[m + 1] * std::conj(g[m]);
      if (std::abs(z) > 0.0) sin_th = std::clamp(std::arg(z) / kPi, -1.0, 1.0);
    }
  }

  PairMeasurement out;
  out.rho = wrap_nonneg(rho, period);
  out.f_d = f_d;
  out.theta_rx = std::asin(sin_th);
  out.snr_proxy = peak.power / std::max(peak.floor, kTinyPower);
  return out;
}

void subtract_direct_path(EchoTensor& echo, const Placement& p,
                          const ChannelSet& channels,
                          const std::vector<cdouble>& x,
                          const std::vector<int>& kappa,
                          const ScenarioConfig& config) {
  // Reconstruct only the AP-to-AP term: zero reflection draws make the
  // target/clutter sums vanish, and parking the scatterers far away keeps
  // the geometry evaluation well defined without using their true
  // positions.
  Placement sanitized = p;
  const double far = 2.0 * std::max(std::abs(config.coord_min),
                                    std::abs(config.coord_max)) + 1e4;
  for (auto& t : sanitized.tgt_pos) t = {far, far};
  for (auto& v : sanitized.tgt_vel) v = {0.0, 0.0};
  for (auto& c : sanitized.clutter_pos) c = {far, -far};
  const BistaticGeometry geo = bistatic_geometry(sanitized, config);

  EchoDraws zero;
  zero.beta.assign(static_cast<std::size_t>(config.J) * config.J * config.Q,
                   {0.0, 0.0});
  zero.eta.assign(static_cast<std::size_t>(config.J) * config.J * config.U,
                  {0.0, 0.0});
  zero.noise.assign(static_cast<std::size_t>(config.R) * config.N_s * config.L *
                        config.M,
                    {0.0, 0.0});
  EchoOptions opts;
  opts.direct_path = true;
  const EchoTensor direct =
      synthesize_echo(sanitized, geo, channels, x, kappa, config, zero, opts);
  for (std::size_t n = 0; n < echo.Y.size(); ++n) echo.Y[n] -= direct.Y[n];
}

namespace {

struct MeasView {
  int idx = -1;
  double rho = 0.0, f_d = 0.0, sin_th = 0.0, snr = 0.0;
  int tx = -1, rx = -1;
  bool has_angle = false;
};

double resid2(const Vec2& pos, const MeasView& v,
              const std::vector<Vec2>& ap_pos, const FusionOptions& o) {
  const double d_tx = distance(pos, ap_pos[v.tx]);
  const double d_rx = distance(pos, ap_pos[v.rx]);
  if (d_tx <= 0.0 || d_rx <= 0.0) return std::numeric_limits<double>::infinity();
  const double raw = d_tx + d_rx - v.rho;
  const double dr = o.rho_period > 0.0 ? wrap_pm(raw, o.rho_period) : raw;
  double r = sq(dr / o.sigma_rho);
  if (v.has_angle) {
    const double s_pred = (pos.x - ap_pos[v.rx].x) / d_rx;
    r += sq((s_pred - v.sin_th) / o.sigma_sin);
  }
  return r;
}

double robust_score(const Vec2& pos, const std::vector<MeasView>& views,
                    const std::vector<Vec2>& ap_pos, const FusionOptions& o) {
  double s = 0.0;
  for (const auto& v : views) s += std::min(resid2(pos, v, ap_pos, o), o.gate);
  return s;
}

bool inside_box(const Vec2& p, const FusionOptions& o) {
  return p.x >= o.box_min.x - o.box_margin && p.x <= o.box_max.x + o.box_margin &&
         p.y >= o.box_min.y - o.box_margin && p.y <= o.box_max.y + o.box_margin;
}

// Closed-form intersection of the bistatic ellipse (range sum rho_tot) with
// the receive ray p_rx + s*dir: s = (rho^2 - |w|^2) / (2 (rho + w.dir)),
// w = p_rx - p_tx. Front/back array ambiguity and range wraps are
// enumerated by the caller.
bool ellipse_ray_point(const Vec2& p_tx, const Vec2& p_rx, double rho_tot,
                       const Vec2& dir, Vec2* out) {
  const Vec2 w = p_rx - p_tx;
  const double denom = 2.0 * (rho_tot + w.dot(dir));
  if (std::abs(denom) < 1e-12) return false;
  const double s = (rho_tot * rho_tot - w.dot(w)) / denom;
  if (s < 1e-9 || rho_tot - s < 1e-9) return false;
  *out = p_rx + dir * s;
  return true;
}

struct Candidate {
  Vec2 pos{0.0, 0.0};
  double score = std::numeric_limits<double>::infinity();
  bool valid = false;
};

Candidate best_seed_candidate(const MeasView& seed,
                              const std::vector<MeasView>& views,
                              const std::vector<Vec2>& ap_pos,
                              const FusionOptions& o) {
  Candidate best;
  const Vec2& p_tx = ap_pos[seed.tx];
  const Vec2& p_rx = ap_pos[seed.rx];
  const double cos_th = std::sqrt(std::max(0.0, 1.0 - sq(seed.sin_th)));
  int k_max = 0;
  if (o.rho_period > 0.0) {
    const double span = std::hypot(o.box_max.x - o.box_min.x,
                                   o.box_max.y - o.box_min.y);
    const double max_rho = 2.0 * span + 2.0 * o.rho_period;
    k_max = std::min(200, static_cast<int>(max_rho / o.rho_period) + 1);
  }
  for (int k = 0; k <= k_max; ++k) {
    const double rho_tot = seed.rho + k * o.rho_period;
    for (double side : {1.0, -1.0}) {
      const Vec2 dir{seed.sin_th, side * cos_th};
      Vec2 pos;
      if (!ellipse_ray_point(p_tx, p_rx, rho_tot, dir, &pos)) continue;
      if (!inside_box(pos, o)) continue;
      const double s = robust_score(pos, views, ap_pos, o);
      if (s < best.score) {
        best.score = s;
        best.pos = pos;
        best.valid = true;
      }
    }
  }
  return best;
}

// Gauss-Newton with backtracking on the cluster's stacked residuals. The
// returned position never has a larger residual norm than the start.
Vec2 gauss_newton(Vec2 pos, const std::vector<int>& members,
                  const std::vector<MeasView>& views,
                  const std::vector<Vec2>& ap_pos, const FusionOptions& o) {
  auto total = [&](const Vec2& p) {
    double s = 0.0;
    for (int n : members) s += resid2(p, views[n], ap_pos, o);
    return s;
  };
  double cur = total(pos);
  for (int it = 0; it < o.max_iters; ++it) {
    Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
    for (int n : members) {
      const MeasView& v = views[n];
      const double d_tx = distance(pos, ap_pos[v.tx]);
      const double d_rx = distance(pos, ap_pos[v.rx]);
      if (d_tx <= 1e-9 || d_rx <= 1e-9) continue;
      const Vec2 u_tx = (pos - ap_pos[v.tx]) * (1.0 / d_tx);
      const Vec2 u_rx = (pos - ap_pos[v.rx]) * (1.0 / d_rx);
      const double raw = d_tx + d_rx - v.rho;
      const double dr =
          (o.rho_period > 0.0 ? wrap_pm(raw, o.rho_period) : raw) / o.sigma_rho;
      Eigen::Vector2d jr{(u_tx.x + u_rx.x) / o.sigma_rho,
                         (u_tx.y + u_rx.y) / o.sigma_rho};
      JtJ += jr * jr.transpose();
      Jtr += jr * dr;
      if (v.has_angle) {
        const double s_pred = u_rx.x;
        const double ds = (s_pred - v.sin_th) / o.sigma_sin;
        Eigen::Vector2d js{(1.0 - u_rx.x * u_rx.x) / (d_rx * o.sigma_sin),
                           (-u_rx.x * u_rx.y) / (d_rx * o.sigma_sin)};
        JtJ += js * js.transpose();
        Jtr += js * ds;
      }
    }
    JtJ += 1e-12 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d step = JtJ.ldlt().solve(-Jtr);
    if (!step.allFinite()) break;
    double scale = 1.0;
    Vec2 next = pos;
    double next_cost = cur;
    bool improved = false;
    for (int bt = 0; bt < 30; ++bt) {
      const Vec2 trial{pos.x + scale * step(0), pos.y + scale * step(1)};
      const double c = total(trial);
      if (c < cur) {
        next = trial;
        next_cost = c;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
    const double moved = std::hypot(next.x - pos.x, next.y - pos.y);
    pos = next;
    cur = next_cost;
    if (moved < 1e-10) break;
  }
  return pos;
}

}  // namespace

std::vector<Vec2> fuse_position(const std::vector<PairMeasurement>& meas,
                                const std::vector<Vec2>& ap_pos, int Q,
                                const FusionOptions& opts,
                                std::vector<std::vector<int>>* assignment) {
  std::vector<MeasView> views;
  views.reserve(meas.size());
  for (std::size_t n = 0; n < meas.size(); ++n) {
    const auto& m = meas[n];
    if (m.tx_idx < 0 || m.rx_idx < 0 ||
        m.tx_idx >= static_cast<int>(ap_pos.size()) ||
        m.rx_idx >= static_cast<int>(ap_pos.size()))
      throw std::invalid_argument("fuse_position: AP index out of range");
    MeasView v;
    v.idx = static_cast<int>(n);
    v.rho = m.rho;
    v.f_d = m.f_d;
    v.snr = m.snr_proxy;
    v.tx = m.tx_idx;
    v.rx = m.rx_idx;
    v.has_angle = std::isfinite(m.theta_rx);
    v.sin_th = v.has_angle ? std::sin(m.theta_rx) : 0.0;
    views.push_back(v);
  }

  int n_angle = 0, n_range_only = 0;
  for (const auto& v : views) (v.has_angle ? n_angle : n_range_only)++;
  if (n_angle == 0 && n_range_only < 3)
    throw UnderdeterminedError(
        "fuse_position: need one angle-bearing measurement or three "
        "range-only measurements");

  std::vector<Vec2> positions;
  std::vector<std::vector<int>> members;
  std::vector<char> used(views.size(), 0);

  while (static_cast<int>(positions.size()) < Q) {
    // Seed from the strongest unused angle-bearing measurement.
    int seed = -1;
    for (std::size_t n = 0; n < views.size(); ++n)
      if (!used[n] && views[n].has_angle &&
          (seed < 0 || views[n].snr > views[seed].snr))
        seed = static_cast<int>(n);
    if (seed < 0) break;
    used[seed] = 1;
    const Candidate cand = best_seed_candidate(views[seed], views, ap_pos, opts);
    if (!cand.valid) continue;

    std::vector<int> cluster{seed};
    for (std::size_t n = 0; n < views.size(); ++n)
      if (!used[n] && resid2(cand.pos, views[n], ap_pos, opts) <= opts.gate) {
        used[n] = 1;
        cluster.push_back(static_cast<int>(n));
      }
    positions.push_back(gauss_newton(cand.pos, cluster, views, ap_pos, opts));
    members.push_back(std::move(cluster));
  }

  // All-range-only fallback: one cluster solved from a coarse grid.
  if (positions.empty()) {
    if (n_range_only < 3)
      throw UnderdeterminedError("fuse_position: no solvable cluster");
    std::vector<int> all(views.size());
    std::iota(all.begin(), all.end(), 0);
    Vec2 best{0.0, 0.0};
    double best_score = std::numeric_limits<double>::infinity();
    const int steps = 64;
    for (int gx = 0; gx <= steps; ++gx)
      for (int gy = 0; gy <= steps; ++gy) {
        const Vec2 p{
            opts.box_min.x + (opts.box_max.x - opts.box_min.x) * gx / steps,
            opts.box_min.y + (opts.box_max.y - opts.box_min.y) * gy / steps};
        double s = 0.0;
        for (const auto& v : views) s += resid2(p, v, ap_pos, opts);
        if (s < best_score) {
          best_score = s;
          best = p;
        }
      }
    positions.push_back(gauss_newton(best, all, views, ap_pos, opts));
    members.push_back(std::move(all));
  }

  if (assignment) {
    assignment->clear();
    for (auto& c : members) {
      std::sort(c.begin(), c.end());
      assignment->push_back(c);
    }
  }
  return positions;
}

std::vector<Vec2> fuse_velocity(const std::vector<Vec2>& p_hat,
                                const std::vector<PairMeasurement>& meas,
                                const std::vector<std::vector<int>>& assignment,
                                const std::vector<Vec2>& ap_pos, double lambda_c,
                                VelocityMode mode) {
  if (p_hat.size() != assignment.size())
    throw std::invalid_argument("fuse_velocity: assignment count mismatch");
  std::vector<Vec2> v_hat;
  v_hat.reserve(p_hat.size());
  for (std::size_t q = 0; q < p_hat.size(); ++q) {
    const Vec2& pos = p_hat[q];
    std::vector<Eigen::Vector2d> rows;
    std::vector<double> rhs;
    for (int n : assignment[q]) {
      const auto& m = meas[n];
      const double d_tx = distance(pos, ap_pos[m.tx_idx]);
      const double d_rx = distance(pos, ap_pos[m.rx_idx]);
      if (d_tx <= 1e-9 || d_rx <= 1e-9) continue;
      // Doppler convention: unit vectors point from the target toward the
      // APs, so approaching targets give positive shifts.
      const Vec2 u_tx = (ap_pos[m.tx_idx] - pos) * (1.0 / d_tx);
      const Vec2 u_rx = (ap_pos[m.rx_idx] - pos) * (1.0 / d_rx);
      rows.emplace_back((u_tx.x + u_rx.x) / lambda_c,
                        (u_tx.y + u_rx.y) / lambda_c);
      rhs.push_back(m.f_d);
    }
    const int n_rows = static_cast<int>(rows.size());
    if (mode == VelocityMode::kStrict && n_rows < 2)
      throw UnderdeterminedError(
          "fuse_velocity: fewer Doppler equations than unknowns");
    if (n_rows == 0) {
      v_hat.push_back({0.0, 0.0});
      continue;
    }
    Eigen::MatrixXd A(n_rows, 2);
    Eigen::VectorXd b(n_rows);
    for (int n = 0; n < n_rows; ++n) {
      A.row(n) = rows[n].transpose();
      b(n) = rhs[n];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double rank_tol = 1e-9 * sv(0);
    if (mode == VelocityMode::kStrict && (sv.size() < 2 || sv(1) <= rank_tol))
      throw UnderdeterminedError(
          "fuse_velocity: Doppler geometry is rank deficient");
    svd.setThreshold(1e-9);
    const Eigen::Vector2d v = svd.solve(b);
    v_hat.push_back({v(0), v(1)});
  }
  return v_hat;
}

EstimateSet score_estimates(const std::vector<Vec2>& p_true,
                            const std::vector<Vec2>& v_true,
                            const std::vector<Vec2>& p_hat,
                            const std::vector<Vec2>& v_hat) {
  const std::size_t Q = p_true.size();
  if (v_true.size() != Q || p_hat.size() != Q || v_hat.size() != Q)
    throw std::invalid_argument("score_estimates: size mismatch");
  if (Q > 6)
    throw std::invalid_argument(
        "score_estimates: exact matching limited to 6 targets");
  EstimateSet out;
  out.p_hat = p_hat;
  out.v_hat = v_hat;
  if (Q == 0) return out;

  std::vector<int> perm(Q), best(Q);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
      const Vec2 d = p_true[q] - p_hat[perm[q]];
      c += d.dot(d);
    }
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  double pe = 0.0, ve = 0.0;
  for (std::size_t q = 0; q < Q; ++q) {
    const Vec2 dp = p_true[q] - p_hat[best[q]];
    const Vec2 dv = v_true[q] - v_hat[best[q]];
    pe += dp.dot(dp);
    ve += dv.dot(dv);
  }
  out.rmse_p = std::sqrt(pe / Q);
  out.rmse_v = std::sqrt(ve / Q);
  return out;
}

namespace {

// The antenna streams of one radar sequence are cyclic shifts of each other,
// so advancing the delay by c/(M delta_f) is exactly equivalent to permuting
// the streams: the (subcarrier, symbol) structure alone cannot tell the true
// range from ghosts offset by multiples of that sub-period, and a ghost can
// out-power the true peak when the Tx steering sum is unlucky. The recovered
// per-stream amplitudes break the tie. With the scaled-identity radar blocks
// of the reference transmitter they follow the Tx steering vector, a pure
// linear phase across streams; ghost branches permute the vector and flip the
// sign of the wrapped entries, which destroys that linearity. Score every
// branch by how well its stream amplitudes fit a single linear phase and keep
// the best one.
void resolve_range_branch(const EchoTensor& echo, int rx_row,
                          const std::vector<cdouble>& s_r, int t,
                          PairMeasurement& m, const ScenarioConfig& config) {
  const int M = config.M, N_s = config.N_s, L = config.L;
  if (M < 3 || !std::isfinite(m.theta_rx)) return;  // statistic needs >= 2 lags
  const double df = config.delta_f();
  const double period = kSpeedOfLight / df;
  const double sub_period = period / M;
  const double base = wrap_nonneg(m.rho, sub_period);
  const auto a_r = steering(m.theta_rx, M);
  const double t_sym = config.t_sym();

  // Collapse receive antennas and symbols first; neither depends on the
  // branch under test.
  std::vector<cdouble> z(static_cast<std::size_t>(N_s) * L);
  for (int i = 0; i < N_s; ++i)
    for (int l = 0; l < L; ++l) {
      cdouble acc{0.0, 0.0};
      for (int mm = 0; mm < M; ++mm)
        acc += echo.Y[idx4(rx_row, i, l, mm, N_s, L, M)] * std::conj(a_r[mm]);
      z[idx2(i, l, L)] =
          acc * std::polar(1.0, -2.0 * kPi * l * t_sym * m.f_d);
    }
  std::vector<cdouble> c_si(static_cast<std::size_t>(M) * N_s);
  for (int s = 0; s < M; ++s)
    for (int i = 0; i < N_s; ++i) {
      cdouble acc{0.0, 0.0};
      for (int l = 0; l < L; ++l)
        acc += z[idx2(i, l, L)] *
               std::conj(s_r[idx4(t, s, i, l, M, N_s, L)]);
      c_si[idx2(s, i, N_s)] = acc;
    }

  double best_score = -1.0, best_rho = m.rho;
  for (int k = 0; base + k * sub_period < period; ++k) {
    const double rho_k = base + k * sub_period;
    std::vector<cdouble> g(M);
    for (int s = 0; s < M; ++s) {
      cdouble acc{0.0, 0.0};
      for (int i = 0; i < N_s; ++i)
        acc += c_si[idx2(s, i, N_s)] *
               std::polar(1.0, 2.0 * kPi * i * df * rho_k / kSpeedOfLight);
      g[s] = acc;
    }
    cdouble slope{0.0, 0.0};
    for (int s = 0; s + 1 < M; ++s) slope += g[s + 1] * std::conj(g[s]);
    const double sin_hat = std::arg(slope) / kPi;
    cdouble beam{0.0, 0.0};
    double power = 0.0;
    for (int s = 0; s < M; ++s) {
      beam += g[s] * std::polar(1.0, -kPi * s * sin_hat);
      power += std::norm(g[s]);
    }
    if (power <= 0.0) continue;
    const double score = std::norm(beam) / (M * power);
    if (score > best_score) {
      best_score = score;
      best_rho = rho_k;
    }
  }
  if (best_score >= 0.0) m.rho = best_rho;
}

}  // namespace

ClassicalResult classical_estimate(const EchoTensor& echo, const Placement& p,
                                   const ChannelSet& channels,
                                   const std::vector<cdouble>& s_r,
                                   const std::vector<cdouble>& W,
                                   const std::vector<cdouble>& x,
                                   const std::vector<int>& kappa,
                                   const ScenarioConfig& config,
                                   const ClassicalOptions& opts) {
  EchoTensor work = echo;
  if (opts.subtract_direct)
    subtract_direct_path(work, p, channels, x, kappa, config);

  const auto ranks = tx_ranks(kappa);
  const int per_pair = opts.peaks_per_pair > 0 ? opts.peaks_per_pair
                                               : config.Q + 2;
  ClassicalResult result;
  for (int ri = 0; ri < work.R; ++ri) {
    const int rx_ap = work.rx_ids[ri];
    for (int j = 0; j < config.J; ++j) {
      if (!kappa[j]) continue;
      const auto cube = matched_filter(work, ri, s_r, ranks[j], W, j, config);
      const auto peaks =
          fft3_peaks(cube, config.N_s, config.L, config.M, per_pair);
      for (const auto& pk : peaks) {
        PairMeasurement m = refine(cube, pk, config);
        m.tx_idx = j;
        m.rx_idx = rx_ap;
        resolve_range_branch(work, ri, s_r, ranks[j], m, config);
        result.measurements.push_back(m);
      }
    }
  }

  FusionOptions fopts = opts.fusion;
  fopts.rho_period = kSpeedOfLight / config.delta_f();
  fopts.box_min = {config.coord_min, config.coord_min};
  fopts.box_max = {config.coord_max, config.coord_max};
  result.p_hat = fuse_position(result.measurements, p.ap_pos, config.Q, fopts,
                               &result.support);
  result.v_hat = fuse_velocity(result.p_hat, result.measurements,
                               result.support, p.ap_pos, config.lambda_c(),
                               opts.velocity);

  const Vec2 center{(config.coord_min + config.coord_max) / 2.0,
                    (config.coord_min + config.coord_max) / 2.0};
  while (static_cast<int>(result.p_hat.size()) < config.Q) {
    result.p_hat.push_back(center);
    result.v_hat.push_back({0.0, 0.0});
    result.support.emplace_back();
  }
  return result;
}

}  // namespace cfisac
