#include "cfisac/graph_dynamic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cfisac/comm_metrics.hpp"
#include "cfisac/rng.hpp"

namespace cfisac {

using nn::CVar;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr int D = kHiddenWidth;

CVar creshape(CVar a, std::vector<int> shape) {
  return nn::cvar(nn::reshape(a.re, shape), nn::reshape(a.im, shape));
}

CVar cslice(CVar a, std::int64_t off, std::int64_t len) {
  return nn::cvar(nn::slice(a.re, off, len), nn::slice(a.im, off, len));
}

CVar cconcat(const std::vector<CVar>& parts) {
  std::vector<Var> res, ims;
  res.reserve(parts.size());
  ims.reserve(parts.size());
  for (const CVar& c : parts) {
    res.push_back(c.re);
    ims.push_back(c.im);
  }
  return nn::cvar(nn::concat(res), nn::concat(ims));
}

Var ones_column(Tape& t, int n, double fill = 1.0) {
  return t.constant(Tensor({n, 1}, fill));
}

/// Flattened [Re; Im] of one receive AP's echo block.
Var echo_row(CVar echo, int rr, int block) {
  return nn::concat({nn::slice(echo.re, static_cast<std::int64_t>(rr) * block, block),
                     nn::slice(echo.im, static_cast<std::int64_t>(rr) * block, block)});
}

}  // namespace

Var states_by_ap(Tape& t, const Topology& topo, Var tx, Var rx) {
  (void)t;
  const int J = static_cast<int>(topo.kappa.size());
  Var all = nn::reshape(nn::concat({tx, rx}), {J, kHiddenWidth});
  std::vector<int> order(J);
  int ti = 0, ri = 0;
  for (int j = 0; j < J; ++j)
    order[j] = topo.kappa[j] ? ti++ : static_cast<int>(topo.tx_ids.size()) + ri++;
  return nn::gather_rows(all, order);
}

Topology topology_from_kappa(const std::vector<int>& kappa,
                             const ScenarioConfig& config) {
  if (static_cast<int>(kappa.size()) != config.J)
    throw std::invalid_argument("topology_from_kappa: kappa length != J");
  Topology topo;
  topo.kappa = kappa;
  for (int j = 0; j < config.J; ++j) {
    if (kappa[j] != 0 && kappa[j] != 1)
      throw std::invalid_argument("topology_from_kappa: kappa must be 0/1");
    (kappa[j] ? topo.tx_ids : topo.rx_ids).push_back(j);
  }
  if (static_cast<int>(topo.tx_ids.size()) != config.T)
    throw std::invalid_argument("topology_from_kappa: transmit count != T");
  return topo;
}

std::vector<int> top_k_indices(const std::vector<double>& values, int k) {
  const int n = static_cast<int>(values.size());
  k = std::min(k, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  order.resize(static_cast<std::size_t>(std::max(k, 0)));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<int> heuristic_kappa(const ScenarioConfig& config,
                                 const ChannelSet& channels) {
  const int J = config.J;
  std::vector<double> spread(J, 0.0);
  for (int j = 0; j < J; ++j)
    for (int s = 0; s < J; ++s)
      if (s != j) spread[j] += channels.ap_ap_dist[idx2(j, s, J)];
  // The most remote APs hear the least mutual interference as listeners.
  std::vector<int> rx = top_k_indices(spread, config.R);
  std::vector<int> kappa(J, 1);
  for (int j : rx) kappa[j] = 0;
  return kappa;
}

std::vector<int> heuristic_lambda(const ScenarioConfig& config,
                                  const ChannelSet& channels,
                                  const std::vector<int>& kappa) {
  const int J = config.J, K = config.K;
  std::vector<int> Lambda(static_cast<std::size_t>(J) * K, 0);
  for (int j = 0; j < J; ++j) {
    if (!kappa[j]) continue;
    std::vector<double> energy(K, 0.0);
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < config.N_s; ++i) {
        const cdouble* h = channels.h_at(j, i, k);
        for (int m = 0; m < config.M; ++m) energy[k] += std::norm(h[m]);
      }
    for (int k : top_k_indices(energy, config.K_u)) Lambda[idx2(j, k, K)] = 1;
  }
  return Lambda;
}

EdgeFeatures edge_features(const ChannelSet& channels) {
  EdgeFeatures f;
  f.J = channels.J;
  f.K = channels.K;
  f.h_len = 2 * channels.N_s * channels.M;
  f.g_len = 2 * channels.M * channels.M;
  f.h_feat.resize(static_cast<std::size_t>(f.J) * f.K * f.h_len);
  f.g_feat.resize(static_cast<std::size_t>(f.J) * f.J * f.g_len);
  const int M = channels.M, N_s = channels.N_s;
  const int half_h = N_s * M, half_g = M * M;
  for (int j = 0; j < f.J; ++j) {
    for (int k = 0; k < f.K; ++k) {
      double* dst = f.h_feat.data() + idx3(j, k, 0, f.K, f.h_len);
      for (int i = 0; i < N_s; ++i) {
        const cdouble* h = channels.h_at(j, i, k);
        for (int m = 0; m < M; ++m) {
          dst[idx2(i, m, M)] = h[m].real();
          dst[half_h + idx2(i, m, M)] = h[m].imag();
        }
      }
    }
    for (int b = 0; b < f.J; ++b) {
      double* dst = f.g_feat.data() + idx3(j, b, 0, f.J, f.g_len);
      const cdouble* G = channels.G_at(j, b);
      for (int e = 0; e < half_g; ++e) {
        dst[e] = G[e].real();
        dst[half_g + e] = G[e].imag();
      }
    }
  }
  return f;
}

namespace {

/// Shared base-feature embedding used by both state initializers.
NodeStates embed_base_states(Tape& t, nn::ParamStore& ps,
                             const EdgeFeatures& feat, const Topology& topo,
                             const std::string& prefix) {
  const int T = static_cast<int>(topo.tx_ids.size());
  const int R = static_cast<int>(topo.rx_ids.size());
  const int K = feat.K;
  if (T < 1) throw std::invalid_argument("init_node_states: empty transmit set");
  const int in_tx = K * feat.h_len + R * feat.g_len;
  const int in_rx = K * feat.h_len + T * feat.g_len;
  const int in_cu = T * feat.h_len;

  Tensor tx_in({T, in_tx});
  for (int tt = 0; tt < T; ++tt) {
    const int j = topo.tx_ids[tt];
    double* row = tx_in.data.data() + static_cast<std::size_t>(tt) * in_tx;
    for (int k = 0; k < K; ++k)
      std::copy_n(feat.h_at(j, k), feat.h_len, row + k * feat.h_len);
    double* g = row + K * feat.h_len;
    for (int rr = 0; rr < R; ++rr)
      std::copy_n(feat.g_at(j, topo.rx_ids[rr]), feat.g_len, g + rr * feat.g_len);
  }

  // Receive rows share one reference AP's CU edges (the lowest transmit
  // id); their own information enters through the per-pair blocks.
  const int t0 = topo.tx_ids[0];
  Tensor rx_in({R, in_rx});
  for (int rr = 0; rr < R; ++rr) {
    const int rj = topo.rx_ids[rr];
    double* row = rx_in.data.data() + static_cast<std::size_t>(rr) * in_rx;
    for (int k = 0; k < K; ++k)
      std::copy_n(feat.h_at(t0, k), feat.h_len, row + k * feat.h_len);
    double* g = row + K * feat.h_len;
    for (int tt = 0; tt < T; ++tt)
      std::copy_n(feat.g_at(topo.tx_ids[tt], rj), feat.g_len, g + tt * feat.g_len);
  }

  Tensor cu_in({K, in_cu});
  for (int k = 0; k < K; ++k) {
    double* row = cu_in.data.data() + static_cast<std::size_t>(k) * in_cu;
    for (int tt = 0; tt < T; ++tt)
      std::copy_n(feat.h_at(topo.tx_ids[tt], k), feat.h_len, row + tt * feat.h_len);
  }

  auto embed = [&](Tensor in, const std::string& name, int width) {
    Var w = ps.param(t, prefix + "embed." + name + ".w", {width, D});
    Var b = ps.param(t, prefix + "embed." + name + ".b", {D}, nn::Init::kZeros);
    return nn::bias_add(nn::matmul(t.constant(std::move(in)), w), b);
  };
  NodeStates st;
  st.tx = embed(std::move(tx_in), "tx", in_tx);
  st.rx = embed(std::move(rx_in), "rx", in_rx);
  st.cu = embed(std::move(cu_in), "cu", in_cu);
  return st;
}

}  // namespace

NodeStates init_node_states(Tape& t, nn::ParamStore& ps,
                            const EdgeFeatures& feat, const Topology& topo,
                            const std::string& prefix) {
  return embed_base_states(t, ps, feat, topo, prefix);
}

NodeStates enhanced_node_states(Tape& t, nn::ParamStore& ps,
                                const ScenarioConfig& config,
                                const EdgeFeatures& feat, const Topology& topo,
                                const std::string& prefix, CVar echo) {
  NodeStates st = embed_base_states(t, ps, feat, topo, prefix);
  const int T = static_cast<int>(topo.tx_ids.size());
  const int R = static_cast<int>(topo.rx_ids.size());
  const int block = config.N_s * config.L * config.M;
  if (echo.re.value().numel() != static_cast<std::int64_t>(R) * block)
    throw std::invalid_argument("enhanced_node_states: echo size mismatch");

  // Every Tx node sees the same receive echoes, so one projected row is
  // broadcast over all T rows.
  std::vector<Var> all_rows;
  for (int rr = 0; rr < R; ++rr) all_rows.push_back(echo_row(echo, rr, block));
  Var tx_echo = nn::reshape(nn::concat(all_rows), {1, R * 2 * block});
  Var w_tx = ps.param(t, prefix + "embed2.tx.w", {R * 2 * block, D});
  st.tx = nn::add(st.tx, nn::matmul(ones_column(t, T), nn::matmul(tx_echo, w_tx)));

  // Each Rx node repeats its own echo once per transmit partner.
  std::vector<Var> rx_rows;
  for (int rr = 0; rr < R; ++rr) {
    Var own = echo_row(echo, rr, block);
    std::vector<Var> tiled(static_cast<std::size_t>(T), own);
    rx_rows.push_back(nn::concat(tiled));
  }
  Var rx_echo = nn::stack_rows(rx_rows);
  Var w_rx = ps.param(t, prefix + "embed2.rx.w", {T * 2 * block, D});
  st.rx = nn::add(st.rx, nn::matmul(rx_echo, w_rx));
  return st;
}

std::vector<double> structural_mask(int K, int R) {
  std::vector<double> mask(static_cast<std::size_t>(K + R), 0.0);
  std::fill(mask.begin() + K, mask.end(), -1e9);
  return mask;
}

StructuralOut structural_layer(Tape& t, nn::ParamStore& ps,
                               const std::string& prefix,
                               const NodeStates& states,
                               const std::vector<double>& mask) {
  const int T = states.tx.value().dim(0);
  const int K = states.cu.value().dim(0);
  const int R = states.rx.value().dim(0);
  if (static_cast<int>(mask.size()) != K + R)
    throw std::invalid_argument("structural_layer: mask length != K + R");
  bool any_open = false;
  for (double m : mask) any_open = any_open || m > -1e8;
  if (!any_open)
    throw std::runtime_error("structural_layer: mask closes every neighbor");

  auto mat = [&](const std::string& name) {
    return ps.param(t, prefix + name, {D, D});
  };
  Var q = nn::matmul(states.tx, mat("query.w"));
  Var keys = nn::reshape(nn::concat({nn::matmul(states.cu, mat("key.cu.w")),
                                     nn::matmul(states.rx, mat("key.rx.w"))}),
                         {K + R, D});
  Var vals = nn::reshape(nn::concat({nn::matmul(states.cu, mat("val.cu.w")),
                                     nn::matmul(states.rx, mat("val.rx.w"))}),
                         {K + R, D});

  Var scores = nn::matmul(q, nn::transpose(nn::matmul(keys, mat("att.w"))));
  Tensor mrows({T, K + R});
  for (int tt = 0; tt < T; ++tt)
    std::copy(mask.begin(), mask.end(),
              mrows.data.begin() + static_cast<std::size_t>(tt) * (K + R));
  Var attention = nn::softmax_rows(nn::add(scores, t.constant(std::move(mrows))));

  Var message = nn::matmul(attention, vals);
  StructuralOut out;
  out.states.tx =
      nn::add(states.tx, nn::matmul(nn::leaky_relu(message), mat("agg.w")));
  out.states.rx = states.rx;
  out.states.cu = states.cu;
  out.attention = attention;
  return out;
}

AssociationOut select_association(Tape& t, const ScenarioConfig& config,
                                  const Topology& topo, Var attention) {
  const int T = static_cast<int>(topo.tx_ids.size());
  const int K = config.K;
  const int cols = attention.value().dim(1);
  if (attention.value().dim(0) != T || cols < K)
    throw std::invalid_argument("select_association: attention shape mismatch");

  // Keep only the CU columns; constant selector so gradients pass through.
  Tensor sel({cols, K});
  for (int k = 0; k < K; ++k) sel.data[idx2(k, k, K)] = 1.0;
  Var soft = nn::matmul(attention, t.constant(std::move(sel)));

  Tensor hard({T, K});
  AssociationOut out;
  out.Lambda.assign(static_cast<std::size_t>(config.J) * K, 0);
  const auto& v = soft.value().data;
  for (int tt = 0; tt < T; ++tt) {
    std::vector<double> row(v.begin() + static_cast<std::size_t>(tt) * K,
                            v.begin() + static_cast<std::size_t>(tt + 1) * K);
    for (int k : top_k_indices(row, config.K_u)) {
      hard.data[idx2(tt, k, K)] = 1.0;
      out.Lambda[idx2(topo.tx_ids[tt], k, K)] = 1;
    }
  }
  out.lambda_ste = nn::straight_through(soft, std::move(hard));
  return out;
}

PrecoderOut precoder_head(Tape& t, nn::ParamStore& ps,
                          const ScenarioConfig& config,
                          const std::string& prefix, const Topology& topo,
                          Var tx_states, const AssociationOut& assoc) {
  const int T = static_cast<int>(topo.tx_ids.size());
  const int M = config.M, K = config.K, N_s = config.N_s;
  const int cols = M + K;
  const int half = N_s * M * cols;
  if (tx_states.value().dim(0) != T)
    throw std::invalid_argument("precoder_head: state row count != T");

  Var w = ps.param(t, prefix + "head.w", {D, 2 * half});
  Var b = ps.param(t, prefix + "head.b", {2 * half}, nn::Init::kZeros);

  PrecoderOut out;
  out.W.assign(static_cast<std::size_t>(config.J) * half, {0.0, 0.0});
  for (int tt = 0; tt < T; ++tt) {
    Var raw = nn::reshape(
        nn::bias_add(nn::matmul(nn::gather_rows(tx_states, {tt}), w), b),
        {2 * half});
    Var re = nn::slice(raw, 0, half);
    Var im = nn::slice(raw, half, half);

    // Zero the columns of unserved CUs through the straight-through gate,
    // then rescale so the emitted energy is the budget exactly.
    Var lam = nn::reshape(nn::gather_rows(assoc.lambda_ste, {tt}), {1, K});
    Var gate = nn::concat({t.constant(Tensor({M}, 1.0)), lam});
    Var tile = nn::reshape(
        nn::matmul(ones_column(t, N_s * M), nn::reshape(gate, {1, cols})),
        {half});
    re = nn::mul(re, tile);
    im = nn::mul(im, tile);

    Var energy = nn::add(nn::sum(nn::mul(re, re)), nn::sum(nn::mul(im, im)));
    if (!(energy.value().item() > 0.0))
      throw std::runtime_error("precoder_head: silent transmit AP " +
                               std::to_string(topo.tx_ids[tt]));
    Var scale = nn::sqrt_op(
        nn::div_svar(t.constant(Tensor::scalar(config.P_j)), energy));
    CVar wt = nn::cvar(nn::mul_svar(re, scale), nn::mul_svar(im, scale));
    out.w_tx.push_back(wt);

    cdouble* dst = out.W.data() +
                   static_cast<std::size_t>(topo.tx_ids[tt]) * half;
    const auto& vr = wt.re.value().data;
    const auto& vi = wt.im.value().data;
    for (int e = 0; e < half; ++e) dst[e] = {vr[e], vi[e]};
  }
  return out;
}

TemporalOut temporal_select(Tape& t, nn::ParamStore& ps,
                            const ScenarioConfig& config,
                            const std::string& prefix, Var ap_history) {
  const int J = config.J;
  if (ap_history.value().shape != std::vector<int>{J, D})
    throw std::invalid_argument("temporal_select: history shape mismatch");

  Var w_q = ps.param(t, prefix + "query.w", {D, D});
  Var w_k = ps.param(t, prefix + "key.w", {D, D});
  Var w_a = ps.param(t, prefix + "att.w", {D, D});

  Var mean_state =
      nn::matmul(t.constant(Tensor({1, J}, 1.0 / J)), ap_history);
  Var q = nn::matmul(mean_state, w_q);
  Var keys = nn::matmul(ap_history, w_k);
  Var scores =
      nn::reshape(nn::matmul(nn::matmul(keys, w_a), nn::transpose(q)), {J});
  Var probs = nn::softmax_rows(scores);

  TemporalOut out;
  out.kappa.assign(static_cast<std::size_t>(J), 0);
  Tensor hard({J});
  for (int j : top_k_indices(probs.value().data, J - config.R)) {
    out.kappa[j] = 1;
    hard.data[j] = 1.0;
  }
  out.kappa_ste = nn::straight_through(probs, std::move(hard));
  return out;
}

std::vector<CVar> emissions_on_tape(Tape& t, const ScenarioConfig& config,
                                    const Topology& topo,
                                    const PrecoderOut& prec,
                                    const std::vector<cdouble>& s_c,
                                    const std::vector<cdouble>& s_r,
                                    const Var* mode_gate) {
  const int T = static_cast<int>(topo.tx_ids.size());
  const int M = config.M, K = config.K, N_s = config.N_s, L = config.L;
  const int cols = M + K;
  if (s_c.size() != static_cast<std::size_t>(N_s) * L * K ||
      s_r.size() != static_cast<std::size_t>(T) * M * N_s * L ||
      static_cast<int>(prec.w_tx.size()) != T)
    throw std::invalid_argument("emissions_on_tape: operand sizes disagree");

  std::vector<CVar> X;
  X.reserve(static_cast<std::size_t>(T));
  for (int tt = 0; tt < T; ++tt) {
    std::vector<CVar> per_sub;
    per_sub.reserve(static_cast<std::size_t>(N_s));
    for (int i = 0; i < N_s; ++i) {
      // Stacked symbols: radar streams in the precoder's first M columns,
      // one data-symbol row per CU after them.
      std::vector<cdouble> sym(static_cast<std::size_t>(cols) * L);
      for (int m = 0; m < M; ++m)
        for (int l = 0; l < L; ++l)
          sym[idx2(m, l, L)] = s_r[idx4(tt, m, i, l, M, N_s, L)];
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l)
          sym[idx2(M + k, l, L)] = s_c[idx3(i, l, k, L, K)];
      CVar S = nn::cconstant(t, {cols, L}, sym);
      CVar Wti = creshape(
          cslice(prec.w_tx[tt], static_cast<std::int64_t>(i) * M * cols, M * cols),
          {M, cols});
      per_sub.push_back(nn::ctranspose(nn::cmatmul(Wti, S)));  // [L x M]
    }
    CVar Xt = creshape(cconcat(per_sub), {N_s * L, M});
    if (mode_gate) {
      Var g = nn::slice(*mode_gate, topo.tx_ids[tt], 1);
      Xt = nn::cscale_var(Xt, g);
    }
    X.push_back(Xt);
  }
  return X;
}

CVar echo_on_tape(Tape& t, const ScenarioConfig& config, const Placement& p,
                  const BistaticGeometry& geo, const ChannelSet& channels,
                  const Topology& topo, const std::vector<CVar>& X,
                  const EchoDraws& draws) {
  const int J = config.J, Q = config.Q, U = config.U;
  const int M = config.M, N_s = config.N_s, L = config.L;
  const int T = static_cast<int>(topo.tx_ids.size());
  const int R = static_cast<int>(topo.rx_ids.size());
  if (static_cast<int>(X.size()) != T)
    throw std::invalid_argument("echo_on_tape: one emission per Tx AP required");
  const int rows = N_s * L;
  const double df = config.delta_f();
  const double t_sym = config.t_sym();
  const double sigma_r = std::sqrt(config.sigma_r2);

  auto phase_ramp = [&](double dist, double doppler) {
    std::vector<cdouble> c(static_cast<std::size_t>(rows));
    for (int i = 0; i < N_s; ++i)
      for (int l = 0; l < L; ++l)
        c[idx2(i, l, L)] =
            std::polar(1.0, -2.0 * kPi * i * df * dist / kSpeedOfLight) *
            std::polar(1.0, 2.0 * kPi * l * t_sym * doppler);
    return c;
  };
  auto rx_response = [&](double theta) {
    std::vector<cdouble> a(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) a[m] = std::polar(1.0, kPi * m * std::sin(theta));
    return a;
  };

  std::vector<CVar> per_rx;
  per_rx.reserve(static_cast<std::size_t>(R));
  for (int ri = 0; ri < R; ++ri) {
    const int r = topo.rx_ids[ri];
    std::vector<cdouble> noise(static_cast<std::size_t>(rows) * M);
    for (int e = 0; e < rows * M; ++e)
      noise[e] = sigma_r * draws.noise[static_cast<std::size_t>(ri) * rows * M + e];
    CVar acc = nn::cconstant(t, {rows, M}, noise);

    for (int tt = 0; tt < T; ++tt) {
      const int j = topo.tx_ids[tt];
      for (int q = 0; q < Q; ++q) {
        const auto a_t = steering(geo.tgt_theta[idx2(j, q, Q)], M);
        CVar proj = nn::cmatmul(X[tt], nn::cconstant(t, {M, 1}, a_t));
        const double d_rx = geo.tgt_dist[idx2(r, q, Q)];
        const double d_tx = geo.tgt_dist[idx2(j, q, Q)];
        const double pl = std::sqrt(
            path_loss(d_rx, p.alpha_tgt[idx2(r, q, Q)], config.f_c) *
            path_loss(d_tx, p.alpha_tgt[idx2(j, q, Q)], config.f_c));
        auto coef = phase_ramp(d_rx + d_tx, geo.doppler(j, r, q));
        const cdouble gain = draws.beta[idx3(j, r, q, J, Q)] * pl;
        for (auto& c : coef) c *= gain;
        CVar weighted = nn::cmul(proj, nn::cconstant(t, {rows, 1}, coef));
        CVar a_r = nn::cconstant(t, {1, M},
                                 rx_response(geo.tgt_theta[idx2(r, q, Q)]));
        acc = nn::cadd(acc, nn::cmatmul(weighted, a_r));
      }
      for (int u = 0; u < U; ++u) {
        const auto a_t = steering(geo.clu_theta[idx2(j, u, U)], M);
        CVar proj = nn::cmatmul(X[tt], nn::cconstant(t, {M, 1}, a_t));
        const double d_rx = geo.clu_dist[idx2(r, u, U)];
        const double d_tx = geo.clu_dist[idx2(j, u, U)];
        const double pl = std::sqrt(
            path_loss(d_rx, p.alpha_clu[idx2(r, u, U)], config.f_c) *
            path_loss(d_tx, p.alpha_clu[idx2(j, u, U)], config.f_c));
        auto coef = phase_ramp(d_rx + d_tx, 0.0);
        const cdouble gain = draws.eta[idx3(j, r, u, J, U)] * pl;
        for (auto& c : coef) c *= gain;
        CVar weighted = nn::cmul(proj, nn::cconstant(t, {rows, 1}, coef));
        CVar a_r = nn::cconstant(t, {1, M},
                                 rx_response(geo.clu_theta[idx2(r, u, U)]));
        acc = nn::cadd(acc, nn::cmatmul(weighted, a_r));
      }
      {
        // Direct leakage: right-multiplying by G^T applies G to each
        // emitted snapshot vector.
        const double d_jr = channels.ap_ap_dist[idx2(j, r, J)];
        const double amp =
            std::sqrt(path_loss(d_jr, p.alpha_ap[idx2(j, r, J)], config.f_c));
        const cdouble* G = channels.G_at(j, r);
        std::vector<cdouble> Gt(static_cast<std::size_t>(M) * M);
        for (int m = 0; m < M; ++m)
          for (int mm = 0; mm < M; ++mm)
            Gt[idx2(mm, m, M)] = G[idx2(m, mm, M)];
        CVar gx = nn::cmatmul(X[tt], nn::cconstant(t, {M, M}, Gt));
        std::vector<cdouble> tile(static_cast<std::size_t>(rows) * M);
        for (int i = 0; i < N_s; ++i) {
          const cdouble ph =
              amp * std::polar(1.0, -2.0 * kPi * i * df * d_jr / kSpeedOfLight);
          for (int l = 0; l < L; ++l)
            for (int m = 0; m < M; ++m) tile[idx3(i, l, m, L, M)] = ph;
        }
        acc = nn::cadd(acc, nn::cmul(gx, nn::cconstant(t, {rows, M}, tile)));
      }
    }
    per_rx.push_back(acc);
  }
  return cconcat(per_rx);
}

Var rate_on_tape(Tape& t, const ScenarioConfig& config,
                 const ChannelSet& channels, const Topology& topo,
                 const PrecoderOut& prec, const std::vector<int>& Lambda) {
  const int K = config.K, M = config.M, N_s = config.N_s;
  const int cols = M + K;
  const int T = static_cast<int>(topo.tx_ids.size());
  if (Lambda.size() != static_cast<std::size_t>(config.J) * K ||
      static_cast<int>(prec.w_tx.size()) != T)
    throw std::invalid_argument("rate_on_tape: operand sizes disagree");

  // Per-AP constant selectors: comm columns gated by that AP's served set,
  // radar columns passed through.
  std::vector<Var> comm_sel(static_cast<std::size_t>(T));
  for (int tt = 0; tt < T; ++tt) {
    Tensor g({cols, K});
    for (int n = 0; n < K; ++n)
      g.data[idx2(M + n, n, K)] =
          static_cast<double>(Lambda[idx2(topo.tx_ids[tt], n, K)]);
    comm_sel[tt] = t.constant(std::move(g));
  }
  Tensor radar_pick({cols, M});
  for (int m = 0; m < M; ++m) radar_pick.data[idx2(m, m, M)] = 1.0;
  Var radar_sel = t.constant(std::move(radar_pick));

  std::vector<std::int64_t> diag(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) diag[k] = idx2(k, k, K);
  Var ones_k = ones_column(t, K);
  Var ones_m = ones_column(t, M);

  Var total;
  for (int i = 0; i < N_s; ++i) {
    CVar comm_mix, radar_mix;
    for (int tt = 0; tt < T; ++tt) {
      const int j = topo.tx_ids[tt];
      std::vector<cdouble> hh(static_cast<std::size_t>(K) * M);
      for (int k = 0; k < K; ++k) {
        const cdouble* h = channels.h_at(j, i, k);
        for (int m = 0; m < M; ++m) hh[idx2(k, m, M)] = std::conj(h[m]);
      }
      CVar Wji = creshape(
          cslice(prec.w_tx[tt], static_cast<std::int64_t>(i) * M * cols, M * cols),
          {M, cols});
      CVar HW = nn::cmatmul(nn::cconstant(t, {K, M}, hh), Wji);
      CVar c = nn::cvar(nn::matmul(HW.re, comm_sel[tt]),
                        nn::matmul(HW.im, comm_sel[tt]));
      CVar rd = nn::cvar(nn::matmul(HW.re, radar_sel),
                         nn::matmul(HW.im, radar_sel));
      comm_mix = tt == 0 ? c : nn::cadd(comm_mix, c);
      radar_mix = tt == 0 ? rd : nn::cadd(radar_mix, rd);
    }

    Var sig2 = nn::cabs2(nn::cvar(nn::gather_flat(comm_mix.re, diag),
                                  nn::gather_flat(comm_mix.im, diag)));
    Var cross = nn::cabs2(comm_mix);  // [K x K]
    Var mu = nn::sub(nn::reshape(nn::matmul(cross, ones_k), {K}),
                     nn::gather_flat(cross, diag));
    Var iota = nn::reshape(nn::matmul(nn::cabs2(radar_mix), ones_m), {K});
    Var sinr = nn::divide(sig2, nn::add_scalar(nn::add(mu, iota), config.sigma_c2));
    Var bits = nn::mul_scalar(nn::log_op(nn::add_scalar(sinr, 1.0)),
                              1.0 / std::log(2.0));
    Var s = nn::sum(bits);
    total = i == 0 ? s : nn::add(total, s);
  }
  return total;
}

TargetMatch match_targets(const std::vector<Vec2>& est_p,
                          const std::vector<Vec2>& est_v,
                          const std::vector<Vec2>& true_p,
                          const std::vector<Vec2>& true_v, double omega) {
  const int Q = static_cast<int>(true_p.size());
  if (est_p.size() != true_p.size() || est_v.size() != true_v.size() ||
      est_v.size() != est_p.size())
    throw std::invalid_argument("match_targets: point counts disagree");

  std::vector<int> perm(static_cast<std::size_t>(Q));
  std::iota(perm.begin(), perm.end(), 0);
  TargetMatch best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> trial = perm;
  do {
    double cost = 0.0;
    for (int q = 0; q < Q; ++q) {
      const Vec2 dp = est_p[trial[q]] - true_p[q];
      const Vec2 dv = est_v[trial[q]] - true_v[q];
      cost += omega * dp.dot(dp) + (1.0 - omega) * dv.dot(dv);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best.perm = trial;
    }
  } while (std::next_permutation(trial.begin(), trial.end()));

  double sp = 0.0, sv = 0.0;
  for (int q = 0; q < Q; ++q) {
    const Vec2 dp = est_p[best.perm[q]] - true_p[q];
    const Vec2 dv = est_v[best.perm[q]] - true_v[q];
    sp += dp.dot(dp);
    sv += dv.dot(dv);
  }
  best.rmse_p = std::sqrt(sp / std::max(Q, 1));
  best.rmse_v = std::sqrt(sv / std::max(Q, 1));
  return best;
}

std::vector<Vec2> var_to_points(const Var& v) {
  const auto& d = v.value().data;
  if (d.size() % 2 != 0)
    throw std::invalid_argument("var_to_points: odd element count");
  std::vector<Vec2> pts(d.size() / 2);
  for (std::size_t q = 0; q < pts.size(); ++q) pts[q] = {d[2 * q], d[2 * q + 1]};
  return pts;
}

namespace {

std::vector<int> random_kappa(const ScenarioConfig& config, std::uint64_t seed) {
  std::vector<int> ids(static_cast<std::size_t>(config.J));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  for (int i = config.J - 1; i > 0; --i) {
    int j = std::min(i, static_cast<int>(rng.uniform() * (i + 1)));
    std::swap(ids[i], ids[j]);
  }
  std::vector<int> kappa(static_cast<std::size_t>(config.J), 0);
  for (int tI = 0; tI < config.T; ++tI) kappa[ids[tI]] = 1;
  return kappa;
}

void log_snapshot(std::ofstream& csv, const SnapshotStep& step, int K) {
  csv << step.n << ',';
  for (int k : step.kappa) csv << k;
  csv << ',';
  bool first = true;
  for (std::size_t e = 0; e < step.Lambda.size(); ++e) {
    if (!step.Lambda[e]) continue;
    if (!first) csv << ';';
    csv << (e / K) << ':' << (e % K);
    first = false;
  }
  csv << ',' << std::setprecision(17) << step.R_c << ',' << step.rmse_p << ','
      << step.rmse_v << '\n';
}

}  // namespace

EpisodeResult run_episode(Tape& t, nn::ParamStore& ps,
                          const ScenarioConfig& config, const Placement& p,
                          const ChannelSet& channels,
                          const BistaticGeometry& geo,
                          const EpisodeOptions& opts) {
  const std::string prefix = "dyn.";
  EdgeFeatures feat = edge_features(channels);
  const std::vector<cdouble> s_r = radar_symbols(config, default_zc_roots(config));
  const auto mask = structural_mask(config.K, config.R);

  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path);
    if (!csv)
      throw std::runtime_error("run_episode: cannot open " + opts.csv_path);
    csv << "n,kappa,lambda,R_c,rmse_p,rmse_v\n";
  }

  std::vector<int> kappa = opts.train_mode
                               ? random_kappa(config, split_seed(opts.seed, 7))
                               : heuristic_kappa(config, channels);

  CVar radar_c;
  if (opts.physics_on_tape)
    radar_c = nn::cconstant(t, {static_cast<int>(s_r.size())}, s_r);

  EpisodeResult res;
  CVar prev_echo;
  bool have_echo = false;
  TemporalOut temp;
  bool have_gate = false;
  Var hist_sum;
  for (int n = 0; n < config.N; ++n) {
    Topology topo = topology_from_kappa(kappa, config);
    NodeStates st =
        have_echo
            ? enhanced_node_states(t, ps, config, feat, topo, prefix, prev_echo)
            : init_node_states(t, ps, feat, topo, prefix);
    Var attention;
    for (int tau = 0; tau < config.tau_tot; ++tau) {
      StructuralOut so = structural_layer(
          t, ps,
          prefix + "s" + std::to_string(n) + ".l" + std::to_string(tau) + ".",
          st, mask);
      st = so.states;
      attention = so.attention;
    }
    AssociationOut assoc = select_association(t, config, topo, attention);
    PrecoderOut prec = precoder_head(t, ps, config, prefix, topo, st.tx, assoc);

    const auto s_c = comm_symbols(config, split_seed(opts.seed, 200 + n));
    const EchoDraws draws =
        make_echo_draws(config, p, split_seed(opts.seed, 100 + n));

    SnapshotStep step;
    step.n = n;
    step.kappa = kappa;
    step.Lambda = assoc.Lambda;
    step.W = prec.W;
    if (opts.physics_on_tape) {
      auto X = emissions_on_tape(t, config, topo, prec, s_c, s_r,
                                 have_gate ? &temp.kappa_ste : nullptr);
      CVar echo = echo_on_tape(t, config, p, geo, channels, topo, X, draws);
      Var fin = fusion_input(t, config, echo, radar_c);
      step.est = cpu_fuse(t, ps, config, extract_compress(t, ps, config, fin));
      step.rate = rate_on_tape(t, config, channels, topo, prec, assoc.Lambda);
      prev_echo = echo;
    } else {
      // Evaluation path: identical operands through the host kernels, far
      // lighter than taping the physics.
      auto x = assemble_tx(config, kappa, assoc.Lambda, prec.W, s_c, s_r);
      EchoTensor echo = synthesize_echo(p, geo, channels, x, kappa, config, draws);
      step.est = fusion_forward(t, ps, config, echo, s_r);
      CommReport rep = sinr_report(channels, prec.W, kappa, assoc.Lambda,
                                   config.sigma_c2, MuMode::kCorrected);
      step.rate = t.constant(Tensor::scalar(rep.R_c));
      prev_echo = nn::cconstant(t, {static_cast<int>(echo.Y.size())}, echo.Y);
    }
    have_echo = true;
    step.est_pos = step.est.positions.value().data;
    step.est_vel = step.est.velocities.value().data;
    step.R_c = step.rate.value().item();
    TargetMatch tm =
        match_targets(var_to_points(step.est.positions),
                      var_to_points(step.est.velocities), p.tgt_pos, p.tgt_vel,
                      config.omega);
    step.rmse_p = tm.rmse_p;
    step.rmse_v = tm.rmse_v;
    if (csv.is_open()) log_snapshot(csv, step, config.K);

    if (n + 1 < config.N) {
      Var ap_states = states_by_ap(t, topo, st.tx, st.rx);
      hist_sum = n == 0 ? ap_states : nn::add(hist_sum, ap_states);
      Var hist_mean = nn::mul_scalar(hist_sum, 1.0 / (n + 1));
      temp = temporal_select(t, ps, config, prefix + "temporal.", hist_mean);
      have_gate = true;
      kappa = temp.kappa;
    }
    res.steps.push_back(std::move(step));
  }
  return res;
}

}  // namespace cfisac
