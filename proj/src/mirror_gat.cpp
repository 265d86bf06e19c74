#include "cfisac/mirror_gat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <utility>

#include "cfisac/comm_metrics.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/fusion_net.hpp"
#include "cfisac/rng.hpp"
#include "cfisac/waveform.hpp"

namespace cfisac {

using nn::CVar;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr int D = kHiddenWidth;
constexpr int E = kEdgeWidth;

CVar creshape(CVar a, std::vector<int> shape) {
  Var re = nn::reshape(a.re, shape);
  Var im = nn::reshape(a.im, std::move(shape));
  return nn::cvar(re, im);
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

Var ones_column(Tape& t, int n) { return t.constant(Tensor({n, 1}, 1.0)); }

CVar const_cvar(Tape& t, Tensor re) {
  Tensor im(re.shape);
  return nn::cvar(t.constant(std::move(re)), t.constant(std::move(im)));
}

CVar cones_row(Tape& t, int n) { return const_cvar(t, Tensor({1, n}, 1.0)); }

CVar cones_column(Tape& t, int n) { return const_cvar(t, Tensor({n, 1}, 1.0)); }

/// Column-joins two 2D blocks with equal row counts.
Var hstack2(Var a, Var b) {
  const int r = a.value().dim(0);
  const int ca = a.value().dim(1), cb = b.value().dim(1);
  return nn::transpose(
      nn::reshape(nn::concat({nn::transpose(a), nn::transpose(b)}), {ca + cb, r}));
}

/// Row-joins 2D blocks sharing a column count.
Var vstack(const std::vector<Var>& blocks, int rows, int cols) {
  return nn::reshape(nn::concat(blocks), {rows, cols});
}

int sen_index(int j, int l, int J) { return j * (J - 1) + (l < j ? l : l - 1); }

std::vector<int> block_rows(int start, int count) {
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = start + i;
  return idx;
}

/// Beam responses of every ordered edge leaving AP j, stacked
/// [(J-1)*M x M] with neighbors ascending, one receive antenna per row.
Tensor sen_g_part(const ChannelSet& ch, int j, bool imag) {
  const int J = ch.J, M = ch.M;
  Tensor out({(J - 1) * M, M});
  int li = 0;
  for (int l = 0; l < J; ++l) {
    if (l == j) continue;
    const cdouble* G = ch.G_at(j, l);
    for (int n = 0; n < M; ++n)
      for (int mm = 0; mm < M; ++mm)
        out.data[idx2(li * M + n, mm, M)] =
            imag ? G[n * M + mm].imag() : G[n * M + mm].real();
    ++li;
  }
  return out;
}

/// Selector summing each edge's M antenna rows: [(J-1) x (J-1)*M].
Tensor edge_row_sum(int J, int M) {
  Tensor sel({J - 1, (J - 1) * M});
  for (int e = 0; e < J - 1; ++e)
    for (int n = 0; n < M; ++n) sel.data[idx2(e, e * M + n, (J - 1) * M)] = 1.0;
  return sel;
}

/// Indices of subcarrier i's radar block inside a flat stacked precoder
/// [N_s x M x (M+K)], arranged [antenna x radar column].
std::vector<std::int64_t> radar_gather(int i, int M, int cols) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(M) * M);
  for (int aa = 0; aa < M; ++aa)
    for (int m = 0; m < M; ++m)
      idx[static_cast<std::size_t>(aa) * M + m] =
          static_cast<std::int64_t>(i * M + aa) * cols + m;
  return idx;
}

CVar gather_cvar(CVar a, const std::vector<std::int64_t>& idx,
                 std::vector<int> shape) {
  Var re = nn::reshape(nn::gather_flat(a.re, idx), shape);
  Var im = nn::reshape(nn::gather_flat(a.im, idx), std::move(shape));
  return nn::cvar(re, im);
}

/// Detached 1/rms of the current value, 1 when the block is all zeros.
double inv_rms(const Var& v) {
  double s = 0.0;
  for (double d : v.value().data) s += d * d;
  const double r = std::sqrt(s / static_cast<double>(v.value().data.size()));
  return r > 1e-300 ? 1.0 / r : 1.0;
}

/// Flat complex edge vector [n] -> real feature rows [n x 2].
Var edge_feature_rows(CVar flat, int n) {
  return nn::transpose(nn::reshape(nn::concat({flat.re, flat.im}), {2, n}));
}

/// Communication edges of one transmit AP on the tape: conjugate channel
/// dotted with the serving column, summed over subcarriers. [K] flat.
CVar com_edges_tx(Tape& t, const ScenarioConfig& config,
                  const ChannelSet& channels, int j, const CVar& w) {
  const int K = config.K, M = config.M, N_s = config.N_s;
  const int cols = M + K;
  std::vector<std::int64_t> cidx(static_cast<std::size_t>(N_s) * M * K);
  Tensor hr({N_s * M, K}), hi({N_s * M, K});
  for (int i = 0; i < N_s; ++i)
    for (int m = 0; m < M; ++m)
      for (int k = 0; k < K; ++k) {
        const int row = i * M + m;
        cidx[static_cast<std::size_t>(row) * K + k] =
            static_cast<std::int64_t>(row) * cols + M + k;
        const cdouble h = channels.h_at(j, i, k)[m];
        hr.data[idx2(row, k, K)] = h.real();
        hi.data[idx2(row, k, K)] = -h.imag();
      }
  CVar Wc = gather_cvar(w, cidx, {N_s * M, K});
  CVar Hc = nn::cvar(t.constant(std::move(hr)), t.constant(std::move(hi)));
  return creshape(nn::cmatmul(cones_row(t, N_s * M), nn::cmul(Hc, Wc)), {K});
}

/// Sensing edges of one transmit AP on the tape: clamped reciprocal beam
/// responses averaged over antenna pairs, summed over subcarriers and radar
/// streams. [J-1] flat, neighbor order ascending.
CVar sen_edges_tx(Tape& t, const ScenarioConfig& config,
                  const ChannelSet& channels, int j, const CVar& w) {
  const int J = config.J, M = config.M, N_s = config.N_s;
  const int cols = M + config.K;
  CVar Gc = nn::cvar(t.constant(sen_g_part(channels, j, false)),
                     t.constant(sen_g_part(channels, j, true)));
  CVar Es = const_cvar(t, edge_row_sum(J, M));
  CVar acc;
  for (int i = 0; i < N_s; ++i) {
    CVar Wr = gather_cvar(w, radar_gather(i, M, cols), {M, M});
    CVar R = nn::creciprocal(nn::cmatmul(Gc, Wr), kReciprocalEps);
    CVar red = nn::cmatmul(nn::cmatmul(Es, R), cones_column(t, M));
    acc = (i == 0) ? red : nn::cadd(acc, red);
  }
  return creshape(nn::cscale(acc, 1.0 / (M * M)), {J - 1});
}

/// Communication halves of the edge init for every AP; silent AP rows are
/// zero constants.
CVar com_edges_all(Tape& t, const ScenarioConfig& config,
                   const ChannelSet& channels, const Topology& topo,
                   const PrecoderOut& prec) {
  std::vector<CVar> parts;
  parts.reserve(config.J);
  int tt = 0;
  for (int j = 0; j < config.J; ++j) {
    if (topo.kappa[j])
      parts.push_back(com_edges_tx(t, config, channels, j, prec.w_tx[tt++]));
    else
      parts.push_back(const_cvar(t, Tensor({config.K})));
  }
  return cconcat(parts);
}

CVar sen_edges_all(Tape& t, const ScenarioConfig& config,
                   const ChannelSet& channels, const Topology& topo,
                   const PrecoderOut& prec) {
  std::vector<CVar> parts;
  parts.reserve(config.J);
  int tt = 0;
  for (int j = 0; j < config.J; ++j) {
    if (topo.kappa[j]) {
      parts.push_back(sen_edges_tx(t, config, channels, j, prec.w_tx[tt++]));
    } else {
      // A silent AP has zero beams, so every antenna response clamps to the
      // floor and the sum collapses to the constant N_s/eps.
      parts.push_back(const_cvar(
          t, Tensor({config.J - 1},
                    static_cast<double>(config.N_s) / kReciprocalEps)));
    }
  }
  return cconcat(parts);
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

std::pair<std::vector<int>, std::vector<int>> init_heuristic(
    const ScenarioConfig& config, const ChannelSet& channels) {
  std::vector<int> kappa = heuristic_kappa(config, channels);
  std::vector<int> Lambda = heuristic_lambda(config, channels, kappa);
  return {std::move(kappa), std::move(Lambda)};
}

cdouble clamped_reciprocal(cdouble z, double eps) {
  if (eps <= 0.0)
    throw std::invalid_argument("clamped_reciprocal: eps must be positive");
  const double m = std::hypot(z.real(), z.imag());
  if (m == 0.0) return {1.0 / eps, 0.0};
  double re = z.real(), im = z.imag();
  if (m < eps) {
    const double f = eps / m;
    re *= f;
    im *= f;
  }
  const double d = re * re + im * im;
  return {re / d, -im / d};
}

EdgeInit g2_edges_host(const ScenarioConfig& config, const ChannelSet& channels,
                       const std::vector<cdouble>& W) {
  const int J = config.J, K = config.K, M = config.M, N_s = config.N_s;
  const int cols = M + K;
  if (W.size() != static_cast<std::size_t>(J) * N_s * M * cols)
    throw std::invalid_argument("g2_edges_host: precoder block size mismatch");

  EdgeInit out;
  out.s_com.assign(static_cast<std::size_t>(J) * K, {0.0, 0.0});
  out.s_sen.assign(static_cast<std::size_t>(J) * (J - 1), {0.0, 0.0});

  for (int j = 0; j < J; ++j)
    for (int k = 0; k < K; ++k) {
      cdouble acc{0.0, 0.0};
      for (int i = 0; i < N_s; ++i) {
        const cdouble* h = channels.h_at(j, i, k);
        for (int m = 0; m < M; ++m)
          acc += std::conj(h[m]) * W[idx4(j, i, m, M + k, N_s, M, cols)];
      }
      out.s_com[idx2(j, k, K)] = acc;
    }

  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l) {
      if (l == j) continue;
      const cdouble* G = channels.G_at(j, l);
      cdouble acc{0.0, 0.0};
      for (int n = 0; n < M; ++n)
        for (int i = 0; i < N_s; ++i)
          for (int m = 0; m < M; ++m) {
            cdouble denom{0.0, 0.0};
            for (int mm = 0; mm < M; ++mm)
              denom += G[n * M + mm] * W[idx4(j, i, mm, m, N_s, M, cols)];
            acc += clamped_reciprocal(denom, kReciprocalEps);
          }
      out.s_sen[sen_index(j, l, J)] = acc / static_cast<double>(M * M);
    }
  return out;
}

EdgeInitVar g2_edges_on_tape(Tape& t, const ScenarioConfig& config,
                             const ChannelSet& channels, const Topology& topo,
                             const PrecoderOut& prec) {
  return {com_edges_all(t, config, channels, topo, prec),
          sen_edges_all(t, config, channels, topo, prec)};
}

std::vector<cdouble> update_sensing_host(const ScenarioConfig& config,
                                         const ChannelSet& channels,
                                         const Topology& topo,
                                         const std::vector<cdouble>& W,
                                         const EchoTensor& echo,
                                         const std::vector<cdouble>& prev) {
  const int J = config.J, M = config.M, N_s = config.N_s, L = config.L;
  const int cols = M + config.K;
  if (prev.size() != static_cast<std::size_t>(J) * (J - 1))
    throw std::invalid_argument("update_sensing_host: state size mismatch");
  if (W.size() != static_cast<std::size_t>(J) * N_s * M * cols)
    throw std::invalid_argument("update_sensing_host: precoder size mismatch");

  std::vector<int> rx_pos(J, -1);
  for (int r = 0; r < static_cast<int>(echo.rx_ids.size()); ++r)
    rx_pos[echo.rx_ids[r]] = r;

  // Symbol-summed echo per (rx, subcarrier, antenna).
  std::vector<cdouble> num(static_cast<std::size_t>(echo.R) * N_s * M);
  for (int r = 0; r < echo.R; ++r)
    for (int i = 0; i < N_s; ++i)
      for (int m = 0; m < M; ++m) {
        cdouble s{0.0, 0.0};
        for (int l = 0; l < L; ++l) s += echo.Y[idx4(r, i, l, m, N_s, L, M)];
        num[idx3(r, i, m, N_s, M)] = s;
      }

  std::vector<cdouble> out(prev);
  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l) {
      if (l == j) continue;
      const int ri = rx_pos[l];
      // Transmit neighbors record no echo, their numerators vanish.
      if (ri < 0) continue;
      cdouble acc{0.0, 0.0};
      if (topo.kappa[j]) {
        const cdouble* G = channels.G_at(j, l);
        for (int n = 0; n < M; ++n)
          for (int i = 0; i < N_s; ++i)
            for (int m = 0; m < M; ++m) {
              cdouble denom{0.0, 0.0};
              for (int mm = 0; mm < M; ++mm)
                denom += G[n * M + mm] * W[idx4(j, i, mm, m, N_s, M, cols)];
              acc += num[idx3(ri, i, m, N_s, M)] *
                     clamped_reciprocal(denom, kReciprocalEps);
            }
      } else {
        // All denominators clamp, the weights collapse to 1/eps.
        cdouble tot{0.0, 0.0};
        for (int i = 0; i < N_s; ++i)
          for (int m = 0; m < M; ++m) tot += num[idx3(ri, i, m, N_s, M)];
        acc = tot * (static_cast<double>(M) / kReciprocalEps);
      }
      out[sen_index(j, l, J)] += acc / static_cast<double>(M * M);
    }
  return out;
}

CVar update_sensing_on_tape(Tape& t, const ScenarioConfig& config,
                            const ChannelSet& channels, const Topology& topo,
                            const PrecoderOut& prec, CVar echo, CVar prev) {
  const int J = config.J, M = config.M, N_s = config.N_s, L = config.L;
  const int cols = M + config.K;
  const int R = static_cast<int>(topo.rx_ids.size());
  const int Bs = N_s * L * M;
  if (echo.re.value().data.size() != static_cast<std::size_t>(R) * Bs)
    throw std::invalid_argument("update_sensing_on_tape: echo size mismatch");

  std::vector<int> rx_pos(J, -1);
  for (int r = 0; r < R; ++r) rx_pos[topo.rx_ids[r]] = r;

  // Symbol summation as one selector product per receive AP.
  Tensor lsum({N_s * M, Bs});
  for (int i = 0; i < N_s; ++i)
    for (int l = 0; l < L; ++l)
      for (int m = 0; m < M; ++m)
        lsum.data[idx2(i * M + m, (i * L + l) * M + m, Bs)] = 1.0;
  CVar Lc = const_cvar(t, std::move(lsum));
  std::vector<CVar> numrows;
  numrows.reserve(R);
  for (int r = 0; r < R; ++r)
    numrows.push_back(creshape(
        nn::cmatmul(Lc, creshape(cslice(echo, static_cast<std::int64_t>(r) * Bs,
                                        Bs),
                                 {Bs, 1})),
        {N_s * M}));
  CVar num_mat = creshape(cconcat(numrows), {R, N_s * M});
  CVar tot = nn::cmatmul(num_mat, cones_column(t, N_s * M));  // [R x 1]

  std::vector<CVar> rows;
  rows.reserve(J);
  int tt = 0;
  for (int j = 0; j < J; ++j) {
    if (topo.kappa[j]) {
      const CVar& w = prec.w_tx[tt++];
      CVar Gc = nn::cvar(t.constant(sen_g_part(channels, j, false)),
                         t.constant(sen_g_part(channels, j, true)));
      CVar Es = const_cvar(t, edge_row_sum(J, M));
      Tensor rex({(J - 1) * M, R});
      int li = 0;
      for (int l = 0; l < J; ++l) {
        if (l == j) continue;
        const int ri = rx_pos[l];
        if (ri >= 0)
          for (int n = 0; n < M; ++n) rex.data[idx2(li * M + n, ri, R)] = 1.0;
        ++li;
      }
      CVar Rex = const_cvar(t, std::move(rex));
      CVar acc;
      for (int i = 0; i < N_s; ++i) {
        std::vector<std::int64_t> nidx(static_cast<std::size_t>(R) * M);
        for (int r = 0; r < R; ++r)
          for (int m = 0; m < M; ++m)
            nidx[static_cast<std::size_t>(r) * M + m] =
                static_cast<std::int64_t>(r) * N_s * M + i * M + m;
        CVar Ni = nn::cmatmul(Rex, gather_cvar(num_mat, nidx, {R, M}));
        CVar Wr = gather_cvar(w, radar_gather(i, M, cols), {M, M});
        CVar Rinv = nn::creciprocal(nn::cmatmul(Gc, Wr), kReciprocalEps);
        CVar red =
            nn::cmatmul(nn::cmatmul(Es, nn::cmul(Ni, Rinv)), cones_column(t, M));
        acc = (i == 0) ? red : nn::cadd(acc, red);
      }
      rows.push_back(creshape(nn::cscale(acc, 1.0 / (M * M)), {J - 1}));
    } else {
      // Silent origin: every denominator clamps, leaving the symbol-summed
      // echo energy at each receive neighbor over M * eps.
      Tensor sel({J - 1, R});
      int li = 0;
      for (int l = 0; l < J; ++l) {
        if (l == j) continue;
        const int ri = rx_pos[l];
        if (ri >= 0) sel.data[idx2(li, ri, R)] = 1.0 / (M * kReciprocalEps);
        ++li;
      }
      rows.push_back(
          creshape(nn::cmatmul(const_cvar(t, std::move(sel)), tot), {J - 1}));
    }
  }
  return nn::cadd(cconcat(rows), prev);
}

G1Out g1_forward(Tape& t, nn::ParamStore& ps, const ScenarioConfig& config,
                 const std::string& prefix, const NodeStates& states,
                 const Topology& topo, const std::vector<int>& kappa,
                 const std::vector<int>& Lambda, const Var* kappa_gate,
                 const Var* lambda_gate, double alpha, int depth) {
  const int J = config.J, K = config.K;
  const int T = static_cast<int>(topo.tx_ids.size());
  if (kappa.size() != static_cast<std::size_t>(J) ||
      Lambda.size() != static_cast<std::size_t>(J) * K)
    throw std::invalid_argument("g1_forward: assignment size mismatch");
  if ((kappa_gate == nullptr) != (lambda_gate == nullptr))
    throw std::invalid_argument("g1_forward: pass both gates or neither");

  // Assignment prior per query row: (1-kappa) over the AP columns, the
  // origin's association row over the CU columns. Straight-through gates
  // keep it differentiable; without them it is a constant.
  Var prior;
  if (kappa_gate) {
    Var invk = nn::sub(t.constant(Tensor({J}, 1.0)), *kappa_gate);
    Var ap_part = nn::matmul(ones_column(t, T), nn::reshape(invk, {1, J}));
    Var cu_part = nn::gather_rows(*lambda_gate, topo.tx_ids);
    prior = hstack2(ap_part, cu_part);
  } else {
    Tensor pr({T, J + K});
    for (int tt = 0; tt < T; ++tt) {
      for (int j = 0; j < J; ++j) pr.data[idx2(tt, j, J + K)] = 1.0 - kappa[j];
      const int j = topo.tx_ids[tt];
      for (int k = 0; k < K; ++k)
        pr.data[idx2(tt, J + k, J + K)] = Lambda[idx2(j, k, K)];
    }
    prior = t.constant(std::move(pr));
  }

  NodeStates st = states;
  Var attention;
  for (int tau = 0; tau < depth; ++tau) {
    const std::string pfx = prefix + "g1.l" + std::to_string(tau) + ".";
    auto mat = [&](const char* name) { return ps.param(t, pfx + name, {D, D}); };
    Var ap_states = states_by_ap(t, topo, st.tx, st.rx);
    Var q = nn::matmul(st.tx, mat("query.w"));
    Var keys = vstack({nn::matmul(ap_states, mat("key.ap.w")),
                       nn::matmul(st.cu, mat("key.cu.w"))},
                      J + K, D);
    Var soft = nn::softmax_rows(
        nn::matmul(q, nn::transpose(nn::matmul(keys, mat("att.w")))));
    Var att =
        nn::add(nn::mul_scalar(soft, alpha), nn::mul_scalar(prior, 1.0 - alpha));
    Var vals = vstack({nn::matmul(ap_states, mat("val.ap.w")),
                       nn::matmul(st.cu, mat("val.cu.w"))},
                      J + K, D);
    st.tx = nn::add(st.tx,
                    nn::matmul(nn::leaky_relu(nn::matmul(att, vals)), mat("agg.w")));
    attention = att;
  }
  return {std::move(st), attention};
}

G2Out g2_forward(Tape& t, nn::ParamStore& ps, const ScenarioConfig& config,
                 const std::string& prefix, const EdgeInitVar& edges) {
  const int J = config.J, K = config.K, K_u = config.K_u, R = config.R;
  if (J < 2) throw std::invalid_argument("g2_forward: needs at least two APs");
  const int nc = J * K, ns = J * (J - 1);
  const int cols = K + (J - 1);

  Var com_feat = edge_feature_rows(edges.s_com, nc);
  Var sen_feat = edge_feature_rows(edges.s_sen, ns);
  com_feat = nn::mul_scalar(com_feat, inv_rms(com_feat));
  sen_feat = nn::mul_scalar(sen_feat, inv_rms(sen_feat));

  Var Sc = nn::bias_add(
      nn::matmul(com_feat, ps.param(t, prefix + "g2.embed.com.w", {2, E})),
      ps.param(t, prefix + "g2.embed.com.b", {E}, nn::Init::kZeros));
  Var Ss = nn::bias_add(
      nn::matmul(sen_feat, ps.param(t, prefix + "g2.embed.sen.w", {2, E})),
      ps.param(t, prefix + "g2.embed.sen.b", {E}, nn::Init::kZeros));

  // Self-edges are masked out of their own softmax rows.
  Tensor mkc({K, cols}), mks({J - 1, cols});
  for (int k = 0; k < K; ++k) mkc.data[idx2(k, k, cols)] = -1e9;
  for (int e = 0; e < J - 1; ++e) mks.data[idx2(e, K + e, cols)] = -1e9;
  Var mask_c = t.constant(std::move(mkc));
  Var mask_s = t.constant(std::move(mks));

  Var att_com;
  for (int tau = 0; tau < kMirrorDepth2; ++tau) {
    const std::string pfx = prefix + "g2.l" + std::to_string(tau) + ".";
    auto mat = [&](const std::string& name) {
      return ps.param(t, pfx + name, {E, E});
    };
    Var u_com = ps.param(t, pfx + "u.com", {E, 1});
    Var u_sen = ps.param(t, pfx + "u.sen", {E, 1});
    Var w_att = mat("att.w");
    Var wq_c = mat("query.com.w"), wq_s = mat("query.sen.w");
    Var wk_c = mat("key.com.w"), wk_s = mat("key.sen.w");
    Var wv_c = mat("val.com.w"), wv_s = mat("val.sen.w");
    Var wa_c = mat("agg.com.w"), wa_s = mat("agg.sen.w");

    std::vector<Var> outc, outs, att_blocks;
    outc.reserve(J);
    outs.reserve(J);
    for (int j = 0; j < J; ++j) {
      Var rows_c = nn::gather_rows(Sc, block_rows(j * K, K));
      Var rows_s = nn::gather_rows(Ss, block_rows(j * (J - 1), J - 1));
      Var keys =
          vstack({nn::matmul(rows_c, wk_c), nn::matmul(rows_s, wk_s)}, cols, E);
      Var vals =
          vstack({nn::matmul(rows_c, wv_c), nn::matmul(rows_s, wv_s)}, cols, E);
      Var kw = nn::transpose(nn::matmul(keys, w_att));
      // Neighbor-state score shared by every query row of this AP.
      Var enh = nn::reshape(
          nn::concat({nn::matmul(rows_c, u_com), nn::matmul(rows_s, u_sen)}),
          {1, cols});

      Var sc_c = nn::add(nn::add(nn::matmul(nn::matmul(rows_c, wq_c), kw),
                                 nn::matmul(ones_column(t, K), enh)),
                         mask_c);
      Var ac = nn::softmax_rows(sc_c);
      outc.push_back(nn::add(
          rows_c, nn::matmul(nn::softmax_rows(nn::matmul(ac, vals)), wa_c)));

      Var sc_s = nn::add(nn::add(nn::matmul(nn::matmul(rows_s, wq_s), kw),
                                 nn::matmul(ones_column(t, J - 1), enh)),
                         mask_s);
      Var as = nn::softmax_rows(sc_s);
      outs.push_back(nn::add(
          rows_s, nn::matmul(nn::softmax_rows(nn::matmul(as, vals)), wa_s)));

      if (tau + 1 == kMirrorDepth2) att_blocks.push_back(ac);
    }
    Sc = vstack(outc, nc, E);
    Ss = vstack(outs, ns, E);
    if (tau + 1 == kMirrorDepth2) att_com = vstack(att_blocks, nc, cols);
  }

  // AP scores from the mean of each AP's incident sensing edges.
  Tensor msel({J, ns});
  const double wgt = 1.0 / (2.0 * (J - 1));
  for (int j = 0; j < J; ++j)
    for (int l = 0; l < J; ++l) {
      if (l == j) continue;
      msel.data[idx2(j, sen_index(j, l, J), ns)] += wgt;  // outgoing
      msel.data[idx2(j, sen_index(l, j, J), ns)] += wgt;  // incoming
    }
  Var ap_scores = nn::reshape(
      nn::bias_add(nn::matmul(nn::matmul(t.constant(std::move(msel)), Ss),
                              ps.param(t, prefix + "g2.read.sen.w", {E, 1})),
                   ps.param(t, prefix + "g2.read.sen.b", {1}, nn::Init::kZeros)),
      {J});
  Var cu_scores = nn::reshape(
      nn::bias_add(nn::matmul(Sc, ps.param(t, prefix + "g2.read.com.w", {E, 1})),
                   ps.param(t, prefix + "g2.read.com.b", {1}, nn::Init::kZeros)),
      {J, K});

  G2Out out;
  out.kappa.assign(J, 0);
  for (int j : top_k_indices(ap_scores.value().data, J - R)) out.kappa[j] = 1;
  Tensor hard_k({J});
  for (int j = 0; j < J; ++j) hard_k.data[j] = out.kappa[j];
  out.kappa_ste = nn::straight_through(
      nn::reshape(nn::softmax_rows(nn::reshape(ap_scores, {1, J})), {J}),
      std::move(hard_k));

  out.Lambda.assign(static_cast<std::size_t>(J) * K, 0);
  const std::vector<double>& cs = cu_scores.value().data;
  for (int j = 0; j < J; ++j) {
    if (!out.kappa[j]) continue;
    std::vector<double> row(cs.begin() + static_cast<std::size_t>(j) * K,
                            cs.begin() + static_cast<std::size_t>(j + 1) * K);
    for (int k : top_k_indices(row, K_u)) out.Lambda[idx2(j, k, K)] = 1;
  }
  Tensor hard_l({J, K});
  for (int e = 0; e < J * K; ++e) hard_l.data[e] = out.Lambda[e];
  out.lambda_ste =
      nn::straight_through(nn::softmax_rows(cu_scores), std::move(hard_l));

  out.com_states = Sc;
  out.sen_states = Ss;
  out.com_attention = att_com;
  return out;
}

void check_shared_adjacency(const ScenarioConfig& config) {
  const int J = config.J, K = config.K;
  for (int j = 0; j < J; ++j) {
    // Precoding graph: keys cover every AP state; drop the zero-prior self
    // column to get the effective neighbor set.
    std::vector<int> g1_aps, g2_aps;
    for (int l = 0; l < J; ++l)
      if (l != j) g1_aps.push_back(l);
    // Association graph: one sensing edge per ordered AP pair.
    for (int l = 0; l < J; ++l)
      if (l != j) g2_aps.push_back(l);
    if (g1_aps != g2_aps)
      throw std::logic_error("graph adjacency mismatch on AP neighbors");

    std::vector<int> g1_cus(K), g2_cus(K);
    for (int k = 0; k < K; ++k) g1_cus[k] = k;   // one key per CU state
    for (int k = 0; k < K; ++k) g2_cus[k] = k;   // one edge per served CU slot
    if (g1_cus != g2_cus)
      throw std::logic_error("graph adjacency mismatch on CU neighbors");
  }
}

EpisodeResult mirror_episode(Tape& t, nn::ParamStore& ps,
                             const ScenarioConfig& config, const Placement& p,
                             const ChannelSet& channels,
                             const BistaticGeometry& geo,
                             const MirrorOptions& opts) {
  const std::string prefix = "mir.";
  const int J = config.J, K = config.K;
  check_shared_adjacency(config);

  if ((opts.frozen_kappa == nullptr) != (opts.frozen_lambda == nullptr))
    throw std::invalid_argument(
        "mirror_episode: freeze needs both kappa and Lambda");
  const bool frozen = opts.frozen_kappa != nullptr;

  EdgeFeatures feat = edge_features(channels);
  const std::vector<cdouble> s_r = radar_symbols(config, default_zc_roots(config));

  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path);
    if (!csv)
      throw std::runtime_error("mirror_episode: cannot open " + opts.csv_path);
    csv << "n,kappa,lambda,R_c,rmse_p,rmse_v\n";
  }

  std::vector<int> kappa, Lambda;
  if (frozen) {
    kappa = *opts.frozen_kappa;
    Lambda = *opts.frozen_lambda;
    topology_from_kappa(kappa, config);  // validates the frozen modes
    if (Lambda.size() != static_cast<std::size_t>(J) * K)
      throw std::invalid_argument("mirror_episode: frozen Lambda size");
    for (int j = 0; j < J; ++j) {
      int served = 0;
      for (int k = 0; k < K; ++k) {
        const int v = Lambda[idx2(j, k, K)];
        if (v != 0 && v != 1)
          throw std::invalid_argument("mirror_episode: frozen Lambda entries");
        served += v;
      }
      if (served > config.K_u || (!kappa[j] && served > 0))
        throw std::invalid_argument("mirror_episode: frozen Lambda rows");
    }
  } else {
    std::tie(kappa, Lambda) = init_heuristic(config, channels);
  }

  CVar radar_c;
  if (opts.physics_on_tape)
    radar_c = nn::cconstant(t, {static_cast<int>(s_r.size())}, s_r);

  EpisodeResult res;
  CVar prev_echo;
  bool have_echo = false;
  Var kgate, lgate;
  bool have_gate = false;
  CVar sen_taped;
  std::vector<cdouble> sen_host;
  bool have_sen = false;

  for (int nm = 0; nm < config.N_m; ++nm) {
    Topology topo = topology_from_kappa(kappa, config);
    const int T = static_cast<int>(topo.tx_ids.size());
    NodeStates st =
        have_echo
            ? enhanced_node_states(t, ps, config, feat, topo, prefix, prev_echo)
            : init_node_states(t, ps, feat, topo, prefix);

    G1Out g1 = g1_forward(t, ps, config, prefix, st, topo, kappa, Lambda,
                          have_gate ? &kgate : nullptr,
                          have_gate ? &lgate : nullptr);

    AssociationOut assoc;
    assoc.Lambda = Lambda;
    if (have_gate) {
      assoc.lambda_ste = nn::gather_rows(lgate, topo.tx_ids);
    } else {
      Tensor lam({T, K});
      for (int tt = 0; tt < T; ++tt)
        for (int k = 0; k < K; ++k)
          lam.data[idx2(tt, k, K)] = Lambda[idx2(topo.tx_ids[tt], k, K)];
      assoc.lambda_ste = t.constant(std::move(lam));
    }
    PrecoderOut prec =
        precoder_head(t, ps, config, prefix, topo, g1.states.tx, assoc);

    const auto s_c = comm_symbols(config, split_seed(opts.seed, 200 + nm));
    const EchoDraws draws =
        make_echo_draws(config, p, split_seed(opts.seed, 100 + nm));

    SnapshotStep step;
    step.n = nm;
    step.kappa = kappa;
    step.Lambda = Lambda;
    step.W = prec.W;

    const bool carry = nm + 1 < config.N_m;
    G2Out g2;
    bool ran_g2 = false;
    if (opts.physics_on_tape) {
      CVar sen0;
      if (!frozen) {
        EdgeInitVar ed{
            com_edges_all(t, config, channels, topo, prec),
            have_sen ? sen_taped
                     : sen_edges_all(t, config, channels, topo, prec)};
        sen0 = ed.s_sen;
        g2 = g2_forward(t, ps, config, prefix, ed);
        ran_g2 = true;
      }
      auto X = emissions_on_tape(t, config, topo, prec, s_c, s_r,
                                 have_gate ? &kgate : nullptr);
      CVar echo = echo_on_tape(t, config, p, geo, channels, topo, X, draws);
      Var fin = fusion_input(t, config, echo, radar_c);
      step.est = cpu_fuse(t, ps, config, extract_compress(t, ps, config, fin));
      step.rate = rate_on_tape(t, config, channels, topo, prec, Lambda);
      if (carry) {
        if (!frozen) {
          sen_taped = update_sensing_on_tape(t, config, channels, topo, prec,
                                             echo, sen0);
          have_sen = true;
        }
        prev_echo = echo;
        have_echo = true;
      }
    } else {
      auto x = assemble_tx(config, kappa, Lambda, prec.W, s_c, s_r);
      EchoTensor echo = synthesize_echo(p, geo, channels, x, kappa, config, draws);
      if (!frozen) {
        EdgeInit ed = g2_edges_host(config, channels, prec.W);
        if (have_sen) ed.s_sen = sen_host;
        EdgeInitVar edv{nn::cconstant(t, {J * K}, ed.s_com),
                        nn::cconstant(t, {J * (J - 1)}, ed.s_sen)};
        g2 = g2_forward(t, ps, config, prefix, edv);
        ran_g2 = true;
        if (carry) {
          sen_host = update_sensing_host(config, channels, topo, prec.W, echo,
                                         ed.s_sen);
          have_sen = true;
        }
      }
      step.est = fusion_forward(t, ps, config, echo, s_r);
      CommReport rep = sinr_report(channels, prec.W, kappa, Lambda,
                                   config.sigma_c2, MuMode::kCorrected);
      step.rate = t.constant(Tensor::scalar(rep.R_c));
      if (carry) {
        prev_echo = nn::cconstant(t, {static_cast<int>(echo.Y.size())}, echo.Y);
        have_echo = true;
      }
    }

    step.est_pos = step.est.positions.value().data;
    step.est_vel = step.est.velocities.value().data;
    step.R_c = step.rate.value().item();
    TargetMatch tm =
        match_targets(var_to_points(step.est.positions),
                      var_to_points(step.est.velocities), p.tgt_pos, p.tgt_vel,
                      config.omega);
    step.rmse_p = tm.rmse_p;
    step.rmse_v = tm.rmse_v;
    if (csv.is_open()) log_snapshot(csv, step, K);

    if (carry && ran_g2) {
      int total = 0;
      for (int v : g2.kappa) total += v;
      if (total != J - config.R)
        throw std::logic_error("mirror_episode: bad transmit count from g2");
      kappa = g2.kappa;
      Lambda = g2.Lambda;
      kgate = g2.kappa_ste;
      lgate = g2.lambda_ste;
      have_gate = true;
    }
    res.steps.push_back(std::move(step));
  }
  return res;
}

}  // namespace cfisac
