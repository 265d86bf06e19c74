#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfisac/channel.hpp"
#include "cfisac/comm_metrics.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/graph_dynamic.hpp"
#include "cfisac/mirror_gat.hpp"
#include "cfisac/precoders.hpp"
#include "cfisac/rng.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/waveform.hpp"
#include "test_support.hpp"

using namespace cfisac;
using test::max_abs_diff;
using test::tiny_config;

namespace {

constexpr int D = kHiddenWidth;

struct TinyWorld {
  ScenarioConfig cfg;
  Placement p;
  ChannelSet channels;
  BistaticGeometry geo;
  EdgeFeatures feat;
};

TinyWorld make_world(std::uint64_t seed = 11) {
  TinyWorld w;
  w.cfg = tiny_config();
  w.p = sample_scenario(w.cfg, seed);
  w.channels = build_channels(w.p, w.cfg, split_seed(seed, 1));
  w.geo = bistatic_geometry(w.p, w.cfg);
  w.feat = edge_features(w.channels);
  return w;
}

nn::Var random_const(nn::Tape& t, std::vector<int> shape, std::uint64_t seed) {
  nn::Tensor v(shape);
  Rng rng(seed);
  for (double& x : v.data) x = rng.normal();
  return t.constant(std::move(v));
}

AssociationOut manual_assoc(nn::Tape& t, const ScenarioConfig& cfg,
                            const Topology& topo, std::uint64_t seed) {
  const int T = static_cast<int>(topo.tx_ids.size());
  nn::Tensor soft({T, cfg.K});
  Rng rng(seed);
  for (double& x : soft.data) x = rng.uniform();
  nn::Tensor hard({T, cfg.K});
  AssociationOut out;
  out.Lambda.assign(static_cast<std::size_t>(cfg.J) * cfg.K, 0);
  for (int tt = 0; tt < T; ++tt) {
    std::vector<double> row(soft.data.begin() + tt * cfg.K,
                            soft.data.begin() + (tt + 1) * cfg.K);
    for (int k : top_k_indices(row, cfg.K_u)) {
      hard.data[idx2(tt, k, cfg.K)] = 1.0;
      out.Lambda[idx2(topo.tx_ids[tt], k, cfg.K)] = 1;
    }
  }
  out.lambda_ste = nn::straight_through(t.constant(soft), hard);
  return out;
}

std::vector<cdouble> cvar_values(const nn::CVar& v) {
  const auto& re = v.re.value().data;
  const auto& im = v.im.value().data;
  std::vector<cdouble> out(re.size());
  for (std::size_t i = 0; i < re.size(); ++i) out[i] = {re[i], im[i]};
  return out;
}

double max_crel(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
  double m = a.size() == b.size() ? 0.0 : 1e300;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    m = std::max(m, std::abs(a[i] - b[i]) / scale);
  }
  return m;
}

int sen_edge(int j, int l, int J) { return j * (J - 1) + (l < j ? l : l - 1); }

/// Tape-backed precoders for a fixed topology, plus the matching host W.
struct PrecSetup {
  Topology topo;
  AssociationOut assoc;
  PrecoderOut prec;
};

PrecSetup make_precoders(nn::Tape& t, nn::ParamStore& ps, const TinyWorld& w,
                         std::vector<int> kappa, std::uint64_t seed) {
  PrecSetup s;
  s.topo = topology_from_kappa(kappa, w.cfg);
  const int T = static_cast<int>(s.topo.tx_ids.size());
  nn::Var tx = random_const(t, {T, D}, seed);
  s.assoc = manual_assoc(t, w.cfg, s.topo, split_seed(seed, 1));
  s.prec = precoder_head(t, ps, w.cfg, "mir.", s.topo, tx, s.assoc);
  return s;
}

}  // namespace

TEST_CASE("heuristic start pairs the mode and association pickers") {
  TinyWorld w = make_world(31);
  auto [kappa, Lambda] = init_heuristic(w.cfg, w.channels);
  CHECK(kappa == heuristic_kappa(w.cfg, w.channels));
  CHECK(Lambda == heuristic_lambda(w.cfg, w.channels, kappa));
  int total = 0;
  for (int v : kappa) total += v;
  CHECK(total == w.cfg.T);
  for (int j = 0; j < w.cfg.J; ++j) {
    int served = 0;
    for (int k = 0; k < w.cfg.K; ++k) served += Lambda[idx2(j, k, w.cfg.K)];
    CHECK(served == (kappa[j] ? w.cfg.K_u : 0));
  }
}

TEST_CASE("reciprocal clamp floors the magnitude and keeps the phase") {
  const double eps = 1e-6;
  CHECK(clamped_reciprocal({0.0, 0.0}, eps) == cdouble{1e6, 0.0});
  CHECK(clamped_reciprocal({1e-9, 0.0}, eps) == cdouble{1e6, 0.0});

  // Small complex input: the result has magnitude 1/eps and the conjugate
  // phase of the input.
  const cdouble z = 1e-8 * std::polar(1.0, 0.7);
  const cdouble r = clamped_reciprocal(z, eps);
  CHECK(std::abs(std::abs(r) - 1e6) <= 1e-3);
  CHECK(std::abs(r - std::conj(std::polar(1.0, 0.7)) * 1e6) <= 1e-3);

  // Ordinary input: plain reciprocal.
  const cdouble a = clamped_reciprocal({3.0, 4.0}, eps);
  CHECK(a.real() == doctest::Approx(0.12).epsilon(1e-14));
  CHECK(a.imag() == doctest::Approx(-0.16).epsilon(1e-14));

  CHECK_THROWS_AS(clamped_reciprocal({1.0, 0.0}, 0.0), std::invalid_argument);

  // Bitwise agreement with the taped clamp.
  nn::Tape t;
  std::vector<cdouble> probes = {{0.0, 0.0}, {2e-7, -3e-7}, {0.5, -1.25}};
  nn::CVar c = nn::creciprocal(
      nn::cconstant(t, {static_cast<int>(probes.size())}, probes), eps);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const cdouble want = clamped_reciprocal(probes[i], eps);
    CHECK(c.re.value().data[i] == want.real());
    CHECK(c.im.value().data[i] == want.imag());
  }
}

TEST_CASE("edge features on a unit single-subcarrier link are pinned") {
  ScenarioConfig cfg;
  cfg.J = 2;
  cfg.K = 2;
  cfg.M = 1;
  cfg.N_s = 1;

  ChannelSet ch;
  ch.J = 2;
  ch.N_s = 1;
  ch.K = 2;
  ch.M = 1;
  ch.h.assign(4, {0.0, 0.0});
  ch.h[idx4(0, 0, 0, 0, 1, 2, 1)] = {1.0, 0.0};
  ch.G.assign(4, {0.0, 0.0});
  ch.G[idx4(0, 1, 0, 0, 2, 1, 1)] = {2.0, 0.0};

  // AP 0 sends the radar stream at 0.5 and serves CU 0 at gain 1; AP 1 is
  // silent.
  std::vector<cdouble> W(6, {0.0, 0.0});
  W[idx4(0, 0, 0, 0, 1, 1, 3)] = {0.5, 0.0};
  W[idx4(0, 0, 0, 1, 1, 1, 3)] = {1.0, 0.0};

  EdgeInit ed = g2_edges_host(cfg, ch, W);
  CHECK(ed.s_com[0] == cdouble{1.0, 0.0});
  CHECK(ed.s_com[1] == cdouble{0.0, 0.0});
  CHECK(ed.s_com[2] == cdouble{0.0, 0.0});
  CHECK(ed.s_com[3] == cdouble{0.0, 0.0});
  // Beam response 2 * 0.5 = 1 reciprocates to 1; the silent AP clamps.
  CHECK(ed.s_sen[0] == cdouble{1.0, 0.0});
  CHECK(ed.s_sen[1] == cdouble{1.0 / kReciprocalEps, 0.0});
}

TEST_CASE("zero precoders collapse the sensing features to the clamp") {
  TinyWorld w = make_world(17);
  const int cols = w.cfg.M + w.cfg.K;
  std::vector<cdouble> W(
      static_cast<std::size_t>(w.cfg.J) * w.cfg.N_s * w.cfg.M * cols,
      {0.0, 0.0});
  EdgeInit ed = g2_edges_host(w.cfg, w.channels, W);
  for (const cdouble& c : ed.s_com) CHECK(c == cdouble{0.0, 0.0});
  const cdouble want{w.cfg.N_s / kReciprocalEps, 0.0};
  for (const cdouble& c : ed.s_sen) CHECK(c == want);
}

TEST_CASE("taped edge features match the host kernels") {
  TinyWorld w = make_world(19);
  nn::ParamStore ps(20);
  nn::Tape t;
  PrecSetup s = make_precoders(t, ps, w, {1, 1, 1, 0}, 21);

  EdgeInit host = g2_edges_host(w.cfg, w.channels, s.prec.W);
  EdgeInitVar taped = g2_edges_on_tape(t, w.cfg, w.channels, s.topo, s.prec);

  CHECK(max_crel(cvar_values(taped.s_com), host.s_com) <= 1e-12);
  CHECK(max_crel(cvar_values(taped.s_sen), host.s_sen) <= 1e-9);

  // The silent AP's rows are exact constants.
  const int J = w.cfg.J;
  auto sen = cvar_values(taped.s_sen);
  for (int e = 0; e < J - 1; ++e)
    CHECK(sen[sen_edge(3, e, J)] == cdouble{w.cfg.N_s / kReciprocalEps, 0.0});
  auto com = cvar_values(taped.s_com);
  for (int k = 0; k < w.cfg.K; ++k)
    CHECK(com[idx2(3, k, w.cfg.K)] == cdouble{0.0, 0.0});
}

TEST_CASE("sensing update is inert without echo energy") {
  TinyWorld w = make_world(23);
  Topology topo = topology_from_kappa({1, 1, 1, 0}, w.cfg);
  const int cols = w.cfg.M + w.cfg.K;
  std::vector<cdouble> W(
      static_cast<std::size_t>(w.cfg.J) * w.cfg.N_s * w.cfg.M * cols);
  Rng rng(24);
  for (cdouble& c : W) c = rng.cnormal();

  EchoTensor echo;
  echo.R = 1;
  echo.N_s = w.cfg.N_s;
  echo.L = w.cfg.L;
  echo.M = w.cfg.M;
  echo.rx_ids = {3};
  echo.Y.assign(static_cast<std::size_t>(1) * w.cfg.N_s * w.cfg.L * w.cfg.M,
                {0.0, 0.0});

  std::vector<cdouble> prev(static_cast<std::size_t>(w.cfg.J) * (w.cfg.J - 1));
  for (cdouble& c : prev) c = rng.cnormal();

  auto out = update_sensing_host(w.cfg, w.channels, topo, W, echo, prev);
  CHECK(max_abs_diff(out, prev) == 0.0);
}

TEST_CASE("sensing update adds the same increment on identical echoes") {
  ScenarioConfig cfg = tiny_config();
  cfg.T = 2;
  cfg.R = 2;
  cfg.validate();
  Placement p = sample_scenario(cfg, 25);
  ChannelSet ch = build_channels(p, cfg, 26);
  Topology topo = topology_from_kappa({1, 1, 0, 0}, cfg);

  const int cols = cfg.M + cfg.K;
  Rng rng(27);
  std::vector<cdouble> W(static_cast<std::size_t>(cfg.J) * cfg.N_s * cfg.M * cols);
  for (cdouble& c : W) c = rng.cnormal();

  EchoTensor echo;
  echo.R = 2;
  echo.N_s = cfg.N_s;
  echo.L = cfg.L;
  echo.M = cfg.M;
  echo.rx_ids = {2, 3};
  echo.Y.assign(static_cast<std::size_t>(2) * cfg.N_s * cfg.L * cfg.M, {});
  for (cdouble& c : echo.Y) c = rng.cnormal();

  std::vector<cdouble> prev(static_cast<std::size_t>(cfg.J) * (cfg.J - 1));
  for (cdouble& c : prev) c = rng.cnormal();

  auto out1 = update_sensing_host(cfg, ch, topo, W, echo, prev);
  auto out2 = update_sensing_host(cfg, ch, topo, W, echo, out1);
  for (std::size_t e = 0; e < prev.size(); ++e) {
    const cdouble d1 = out1[e] - prev[e];
    const cdouble d2 = out2[e] - out1[e];
    CHECK(std::abs(d1 - d2) <= 1e-9 * std::max(1.0, std::abs(d1)));
  }

  // A silent origin weights the symbol-summed echo by 1/(M eps).
  const int e = sen_edge(2, 3, cfg.J);
  cdouble tot{0.0, 0.0};
  for (int i = 0; i < cfg.N_s; ++i)
    for (int m = 0; m < cfg.M; ++m)
      for (int l = 0; l < cfg.L; ++l)
        tot += echo.Y[idx4(1, i, l, m, cfg.N_s, cfg.L, cfg.M)];
  const cdouble want = tot / (cfg.M * kReciprocalEps);
  const cdouble got = out1[e] - prev[e];
  CHECK(std::abs(got - want) <= 1e-9 * std::abs(want));

  // Edges between two transmitters pick up nothing.
  CHECK(out1[sen_edge(0, 1, cfg.J)] == prev[sen_edge(0, 1, cfg.J)]);
}

TEST_CASE("taped sensing update matches the host update") {
  TinyWorld w = make_world(29);
  nn::ParamStore ps(30);
  nn::Tape t;
  PrecSetup s = make_precoders(t, ps, w, {1, 1, 1, 0}, 31);

  const auto s_r = radar_symbols(w.cfg, default_zc_roots(w.cfg));
  const auto s_c = comm_symbols(w.cfg, 32);
  auto x = assemble_tx(w.cfg, s.topo.kappa, s.assoc.Lambda, s.prec.W, s_c, s_r);
  EchoDraws draws = make_echo_draws(w.cfg, w.p, 33);
  EchoTensor echo =
      synthesize_echo(w.p, w.geo, w.channels, x, s.topo.kappa, w.cfg, draws);

  EdgeInit ed = g2_edges_host(w.cfg, w.channels, s.prec.W);
  auto host = update_sensing_host(w.cfg, w.channels, s.topo, s.prec.W, echo,
                                  ed.s_sen);

  nn::CVar echo_c =
      nn::cconstant(t, {static_cast<int>(echo.Y.size())}, echo.Y);
  nn::CVar prev_c = nn::cconstant(
      t, {static_cast<int>(ed.s_sen.size())}, ed.s_sen);
  nn::CVar taped = update_sensing_on_tape(t, w.cfg, w.channels, s.topo, s.prec,
                                          echo_c, prev_c);
  CHECK(max_crel(cvar_values(taped), host) <= 1e-9);
}

TEST_CASE("precoding graph blends learned attention with the prior") {
  TinyWorld w = make_world(37);
  const int J = w.cfg.J, K = w.cfg.K;
  Topology topo = topology_from_kappa({1, 1, 1, 0}, w.cfg);
  const int T = static_cast<int>(topo.tx_ids.size());
  std::vector<int> Lambda = heuristic_lambda(w.cfg, w.channels, topo.kappa);
  nn::ParamStore ps(38);

  auto states = [&](nn::Tape& t) {
    return NodeStates{random_const(t, {T, D}, 40), random_const(t, {1, D}, 41),
                      random_const(t, {K, D}, 42)};
  };

  // Pure learned attention: rows are a softmax and the association is
  // irrelevant.
  nn::Tape t1, t2;
  G1Out a = g1_forward(t1, ps, w.cfg, "mir.", states(t1), topo, topo.kappa,
                       Lambda, nullptr, nullptr, 1.0, 1);
  std::vector<int> other(Lambda);
  for (int j = 0; j < J; ++j)
    if (topo.kappa[j])
      for (int k = 0; k < K; ++k)
        other[idx2(j, k, K)] = Lambda[idx2(j, K - 1 - k, K)];
  G1Out b = g1_forward(t2, ps, w.cfg, "mir.", states(t2), topo, topo.kappa,
                       other, nullptr, nullptr, 1.0, 1);
  CHECK(a.attention.value().shape == std::vector<int>{T, J + K});
  for (int tt = 0; tt < T; ++tt) {
    double s = 0.0;
    for (int c = 0; c < J + K; ++c)
      s += a.attention.value().data[idx2(tt, c, J + K)];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  CHECK(max_abs_diff(a.attention.value().data, b.attention.value().data) == 0.0);

  // Pure prior: the printed assignment pattern, exactly.
  nn::Tape t3;
  G1Out c = g1_forward(t3, ps, w.cfg, "mir.", states(t3), topo, topo.kappa,
                       Lambda, nullptr, nullptr, 0.0, 1);
  for (int tt = 0; tt < T; ++tt) {
    for (int j = 0; j < J; ++j)
      CHECK(c.attention.value().data[idx2(tt, j, J + K)] ==
            1.0 - topo.kappa[j]);
    for (int k = 0; k < K; ++k)
      CHECK(c.attention.value().data[idx2(tt, J + k, J + K)] ==
            Lambda[idx2(topo.tx_ids[tt], k, K)]);
  }

  // Default blend: each row sums to half of (1 + listeners + served).
  nn::Tape t4;
  G1Out d = g1_forward(t4, ps, w.cfg, "mir.", states(t4), topo, topo.kappa,
                       Lambda);
  for (int tt = 0; tt < T; ++tt) {
    int served = 0;
    for (int k = 0; k < K; ++k) served += Lambda[idx2(topo.tx_ids[tt], k, K)];
    double s = 0.0;
    for (int col = 0; col < J + K; ++col)
      s += d.attention.value().data[idx2(tt, col, J + K)];
    CHECK(std::abs(s - 0.5 * (1 + w.cfg.R + served)) <= 1e-12);
  }
  CHECK(d.states.tx.value().shape == std::vector<int>{T, D});

  // Receive and user states pass through untouched.
  nn::Tape t5;
  NodeStates in = states(t5);
  G1Out e = g1_forward(t5, ps, w.cfg, "mir.", in, topo, topo.kappa, Lambda);
  CHECK(max_abs_diff(e.states.rx.value().data, in.rx.value().data) == 0.0);
  CHECK(max_abs_diff(e.states.cu.value().data, in.cu.value().data) == 0.0);
}

TEST_CASE("straight-through gates reproduce the constant prior exactly") {
  TinyWorld w = make_world(43);
  const int J = w.cfg.J, K = w.cfg.K;
  Topology topo = topology_from_kappa({1, 1, 1, 0}, w.cfg);
  const int T = static_cast<int>(topo.tx_ids.size());
  std::vector<int> Lambda = heuristic_lambda(w.cfg, w.channels, topo.kappa);
  nn::ParamStore ps(44);

  nn::Tape t1;
  NodeStates s1{random_const(t1, {T, D}, 45), random_const(t1, {1, D}, 46),
                random_const(t1, {K, D}, 47)};
  G1Out plain = g1_forward(t1, ps, w.cfg, "mir.", s1, topo, topo.kappa, Lambda);

  nn::Tape t2;
  NodeStates s2{random_const(t2, {T, D}, 45), random_const(t2, {1, D}, 46),
                random_const(t2, {K, D}, 47)};
  nn::Tensor hard_k({J}), hard_l({J, K});
  for (int j = 0; j < J; ++j) hard_k.data[j] = topo.kappa[j];
  for (int e = 0; e < J * K; ++e) hard_l.data[e] = Lambda[e];
  nn::Var kg = nn::straight_through(
      nn::reshape(nn::softmax_rows(random_const(t2, {1, J}, 48)), {J}),
      std::move(hard_k));
  nn::Var lg = nn::straight_through(
      nn::softmax_rows(random_const(t2, {J, K}, 49)), std::move(hard_l));
  G1Out gated =
      g1_forward(t2, ps, w.cfg, "mir.", s2, topo, topo.kappa, Lambda, &kg, &lg);

  CHECK(max_abs_diff(plain.attention.value().data,
                     gated.attention.value().data) == 0.0);
  CHECK(max_abs_diff(plain.states.tx.value().data,
                     gated.states.tx.value().data) == 0.0);
}

TEST_CASE("precoding graph is equivariant to user relabeling") {
  TinyWorld w = make_world(51);
  const int J = w.cfg.J, K = w.cfg.K;
  Topology topo = topology_from_kappa({1, 1, 1, 0}, w.cfg);
  const int T = static_cast<int>(topo.tx_ids.size());
  std::vector<int> Lambda = heuristic_lambda(w.cfg, w.channels, topo.kappa);
  const std::vector<int> perm = {1, 0};
  nn::ParamStore ps(52);

  nn::Tape t1;
  NodeStates s1{random_const(t1, {T, D}, 53), random_const(t1, {1, D}, 54),
                random_const(t1, {K, D}, 55)};
  G1Out a = g1_forward(t1, ps, w.cfg, "mir.", s1, topo, topo.kappa, Lambda);

  nn::Tape t2;
  NodeStates s2{random_const(t2, {T, D}, 53), random_const(t2, {1, D}, 54),
                nn::gather_rows(random_const(t2, {K, D}, 55), perm)};
  std::vector<int> Lperm(Lambda.size());
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < K; ++c)
      Lperm[idx2(j, c, K)] = Lambda[idx2(j, perm[c], K)];
  G1Out b = g1_forward(t2, ps, w.cfg, "mir.", s2, topo, topo.kappa, Lperm);

  CHECK(max_abs_diff(a.states.tx.value().data, b.states.tx.value().data) <=
        1e-12);
  for (int tt = 0; tt < T; ++tt) {
    for (int j = 0; j < J; ++j)
      CHECK(std::abs(a.attention.value().data[idx2(tt, j, J + K)] -
                     b.attention.value().data[idx2(tt, j, J + K)]) <= 1e-12);
    for (int c = 0; c < K; ++c)
      CHECK(std::abs(a.attention.value().data[idx2(tt, J + perm[c], J + K)] -
                     b.attention.value().data[idx2(tt, J + c, J + K)]) <=
            1e-12);
  }
}

TEST_CASE("association graph keeps the transmit count and user caps") {
  TinyWorld w = make_world(57);
  const int J = w.cfg.J, K = w.cfg.K;
  const int cols = K + J - 1;
  nn::ParamStore ps(58);
  Rng rng(59);
  std::vector<cdouble> vc(static_cast<std::size_t>(J) * K),
      vs(static_cast<std::size_t>(J) * (J - 1));
  for (cdouble& c : vc) c = rng.cnormal();
  for (cdouble& c : vs) c = 1e5 * rng.cnormal();

  nn::Tape t1;
  EdgeInitVar ed1{nn::cconstant(t1, {J * K}, vc),
                  nn::cconstant(t1, {J * (J - 1)}, vs)};
  G2Out g = g2_forward(t1, ps, w.cfg, "mir.", ed1);

  int total = 0;
  for (int v : g.kappa) total += v;
  CHECK(total == J - w.cfg.R);
  for (int j = 0; j < J; ++j) {
    int served = 0;
    for (int k = 0; k < K; ++k) served += g.Lambda[idx2(j, k, K)];
    CHECK(served == (g.kappa[j] ? w.cfg.K_u : 0));
  }
  for (int j = 0; j < J; ++j)
    CHECK(g.kappa_ste.value().data[j] == static_cast<double>(g.kappa[j]));
  for (int e = 0; e < J * K; ++e)
    CHECK(g.lambda_ste.value().data[e] == static_cast<double>(g.Lambda[e]));

  CHECK(g.com_attention.value().shape == std::vector<int>{J * K, cols});
  for (int r = 0; r < J * K; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c)
      s += g.com_attention.value().data[idx2(r, c, cols)];
    CHECK(std::abs(s - 1.0) <= 1e-12);
    // Self column is masked to an exact zero.
    CHECK(g.com_attention.value().data[idx2(r, r % K, cols)] == 0.0);
  }

  // Decisions are reproducible across tapes with the same parameters.
  nn::Tape t2;
  EdgeInitVar ed2{nn::cconstant(t2, {J * K}, vc),
                  nn::cconstant(t2, {J * (J - 1)}, vs)};
  G2Out g2 = g2_forward(t2, ps, w.cfg, "mir.", ed2);
  CHECK(g2.kappa == g.kappa);
  CHECK(g2.Lambda == g.Lambda);
  CHECK(max_abs_diff(g2.com_states.value().data, g.com_states.value().data) ==
        0.0);
}

TEST_CASE("association graph is equivariant to relabeling one AP's users") {
  TinyWorld w = make_world(61);
  const int J = w.cfg.J, K = w.cfg.K;
  const int cols = K + J - 1;
  const int j0 = 1;
  const std::vector<int> perm = {1, 0};
  nn::ParamStore ps(62);
  Rng rng(63);
  std::vector<cdouble> vc(static_cast<std::size_t>(J) * K),
      vs(static_cast<std::size_t>(J) * (J - 1));
  for (cdouble& c : vc) c = rng.cnormal();
  for (cdouble& c : vs) c = rng.cnormal();

  std::vector<cdouble> vc2(vc);
  for (int c = 0; c < K; ++c) vc2[idx2(j0, c, K)] = vc[idx2(j0, perm[c], K)];

  nn::Tape t1, t2;
  G2Out a = g2_forward(t1, ps, w.cfg, "mir.",
                       {nn::cconstant(t1, {J * K}, vc),
                        nn::cconstant(t1, {J * (J - 1)}, vs)});
  G2Out b = g2_forward(t2, ps, w.cfg, "mir.",
                       {nn::cconstant(t2, {J * K}, vc2),
                        nn::cconstant(t2, {J * (J - 1)}, vs)});

  CHECK(a.kappa == b.kappa);
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < K; ++c) {
      const int from = j == j0 ? perm[c] : c;
      CHECK(a.Lambda[idx2(j, from, K)] == b.Lambda[idx2(j, c, K)]);
    }
  // Final states of the relabeled AP move with its users; other APs are
  // untouched.
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < K; ++c) {
      const int from = j == j0 ? perm[c] : c;
      for (int e = 0; e < kEdgeWidth; ++e)
        CHECK(std::abs(
                  a.com_states.value().data[idx2(j * K + from, e, kEdgeWidth)] -
                  b.com_states.value().data[idx2(j * K + c, e, kEdgeWidth)]) <=
              1e-12);
    }
  // Attention of the relabeled AP permutes over both its rows and its user
  // columns; the sensing columns stay in place.
  for (int c = 0; c < K; ++c)
    for (int c2 = 0; c2 < cols; ++c2) {
      const int from_col = c2 < K ? perm[c2] : c2;
      CHECK(std::abs(
                a.com_attention.value().data[idx2(j0 * K + perm[c], from_col,
                                                  cols)] -
                b.com_attention.value().data[idx2(j0 * K + c, c2, cols)]) <=
            1e-12);
    }
}

TEST_CASE("shared adjacency check accepts the configured graphs") {
  CHECK_NOTHROW(check_shared_adjacency(tiny_config()));
  ScenarioConfig cfg = tiny_config();
  cfg.J = 2;
  cfg.T = 1;
  cfg.R = 1;
  cfg.K = 3;
  cfg.validate();
  CHECK_NOTHROW(check_shared_adjacency(cfg));
}

TEST_CASE("mirror episode keeps every physical invariant") {
  TinyWorld w = make_world(67);
  nn::ParamStore ps(68);
  nn::Tape t;
  MirrorOptions opts;
  opts.seed = 69;
  opts.physics_on_tape = false;
  EpisodeResult res = mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, opts);
  REQUIRE(static_cast<int>(res.steps.size()) == w.cfg.N_m);
  for (const auto& step : res.steps) {
    int total = 0;
    for (int v : step.kappa) total += v;
    CHECK(total == w.cfg.T);
    for (int j = 0; j < w.cfg.J; ++j) {
      int served = 0;
      for (int k = 0; k < w.cfg.K; ++k)
        served += step.Lambda[idx2(j, k, w.cfg.K)];
      CHECK(served <= w.cfg.K_u);
      if (!step.kappa[j]) CHECK(served == 0);
      const double e = ap_energy(step.W, w.cfg, j);
      if (step.kappa[j])
        CHECK(std::abs(e - w.cfg.P_j) <= 1e-9 * w.cfg.P_j);
      else
        CHECK(e == 0.0);
    }
    CHECK(std::isfinite(step.R_c));
    for (double v : step.est_pos) CHECK(std::isfinite(v));
    for (double v : step.est_vel) CHECK(std::isfinite(v));
  }
}

TEST_CASE("mirror episode reproduces bitwise for a seed") {
  TinyWorld w = make_world(71);
  MirrorOptions opts;
  opts.seed = 72;
  opts.physics_on_tape = false;

  auto run = [&](std::uint64_t ps_seed) {
    nn::ParamStore ps(ps_seed);
    nn::Tape t;
    return mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, opts);
  };
  EpisodeResult a = run(73), b = run(73), c = run(74);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t n = 0; n < a.steps.size(); ++n) {
    CHECK(a.steps[n].kappa == b.steps[n].kappa);
    CHECK(a.steps[n].Lambda == b.steps[n].Lambda);
    CHECK(max_abs_diff(a.steps[n].W, b.steps[n].W) == 0.0);
    CHECK(max_abs_diff(a.steps[n].est_pos, b.steps[n].est_pos) == 0.0);
    CHECK(a.steps[n].R_c == b.steps[n].R_c);
  }
  bool differs = false;
  for (std::size_t n = 0; n < a.steps.size(); ++n)
    if (max_abs_diff(a.steps[n].W, c.steps[n].W) > 0.0) differs = true;
  CHECK(differs);
}

TEST_CASE("mirror decision log records one row per iteration") {
  TinyWorld w = make_world(75);
  nn::ParamStore ps(76);
  nn::Tape t;
  MirrorOptions opts;
  opts.seed = 77;
  opts.physics_on_tape = false;
  opts.csv_path = "mirror_log_test.csv";
  mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, opts);

  std::ifstream in(opts.csv_path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "n,kappa,lambda,R_c,rmse_p,rmse_v");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == w.cfg.N_m);
  in.close();
  std::remove(opts.csv_path.c_str());
}

TEST_CASE("host-kernel mirror evaluation matches the taped pipeline") {
  TinyWorld w = make_world(79);
  MirrorOptions opts;
  opts.seed = 80;

  auto run = [&](bool on_tape) {
    nn::ParamStore ps(81);
    nn::Tape t;
    MirrorOptions o = opts;
    o.physics_on_tape = on_tape;
    return mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, o);
  };
  EpisodeResult tape = run(true), lite = run(false);
  REQUIRE(tape.steps.size() == lite.steps.size());
  for (std::size_t n = 0; n < tape.steps.size(); ++n) {
    CHECK(tape.steps[n].kappa == lite.steps[n].kappa);
    CHECK(tape.steps[n].Lambda == lite.steps[n].Lambda);
    CHECK(std::abs(tape.steps[n].R_c - lite.steps[n].R_c) <=
          1e-9 * std::max(1.0, std::abs(lite.steps[n].R_c)));
    CHECK(max_abs_diff(tape.steps[n].est_pos, lite.steps[n].est_pos) <= 1e-6);
  }
}

TEST_CASE("frozen assignments bypass the association graph") {
  TinyWorld w = make_world(83);
  std::vector<int> kappa = {1, 1, 1, 0};
  std::vector<int> Lambda = heuristic_lambda(w.cfg, w.channels, kappa);

  nn::ParamStore ps(84);
  nn::Tape t;
  MirrorOptions opts;
  opts.seed = 85;
  opts.physics_on_tape = false;
  opts.frozen_kappa = &kappa;
  opts.frozen_lambda = &Lambda;
  EpisodeResult res = mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, opts);
  for (const auto& step : res.steps) {
    CHECK(step.kappa == kappa);
    CHECK(step.Lambda == Lambda);
  }
  CHECK(!ps.has("mir.g2.embed.com.w"));
  CHECK(ps.has("mir.g1.l0.query.w"));

  // Freezing needs a consistent pair and legal rows.
  nn::Tape t2;
  MirrorOptions bad = opts;
  bad.frozen_lambda = nullptr;
  CHECK_THROWS_AS(mirror_episode(t2, ps, w.cfg, w.p, w.channels, w.geo, bad),
                  std::invalid_argument);
  std::vector<int> over(Lambda);
  for (int k = 0; k < w.cfg.K; ++k) over[idx2(0, k, w.cfg.K)] = 1;
  nn::Tape t3;
  MirrorOptions bad2 = opts;
  bad2.frozen_lambda = &over;
  CHECK_THROWS_AS(mirror_episode(t3, ps, w.cfg, w.p, w.channels, w.geo, bad2),
                  std::invalid_argument);
}

TEST_CASE("single mirror iteration carries no hidden state") {
  TinyWorld w = make_world(87);
  w.cfg.N_m = 1;
  nn::ParamStore ps(88);
  nn::Tape t;
  MirrorOptions opts;
  opts.seed = 89;
  opts.physics_on_tape = false;
  EpisodeResult res = mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, opts);
  CHECK(res.steps.size() == 1);
  // No echo re-embedding ever happens, so its parameters never appear.
  CHECK(!ps.has("mir.embed2.tx.w"));
  CHECK(!ps.has("mir.embed2.rx.w"));
}

TEST_CASE("gradients reach every mirror block") {
  TinyWorld w = make_world(91);
  w.cfg.N_m = 3;
  nn::ParamStore ps(92);
  nn::Tape t;
  MirrorOptions opts;
  opts.seed = 93;
  EpisodeResult res = mirror_episode(t, ps, w.cfg, w.p, w.channels, w.geo, opts);

  nn::Var loss = nn::mul_scalar(res.steps[0].rate, 1e-3);
  for (const auto& step : res.steps) {
    loss = nn::add(loss, nn::sum(nn::mul(step.est.positions, step.est.positions)));
    loss = nn::add(loss, nn::mul_scalar(step.rate, 1e-3));
  }
  t.backward(loss);

  auto grad_norm = [&](const std::string& name) {
    const auto& shape = ps.raw(name).shape;
    nn::Var leaf = ps.param(t, name, shape);
    double s = 0.0;
    for (double g : leaf.grad().data) s += g * g;
    return s;
  };
  CHECK(grad_norm("mir.embed.tx.w") > 0.0);
  CHECK(grad_norm("mir.embed2.rx.w") > 0.0);
  CHECK(grad_norm("mir.g1.l0.query.w") > 0.0);
  CHECK(grad_norm("mir.g1.l2.agg.w") > 0.0);
  CHECK(grad_norm("mir.head.w") > 0.0);
  CHECK(grad_norm("mir.g2.embed.com.w") > 0.0);
  CHECK(grad_norm("mir.g2.embed.sen.w") > 0.0);
  CHECK(grad_norm("mir.g2.l0.att.w") > 0.0);
  CHECK(grad_norm("mir.g2.read.com.w") > 0.0);
  CHECK(grad_norm("mir.g2.read.sen.w") > 0.0);
  CHECK(grad_norm("fusion.conv1.k") > 0.0);
  CHECK(grad_norm("fusion.out.w") > 0.0);
}

TEST_CASE("mirror framework trains fewer parameters than the dynamic one") {
  TinyWorld w = make_world(95);
  auto total = [](const nn::ParamStore& ps) {
    std::size_t n = 0;
    for (const auto& name : ps.names())
      if (name.rfind("fusion.", 0) != 0) n += ps.raw(name).data.size();
    return n;
  };

  nn::ParamStore psd(96);
  {
    nn::Tape t;
    EpisodeOptions opts;
    opts.seed = 97;
    opts.physics_on_tape = false;
    run_episode(t, psd, w.cfg, w.p, w.channels, w.geo, opts);
  }
  nn::ParamStore psm(98);
  {
    nn::Tape t;
    MirrorOptions opts;
    opts.seed = 97;
    opts.physics_on_tape = false;
    mirror_episode(t, psm, w.cfg, w.p, w.channels, w.geo, opts);
  }
  CHECK(total(psm) < total(psd));
}
