#include "cfisac/fusion_net.hpp"

#include <string>

namespace cfisac {

using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

/// Destination-major index list moving [n x N_s x L x M] to [n*M x N_s x L].
std::vector<std::int64_t> antenna_row_order(int n, int N_s, int L, int M) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(n) * M * N_s * L);
  for (int u = 0; u < n; ++u)
    for (int m = 0; m < M; ++m)
      for (int i = 0; i < N_s; ++i)
        for (int l = 0; l < L; ++l)
          idx.push_back(static_cast<std::int64_t>(idx4(u, i, l, m, N_s, L, M)));
  return idx;
}

int conv_out(int d, int stride) { return (d - 1) / stride + 1; }

}  // namespace

Var fusion_input(Tape& t, const ScenarioConfig& config, const nn::CVar& echo,
                 const nn::CVar& radar) {
  if (echo.re.tape != &t || radar.re.tape != &t)
    throw std::invalid_argument("fusion_input: vars must live on the given tape");
  const int R = config.R, T = config.T, M = config.M;
  const int N_s = config.N_s, L = config.L;
  const std::int64_t rx_len = static_cast<std::int64_t>(R) * N_s * L * M;
  const std::int64_t tx_len = static_cast<std::int64_t>(T) * M * N_s * L;
  if (echo.re.value().numel() != rx_len || radar.re.value().numel() != tx_len)
    throw std::invalid_argument("fusion_input: tensor sizes disagree with config");

  // The echo is stored [r][i][l][m] and must move its antenna index up to
  // the row axis; the radar tensor already sits in [t][m][i][l] row order.
  auto rx_idx = antenna_row_order(R, N_s, L, M);
  Var ch0 = nn::concat({nn::gather_flat(echo.re, rx_idx), nn::reshape(radar.re, {static_cast<int>(tx_len)})});
  Var ch1 = nn::concat({nn::gather_flat(echo.im, rx_idx), nn::reshape(radar.im, {static_cast<int>(tx_len)})});
  Var full = nn::reshape(nn::concat({ch0, ch1}), {2, config.J * M, N_s, L});

  // Scale by the global RMS so feature magnitudes stay comparable across
  // power sweeps. Detached: the normalization is bookkeeping, not a signal
  // path we want gradients shaped by.
  Var ms = nn::add_scalar(nn::mean(nn::mul(full, full)), 1e-30);
  Var rms = nn::detach(nn::sqrt_op(ms));
  return nn::div_svar(full, rms);
}

Var fusion_input_const(Tape& t, const ScenarioConfig& config,
                       const EchoTensor& echo, const std::vector<cdouble>& s_r) {
  if (echo.R != config.R)
    throw std::invalid_argument("fusion_input_const: echo R disagrees with config");
  if (s_r.size() != static_cast<std::size_t>(config.T) * config.M * config.N_s * config.L)
    throw std::invalid_argument("fusion_input_const: radar tensor size disagrees with config");
  nn::CVar ec = nn::cconstant(t, {static_cast<int>(echo.Y.size())}, echo.Y);
  nn::CVar sc = nn::cconstant(t, {static_cast<int>(s_r.size())}, s_r);
  return fusion_input(t, config, ec, sc);
}

Var extract_compress(Tape& t, nn::ParamStore& ps, const ScenarioConfig& config,
                     Var input) {
  const int rows = config.J * config.M;
  if (input.value().shape != std::vector<int>{2, rows, config.N_s, config.L})
    throw std::invalid_argument("extract_compress: unexpected input shape");

  Var k1 = ps.param(t, "fusion.conv1.k", {8, 2, 3, 3, 3});
  Var b1 = ps.param(t, "fusion.conv1.b", {8}, nn::Init::kZeros);
  Var y1 = nn::leaky_relu(nn::conv3(input, k1, b1, 2));
  Var k2 = ps.param(t, "fusion.conv2.k", {16, 8, 3, 3, 3});
  Var b2 = ps.param(t, "fusion.conv2.b", {16}, nn::Init::kZeros);
  Var y2 = nn::leaky_relu(nn::conv3(y1, k2, b2, 2));

  const int C = 16;
  const int d1 = conv_out(conv_out(rows, 2), 2);
  const int d2 = conv_out(conv_out(config.N_s, 2), 2);
  const int d3 = conv_out(conv_out(config.L, 2), 2);
  if (d1 < config.R)
    throw std::invalid_argument("extract_compress: row axis too short to split per Rx");

  const int R = config.R, varrho = config.varrho;
  std::vector<Var> rx_rows;
  for (int r = 0; r < R; ++r) {
    int lo = r * d1 / R, hi = (r + 1) * d1 / R;
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(C) * (hi - lo) * d2 * d3);
    for (int c = 0; c < C; ++c)
      for (int a = lo; a < hi; ++a)
        for (int b = 0; b < d2; ++b)
          for (int e = 0; e < d3; ++e)
            idx.push_back(static_cast<std::int64_t>(idx4(c, a, b, e, d1, d2, d3)));
    int n = (hi - lo) * d2 * d3;
    Var part = nn::reshape(nn::gather_flat(y2, idx), {C, n});
    Var pooled = nn::reshape(
        nn::matmul(part, t.constant(Tensor({n, 1}, 1.0 / static_cast<double>(n)))),
        {1, C});
    Var w1 = ps.param(t, "fusion.head1.w", {C, 64});
    Var hb1 = ps.param(t, "fusion.head1.b", {64}, nn::Init::kZeros);
    Var h = nn::leaky_relu(nn::bias_add(nn::matmul(pooled, w1), hb1));
    Var w2 = ps.param(t, "fusion.head2.w", {64, 2 * varrho});
    Var hb2 = ps.param(t, "fusion.head2.b", {2 * varrho}, nn::Init::kZeros);
    rx_rows.push_back(nn::bias_add(nn::matmul(h, w2), hb2));
  }
  Var stacked = nn::concat(rx_rows);  // [R * 2 varrho]
  // Regroup [R][2][varrho] into channel-major [2][R][varrho].
  std::vector<std::int64_t> order;
  order.reserve(static_cast<std::size_t>(2) * R * varrho);
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < R; ++r)
      for (int p = 0; p < varrho; ++p)
        order.push_back(static_cast<std::int64_t>(idx3(r, c, p, 2, varrho)));
  return nn::reshape(nn::gather_flat(stacked, order), {2, R, varrho});
}

FusionEstimates cpu_fuse(Tape& t, nn::ParamStore& ps,
                         const ScenarioConfig& config, Var features) {
  const int R = config.R, varrho = config.varrho, Q = config.Q;
  const int D = 2 * R * varrho;
  if (features.value().numel() != D)
    throw std::invalid_argument("cpu_fuse: feature length disagrees with config");
  Var flat = nn::reshape(features, {1, D});
  Var w1 = ps.param(t, "fusion.mlp1.w", {D, 128});
  Var b1 = ps.param(t, "fusion.mlp1.b", {128}, nn::Init::kZeros);
  Var h1 = nn::leaky_relu(nn::bias_add(nn::matmul(flat, w1), b1));
  Var w2 = ps.param(t, "fusion.mlp2.w", {128, 128});
  Var b2 = ps.param(t, "fusion.mlp2.b", {128}, nn::Init::kZeros);
  Var h2 = nn::leaky_relu(nn::bias_add(nn::matmul(h1, w2), b2));
  const int out_dim = 2 * config.pos_dim * Q;
  Var w3 = ps.param(t, "fusion.out.w", {128, out_dim});
  Var b3 = ps.param(t, "fusion.out.b", {out_dim}, nn::Init::kZeros);
  Var raw = nn::reshape(nn::bias_add(nn::matmul(h2, w3), b3), {out_dim});

  const int half = config.pos_dim * Q;
  Var praw = nn::reshape(nn::slice(raw, 0, half), {Q, config.pos_dim});
  Var vraw = nn::reshape(nn::slice(raw, half, half), {Q, config.pos_dim});
  const double center = 0.5 * (config.coord_min + config.coord_max);
  const double span = 0.5 * (config.coord_max - config.coord_min);
  Var pos = nn::add_scalar(nn::mul_scalar(nn::tanh_op(praw), span), center);
  Var vel = nn::mul_scalar(nn::tanh_op(vraw), config.v_max);
  return {pos, vel};
}

FusionEstimates fusion_forward(Tape& t, nn::ParamStore& ps,
                               const ScenarioConfig& config,
                               const EchoTensor& echo,
                               const std::vector<cdouble>& s_r) {
  Var input = fusion_input_const(t, config, echo, s_r);
  Var feats = extract_compress(t, ps, config, input);
  return cpu_fuse(t, ps, config, feats);
}

int backhaul_doubles(const ScenarioConfig& config) {
  return 2 * config.R * config.varrho;
}

}  // namespace cfisac
