#include <cmath>
#include <complex>

#include "cfisac/channel.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/rng.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/waveform.hpp"
#include "doctest.h"
#include "reference.hpp"
#include "test_support.hpp"

using namespace cfisac;

namespace {

// Hand-built deployment: AP0 transmits from the origin, AP3 listens at
// (30, 0), the lone target sits on the perpendicular bisector so both legs
// have equal length. Exponents pinned to 2 to keep closed forms simple.
struct ManualCase {
  ScenarioConfig cfg;
  Placement p;
  BistaticGeometry geo;
  ChannelSet ch;
  std::vector<int> kappa{1, 1, 1, 0};
  std::vector<cdouble> x;
  EchoDraws draws;
};

ManualCase make_manual_case(double leg_sum, const Vec2& tgt_vel) {
  ManualCase mc;
  mc.cfg = test::tiny_config();
  mc.cfg.sigma_r2 = 0.0;

  auto& p = mc.p;
  p.ap_pos = {{0.0, 0.0}, {-80.0, -60.0}, {70.0, -50.0}, {30.0, 0.0}};
  const double half = leg_sum / 2.0;
  p.tgt_pos = {{15.0, std::sqrt(half * half - 15.0 * 15.0)}};
  p.tgt_vel = {tgt_vel};
  p.cu_pos = {{40.0, 40.0}, {-40.0, 10.0}};
  p.clutter_pos = {{-20.0, 55.0}};
  p.tgt_rcs = {1.0};
  p.clutter_rcs = {1.0};
  const int J = mc.cfg.J;
  p.alpha_cu.assign(J * mc.cfg.K, 2.0);
  p.alpha_ap.assign(J * J, 2.0);
  p.alpha_tgt.assign(J * mc.cfg.Q, 2.0);
  p.alpha_clu.assign(J * mc.cfg.U, 2.0);

  mc.geo = bistatic_geometry(p, mc.cfg);
  mc.ch = build_channels(p, mc.cfg, 1234);

  // AP0 emits all-ones on every (i, l, m); other APs stay silent.
  mc.x.assign(static_cast<std::size_t>(J) * mc.cfg.N_s * mc.cfg.L * mc.cfg.M,
              {0.0, 0.0});
  for (int i = 0; i < mc.cfg.N_s; ++i)
    for (int l = 0; l < mc.cfg.L; ++l)
      for (int m = 0; m < mc.cfg.M; ++m)
        mc.x[idx4(0, i, l, m, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)] = {1.0, 0.0};

  // Only the (AP0 -> target -> AP3) reflection survives.
  mc.draws.beta.assign(static_cast<std::size_t>(J) * J * mc.cfg.Q, {0.0, 0.0});
  mc.draws.beta[idx3(0, 3, 0, J, mc.cfg.Q)] = {1.0, 0.0};
  mc.draws.eta.assign(static_cast<std::size_t>(J) * J * mc.cfg.U, {0.0, 0.0});
  mc.draws.noise.assign(
      static_cast<std::size_t>(mc.cfg.R) * mc.cfg.N_s * mc.cfg.L * mc.cfg.M,
      {0.0, 0.0});
  return mc;
}

struct RandomEchoCase {
  ScenarioConfig cfg;
  Placement p;
  BistaticGeometry geo;
  ChannelSet ch;
  std::vector<int> kappa;
  std::vector<cdouble> x;
  EchoDraws draws;
};

RandomEchoCase make_random_echo_case(std::uint64_t seed) {
  RandomEchoCase rc;
  rc.cfg = test::tiny_config();
  rc.cfg.sigma_r2 = 1e-18;
  rc.p = sample_scenario(rc.cfg, seed);
  rc.geo = bistatic_geometry(rc.p, rc.cfg);
  rc.ch = build_channels(rc.p, rc.cfg, seed + 1);
  rc.kappa = {1, 1, 0, 1};

  const auto s_r = radar_symbols(rc.cfg, default_zc_roots(rc.cfg));
  const auto s_c = comm_symbols(rc.cfg, seed + 2);
  Rng rng(seed + 3);
  std::vector<cdouble> W(static_cast<std::size_t>(rc.cfg.J) * rc.cfg.N_s *
                         rc.cfg.M * (rc.cfg.M + rc.cfg.K));
  for (auto& w : W) w = rng.cnormal(1.0);
  const std::vector<int> Lambda = {1, 0, 0, 1, 0, 0, 0, 1};
  rc.x = assemble_tx(rc.cfg, rc.kappa, Lambda, W, s_c, s_r);
  rc.draws = make_echo_draws(rc.cfg, rc.p, seed + 4);
  return rc;
}

}  // namespace

TEST_CASE("silent network with zero noise yields an all-zero echo") {
  auto mc = make_manual_case(73.2, {0.0, 0.0});
  for (auto& v : mc.x) v = {0.0, 0.0};
  const auto Y = synthesize_echo(mc.p, mc.geo, mc.ch, mc.x, mc.kappa, mc.cfg,
                                 mc.draws);
  CHECK(test::max_abs_diff(Y.Y, std::vector<cdouble>(Y.Y.size())) == 0.0);
}

TEST_CASE("single static reflection matches its closed form") {
  auto mc = make_manual_case(73.2, {0.0, 0.0});
  EchoOptions opts;
  opts.direct_path = false;
  const auto Y =
      synthesize_echo(mc.p, mc.geo, mc.ch, mc.x, mc.kappa, mc.cfg, mc.draws, opts);

  const double d_tx = mc.geo.tgt_dist[idx2(0, 0, mc.cfg.Q)];
  const double d_rx = mc.geo.tgt_dist[idx2(3, 0, mc.cfg.Q)];
  CHECK(d_tx + d_rx == doctest::Approx(73.2).epsilon(1e-12));
  const double pl = std::sqrt(path_loss(d_tx, 2.0, mc.cfg.f_c) *
                              path_loss(d_rx, 2.0, mc.cfg.f_c));
  const auto a_t = steering(mc.geo.tgt_theta[idx2(0, 0, mc.cfg.Q)], mc.cfg.M);
  const auto a_r = steering(mc.geo.tgt_theta[idx2(3, 0, mc.cfg.Q)], mc.cfg.M);
  cdouble tx_sum{0.0, 0.0};
  for (const auto& a : a_t) tx_sum += a;  // a_t^T * ones

  const double df = mc.cfg.delta_f();
  double worst = 0.0;
  for (int i = 0; i < mc.cfg.N_s; ++i)
    for (int l = 0; l < mc.cfg.L; ++l)
      for (int m = 0; m < mc.cfg.M; ++m) {
        const cdouble want =
            pl * tx_sum * a_r[m] *
            std::polar(1.0,
                       -2.0 * kPi * i * df * (d_tx + d_rx) / kSpeedOfLight);
        const cdouble got = Y.Y[idx4(0, i, l, m, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)];
        worst = std::max(worst, std::abs(want - got) / std::abs(want));
      }
  CHECK(worst < 1e-12);
  // Static target: no dependence on the symbol index at all.
  for (int l = 1; l < mc.cfg.L; ++l)
    CHECK(std::abs(Y.Y[idx4(0, 3, l, 1, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)] -
                   Y.Y[idx4(0, 3, 0, 1, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)]) <
          1e-25);
}

TEST_CASE("subcarrier DFT of a single reflection peaks at the delay bin") {
  // Choose the leg sum so the delay lands at fractional bin 5.3 modulo N_s;
  // the discrete argmax is then bin 5.
  const auto cfg0 = test::tiny_config();
  const double bins_per_m = cfg0.N_s * cfg0.delta_f() / kSpeedOfLight;
  const double leg_sum = (3 * cfg0.N_s + 5.3) / bins_per_m;
  auto mc = make_manual_case(leg_sum, {0.0, 0.0});
  EchoOptions opts;
  opts.direct_path = false;
  const auto Y =
      synthesize_echo(mc.p, mc.geo, mc.ch, mc.x, mc.kappa, mc.cfg, mc.draws, opts);

  int best = -1;
  double best_mag = -1.0;
  for (int b = 0; b < mc.cfg.N_s; ++b) {
    cdouble acc{0.0, 0.0};
    for (int i = 0; i < mc.cfg.N_s; ++i)
      acc += Y.Y[idx4(0, i, 0, 0, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)] *
             std::polar(1.0, 2.0 * kPi * i * b / double(mc.cfg.N_s));
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = b;
    }
  }
  CHECK(best == 5);
}

TEST_CASE("moving target imposes the expected symbol-to-symbol phase ramp") {
  auto mc = make_manual_case(73.2, {4.0, -12.0});
  EchoOptions opts;
  opts.direct_path = false;
  const auto Y =
      synthesize_echo(mc.p, mc.geo, mc.ch, mc.x, mc.kappa, mc.cfg, mc.draws, opts);
  const double f_d = mc.geo.doppler(0, 3, 0);
  CHECK(std::abs(f_d) > 1.0);  // geometry actually produces a shift
  const double want = 2.0 * kPi * mc.cfg.t_sym() * f_d;
  for (int l = 0; l + 1 < mc.cfg.L; ++l) {
    const cdouble a = Y.Y[idx4(0, 2, l, 1, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)];
    const cdouble b = Y.Y[idx4(0, 2, l + 1, 1, mc.cfg.N_s, mc.cfg.L, mc.cfg.M)];
    CHECK(std::arg(b / a) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("per-term breakdown sums to the total and scales linearly") {
  auto rc = make_random_echo_case(17);
  EchoOptions opts;
  opts.keep_parts = true;
  const auto Y = synthesize_echo(rc.p, rc.geo, rc.ch, rc.x, rc.kappa, rc.cfg,
                                 rc.draws, opts);
  double scale = 0.0;
  for (const auto& v : Y.Y) scale = std::max(scale, std::abs(v));
  REQUIRE(scale > 0.0);
  double worst = 0.0;
  for (std::size_t n = 0; n < Y.Y.size(); ++n)
    worst = std::max(worst,
                     std::abs(Y.Y[n] - Y.target_part[n] - Y.clutter_part[n] -
                              Y.direct_part[n] - Y.noise_part[n]));
  CHECK(worst / scale < 1e-12);

  // Doubling every reflection coefficient doubles exactly the target term.
  auto draws2 = rc.draws;
  for (auto& b : draws2.beta) b *= 2.0;
  const auto Y2 = synthesize_echo(rc.p, rc.geo, rc.ch, rc.x, rc.kappa, rc.cfg,
                                  draws2, opts);
  double tgt_scale = 0.0;
  for (const auto& v : Y.target_part) tgt_scale = std::max(tgt_scale, std::abs(v));
  REQUIRE(tgt_scale > 0.0);
  double worst2 = 0.0;
  for (std::size_t n = 0; n < Y.Y.size(); ++n) {
    worst2 = std::max(worst2,
                      std::abs(Y2.target_part[n] - 2.0 * Y.target_part[n]));
    worst2 = std::max(worst2, std::abs(Y2.clutter_part[n] - Y.clutter_part[n]));
  }
  CHECK(worst2 / tgt_scale < 1e-12);
}

TEST_CASE("echo kernel matches the naive oracle") {
  for (std::uint64_t seed : {3u, 91u}) {
    auto rc = make_random_echo_case(seed);
    for (bool direct : {true, false}) {
      EchoOptions opts;
      opts.direct_path = direct;
      const auto Y = synthesize_echo(rc.p, rc.geo, rc.ch, rc.x, rc.kappa,
                                     rc.cfg, rc.draws, opts);
      const auto want = ref::echo_naive(rc.p, rc.geo, rc.ch, rc.x, rc.kappa,
                                        rc.cfg, rc.draws, direct);
      double scale = 0.0;
      for (const auto& v : want) scale = std::max(scale, std::abs(v));
      REQUIRE(scale > 0.0);
      CHECK(test::max_abs_diff(Y.Y, want) / scale < 1e-12);
    }
  }
}

TEST_CASE("seeded synthesis is reproducible and seed-sensitive") {
  auto rc = make_random_echo_case(5);
  const auto a = synthesize_echo(rc.p, rc.geo, rc.ch, rc.x, rc.kappa, rc.cfg,
                                 std::uint64_t{77});
  const auto b = synthesize_echo(rc.p, rc.geo, rc.ch, rc.x, rc.kappa, rc.cfg,
                                 std::uint64_t{77});
  const auto c = synthesize_echo(rc.p, rc.geo, rc.ch, rc.x, rc.kappa, rc.cfg,
                                 std::uint64_t{78});
  CHECK(test::max_abs_diff(a.Y, b.Y) == 0.0);
  CHECK(test::max_abs_diff(a.Y, c.Y) > 0.0);
}

TEST_CASE("noise draws carry the configured power") {
  ScenarioConfig cfg;  // full scale: R*N_s*L*M = 8192 samples
  const auto p = sample_scenario(cfg, 11);
  const auto draws = make_echo_draws(cfg, p, 42);
  double acc = 0.0;
  for (const auto& z : draws.noise) acc += std::norm(z);
  const double mean_power = acc / double(draws.noise.size());
  CHECK(std::abs(mean_power - 1.0) < 0.05);

  // With the network silent the receive tensor is exactly scaled noise.
  ScenarioConfig tiny = test::tiny_config();
  tiny.sigma_r2 = 4.0;
  const auto tp = sample_scenario(tiny, 3);
  const auto geo = bistatic_geometry(tp, tiny);
  const auto ch = build_channels(tp, tiny, 4);
  std::vector<cdouble> x(
      static_cast<std::size_t>(tiny.J) * tiny.N_s * tiny.L * tiny.M,
      {0.0, 0.0});
  const std::vector<int> kappa = {1, 1, 1, 0};
  const auto d = make_echo_draws(tiny, tp, 9);
  const auto Y = synthesize_echo(tp, geo, ch, x, kappa, tiny, d);
  double worst = 0.0;
  for (std::size_t n = 0; n < Y.Y.size(); ++n)
    worst = std::max(worst, std::abs(Y.Y[n] - 2.0 * d.noise[n]));
  CHECK(worst < 1e-14);
}

TEST_CASE("shape violations are rejected") {
  auto mc = make_manual_case(73.2, {0.0, 0.0});
  auto short_x = mc.x;
  short_x.pop_back();
  CHECK_THROWS_AS(synthesize_echo(mc.p, mc.geo, mc.ch, short_x, mc.kappa,
                                  mc.cfg, mc.draws),
                  std::invalid_argument);
  // Wrong number of listening APs.
  const std::vector<int> all_tx = {1, 1, 1, 1};
  CHECK_THROWS_AS(
      synthesize_echo(mc.p, mc.geo, mc.ch, mc.x, all_tx, mc.cfg, mc.draws),
      std::invalid_argument);
}
