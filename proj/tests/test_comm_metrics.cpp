#include <cmath>

#include "cfisac/channel.hpp"
#include "cfisac/comm_metrics.hpp"
#include "cfisac/rng.hpp"
#include "cfisac/scenario.hpp"
#include "doctest.h"
#include "reference.hpp"
#include "test_support.hpp"

using namespace cfisac;

namespace {

struct RandomCase {
  ScenarioConfig cfg;
  ChannelSet ch;
  std::vector<cdouble> W;
  std::vector<int> kappa;
  std::vector<int> Lambda;
};

RandomCase make_random_case(std::uint64_t seed) {
  RandomCase rc;
  rc.cfg = test::tiny_config();
  const auto plc = sample_scenario(rc.cfg, seed);
  rc.ch = build_channels(plc, rc.cfg, seed + 1);
  Rng rng(seed + 2);
  rc.W.resize(static_cast<std::size_t>(rc.cfg.J) * rc.cfg.N_s * rc.cfg.M *
              (rc.cfg.M + rc.cfg.K));
  for (auto& w : rc.W) w = rng.cnormal(1.0);
  rc.kappa = {1, 1, 0, 1};
  rc.Lambda = {1, 0, 0, 1, 0, 0, 0, 1};
  return rc;
}

ChannelSet blank_channels(const ScenarioConfig& cfg) {
  ChannelSet ch;
  ch.J = cfg.J;
  ch.N_s = cfg.N_s;
  ch.K = cfg.K;
  ch.M = cfg.M;
  ch.h.assign(static_cast<std::size_t>(cfg.J) * cfg.N_s * cfg.K * cfg.M,
              {0.0, 0.0});
  ch.G.assign(static_cast<std::size_t>(cfg.J) * cfg.J * cfg.M * cfg.M,
              {0.0, 0.0});
  return ch;
}

}  // namespace

TEST_CASE("SINR closed form for a single flat link") {
  // One serving AP, one antenna worth of gain: h^H w = sqrt(P), no
  // interference, unit noise, so the ratio is exactly P.
  ScenarioConfig cfg = test::tiny_config();
  cfg.sigma_c2 = 1.0;
  auto ch = blank_channels(cfg);
  const int cols = cfg.M + cfg.K;
  std::vector<cdouble> W(
      static_cast<std::size_t>(cfg.J) * cfg.N_s * cfg.M * cols, {0.0, 0.0});
  const double P = 13.7;
  for (int i = 0; i < cfg.N_s; ++i) {
    ch.h[idx4(0, i, 0, 0, cfg.N_s, cfg.K, cfg.M)] = {1.0, 0.0};
    W[idx4(0, i, 0, cfg.M + 0, cfg.N_s, cfg.M, cols)] = {std::sqrt(P), 0.0};
  }
  std::vector<int> kappa(cfg.J, 0);
  kappa[0] = 1;
  std::vector<int> Lambda(cfg.J * cfg.K, 0);
  Lambda[idx2(0, 0, cfg.K)] = 1;

  const auto rep = sinr_report(ch, W, kappa, Lambda, cfg.sigma_c2);
  for (int i = 0; i < cfg.N_s; ++i) {
    CHECK(rep.sinr[idx2(i, 0, cfg.K)] == doctest::Approx(P).epsilon(1e-12));
    CHECK(rep.sinr[idx2(i, 1, cfg.K)] == doctest::Approx(0.0));
  }
  // Sum rate: K=2 users, only user 0 active, log2(1+P) per subcarrier.
  CHECK(rep.R_c ==
        doctest::Approx(cfg.N_s * std::log2(1.0 + P)).epsilon(1e-12));
}

TEST_CASE("two-user closed form with cross interference") {
  ScenarioConfig cfg = test::tiny_config();
  cfg.N_s = 1;
  cfg.sigma_c2 = 2.0;
  auto ch = blank_channels(cfg);
  const int cols = cfg.M + cfg.K;
  std::vector<cdouble> W(
      static_cast<std::size_t>(cfg.J) * cfg.N_s * cfg.M * cols, {0.0, 0.0});
  // AP0 serves both users:
  //   h0 = e_0, h1 = e_1; w_c0 = 2 e_0 + e_1 ; w_c1 = e_1.
  ch.h[idx4(0, 0, 0, 0, cfg.N_s, cfg.K, cfg.M)] = {1.0, 0.0};
  ch.h[idx4(0, 0, 1, 1, cfg.N_s, cfg.K, cfg.M)] = {1.0, 0.0};
  W[idx4(0, 0, 0, cfg.M + 0, cfg.N_s, cfg.M, cols)] = {2.0, 0.0};
  W[idx4(0, 0, 1, cfg.M + 0, cfg.N_s, cfg.M, cols)] = {1.0, 0.0};
  W[idx4(0, 0, 1, cfg.M + 1, cfg.N_s, cfg.M, cols)] = {1.0, 0.0};
  std::vector<int> kappa = {1, 0, 0, 0};
  std::vector<int> Lambda = {1, 1, 0, 0, 0, 0, 0, 0};

  const auto rep = sinr_report(ch, W, kappa, Lambda, cfg.sigma_c2);
  // User 0: signal |2|^2 = 4, interference from stream 1: |<h0, w_c1>|^2 = 0.
  CHECK(rep.sinr[idx2(0, 0, cfg.K)] == doctest::Approx(4.0 / 2.0));
  // User 1: signal |1|^2, interference |<h1, w_c0>|^2 = 1.
  CHECK(rep.sinr[idx2(0, 1, cfg.K)] == doctest::Approx(1.0 / (1.0 + 2.0)));
  CHECK(rep.R_c ==
        doctest::Approx(std::log2(3.0) + std::log2(1.0 + 1.0 / 3.0)));
}

TEST_CASE("report matches the naive oracle in both interference modes") {
  for (std::uint64_t seed : {11u, 57u, 301u}) {
    const auto rc = make_random_case(seed);
    for (MuMode mode : {MuMode::kCorrected, MuMode::kAsPrinted}) {
      const auto rep = sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda,
                                   rc.cfg.sigma_c2, mode);
      const auto want = ref::sinr_naive(rc.ch, rc.W, rc.kappa, rc.Lambda,
                                        rc.cfg.sigma_c2,
                                        mode == MuMode::kAsPrinted);
      CHECK(test::max_abs_diff(rep.sinr, want.sinr) < 1e-10);
      CHECK(test::max_abs_diff(rep.mu, want.mu) < 1e-10);
      CHECK(test::max_abs_diff(rep.iota, want.iota) < 1e-10);
      CHECK(rep.R_c == doctest::Approx(want.R_c).epsilon(1e-12));
    }
  }
}

TEST_CASE("interference modes differ only through the association gate") {
  const auto rc = make_random_case(77);
  const auto corrected = sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda,
                                     rc.cfg.sigma_c2, MuMode::kCorrected);
  const auto printed = sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda,
                                   rc.cfg.sigma_c2, MuMode::kAsPrinted);
  // Same signal power and radar leakage either way.
  CHECK(test::max_abs_diff(corrected.iota, printed.iota) == 0.0);
  // The mu tensors genuinely differ for this association pattern.
  CHECK(test::max_abs_diff(corrected.mu, printed.mu) > 1e-12);
}

TEST_CASE("radar leakage closed form and all-silent limit") {
  auto rc = make_random_case(5);
  // Only AP 1 transmitting: iota reduces to sum_s |h_1^H w_{r,s}|^2.
  rc.kappa = {0, 1, 0, 0};
  const auto rep =
      sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda, rc.cfg.sigma_c2);
  const int cols = rc.cfg.M + rc.cfg.K;
  for (int i = 0; i < rc.cfg.N_s; ++i)
    for (int k = 0; k < rc.cfg.K; ++k) {
      const cdouble* h = rc.ch.h_at(1, i, k);
      double want = 0.0;
      for (int s = 0; s < rc.cfg.M; ++s) {
        cdouble acc{0.0, 0.0};
        for (int m = 0; m < rc.cfg.M; ++m)
          acc += std::conj(h[m]) *
                 rc.W[idx4(1, i, m, s, rc.cfg.N_s, rc.cfg.M, cols)];
        want += std::norm(acc);
      }
      const double got = rep.iota[idx2(i, k, rc.cfg.K)];
      CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
    }

  // With nothing transmitting there is neither signal nor interference.
  rc.kappa = {0, 0, 0, 0};
  const auto silent =
      sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda, rc.cfg.sigma_c2);
  for (double v : silent.iota) CHECK(v == 0.0);
  for (double v : silent.mu) CHECK(v == 0.0);
  for (double v : silent.sinr) CHECK(v == 0.0);
  CHECK(silent.R_c == 0.0);
}

TEST_CASE("rate scales with transmit power in the noise-limited regime") {
  auto rc = make_random_case(21);
  // Single-user association removes multi-user interference entirely.
  rc.Lambda.assign(rc.cfg.J * rc.cfg.K, 0);
  rc.Lambda[idx2(0, 0, rc.cfg.K)] = 1;
  // Zero the radar and the other user's columns so noise dominates.
  const int cols = rc.cfg.M + rc.cfg.K;
  for (int j = 0; j < rc.cfg.J; ++j)
    for (int i = 0; i < rc.cfg.N_s; ++i)
      for (int m = 0; m < rc.cfg.M; ++m)
        for (int c = 0; c < cols; ++c)
          if (c != rc.cfg.M + 0)
            rc.W[idx4(j, i, m, c, rc.cfg.N_s, rc.cfg.M, cols)] = {0.0, 0.0};
  const auto base =
      sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda, rc.cfg.sigma_c2);
  for (auto& w : rc.W) w *= 2.0;  // 4x power
  const auto boosted =
      sinr_report(rc.ch, rc.W, rc.kappa, rc.Lambda, rc.cfg.sigma_c2);
  for (int i = 0; i < rc.cfg.N_s; ++i) {
    const double a = base.sinr[idx2(i, 0, rc.cfg.K)];
    const double b = boosted.sinr[idx2(i, 0, rc.cfg.K)];
    CHECK(b == doctest::Approx(4.0 * a).epsilon(1e-10));
  }
}
