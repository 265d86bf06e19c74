#include <cmath>

#include "cfisac/precoders.hpp"
#include "cfisac/rng.hpp"
#include "cfisac/scenario.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cfisac;

namespace {

// The per-subcarrier solvers exchange row-major [M x A] blocks: entry
// (m, a) lives at index m*A + a.
std::vector<cdouble> random_H(int M, int A, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<cdouble> H(static_cast<std::size_t>(M) * A);
  for (auto& v : H) v = rng.cnormal(1.0);
  return H;
}

cdouble col_dot(const std::vector<cdouble>& X, const std::vector<cdouble>& Y,
                int M, int A, int cx, int cy) {
  cdouble acc{0.0, 0.0};
  for (int m = 0; m < M; ++m)
    acc += std::conj(X[m * A + cx]) * Y[m * A + cy];
  return acc;
}

}  // namespace

TEST_CASE("zero-forcing inverts the channel exactly") {
  const int M = 6, A = 3;
  const auto H = random_H(M, A, 1);
  const auto W = zf_columns(H, M, A);
  REQUIRE(W.size() == H.size());
  // h_a^H w_b is 1 on the diagonal, 0 off it.
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < A; ++b) {
      const cdouble v = col_dot(H, W, M, A, a, b);
      const cdouble want = (a == b) ? cdouble{1.0, 0.0} : cdouble{0.0, 0.0};
      CHECK(std::abs(v - want) < 1e-10);
    }
}

TEST_CASE("zero-forcing an identity channel returns the identity") {
  const int M = 4;
  std::vector<cdouble> H(16, {0.0, 0.0});
  for (int m = 0; m < 4; ++m) H[m * M + m] = {1.0, 0.0};
  const auto W = zf_columns(H, M, 4);
  CHECK(test::max_abs_diff(W, H) < 1e-12);
}

TEST_CASE("zero-forcing stays finite on rank-deficient channels") {
  const int M = 4, A = 3;
  auto H = random_H(M, A, 2);
  // Make column 2 a copy of column 0: the Gram matrix becomes singular.
  for (int m = 0; m < M; ++m) H[2 * M + m] = H[0 * M + m];
  const auto W = zf_columns(H, M, A);
  for (const auto& v : W) {
    CHECK(std::isfinite(v.real()));
    CHECK(std::isfinite(v.imag()));
  }
  // The ridge keeps magnitudes bounded (no 1/0 blowup).
  double biggest = 0.0;
  for (const auto& v : W) biggest = std::max(biggest, std::abs(v));
  CHECK(biggest < 1e7);
}

TEST_CASE("MMSE converges to zero-forcing as noise vanishes") {
  const int M = 6, A = 3;
  const auto H = random_H(M, A, 3);
  const auto Wz = zf_columns(H, M, A);
  const auto Wm = mmse_columns(H, M, A, A, 1e-12, 1.0);
  // Same direction per column: normalized inner product close to 1.
  for (int a = 0; a < A; ++a) {
    const double num = std::abs(col_dot(Wz, Wm, M, A, a, a));
    const double den = std::sqrt(std::abs(col_dot(Wz, Wz, M, A, a, a)) *
                                 std::abs(col_dot(Wm, Wm, M, A, a, a)));
    CHECK(num / den > 1.0 - 1e-6);
  }
}

TEST_CASE("MMSE shrinks toward the matched filter under heavy noise") {
  const int M = 5, A = 2;
  const auto H = random_H(M, A, 4);
  const auto W = mmse_columns(H, M, A, A, 1e9, 1.0);
  // (H H^H + cI)^-1 H ~ H / c for huge c: colinear with the channel itself.
  for (int a = 0; a < A; ++a) {
    const double num = std::abs(col_dot(H, W, M, A, a, a));
    const double den = std::sqrt(std::abs(col_dot(H, H, M, A, a, a)) *
                                 std::abs(col_dot(W, W, M, A, a, a)));
    CHECK(num / den > 1.0 - 1e-6);
  }
}

TEST_CASE("radar block is a scaled identity carrying its power share") {
  auto cfg = test::tiny_config();
  cfg.P_j = 8.0;
  const auto Wr = default_radar_precoder(cfg, 0.5);
  REQUIRE(Wr.size() ==
          static_cast<std::size_t>(cfg.N_s) * cfg.M * cfg.M);
  double energy = 0.0;
  for (int i = 0; i < cfg.N_s; ++i)
    for (int m = 0; m < cfg.M; ++m)
      for (int n = 0; n < cfg.M; ++n) {
        const cdouble v = Wr[idx3(i, m, n, cfg.M, cfg.M)];
        energy += std::norm(v);
        if (m != n) CHECK(std::abs(v) == 0.0);
      }
  CHECK(energy == doctest::Approx(0.5 * cfg.P_j).epsilon(1e-12));
}

TEST_CASE("power projection hits the budget exactly and is idempotent") {
  auto cfg = test::tiny_config();
  cfg.P_j = 3.25;
  Rng rng(5);
  const int cols = cfg.M + cfg.K;
  std::vector<cdouble> W(
      static_cast<std::size_t>(cfg.J) * cfg.N_s * cfg.M * cols);
  for (auto& v : W) v = rng.cnormal(1.0);
  // Silence AP 2 to exercise the all-zero report.
  for (int i = 0; i < cfg.N_s; ++i)
    for (int m = 0; m < cfg.M; ++m)
      for (int c = 0; c < cols; ++c)
        W[idx4(2, i, m, c, cfg.N_s, cfg.M, cols)] = {0.0, 0.0};

  const auto zero_ids = project_power(W, cfg);
  REQUIRE(zero_ids == std::vector<int>{2});
  for (int j = 0; j < cfg.J; ++j) {
    if (j == 2) {
      CHECK(ap_energy(W, cfg, j) == 0.0);
      continue;
    }
    CHECK(ap_energy(W, cfg, j) == doctest::Approx(cfg.P_j).epsilon(1e-12));
  }

  auto W2 = W;
  project_power(W2, cfg);
  CHECK(test::max_abs_diff(W, W2) < 1e-13);

  // Halving the budget scales energies by exactly one half.
  auto W3 = W;
  cfg.P_j = 3.25 / 2.0;
  project_power(W3, cfg);
  for (int j = 0; j < cfg.J; ++j)
    if (j != 2)
      CHECK(ap_energy(W3, cfg, j) ==
            doctest::Approx(3.25 / 2.0).epsilon(1e-12));
}

TEST_CASE("baseline precoders respect budget, split and mode gating") {
  auto cfg = test::tiny_config();
  cfg.P_j = 2.0;
  const auto p = sample_scenario(cfg, 21);
  const auto ch = build_channels(p, cfg, 22);
  const std::vector<int> kappa = {1, 1, 0, 1};
  const std::vector<int> Lambda = {1, 0, 0, 1, 0, 0, 0, 1};

  for (CommPrecoder kind : {CommPrecoder::kZeroForcing, CommPrecoder::kMmse}) {
    const auto W = build_baseline_precoders(cfg, ch, kappa, Lambda, kind, 0.5);
    const int cols = cfg.M + cfg.K;
    for (int j = 0; j < cfg.J; ++j) {
      if (!kappa[j]) {
        CHECK(ap_energy(W, cfg, j) == 0.0);
        continue;
      }
      CHECK(ap_energy(W, cfg, j) == doctest::Approx(cfg.P_j).epsilon(1e-9));
      // Unassociated CU columns stay zero.
      for (int k = 0; k < cfg.K; ++k) {
        if (Lambda[idx2(j, k, cfg.K)]) continue;
        for (int i = 0; i < cfg.N_s; ++i)
          for (int m = 0; m < cfg.M; ++m)
            CHECK(std::abs(W[idx4(j, i, m, cfg.M + k, cfg.N_s, cfg.M, cols)]) ==
                  0.0);
      }
      // Radar and comm blocks share the budget evenly before projection;
      // projection preserves their ratio, so it still holds after.
      double radar = 0.0, comm = 0.0;
      for (int i = 0; i < cfg.N_s; ++i)
        for (int m = 0; m < cfg.M; ++m)
          for (int c = 0; c < cols; ++c) {
            const double e =
                std::norm(W[idx4(j, i, m, c, cfg.N_s, cfg.M, cols)]);
            (c < cfg.M ? radar : comm) += e;
          }
      CHECK(radar == doctest::Approx(comm).epsilon(1e-9));
    }
  }
}

TEST_CASE("zero-forcing baseline cancels cross-user interference per AP") {
  auto cfg = test::tiny_config();
  const auto p = sample_scenario(cfg, 31);
  const auto ch = build_channels(p, cfg, 32);
  // AP 0 serves both users so there is something to orthogonalize.
  const std::vector<int> kappa = {1, 1, 1, 0};
  const std::vector<int> Lambda = {1, 1, 0, 0, 0, 0, 0, 0};
  const auto W = build_baseline_precoders(cfg, ch, kappa, Lambda,
                                          CommPrecoder::kZeroForcing, 0.5);
  const int cols = cfg.M + cfg.K;
  for (int i = 0; i < cfg.N_s; ++i) {
    for (int k = 0; k < 2; ++k)
      for (int n = 0; n < 2; ++n) {
        if (k == n) continue;
        const cdouble* h = ch.h_at(0, i, k);
        cdouble acc{0.0, 0.0};
        for (int m = 0; m < cfg.M; ++m)
          acc += std::conj(h[m]) *
                 W[idx4(0, i, m, cfg.M + n, cfg.N_s, cfg.M, cols)];
        CHECK(std::abs(acc) < 1e-9);
      }
  }
}
