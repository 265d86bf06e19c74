#include "cfisac/waveform.hpp"

#include <numeric>
#include <stdexcept>

#include "cfisac/rng.hpp"

namespace cfisac {

std::vector<cdouble> zadoff_chu(int N_zc, int u) {
  if (N_zc <= 0) throw std::invalid_argument("zadoff_chu: length must be positive");
  if (u <= 0 || u >= N_zc || std::gcd(u, N_zc) != 1)
    throw std::invalid_argument("zadoff_chu: root " + std::to_string(u) +
                                " invalid for length " + std::to_string(N_zc));
  std::vector<cdouble> z(N_zc);
  // Phase argument grows as u*n^2 (even length) or u*n*(n+1) (odd length);
  // evaluate modulo 2*N_zc to keep the angle argument small at any length.
  const long long mod = 2LL * N_zc;
  for (long long n = 0; n < N_zc; ++n) {
    const long long quad = (N_zc % 2 == 0) ? (n * n) % mod : (n * (n + 1)) % mod;
    const double phase = -kPi * static_cast<double>((u * quad) % mod) / N_zc;
    z[static_cast<std::size_t>(n)] = std::polar(1.0, phase);
  }
  return z;
}

std::vector<int> default_zc_roots(const ScenarioConfig& config) {
  const int N_zc = config.M * config.N_s * config.L;
  std::vector<int> roots;
  auto is_prime = [](int p) {
    if (p < 2) return false;
    for (int d = 2; d * d <= p; ++d)
      if (p % d == 0) return false;
    return true;
  };
  for (int p = 3; static_cast<int>(roots.size()) < config.T; p += 2) {
    if (p >= N_zc)
      throw std::invalid_argument("default_zc_roots: not enough coprime roots");
    if (is_prime(p) && std::gcd(p, N_zc) == 1) roots.push_back(p);
  }
  return roots;
}

std::vector<cdouble> radar_symbols(const ScenarioConfig& config,
                                   const std::vector<int>& zc_roots) {
  const int T = config.T, M = config.M, N_s = config.N_s, L = config.L;
  if (static_cast<int>(zc_roots.size()) != T)
    throw std::invalid_argument("radar_symbols: need one root per Tx-AP");
  for (int a = 0; a < T; ++a)
    for (int b = a + 1; b < T; ++b)
      if (zc_roots[a] == zc_roots[b])
        throw std::invalid_argument("radar_symbols: duplicate root " +
                                    std::to_string(zc_roots[a]));
  const int N_zc = M * N_s * L;
  std::vector<cdouble> s_r(static_cast<std::size_t>(T) * M * N_s * L);
  for (int t = 0; t < T; ++t) {
    const auto z = zadoff_chu(N_zc, zc_roots[t]);
    for (int m = 0; m < M; ++m)
      for (int i = 0; i < N_s; ++i)
        for (int l = 0; l < L; ++l)
          s_r[idx4(t, m, i, l, M, N_s, L)] = z[(i + l * N_s + m * N_s * L) % N_zc];
  }
  return s_r;
}

std::vector<cdouble> comm_symbols(const ScenarioConfig& config, std::uint64_t seed) {
  const std::size_t n =
      static_cast<std::size_t>(config.N_s) * config.L * config.K;
  std::vector<cdouble> s_c(n);
  Rng rng(split_seed(seed, 0x71505348)); // dedicated payload stream
  const double amp = 1.0 / std::sqrt(2.0);
  for (auto& s : s_c) {
    const std::uint64_t bits = rng.index(4);
    s = {bits & 1 ? -amp : amp, bits & 2 ? -amp : amp};
  }
  return s_c;
}

std::vector<int> tx_ranks(const std::vector<int>& kappa) {
  std::vector<int> rank(kappa.size(), -1);
  int t = 0;
  for (std::size_t j = 0; j < kappa.size(); ++j)
    if (kappa[j]) rank[j] = t++;
  return rank;
}

std::vector<cdouble> assemble_tx(const ScenarioConfig& config,
                                 const std::vector<int>& kappa,
                                 const std::vector<int>& Lambda,
                                 const std::vector<cdouble>& W,
                                 const std::vector<cdouble>& s_c,
                                 const std::vector<cdouble>& s_r) {
  const int J = config.J, K = config.K, M = config.M, N_s = config.N_s,
            L = config.L;
  const int cols = M + K;
  if (static_cast<int>(kappa.size()) != J ||
      static_cast<int>(Lambda.size()) != J * K ||
      W.size() != static_cast<std::size_t>(J) * N_s * M * cols ||
      s_c.size() != static_cast<std::size_t>(N_s) * L * K ||
      s_r.size() != static_cast<std::size_t>(config.T) * M * N_s * L)
    throw std::invalid_argument("assemble_tx: shape mismatch");

  const auto rank = tx_ranks(kappa);
  std::vector<cdouble> x(static_cast<std::size_t>(J) * N_s * L * M, {0.0, 0.0});
#pragma omp parallel for collapse(2) schedule(static)
  for (int j = 0; j < J; ++j) {
    for (int i = 0; i < N_s; ++i) {
      if (!kappa[j]) continue;
      const int t = rank[j];
      const cdouble* Wji = W.data() + idx4(j, i, 0, 0, N_s, M, cols);
      for (int l = 0; l < L; ++l) {
        cdouble* out = x.data() + idx4(j, i, l, 0, N_s, L, M);
        for (int m = 0; m < M; ++m) {
          cdouble acc{0.0, 0.0};
          // Radar branch: W_r times the length-M radar symbol vector.
          for (int s = 0; s < M; ++s)
            acc += Wji[idx2(m, s, cols)] * s_r[idx4(t, s, i, l, M, N_s, L)];
          // Comm branch over associated users.
          for (int k = 0; k < K; ++k) {
            if (!Lambda[idx2(j, k, K)]) continue;
            acc += Wji[idx2(m, M + k, cols)] * s_c[idx3(i, l, k, L, K)];
          }
          out[m] = acc;
        }
      }
    }
  }
  return x;
}

}  // namespace cfisac
