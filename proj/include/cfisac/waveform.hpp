#pragma once

#include <cstdint>
#include <vector>

#include "cfisac/common.hpp"
#include "cfisac/config.hpp"

namespace cfisac {

/// @brief Per-frame signal content: the constant-modulus radar sequences of
/// the T transmit APs, the users' data symbols, and the assembled per-AP
/// emission tensor.
struct FrameSignals {
  int T = 0, M = 0, N_s = 0, L = 0, J = 0, K = 0;
  std::vector<int> zc_roots;    // T roots
  std::vector<cdouble> s_r;     // [T x M x N_s x L]
  std::vector<cdouble> s_c;     // [N_s x L x K]
  std::vector<cdouble> x;       // [J x N_s x L x M]

  const cdouble* s_r_at(int t, int m) const {
    return s_r.data() + idx4(t, m, 0, 0, M, N_s, L);
  }
  cdouble s_c_at(int i, int l, int k) const { return s_c[idx3(i, l, k, L, K)]; }
  const cdouble* x_at(int j, int i, int l) const {
    return x.data() + idx4(j, i, l, 0, N_s, L, M);
  }
};

/// Zadoff-Chu sequence of length N_zc and root u. Throws on a root that is
/// out of range or shares a factor with N_zc.
std::vector<cdouble> zadoff_chu(int N_zc, int u);

/// First T odd primes coprime to N_zc = M*N_s*L.
std::vector<int> default_zc_roots(const ScenarioConfig& config);

/// Radar symbol tensor: antenna stream m of Tx-AP t carries the root-u_t
/// sequence cyclically shifted by m*N_s*L in the flattened (i + l*N_s)
/// index. Throws on duplicate or invalid roots.
std::vector<cdouble> radar_symbols(const ScenarioConfig& config,
                                   const std::vector<int>& zc_roots);

/// Unit-power QPSK data symbols, i.i.d. per (i,l,k), deterministic per seed.
std::vector<cdouble> comm_symbols(const ScenarioConfig& config, std::uint64_t seed);

/// @brief Emitted signal per AP, subcarrier and symbol:
///   x_{j,i}[l] = kappa_j W_r s_r[l] + kappa_j sum_k Lambda_{j,k} w_c_k s_c[l].
///
/// W is the per-AP stacked precoder [J x N_s x M x (M+K)] with radar columns
/// first. Tx index t for AP j is its rank within the kappa=1 set; APs in
/// receive mode emit zero. Parallel over (j,i).
std::vector<cdouble> assemble_tx(const ScenarioConfig& config,
                                 const std::vector<int>& kappa,
                                 const std::vector<int>& Lambda,
                                 const std::vector<cdouble>& W,
                                 const std::vector<cdouble>& s_c,
                                 const std::vector<cdouble>& s_r);

/// Rank of AP j within the transmit set, or -1 if kappa_j = 0.
std::vector<int> tx_ranks(const std::vector<int>& kappa);

}  // namespace cfisac
