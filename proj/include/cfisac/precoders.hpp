#pragma once

#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"
#include "cfisac/config.hpp"

namespace cfisac {

/// Classical downlink precoding baselines. All functions produce or accept
/// the stacked per-AP layout W [J x N_s x M x (M+K)]: radar columns first,
/// then one column per CU (zero when the CU is not associated).

/// Zero-forcing directions for one (AP, subcarrier): columns of
/// H (H^H H)^-1 over the associated channel matrix H [M x A]. Falls back to
/// a ridge of 1e-6 * trace(H^H H) when the Gram matrix is not invertible.
std::vector<cdouble> zf_columns(const std::vector<cdouble>& H, int M, int A);

/// MMSE directions (H H^H + (K sigma_c2 / P) I)^-1 H for one (AP,
/// subcarrier); always well defined for sigma_c2 > 0.
std::vector<cdouble> mmse_columns(const std::vector<cdouble>& H, int M, int A,
                                  int K_total, double sigma_c2, double P);

/// Scaled-identity radar precoder for every (j,i), sized so the radar block
/// alone carries `split` of the per-AP budget.
std::vector<cdouble> default_radar_precoder(const ScenarioConfig& config,
                                            double split = 0.5);

/// Scale each AP's stacked precoder so its total transmit energy equals P_j
/// exactly. All-zero APs are left untouched; their ids are returned so the
/// caller can warn.
std::vector<int> project_power(std::vector<cdouble>& W,
                               const ScenarioConfig& config);

enum class CommPrecoder { kZeroForcing, kMmse, kNone };

/// Full stacked baseline precoders: comm directions per associated CU
/// scaled to (1-split) of the budget, scaled-identity radar block at
/// `split`, zero for receive-mode APs. Per-AP energy lands exactly on P_j
/// for every transmit AP.
std::vector<cdouble> build_baseline_precoders(const ScenarioConfig& config,
                                              const ChannelSet& channels,
                                              const std::vector<int>& kappa,
                                              const std::vector<int>& Lambda,
                                              CommPrecoder kind,
                                              double split = 0.5);

/// Total transmit energy sum_i ||W_{j,i}||_F^2 of one AP.
double ap_energy(const std::vector<cdouble>& W, const ScenarioConfig& config,
                 int j);

}  // namespace cfisac
