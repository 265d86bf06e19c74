#pragma once

#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"

namespace cfisac {

/// Multi-user interference indexing variant. The printed SINR expression
/// gates the interfering stream n by the victim's own association entry;
/// kCorrected gates by the interferer's entry instead and is the default.
enum class MuMode { kCorrected, kAsPrinted };

/// @brief Per-subcarrier downlink quality: SINR, its interference
/// components, and the Shannon sum-rate.
struct CommReport {
  int N_s = 0, K = 0;
  std::vector<double> sinr;  // [N_s x K]
  std::vector<double> mu;    // [N_s x K] multi-user interference power (W)
  std::vector<double> iota;  // [N_s x K] radar interference power (W)
  double R_c = 0.0;          // sum over (i,k) of log2(1+sinr)
};

/// SINR/interference/sum-rate over the stacked per-AP precoders
/// W [J x N_s x M x (M+K)] (radar columns first). Parallel over (i,k).
CommReport sinr_report(const ChannelSet& H, const std::vector<cdouble>& W,
                       const std::vector<int>& kappa,
                       const std::vector<int>& Lambda, double sigma_c2,
                       MuMode mode = MuMode::kCorrected);

}  // namespace cfisac
