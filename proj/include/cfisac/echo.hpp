#pragma once

#include <cstdint>
#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"
#include "cfisac/config.hpp"
#include "cfisac/scenario.hpp"

namespace cfisac {

/// Per-frame random draws feeding the echo model: reflection coefficients
/// for every ordered (Tx-AP, Rx-AP, scatterer) triple and the receiver
/// noise. Kept separate from synthesis so alternative evaluation paths can
/// consume identical randomness.
struct EchoDraws {
  std::vector<cdouble> beta;   // [J x J x Q] target reflections, CN(0, zeta_q^2)
  std::vector<cdouble> eta;    // [J x J x U] clutter reflections, CN(0, zeta_u^2)
  std::vector<cdouble> noise;  // [R x N_s x L x M] unit-variance CN
};

/// @brief Received echo tensor at the R receive APs, with the per-term
/// breakdown retained for diagnostics.
struct EchoTensor {
  int R = 0, N_s = 0, L = 0, M = 0;
  std::vector<int> rx_ids;  // AP ids of the R receive rows, ascending
  std::vector<cdouble> Y;   // [R x N_s x L x M]
  std::vector<cdouble> target_part, clutter_part, direct_part, noise_part;

  const cdouble* at(int r, int i, int l) const {
    return Y.data() + idx4(r, i, l, 0, N_s, L, M);
  }
};

struct EchoOptions {
  bool direct_path = true;   ///< include the AP-to-AP interference term
  bool keep_parts = false;   ///< retain per-term breakdown tensors
};

EchoDraws make_echo_draws(const ScenarioConfig& config, const Placement& p,
                          std::uint64_t seed);

/// @brief Frequency-domain echo synthesis at every receive AP.
///
/// Sums, per (r,i,l,m): target returns with their bistatic delay and
/// Doppler phase ramps, static clutter returns, the direct AP-to-AP term
/// through G, and AWGN of power sigma_r2. APs with kappa=1 illuminate; APs
/// with kappa=0 listen. Parallel over (r,i) with serial inner sums, so the
/// result is independent of thread count.
EchoTensor synthesize_echo(const Placement& p, const BistaticGeometry& geo,
                           const ChannelSet& channels,
                           const std::vector<cdouble>& x,
                           const std::vector<int>& kappa,
                           const ScenarioConfig& config, const EchoDraws& draws,
                           const EchoOptions& opts = {});

/// Convenience overload drawing randomness from `seed`.
EchoTensor synthesize_echo(const Placement& p, const BistaticGeometry& geo,
                           const ChannelSet& channels,
                           const std::vector<cdouble>& x,
                           const std::vector<int>& kappa,
                           const ScenarioConfig& config, std::uint64_t seed,
                           const EchoOptions& opts = {});

/// AP ids currently in receive mode (kappa = 0), ascending.
std::vector<int> rx_ids_from_kappa(const std::vector<int>& kappa);

}  // namespace cfisac
