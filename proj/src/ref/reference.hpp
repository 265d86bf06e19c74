#pragma once

// Naive serial reference implementations of the transmit, SINR and echo
// equations, written directly from their mathematical definitions with
// plain triple loops. They intentionally duplicate the math of the main
// library (including path loss and steering) instead of calling into it:
// tests compare the two paths, and the kernel benchmark uses these as the
// serial baseline.

#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"
#include "cfisac/config.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/scenario.hpp"

namespace cfisac::ref {

/// Transmit tensor per the emission equation, one scalar at a time.
std::vector<cdouble> assemble_tx_naive(const ScenarioConfig& config,
                                       const std::vector<int>& kappa,
                                       const std::vector<int>& Lambda,
                                       const std::vector<cdouble>& W,
                                       const std::vector<cdouble>& s_c,
                                       const std::vector<cdouble>& s_r);

struct SinrNaive {
  std::vector<double> sinr, mu, iota;  // [N_s x K]
  double R_c = 0.0;
};

/// SINR, interference terms and sum-rate from the printed definitions.
/// `printed_mu` selects the literal interference subscript variant.
SinrNaive sinr_naive(const ChannelSet& H, const std::vector<cdouble>& W,
                     const std::vector<int>& kappa,
                     const std::vector<int>& Lambda, double sigma_c2,
                     bool printed_mu);

/// Echo tensor from the four-term receive equation, consuming the same
/// draw set as the production kernel.
std::vector<cdouble> echo_naive(const Placement& p, const BistaticGeometry& geo,
                                const ChannelSet& channels,
                                const std::vector<cdouble>& x,
                                const std::vector<int>& kappa,
                                const ScenarioConfig& config,
                                const EchoDraws& draws, bool direct_path);

}  // namespace cfisac::ref
