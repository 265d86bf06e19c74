#pragma once

#include <cstdint>
#include <vector>

#include "cfisac/common.hpp"
#include "cfisac/config.hpp"
#include "cfisac/scenario.hpp"

namespace cfisac {

/// @brief Per-subcarrier channels between every AP and every CU, plus the
/// LoS AP-to-AP array-response matrices used by the direct echo term.
///
/// h is indexed [j][i][k][m] (AP, subcarrier, CU, antenna). G holds the
/// rank-1 outer products a(theta_rx) a(theta_tx)^T per ordered AP pair;
/// path loss for the AP-to-AP leg is applied separately where G is used,
/// so every stored entry is unit-modulus. Diagonal blocks are left zero.
struct ChannelSet {
  int J = 0, N_s = 0, K = 0, M = 0;
  std::vector<cdouble> h;           // [J x N_s x K x M]
  std::vector<cdouble> G;           // [J x J x M x M], diagonal unused
  std::vector<double> ap_ap_dist;   // [J x J]

  const cdouble* h_at(int j, int i, int k) const {
    return h.data() + idx4(j, i, k, 0, N_s, K, M);
  }
  const cdouble* G_at(int j, int r) const {
    return G.data() + idx4(j, r, 0, 0, J, M, M);
  }
};

/// @brief Distances, broadside angles and bistatic Doppler shifts between
/// every AP and every target/clutter scatterer.
///
/// Arrays are indexed by AP id regardless of the AP's current mode; the
/// Tx-side and Rx-side values of a bistatic pair are reads of the same
/// array at the two AP ids. Clutter is static, so it carries no Doppler.
struct BistaticGeometry {
  int J = 0, Q = 0, U = 0;
  std::vector<double> tgt_dist;    // [J x Q] (m)
  std::vector<double> tgt_theta;   // [J x Q] (rad, from array broadside)
  std::vector<double> f_d;         // [J x J x Q] (Hz), ordered (tx, rx, q)
  std::vector<double> clu_dist;    // [J x U]
  std::vector<double> clu_theta;   // [J x U]

  double doppler(int tx, int rx, int q) const { return f_d[idx3(tx, rx, q, J, Q)]; }
};

/// Free-space-anchored power-law path loss (lambda/4pi)^2 d^-alpha.
/// d must be positive.
double path_loss(double d, double alpha, double f_c);

/// Half-wavelength ULA array response; entry n is exp(j pi n sin(theta)).
std::vector<cdouble> steering(double theta, int M);

/// Angle of `target` seen from an array at `origin`, measured from the
/// array broadside. All arrays are oriented along the x-axis, so
/// sin(theta) is the x-component of the unit LoS vector.
double broadside_angle(const Vec2& origin, const Vec2& target);

/// Build the full CU channel tensor plus AP-to-AP matrices. `seed` drives
/// only the per-link scalar fading gains g_{j,k}.
ChannelSet build_channels(const Placement& p, const ScenarioConfig& config,
                          std::uint64_t seed);

/// Distances/angles/Dopplers for all AP-target and AP-clutter pairs.
/// Throws on zero AP-to-scatterer distance.
BistaticGeometry bistatic_geometry(const Placement& p, const ScenarioConfig& config);

}  // namespace cfisac
