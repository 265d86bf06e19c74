#pragma once

#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"
#include "cfisac/config.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/scenario.hpp"

namespace cfisac {

/// Classical radar processing: matched filtering per (Tx, Rx) pair, 3D-FFT
/// coarse detection, phase-slope refinement, and multi-static least-squares
/// fusion to positions and velocities. Serves as the FFT-based baseline
/// estimator and as the reference the learned estimators are scored against.

/// One refined detection from a single (Tx, Rx) pair.
///
/// rho is the bistatic range sum d_tx + d_rx, wrapped into [0, c/delta_f)
/// when it comes out of `refine` (the subcarrier phase ramp only determines
/// it modulo that period). theta_rx is the receive-side angle from array
/// broadside; a NaN marks a range-only measurement. snr_proxy is the
/// coarse peak power over the cube's median bin power.
struct PairMeasurement {
  int tx_idx = -1;
  int rx_idx = -1;
  double rho = 0.0;
  double f_d = 0.0;
  double theta_rx = 0.0;
  double snr_proxy = 0.0;
};

/// Position estimates with their RMSE scores against a ground truth.
struct EstimateSet {
  std::vector<Vec2> p_hat;
  std::vector<Vec2> v_hat;
  double rmse_p = 0.0;
  double rmse_v = 0.0;
};

struct CoarsePeak {
  int range_bin = 0;    // subcarrier-axis bin, in [0, N_s)
  int doppler_bin = 0;  // symbol-axis bin, in [0, L)
  int angle_bin = 0;    // antenna-axis bin, in [0, M)
  double power = 0.0;   // |FFT|^2 at the peak
  double floor = 0.0;   // median |FFT|^2 over all bins
};

/// Elementwise multiply Rx row `rx_row` of the echo by the conjugate of
/// Tx-AP `tx_ap`'s emitted radar reference (its radar precoder block applied
/// to sequence t, summed over antenna streams). Returns [N_s x L x M].
std::vector<cdouble> matched_filter(const EchoTensor& echo, int rx_row,
                                    const std::vector<cdouble>& s_r, int t,
                                    const std::vector<cdouble>& W, int tx_ap,
                                    const ScenarioConfig& config);

/// Greedy maxima of the 3D DFT of the cube (delay from subcarriers, Doppler
/// from symbols, spatial frequency from antennas) with a 1-bin guard window
/// suppressed around each accepted peak. Returns at most Q peaks; all-zero
/// cubes yield none.
std::vector<CoarsePeak> fft3_peaks(const std::vector<cdouble>& cube, int N_s,
                                   int L, int M, int Q);

/// Sub-bin refinement of one coarse peak by iterated derotation and
/// weighted phase-slope estimation: Doppler from symbol-lag products, angle
/// from antenna-lag products, and delay from subcarrier products at lag M
/// (immune to the matched filter's per-residue amplitude pattern when
/// N_s % M == 0), unwrapped against the coarse bin. tx_idx/rx_idx are left
/// for the caller to fill.
PairMeasurement refine(const std::vector<cdouble>& cube, const CoarsePeak& peak,
                       const ScenarioConfig& config);

/// Remove the deterministic AP-to-AP coupling term from the echo in place,
/// reconstructing it from the known transmit tensor, array geometry and
/// path-loss exponents. Target and clutter returns are untouched.
void subtract_direct_path(EchoTensor& echo, const Placement& p,
                          const ChannelSet& channels,
                          const std::vector<cdouble>& x,
                          const std::vector<int>& kappa,
                          const ScenarioConfig& config);

struct FusionOptions {
  double rho_period = 0.0;    ///< 0 means measurements are unwrapped
  double sigma_rho = 0.5;     ///< range residual scale (m)
  double sigma_sin = 0.01;    ///< sin(angle) residual scale
  double gate = 50.0;         ///< max normalized squared residual to associate
  Vec2 box_min{-1e9, -1e9};   ///< admissible region for initial candidates
  Vec2 box_max{1e9, 1e9};
  double box_margin = 5.0;
  int max_iters = 60;
};

/// Cluster measurements to at most Q targets and solve each cluster's
/// position by Gauss-Newton on wrapped bistatic-range and sin(angle)
/// residuals, with a backtracking line search so the final residual never
/// exceeds the initialization's. Initial positions come from the closed-form
/// ellipse-ray intersection of the strongest pair's detections, enumerating
/// range wraps and the front/back array ambiguity and keeping the candidate
/// that best explains all measurements.
///
/// Throws UnderdeterminedError when no cluster is solvable (a cluster needs
/// one measurement with an angle, or three range-only measurements).
/// `assignment`, when given, receives the measurement indices backing each
/// returned position.
std::vector<Vec2> fuse_position(const std::vector<PairMeasurement>& meas,
                                const std::vector<Vec2>& ap_pos, int Q,
                                const FusionOptions& opts,
                                std::vector<std::vector<int>>* assignment = nullptr);

enum class VelocityMode {
  kStrict,   ///< throw UnderdeterminedError below pos_dim independent rows
  kMinNorm,  ///< return the minimum-norm least-squares solution instead
};

/// Per-target linear least squares for velocity from Doppler equations
/// f_d = (u_tx + u_rx) . v / lambda, with unit vectors taken at the fused
/// position estimate. `assignment` lists the measurement indices per target.
std::vector<Vec2> fuse_velocity(const std::vector<Vec2>& p_hat,
                                const std::vector<PairMeasurement>& meas,
                                const std::vector<std::vector<int>>& assignment,
                                const std::vector<Vec2>& ap_pos, double lambda_c,
                                VelocityMode mode = VelocityMode::kStrict);

/// Root-mean-square position/velocity errors after brute-force matching of
/// estimates to truth by total squared position distance (requires equal
/// counts, at most 6 targets). The velocity pairing reuses the position
/// matching.
EstimateSet score_estimates(const std::vector<Vec2>& p_true,
                            const std::vector<Vec2>& v_true,
                            const std::vector<Vec2>& p_hat,
                            const std::vector<Vec2>& v_hat);

struct ClassicalOptions {
  bool subtract_direct = true;
  int peaks_per_pair = 0;  ///< 0 selects Q + 2 candidates per (Tx, Rx) pair
  FusionOptions fusion;    ///< box limits are overwritten from the config
  VelocityMode velocity = VelocityMode::kMinNorm;
};

struct ClassicalResult {
  std::vector<PairMeasurement> measurements;
  std::vector<std::vector<int>> support;  // measurement ids per estimate
  std::vector<Vec2> p_hat, v_hat;         // padded to exactly Q entries
};

/// Full pipeline: optional direct-path removal, matched filter and peak
/// refinement over every (Tx, Rx) pair, then position/velocity fusion.
/// Estimates are padded with the box center when fewer than Q clusters
/// survive. Uses only quantities a receiver would know: AP geometry, the
/// transmitted tensor, and the radar sequences.
ClassicalResult classical_estimate(const EchoTensor& echo, const Placement& p,
                                   const ChannelSet& channels,
                                   const std::vector<cdouble>& s_r,
                                   const std::vector<cdouble>& W,
                                   const std::vector<cdouble>& x,
                                   const std::vector<int>& kappa,
                                   const ScenarioConfig& config,
                                   const ClassicalOptions& opts = {});

}  // namespace cfisac
