#pragma once

// Two-stage learning loop. The estimation network is first trained alone on
// echoes of radar-only illuminations from random transmit sets; afterwards a
// full decision framework is fine-tuned end to end, with straight-through
// gradients carrying the objective through the discrete mode and association
// picks. Batches walk the dataset deterministically, so a fixed seed
// reproduces a training curve bitwise.

#include <cstdint>
#include <string>
#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/config.hpp"
#include "cfisac/fusion_net.hpp"
#include "cfisac/nn/param_store.hpp"
#include "cfisac/nn/tape.hpp"
#include "cfisac/scenario.hpp"

namespace cfisac {

/// One drawn scenario: a placement with its channels and target geometry.
struct Sample {
  Placement p;
  ChannelSet channels;
  BistaticGeometry geo;
};

/// `count` independent scenario draws, reproducible per seed.
std::vector<Sample> make_dataset(const ScenarioConfig& config, int count,
                                 std::uint64_t seed);

/// Sensing regression loss over a batch:
///   (1 / (X Q)) sum_x sum_q { omega |p_hat - p|^2 + (1-omega) |v_hat - v|^2 }
/// where each sample's estimates are first assigned to the true targets by
/// the permutation minimizing the same weighted error, so the value does not
/// depend on target ordering. truth_p / truth_v hold Q points per sample.
nn::Var pretrain_loss(nn::Tape& t, const std::vector<FusionEstimates>& est,
                      const std::vector<std::vector<Vec2>>& truth_p,
                      const std::vector<std::vector<Vec2>>& truth_v,
                      double omega);

/// Joint objective: the sensing term above plus the mean rate shortfall
/// rho * (gamma - R_c) per sample. The shortfall keeps its sign by default,
/// rewarding surplus rate; `hinge` clips it at zero instead. Every R_c entry
/// must be a scalar tape node. With rho = 0 the result is the exact
/// pretrain_loss node, penalty ops included, er, excluded.
nn::Var joint_loss(nn::Tape& t, const std::vector<FusionEstimates>& est,
                   const std::vector<std::vector<Vec2>>& truth_p,
                   const std::vector<std::vector<Vec2>>& truth_v,
                   const std::vector<nn::Var>& R_c, double omega, double rho,
                   double gamma, bool hinge = false);

struct PretrainOptions {
  int steps = 200;
  int batch = 4;
  /// Adam step size; negative means take config.learning_rate.
  double lr = -1.0;
  std::uint64_t seed = 0;
  std::string csv_path;         ///< per-step loss curve, empty disables
  std::string checkpoint_path;  ///< final parameters, empty disables
};

struct PretrainResult {
  std::vector<double> losses;  ///< one batch loss per step
};

/// Estimation-only training stage. Each dataset sample gets one random
/// transmit set and a radar-only baseline illumination, both frozen for the
/// whole run; their echoes are synthesized once and reused, so a step costs
/// only the estimator forward/backward. Touches parameters under "fusion."
/// and nothing else.
PretrainResult pretrain(nn::ParamStore& ps, const ScenarioConfig& config,
                        const std::vector<Sample>& dataset,
                        const PretrainOptions& opts);

enum class Framework { kDynamic, kMirror };

struct TrainOptions {
  int epochs = 100;
  int batch = 8;  ///< episodes per epoch, cycling through the dataset
  /// Adam step size; negative means take config.learning_rate.
  double lr = -1.0;
  std::uint64_t seed = 0;
  bool hinge = false;          ///< clip the rate shortfall at zero
  std::string csv_path;        ///< per-epoch log, empty disables
  std::string checkpoint_dir;  ///< per-epoch checkpoints, empty disables
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;       ///< mean episode objective
  double loss_p = 0.0;     ///< position component, omega-weighted
  double loss_v = 0.0;     ///< velocity component, (1-omega)-weighted
  double loss_rate = 0.0;  ///< rho-weighted rate shortfall component
  double R_c_mean = 0.0;
  double rmse_p = 0.0;
  double rmse_v = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
};

/// End-to-end fine-tuning of one framework. Runs full multi-snapshot
/// episodes with the physics on the tape, one Adam update per episode, and
/// asserts the transmit-count, association-cap and power constraints on
/// every snapshot. The dynamic framework updates the estimator jointly; the
/// mirrored one keeps "fusion." parameters frozen at their pre-trained
/// values. Throws std::invalid_argument when the store holds no pre-trained
/// estimator.
TrainResult train_framework(nn::ParamStore& ps, Framework framework,
                            const ScenarioConfig& config,
                            const std::vector<Sample>& dataset,
                            const TrainOptions& opts);

}  // namespace cfisac
