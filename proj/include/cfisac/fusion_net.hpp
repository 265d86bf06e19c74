#pragma once

// Learned target estimation from raw echoes. Each receive AP compresses the
// combined frame tensor into a short feature vector; the CPU concatenates
// those vectors and regresses Q position/velocity pairs, squashed into the
// deployment box and speed bound. Everything runs on a tape so the joint
// trainer can push gradients back through the echoes into the precoders.

#include <vector>

#include "cfisac/common.hpp"
#include "cfisac/config.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/nn/complex.hpp"
#include "cfisac/nn/param_store.hpp"
#include "cfisac/nn/tape.hpp"

namespace cfisac {

struct FusionEstimates {
  nn::Var positions;   // [Q x 2], meters
  nn::Var velocities;  // [Q x 2], m/s
};

/// Combined raw frame input, shape [2 x J*M x N_s x L]. Channel 0 carries
/// real parts, channel 1 imaginary parts. Receive antenna rows come first
/// (echo, ascending Rx id), then the T*M rows of the known radar sequence
/// in tx-rank order. The tensor is scaled by the inverse of its own RMS;
/// the scale is treated as a constant so it does not distort gradients.
/// `echo` is flat [R x N_s x L x M], `radar` flat [T x M x N_s x L] (the
/// layout of FrameSignals::s_r).
nn::Var fusion_input(nn::Tape& t, const ScenarioConfig& config,
                     const nn::CVar& echo, const nn::CVar& radar);

/// Wraps a synthesized echo plus the radar symbol tensor as constants.
nn::Var fusion_input_const(nn::Tape& t, const ScenarioConfig& config,
                           const EchoTensor& echo,
                           const std::vector<cdouble>& s_r);

/// Per-Rx compressed features [2 x R x varrho]. Two stride-2 convolutions
/// (channels 2 -> 8 -> 16, 3x3x3 kernels, leaky rectifier) followed by a
/// mean pool over each receive AP's share of the row axis and a two-layer
/// head. Parameters live under the "fusion." prefix of `ps`.
nn::Var extract_compress(nn::Tape& t, nn::ParamStore& ps,
                         const ScenarioConfig& config, nn::Var input);

/// Fusion MLP from flattened features (2*R*varrho doubles, exactly what the
/// backhaul carries) to Q estimates. With zero features and untrained
/// biases every estimate sits at the center of the coordinate box with zero
/// velocity.
FusionEstimates cpu_fuse(nn::Tape& t, nn::ParamStore& ps,
                         const ScenarioConfig& config, nn::Var features);

/// One-call inference path used by evaluation loops.
FusionEstimates fusion_forward(nn::Tape& t, nn::ParamStore& ps,
                               const ScenarioConfig& config,
                               const EchoTensor& echo,
                               const std::vector<cdouble>& s_r);

/// Doubles uploaded per frame over the fronthaul: 2 * R * varrho.
int backhaul_doubles(const ScenarioConfig& config);

}  // namespace cfisac
