#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/graph_dynamic.hpp"
#include "cfisac/nn/complex.hpp"
#include "cfisac/nn/param_store.hpp"
#include "cfisac/nn/tape.hpp"
#include "cfisac/scenario.hpp"

// Lightweight alternating framework: a precoding-oriented node graph and an
// association-oriented edge graph over the same adjacency, run for a fixed
// number of mirror iterations with echo feedback between them. One shared
// block pair serves every iteration, which is what keeps the parameter count
// and inference cost below the per-snapshot stacks of the dynamic framework.

namespace cfisac {

/// Edge hidden width of the association-oriented graph. Its raw edge states
/// are complex scalars, so a narrow embedding is plenty.
inline constexpr int kEdgeWidth = 16;
/// Attention depth of the two shared graphs.
inline constexpr int kMirrorDepth1 = 3;
inline constexpr int kMirrorDepth2 = 3;
/// Blend between learned attention and the assignment prior in the
/// precoding-oriented graph.
inline constexpr double kMirrorAlpha = 0.5;
/// Magnitude floor for the reciprocal sensing-edge features.
inline constexpr double kReciprocalEps = 1e-6;

/// Heuristic starting assignment: peripheral APs listen, every transmit AP
/// serves its strongest users. Returns (kappa, Lambda) with Lambda flat
/// [J x K].
std::pair<std::vector<int>, std::vector<int>> init_heuristic(
    const ScenarioConfig& config, const ChannelSet& channels);

/// 1/z with the magnitude of z floored at eps (phase kept; z = 0 maps to the
/// real value 1/eps). Host mirror of the taped creciprocal clamp.
cdouble clamped_reciprocal(cdouble z, double eps);

/// Raw association-graph edge features: per AP-CU edge the subcarrier-summed
/// precoded channel gain, per ordered AP-AP edge the antenna-averaged
/// reciprocal beam response. Flat [J x K] and [J x (J-1)] with the second
/// index skipping the origin AP.
struct EdgeInit {
  std::vector<cdouble> s_com;
  std::vector<cdouble> s_sen;
};

/// Host evaluation of the printed edge-feature formulas from the full host
/// precoder block W [J x N_s x M x (M+K)].
EdgeInit g2_edges_host(const ScenarioConfig& config, const ChannelSet& channels,
                       const std::vector<cdouble>& W);

/// Taped edge features from a precoder head output; gradients flow into the
/// precoders. Rx-AP rows are constants (their precoders are zero).
struct EdgeInitVar {
  nn::CVar s_com;  // flat [J x K]
  nn::CVar s_sen;  // flat [J x (J-1)]
};
EdgeInitVar g2_edges_on_tape(nn::Tape& t, const ScenarioConfig& config,
                             const ChannelSet& channels, const Topology& topo,
                             const PrecoderOut& prec);

/// Sensing-edge carry-over between mirror iterations: the echo-weighted
/// reciprocal sum added onto the incoming edge states. `prev` holds the
/// states the current iteration started from.
std::vector<cdouble> update_sensing_host(const ScenarioConfig& config,
                                         const ChannelSet& channels,
                                         const Topology& topo,
                                         const std::vector<cdouble>& W,
                                         const EchoTensor& echo,
                                         const std::vector<cdouble>& prev);
nn::CVar update_sensing_on_tape(nn::Tape& t, const ScenarioConfig& config,
                                const ChannelSet& channels,
                                const Topology& topo, const PrecoderOut& prec,
                                nn::CVar echo, nn::CVar prev);

/// Precoding-oriented graph: `depth` residual attention layers over each Tx
/// state with all APs and all CUs as neighbors. The attention row blends the
/// learned softmax with the assignment prior [(1-kappa) after the AP columns,
/// the AP's Lambda row after the CU columns]; pass the straight-through gates
/// to keep that prior differentiable, or null to take it from the integer
/// assignment. Parameters live under prefix + "g1.l{tau}.". Rx and CU states
/// pass through unchanged.
struct G1Out {
  NodeStates states;
  nn::Var attention;  // [T x (J+K)] blended attention of the last layer
};
G1Out g1_forward(nn::Tape& t, nn::ParamStore& ps, const ScenarioConfig& config,
                 const std::string& prefix, const NodeStates& states,
                 const Topology& topo, const std::vector<int>& kappa,
                 const std::vector<int>& Lambda,
                 const nn::Var* kappa_gate = nullptr,
                 const nn::Var* lambda_gate = nullptr,
                 double alpha = kMirrorAlpha, int depth = kMirrorDepth1);

/// Association-oriented graph: embeds the raw edge features (normalized by
/// their detached RMS per edge type), runs kMirrorDepth2 shared attention
/// layers where an edge attends to the other edges leaving its origin AP,
/// then reads out the next assignment. kappa picks the Top-(J-R) APs by
/// incident sensing-edge score as transmitters; each transmit AP keeps its
/// Top-K_u users. Parameters under prefix + "g2.".
struct G2Out {
  std::vector<int> kappa;        // [J]
  std::vector<int> Lambda;       // [J x K]
  nn::Var kappa_ste;             // [J] hard forward, soft backward
  nn::Var lambda_ste;            // [J x K]
  nn::Var com_states;            // [J*K x width] final edge states
  nn::Var sen_states;            // [J*(J-1) x width]
  nn::Var com_attention;         // [J*K x (K+J-1)]; the self column is 0
};
G2Out g2_forward(nn::Tape& t, nn::ParamStore& ps, const ScenarioConfig& config,
                 const std::string& prefix, const EdgeInitVar& edges);

/// Throws unless the two graphs describe the same adjacency: the AP and CU
/// neighbor sets used by the precoding graph must equal the edge endpoint
/// sets of the association graph.
void check_shared_adjacency(const ScenarioConfig& config);

struct MirrorOptions {
  std::uint64_t seed = 0;
  /// Keep emissions, echoes, rate and edge features on the tape (training).
  /// Off, the physics runs through the host kernels.
  bool physics_on_tape = true;
  std::string csv_path;
  /// Freeze kappa/Lambda to the supplied assignment and skip the association
  /// graph entirely (the heuristic and random baseline schemes).
  const std::vector<int>* frozen_kappa = nullptr;
  const std::vector<int>* frozen_lambda = nullptr;
};

/// Runs N_m mirror iterations: precoding graph -> precoders -> association
/// graph -> echo -> fusion estimates, with echo feedback re-embedding the
/// node states and the additive sensing-edge carry between iterations.
/// Parameters live under "mir.". Step semantics match run_episode.
EpisodeResult mirror_episode(nn::Tape& t, nn::ParamStore& ps,
                             const ScenarioConfig& config, const Placement& p,
                             const ChannelSet& channels,
                             const BistaticGeometry& geo,
                             const MirrorOptions& opts);

}  // namespace cfisac
