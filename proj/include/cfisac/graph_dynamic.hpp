#pragma once

// Snapshot-graph designer. Each temporal snapshot builds a heterogeneous
// graph over Tx-APs, Rx-APs and CUs; masked attention over a Tx-AP's
// neighbors produces the user association, a linear head emits the
// power-projected precoders, and attention over the accumulated per-AP
// states picks the next snapshot's transmit set. Discrete Top-k picks are
// wrapped in straight-through nodes so the joint trainer can differentiate
// through the synthesized echoes back into every block.

#include <cstdint>
#include <string>
#include <vector>

#include "cfisac/channel.hpp"
#include "cfisac/common.hpp"
#include "cfisac/config.hpp"
#include "cfisac/echo.hpp"
#include "cfisac/fusion_net.hpp"
#include "cfisac/nn/complex.hpp"
#include "cfisac/nn/param_store.hpp"
#include "cfisac/nn/tape.hpp"
#include "cfisac/scenario.hpp"
#include "cfisac/waveform.hpp"

namespace cfisac {

/// Shared hidden width of all graph node states.
constexpr int kHiddenWidth = 128;

/// Mode split for one snapshot; tx_ids/rx_ids ascending AP ids.
struct Topology {
  std::vector<int> kappa;
  std::vector<int> tx_ids;
  std::vector<int> rx_ids;
};

/// Validates length, 0/1 entries and the transmit count before splitting.
Topology topology_from_kappa(const std::vector<int>& kappa,
                             const ScenarioConfig& config);

/// Indices of the k largest entries, ties broken toward the lower index.
/// Returned ascending.
std::vector<int> top_k_indices(const std::vector<double>& values, int k);

/// Mode heuristic: the R APs with the largest summed distance to the rest
/// of the network listen, everyone else transmits.
std::vector<int> heuristic_kappa(const ScenarioConfig& config,
                                 const ChannelSet& channels);

/// Association heuristic: every Tx-AP serves its K_u strongest CUs by
/// total channel energy. Receive rows stay zero.
std::vector<int> heuristic_lambda(const ScenarioConfig& config,
                                  const ChannelSet& channels,
                                  const std::vector<int>& kappa);

/// @brief Real-valued per-edge features.
///
/// h_feat(j,k) stacks [Re vec h_{j,k}; Im vec h_{j,k}] over all subcarriers
/// and antennas (length 2 N_s M). g_feat(a,b) does the same for the AP pair
/// matrix G_{a,b} (length 2 M^2). Indexed by AP id, so a topology change
/// never invalidates them.
struct EdgeFeatures {
  int J = 0, K = 0;
  int h_len = 0, g_len = 0;
  std::vector<double> h_feat;  // [J x K x h_len]
  std::vector<double> g_feat;  // [J x J x g_len]

  const double* h_at(int j, int k) const {
    return h_feat.data() + idx3(j, k, 0, K, h_len);
  }
  const double* g_at(int a, int b) const {
    return g_feat.data() + idx3(a, b, 0, J, g_len);
  }
};

EdgeFeatures edge_features(const ChannelSet& channels);

/// Hidden node states, one row per node.
struct NodeStates {
  nn::Var tx;  // [T x D]
  nn::Var rx;  // [R x D]
  nn::Var cu;  // [K x D]
};

/// Row-stacks the Tx and Rx state matrices and reorders rows by AP id,
/// giving one [J x D] matrix indexed the same way as kappa.
nn::Var states_by_ap(nn::Tape& t, const Topology& topo, nn::Var tx, nn::Var rx);

/// Embedded initial states. A Tx row concatenates its CU edges then its
/// edges toward each Rx-AP; an Rx row concatenates the first Tx-AP's CU
/// edges then the edges from every Tx-AP; a CU row concatenates its edges
/// from every Tx-AP. One learned linear map per node type, parameters under
/// prefix + "embed.{tx,rx,cu}".
NodeStates init_node_states(nn::Tape& t, nn::ParamStore& ps,
                            const EdgeFeatures& feat, const Topology& topo,
                            const std::string& prefix);

/// Same rows augmented with the previous snapshot's echo: every Tx row
/// appends all R receive echoes, every Rx row appends its own echo repeated
/// once per Tx-AP. The echo blocks go through dedicated projections
/// (prefix + "embed2.{tx,rx}") added onto the base embedding, so a zero
/// echo reproduces init_node_states exactly. `echo` is flat
/// [R x N_s x L x M]; its rows pair with the current rx_ids positionally.
NodeStates enhanced_node_states(nn::Tape& t, nn::ParamStore& ps,
                                const ScenarioConfig& config,
                                const EdgeFeatures& feat, const Topology& topo,
                                const std::string& prefix, nn::CVar echo);

/// Additive attention mask over the K+R neighbor slots of a Tx node:
/// zero on CU columns, -1e9 on Rx-AP columns.
std::vector<double> structural_mask(int K, int R);

struct StructuralOut {
  NodeStates states;
  nn::Var attention;  // [T x (K+R)], post-softmax neighbor weights
};

/// One masked-attention layer. Queries come from Tx states; keys and values
/// from the CU and Rx states through per-type maps. Attention weights are
/// softmax(key^T W_att query + mask) per Tx row; the weighted value sum
/// passes through a leaky rectifier and an output map, then adds back onto
/// the Tx state. CU and Rx states pass through unchanged. Parameters live
/// under `prefix`. Throws if the mask closes every neighbor slot.
StructuralOut structural_layer(nn::Tape& t, nn::ParamStore& ps,
                               const std::string& prefix,
                               const NodeStates& states,
                               const std::vector<double>& mask);

struct AssociationOut {
  std::vector<int> Lambda;  // [J x K] by AP id, receive rows zero
  nn::Var lambda_ste;       // [T x K]; hard 0/1 forward, soft backward
};

/// Per Tx row, the K_u most attended CUs (ties toward the lower CU index)
/// become that AP's served set.
AssociationOut select_association(nn::Tape& t, const ScenarioConfig& config,
                                  const Topology& topo, nn::Var attention);

struct PrecoderOut {
  // Per Tx-AP (topology order) flat [N_s x M x (M+K)] stacked precoders,
  // radar columns first, unassociated CU columns exactly zero, per-AP
  // energy exactly P_j.
  std::vector<nn::CVar> w_tx;
  std::vector<cdouble> W;  // host copy [J x N_s x M x (M+K)], Rx rows zero
};

/// Linear head from each Tx state to its stacked precoder. Unserved CU
/// columns are zeroed through the association's straight-through gate
/// before the exact power projection, so gradients keep flowing into the
/// association scores. Throws if a head output is identically zero.
PrecoderOut precoder_head(nn::Tape& t, nn::ParamStore& ps,
                          const ScenarioConfig& config,
                          const std::string& prefix, const Topology& topo,
                          nn::Var tx_states, const AssociationOut& assoc);

struct TemporalOut {
  std::vector<int> kappa;  // next snapshot's modes
  nn::Var kappa_ste;       // [J]; hard 0/1 forward, soft backward
};

/// Scores every AP against the network-mean query over the accumulated
/// per-AP history states [J x D] and keeps the top J-R as transmitters.
/// With zero weights all scores tie and the lowest-index APs transmit.
TemporalOut temporal_select(nn::Tape& t, nn::ParamStore& ps,
                            const ScenarioConfig& config,
                            const std::string& prefix, nn::Var ap_history);

/// Emitted frames on the tape, one [N_s*L x M] matrix per Tx-AP in topology
/// order: rows are (subcarrier, symbol) pairs, columns antennas. Each
/// precoder multiplies the stacked symbol matrix (radar streams first, then
/// data symbols). `mode_gate`, when non-null, multiplies AP j's emission by
/// gate entry j; with a straight-through gate the forward factor is exactly
/// one and gradients reach the mode scores.
std::vector<nn::CVar> emissions_on_tape(nn::Tape& t,
                                        const ScenarioConfig& config,
                                        const Topology& topo,
                                        const PrecoderOut& prec,
                                        const std::vector<cdouble>& s_c,
                                        const std::vector<cdouble>& s_r,
                                        const nn::Var* mode_gate = nullptr);

/// Echo tensor on the tape, flat [R x N_s x L x M]. Matches synthesize_echo
/// for identical operands up to summation-order rounding.
nn::CVar echo_on_tape(nn::Tape& t, const ScenarioConfig& config,
                      const Placement& p, const BistaticGeometry& geo,
                      const ChannelSet& channels, const Topology& topo,
                      const std::vector<nn::CVar>& X, const EchoDraws& draws);

/// Sum rate on the tape with per-interferer association gating; equals
/// sinr_report(...).R_c with corrected interference accounting for the same
/// operands.
nn::Var rate_on_tape(nn::Tape& t, const ScenarioConfig& config,
                     const ChannelSet& channels, const Topology& topo,
                     const PrecoderOut& prec, const std::vector<int>& Lambda);

/// Greedy-free assignment of Q estimates to Q truths: minimizes the
/// omega-weighted squared position/velocity error over all permutations.
/// perm[q] is the estimate index assigned to truth q.
struct TargetMatch {
  std::vector<int> perm;
  double rmse_p = 0.0;  // sqrt(mean over targets of squared position error)
  double rmse_v = 0.0;
};

TargetMatch match_targets(const std::vector<Vec2>& est_p,
                          const std::vector<Vec2>& est_v,
                          const std::vector<Vec2>& true_p,
                          const std::vector<Vec2>& true_v, double omega);

/// Reads a [Q x 2] tape value into points.
std::vector<Vec2> var_to_points(const nn::Var& v);

struct SnapshotStep {
  int n = 0;
  std::vector<int> kappa;   // modes active in this snapshot
  std::vector<int> Lambda;  // [J x K]
  std::vector<cdouble> W;   // host precoders [J x N_s x M x (M+K)]
  double R_c = 0.0;
  double rmse_p = 0.0, rmse_v = 0.0;
  nn::Var rate;          // scalar sum rate on the tape
  FusionEstimates est;   // on-tape position/velocity estimates
  /// Host copies of the estimates, flat [Q x 2]. Valid after the tape that
  /// produced `est` is gone; use these for reporting.
  std::vector<double> est_pos, est_vel;
};

struct EpisodeOptions {
  std::uint64_t seed = 0;   ///< drives data symbols, echoes, random modes
  bool train_mode = false;  ///< random snapshot-1 transmit set when true
  /// Keep emissions, echo and rate on the tape (required for training).
  /// When false those stages run through the reference host kernels, which
  /// is far lighter for evaluation sweeps; decisions are identical.
  bool physics_on_tape = true;
  std::string csv_path;     ///< per-snapshot decision log, empty disables
};

struct EpisodeResult {
  std::vector<SnapshotStep> steps;
};

/// Full multi-snapshot pipeline: embed, attend, associate, precode, emit,
/// receive, estimate, then pick the next transmit set from the state
/// history. Parameters live under the "dyn." prefix of `ps`.
EpisodeResult run_episode(nn::Tape& t, nn::ParamStore& ps,
                          const ScenarioConfig& config, const Placement& p,
                          const ChannelSet& channels,
                          const BistaticGeometry& geo,
                          const EpisodeOptions& opts);

}  // namespace cfisac
