#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

namespace cfisac {

/// @brief All system constants for one simulated cell-free ISAC deployment.
///
/// Default values describe the headline setup: a 24 GHz network of 16 APs
/// (14 transmitting, 2 receiving) serving 16 single-antenna users while
/// tracking 3 moving targets among 3 clutter scatterers. Field names double
/// as the keys of the flat key=value config file format.
struct ScenarioConfig {
  double f_c = 24e9;       ///< carrier frequency (Hz)
  double B = 120e6;        ///< total bandwidth (Hz)
  int N_s = 32;            ///< subcarriers
  int L = 16;              ///< OFDM symbols per frame
  int J = 16;              ///< total APs
  int T = 14;              ///< APs in transmit mode
  int R = 2;               ///< APs in receive mode
  int K = 16;              ///< communication users
  int K_u = 2;             ///< max users served per Tx-AP
  int Q = 3;               ///< targets
  int U = 3;               ///< clutter scatterers
  int M = 8;               ///< antennas per AP (half-wavelength ULA)
  double coord_min = -500.0;  ///< deployment box lower corner (m)
  double coord_max = 500.0;   ///< deployment box upper corner (m)
  std::array<double, 2> alpha_range = {2.1, 3.8};  ///< path-loss exponent interval
  double P_j = 100.0;      ///< per-AP transmit power budget (W); 100 W = 50 dBm
  double sigma_c2 = 1e-11; ///< communication noise power (W); -80 dBm
  double sigma_r2 = 1e-11; ///< sensing noise power (W); -80 dBm
  double v_max = 30.0;     ///< target speed bound per axis (m/s)
  int tau_tot = 10;        ///< attention layers per snapshot
  int N = 10;              ///< temporal snapshots per episode
  int N_m = 10;            ///< mirror refinement iterations
  int varrho = 20;         ///< per-Rx compressed feature length
  double omega = 0.5;      ///< position/velocity loss weight
  double rho_weight = 0.5; ///< rate-penalty weight in the joint loss
  double gamma_rate = 10.0;  ///< sum-rate target (bit/s/Hz)
  double T_p = 0.0;        ///< cyclic prefix (s); 0 selects 1/(4 delta_f)
  double learning_rate = 1e-4;
  int pos_dim = 2;         ///< spatial dimension (fixed at 2)

  double delta_f() const { return B / N_s; }
  /// Cyclic prefix actually applied (auto rule when T_p == 0).
  double cp_duration() const { return T_p > 0.0 ? T_p : 0.25 / delta_f(); }
  /// Total OFDM symbol duration 1/delta_f + cyclic prefix.
  double t_sym() const { return 1.0 / delta_f() + cp_duration(); }
  double lambda_c() const;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Parse the flat key=value config format. Lines are `key=value`, `#` starts
/// a comment, blank lines ignored. Unknown keys and malformed values throw
/// std::invalid_argument. Keys not present keep their defaults.
ScenarioConfig parse_config(std::istream& in);
ScenarioConfig load_config_file(const std::string& path);

/// Apply one `key=value` assignment to an existing config (used by both the
/// file parser and CLI overrides).
void apply_config_entry(ScenarioConfig& cfg, const std::string& key,
                        const std::string& value);

/// Serialize in the same key=value format the parser accepts.
void write_config(std::ostream& out, const ScenarioConfig& cfg);

}  // namespace cfisac
