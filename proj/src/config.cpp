#include "cfisac/config.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cfisac/common.hpp"

namespace cfisac {

double ScenarioConfig::lambda_c() const { return kSpeedOfLight / f_c; }

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("config: " + msg);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for " + key + ": '" +
                                value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const double d = parse_double(key, value);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw std::invalid_argument("config: " + key + " must be an integer, got '" +
                                value + "'");
  return i;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ScenarioConfig::validate() const {
  require(f_c > 0, "f_c must be positive");
  require(B > 0 && N_s > 0, "B/N_s must be positive");
  require(L > 0, "L must be positive");
  require(J > 0 && T > 0 && R > 0, "J, T, R must be positive");
  require(T + R == J, "T + R must equal J");
  require(K > 0, "K must be positive");
  require(K_u >= 1 && K_u <= K, "K_u must lie in [1, K]");
  require(Q >= 0 && U >= 0, "Q and U must be nonnegative");
  require(M > 0, "M must be positive");
  require(coord_max > coord_min, "coordinate box must be nonempty");
  require(alpha_range[0] > 0 && alpha_range[1] >= alpha_range[0],
          "alpha_range must be a nonempty positive interval");
  require(P_j > 0, "P_j must be positive");
  require(sigma_c2 > 0 && sigma_r2 > 0, "noise powers must be positive");
  require(v_max >= 0, "v_max must be nonnegative");
  require(tau_tot > 0 && N > 0 && N_m > 0 && varrho > 0,
          "tau_tot, N, N_m, varrho must be positive");
  require(omega >= 0 && omega <= 1, "omega must lie in [0, 1]");
  require(rho_weight >= 0 && rho_weight <= 1, "rho_weight must lie in [0, 1]");
  require(T_p >= 0, "T_p must be nonnegative");
  require(learning_rate > 0, "learning_rate must be positive");
  require(pos_dim == 2, "pos_dim must be 2");
}

void apply_config_entry(ScenarioConfig& cfg, const std::string& raw_key,
                        const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  using Setter = std::function<void(ScenarioConfig&, const std::string&)>;
  // One setter per public field; the map doubles as the list of legal keys.
  static const std::map<std::string, Setter> setters = {
      {"f_c", [](ScenarioConfig& c, const std::string& v) { c.f_c = parse_double("f_c", v); }},
      {"B", [](ScenarioConfig& c, const std::string& v) { c.B = parse_double("B", v); }},
      {"N_s", [](ScenarioConfig& c, const std::string& v) { c.N_s = parse_int("N_s", v); }},
      {"L", [](ScenarioConfig& c, const std::string& v) { c.L = parse_int("L", v); }},
      {"J", [](ScenarioConfig& c, const std::string& v) { c.J = parse_int("J", v); }},
      {"T", [](ScenarioConfig& c, const std::string& v) { c.T = parse_int("T", v); }},
      {"R", [](ScenarioConfig& c, const std::string& v) { c.R = parse_int("R", v); }},
      {"K", [](ScenarioConfig& c, const std::string& v) { c.K = parse_int("K", v); }},
      {"K_u", [](ScenarioConfig& c, const std::string& v) { c.K_u = parse_int("K_u", v); }},
      {"Q", [](ScenarioConfig& c, const std::string& v) { c.Q = parse_int("Q", v); }},
      {"U", [](ScenarioConfig& c, const std::string& v) { c.U = parse_int("U", v); }},
      {"M", [](ScenarioConfig& c, const std::string& v) { c.M = parse_int("M", v); }},
      {"coord_min", [](ScenarioConfig& c, const std::string& v) { c.coord_min = parse_double("coord_min", v); }},
      {"coord_max", [](ScenarioConfig& c, const std::string& v) { c.coord_max = parse_double("coord_max", v); }},
      {"alpha_range",
       [](ScenarioConfig& c, const std::string& v) {
         const auto comma = v.find(',');
         if (comma == std::string::npos)
           throw std::invalid_argument(
               "config: alpha_range expects 'lo,hi', got '" + v + "'");
         c.alpha_range[0] = parse_double("alpha_range", trim(v.substr(0, comma)));
         c.alpha_range[1] = parse_double("alpha_range", trim(v.substr(comma + 1)));
       }},
      {"P_j", [](ScenarioConfig& c, const std::string& v) { c.P_j = parse_double("P_j", v); }},
      {"sigma_c2", [](ScenarioConfig& c, const std::string& v) { c.sigma_c2 = parse_double("sigma_c2", v); }},
      {"sigma_r2", [](ScenarioConfig& c, const std::string& v) { c.sigma_r2 = parse_double("sigma_r2", v); }},
      {"v_max", [](ScenarioConfig& c, const std::string& v) { c.v_max = parse_double("v_max", v); }},
      {"tau_tot", [](ScenarioConfig& c, const std::string& v) { c.tau_tot = parse_int("tau_tot", v); }},
      {"N", [](ScenarioConfig& c, const std::string& v) { c.N = parse_int("N", v); }},
      {"N_m", [](ScenarioConfig& c, const std::string& v) { c.N_m = parse_int("N_m", v); }},
      {"varrho", [](ScenarioConfig& c, const std::string& v) { c.varrho = parse_int("varrho", v); }},
      {"omega", [](ScenarioConfig& c, const std::string& v) { c.omega = parse_double("omega", v); }},
      {"rho_weight", [](ScenarioConfig& c, const std::string& v) { c.rho_weight = parse_double("rho_weight", v); }},
      {"gamma_rate", [](ScenarioConfig& c, const std::string& v) { c.gamma_rate = parse_double("gamma_rate", v); }},
      {"T_p", [](ScenarioConfig& c, const std::string& v) { c.T_p = parse_double("T_p", v); }},
      {"learning_rate", [](ScenarioConfig& c, const std::string& v) { c.learning_rate = parse_double("learning_rate", v); }},
      {"pos_dim", [](ScenarioConfig& c, const std::string& v) { c.pos_dim = parse_int("pos_dim", v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end())
    throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second(cfg, value);
}

ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + line + "'");
    apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  return parse_config(in);
}

void write_config(std::ostream& out, const ScenarioConfig& cfg) {
  out.precision(17);
  out << "f_c=" << cfg.f_c << "\nB=" << cfg.B << "\nN_s=" << cfg.N_s
      << "\nL=" << cfg.L << "\nJ=" << cfg.J << "\nT=" << cfg.T
      << "\nR=" << cfg.R << "\nK=" << cfg.K << "\nK_u=" << cfg.K_u
      << "\nQ=" << cfg.Q << "\nU=" << cfg.U << "\nM=" << cfg.M
      << "\ncoord_min=" << cfg.coord_min << "\ncoord_max=" << cfg.coord_max
      << "\nalpha_range=" << cfg.alpha_range[0] << "," << cfg.alpha_range[1]
      << "\nP_j=" << cfg.P_j << "\nsigma_c2=" << cfg.sigma_c2
      << "\nsigma_r2=" << cfg.sigma_r2 << "\nv_max=" << cfg.v_max
      << "\ntau_tot=" << cfg.tau_tot << "\nN=" << cfg.N << "\nN_m=" << cfg.N_m
      << "\nvarrho=" << cfg.varrho << "\nomega=" << cfg.omega
      << "\nrho_weight=" << cfg.rho_weight << "\ngamma_rate=" << cfg.gamma_rate
      << "\nT_p=" << cfg.T_p << "\nlearning_rate=" << cfg.learning_rate
      << "\npos_dim=" << cfg.pos_dim << "\n";
}

}  // namespace cfisac
