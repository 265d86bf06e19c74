#include "cfisac/scenario.hpp"

#include <stdexcept>

#include "cfisac/rng.hpp"

namespace cfisac {

namespace {

std::vector<Vec2> uniform_points(Rng& rng, int n, double lo, double hi) {
  std::vector<Vec2> pts(n);
  for (auto& p : pts) {
    p.x = rng.uniform(lo, hi);
    p.y = rng.uniform(lo, hi);
  }
  return pts;
}

std::vector<double> uniform_exponents(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> a(n);
  for (auto& v : a) v = rng.uniform(lo, hi);
  return a;
}

}  // namespace

Placement sample_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Placement p;
  p.ap_pos = uniform_points(rng, config.J, config.coord_min, config.coord_max);
  p.cu_pos = uniform_points(rng, config.K, config.coord_min, config.coord_max);
  p.tgt_pos = uniform_points(rng, config.Q, config.coord_min, config.coord_max);
  p.tgt_vel.resize(config.Q);
  for (auto& v : p.tgt_vel) {
    v.x = rng.uniform(-config.v_max, config.v_max);
    v.y = rng.uniform(-config.v_max, config.v_max);
  }
  p.clutter_pos = uniform_points(rng, config.U, config.coord_min, config.coord_max);
  p.tgt_rcs.assign(config.Q, 1.0);
  p.clutter_rcs.assign(config.U, 1.0);

  const double alo = config.alpha_range[0];
  const double ahi = config.alpha_range[1];
  p.alpha_cu = uniform_exponents(rng, static_cast<std::size_t>(config.J) * config.K, alo, ahi);
  p.alpha_ap = uniform_exponents(rng, static_cast<std::size_t>(config.J) * config.J, alo, ahi);
  p.alpha_tgt = uniform_exponents(rng, static_cast<std::size_t>(config.J) * config.Q, alo, ahi);
  p.alpha_clu = uniform_exponents(rng, static_cast<std::size_t>(config.J) * config.U, alo, ahi);
  return p;
}

void check_placement(const Placement& p, const ScenarioConfig& config) {
  auto in_box = [&](const Vec2& v) {
    return v.x >= config.coord_min && v.x <= config.coord_max &&
           v.y >= config.coord_min && v.y <= config.coord_max;
  };
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("placement: ") + msg);
  };
  require(p.ap_pos.size() == static_cast<std::size_t>(config.J), "AP count mismatch");
  require(p.cu_pos.size() == static_cast<std::size_t>(config.K), "CU count mismatch");
  require(p.tgt_pos.size() == static_cast<std::size_t>(config.Q), "target count mismatch");
  require(p.tgt_vel.size() == static_cast<std::size_t>(config.Q), "velocity count mismatch");
  require(p.clutter_pos.size() == static_cast<std::size_t>(config.U), "clutter count mismatch");
  for (const auto& v : p.ap_pos) require(in_box(v), "AP outside coordinate box");
  for (const auto& v : p.cu_pos) require(in_box(v), "CU outside coordinate box");
  for (const auto& v : p.tgt_pos) require(in_box(v), "target outside coordinate box");
  for (const auto& v : p.clutter_pos) require(in_box(v), "clutter outside coordinate box");
  for (const auto& v : p.tgt_vel)
    require(std::abs(v.x) <= config.v_max && std::abs(v.y) <= config.v_max,
            "velocity outside bounds");
}

}  // namespace cfisac
