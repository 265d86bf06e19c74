#include "cfisac/nn/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cfisac/rng.hpp"
#include "json.hpp"

namespace cfisac::nn {

namespace {

constexpr char kMagic[] = "CFCKPT1\n";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool all_zero(const Tensor& t) {
  for (double v : t.data)
    if (v != 0.0) return false;
  return true;
}

}  // namespace

ParamStore::ParamStore(std::uint64_t seed) : _seed(seed) {}

Var ParamStore::param(Tape& t, const std::string& name, std::vector<int> shape,
                      Init init, double scale) {
  auto it = _slots.find(name);
  if (it == _slots.end()) {
    Slot slot;
    slot.value = Tensor(shape);
    if (init != Init::kZeros) {
      cfisac::Rng rng(cfisac::split_seed(_seed, fnv1a(name)));
      double sd = scale;
      if (init == Init::kGlorot) {
        // Fan sizes from the trailing two dims (or the whole tensor for 1D).
        double fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
        double fan_out = shape.back();
        sd = std::sqrt(2.0 / (fan_in + fan_out));
      }
      for (double& v : slot.value.data) v = sd * rng.normal();
    }
    // Adam moments stay empty until the first update touches the slot, so
    // evaluation-only stores don't triple their footprint.
    it = _slots.emplace(name, std::move(slot)).first;
  } else if (it->second.value.shape != shape) {
    throw std::invalid_argument("param: shape conflict for " + name);
  }
  auto& reg = _uses[&t];
  auto rit = reg.find(name);
  if (rit != reg.end()) return Var{&t, rit->second};
  Var leaf = t.leaf(it->second.value);
  reg.emplace(name, leaf.id);
  return leaf;
}

bool ParamStore::has(const std::string& name) const { return _slots.count(name) > 0; }

Tensor& ParamStore::raw(const std::string& name) {
  auto it = _slots.find(name);
  if (it == _slots.end()) throw std::invalid_argument("raw: unknown param " + name);
  return it->second.value;
}

const Tensor& ParamStore::raw(const std::string& name) const {
  auto it = _slots.find(name);
  if (it == _slots.end()) throw std::invalid_argument("raw: unknown param " + name);
  return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(_slots.size());
  for (const auto& [k, _] : _slots) out.push_back(k);
  return out;
}

std::int64_t ParamStore::total_params() const {
  std::int64_t n = 0;
  for (const auto& [_, slot] : _slots) n += slot.value.numel();
  return n;
}

void ParamStore::adam_step(Tape& t, double lr, double beta1, double beta2,
                           double eps) {
  auto uit = _uses.find(&t);
  if (uit == _uses.end()) return;
  for (const auto& [name, id] : uit->second) {
    const Tensor& g = t.node(id).grad;
    if (g.data.empty() || all_zero(g)) continue;
    Slot& slot = _slots.at(name);
    if (slot.m.data.empty()) {
      slot.m = Tensor(slot.value.shape);
      slot.v = Tensor(slot.value.shape);
    }
    slot.steps += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(slot.steps));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(slot.steps));
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      double gi = g.data[i];
      slot.m.data[i] = beta1 * slot.m.data[i] + (1.0 - beta1) * gi;
      slot.v.data[i] = beta2 * slot.v.data[i] + (1.0 - beta2) * gi * gi;
      double mhat = slot.m.data[i] / bc1;
      double vhat = slot.v.data[i] / bc2;
      slot.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  _uses.erase(uit);
}

void ParamStore::release(Tape& t) { _uses.erase(&t); }

void ParamStore::reset_adam() {
  for (auto& [_, slot] : _slots) {
    slot.m = Tensor{};
    slot.v = Tensor{};
    slot.steps = 0;
  }
}

GradCheckResult ParamStore::gradcheck(const std::function<Var(Tape&)>& build_loss,
                                      double h, int max_entries_per_param) {
  GradCheckResult res;
  std::map<std::string, Tensor> analytic;
  {
    Tape t;
    Var loss = build_loss(t);
    t.backward(loss);
    auto uit = _uses.find(&t);
    if (uit != _uses.end()) {
      for (const auto& [name, id] : uit->second) {
        const Tensor& g = t.node(id).grad;
        analytic[name] = g.data.empty() ? Tensor(t.node(id).value.shape) : g;
      }
    }
    release(t);
  }
  auto eval = [&]() {
    Tape t;
    double v = build_loss(t).value().item();
    release(t);
    return v;
  };
  for (auto& [name, g] : analytic) {
    Tensor& value = _slots.at(name).value;
    std::int64_t n = value.numel();
    std::vector<std::int64_t> probe;
    if (max_entries_per_param > 0 && n > max_entries_per_param) {
      for (int k = 0; k < max_entries_per_param; ++k)
        probe.push_back(k * n / max_entries_per_param);
    } else {
      probe.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) probe[static_cast<std::size_t>(i)] = i;
    }
    for (std::int64_t i : probe) {
      double saved = value.data[static_cast<std::size_t>(i)];
      value.data[static_cast<std::size_t>(i)] = saved + h;
      double up = eval();
      value.data[static_cast<std::size_t>(i)] = saved - h;
      double dn = eval();
      value.data[static_cast<std::size_t>(i)] = saved;
      double fd = (up - dn) / (2.0 * h);
      double an = g.data[static_cast<std::size_t>(i)];
      double rel = std::abs(fd - an) / std::max(1e-12, std::abs(fd) + std::abs(an));
      if (rel > res.max_rel) {
        res.max_rel = rel;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

void ParamStore::save(const std::string& path) const {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, slot] : _slots) {
    manifest.push_back({{"name", name}, {"shape", slot.value.shape}});
  }
  std::string mstr = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save: cannot open " + path);
  f.write(kMagic, 8);
  std::uint64_t mlen = mstr.size();
  unsigned char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<unsigned char>(mlen >> (8 * i));
  f.write(reinterpret_cast<const char*>(lenbuf), 8);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, slot] : _slots) {
    // Doubles go out verbatim; this assumes a little-endian host.
    f.write(reinterpret_cast<const char*>(slot.value.data.data()),
            static_cast<std::streamsize>(slot.value.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("save: write failed for " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load: bad magic in " + path);
  unsigned char lenbuf[8];
  f.read(reinterpret_cast<char*>(lenbuf), 8);
  if (!f) throw std::runtime_error("load: truncated manifest length");
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) mlen |= static_cast<std::uint64_t>(lenbuf[i]) << (8 * i);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("load: truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(mstr);
  for (const auto& entry : manifest) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor value(shape);
    f.read(reinterpret_cast<char*>(value.data.data()),
           static_cast<std::streamsize>(value.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load: truncated payload for " + name);
    auto it = _slots.find(name);
    if (it != _slots.end() && it->second.value.shape != shape)
      throw std::runtime_error("load: shape conflict for " + name);
    Slot slot;
    slot.value = std::move(value);
    _slots[name] = std::move(slot);
  }
}

}  // namespace cfisac::nn
