#pragma once

// Named trainable tensors with Adam state, binary checkpoints, and a
// finite-difference gradient checker. A store owns the master copies;
// forward passes borrow them as tape leaves via param().

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfisac/nn/tape.hpp"

namespace cfisac::nn {

enum class Init { kZeros, kGlorot, kNormal };

struct GradCheckResult {
  double max_rel = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
};

class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0);

  /// Returns a tape leaf for the named tensor, creating and initializing it
  /// on first use. Repeated calls on the same tape return the same leaf.
  /// Init draws depend only on the store seed and the name, not on call
  /// order. `scale` multiplies kNormal draws and is ignored otherwise.
  Var param(Tape& t, const std::string& name, std::vector<int> shape,
            Init init = Init::kGlorot, double scale = 1.0);

  bool has(const std::string& name) const;
  Tensor& raw(const std::string& name);
  const Tensor& raw(const std::string& name) const;
  std::vector<std::string> names() const;
  std::int64_t total_params() const;

  /// Applies one bias-corrected Adam update using the gradients accumulated
  /// on `t`. Parameters whose gradient is absent or identically zero are left
  /// untouched, moments included. Releases the tape's leaf registry.
  void adam_step(Tape& t, double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  /// Drops the leaf registry for a tape without updating anything.
  void release(Tape& t);

  void reset_adam();

  /// Central-difference check of every parameter used by `build_loss`.
  /// When `max_entries_per_param` is positive, large tensors are probed at
  /// that many evenly spaced entries instead of exhaustively.
  GradCheckResult gradcheck(const std::function<Var(Tape&)>& build_loss,
                            double h = 1e-5, int max_entries_per_param = -1);

  /// Binary checkpoint: magic line, manifest length, JSON manifest of names
  /// and shapes sorted by name, then raw float64 payload in manifest order.
  void save(const std::string& path) const;
  /// Loads values, adding missing parameters and resetting their Adam state.
  /// Shape conflicts with existing entries throw.
  void load(const std::string& path);

 private:
  struct Slot {
    Tensor value;
    Tensor m;
    Tensor v;
    std::int64_t steps = 0;
  };

  std::uint64_t _seed;
  std::map<std::string, Slot> _slots;
  std::unordered_map<const Tape*, std::map<std::string, int>> _uses;
};

}  // namespace cfisac::nn
