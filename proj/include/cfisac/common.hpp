#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfisac {

using cdouble = std::complex<double>;

/// Propagation speed used throughout (m/s).
inline constexpr double kSpeedOfLight = 299792458.0;

inline constexpr double kPi = 3.14159265358979323846;

/// Thrown when a geometric estimation problem has fewer independent
/// equations than unknowns. Counted separately by the CLI so that runs can
/// exit with a dedicated status when the rate of such failures is too high.
class UnderdeterminedError : public std::runtime_error {
 public:
  explicit UnderdeterminedError(const std::string& what)
      : std::runtime_error(what) {}
};

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// Planar coordinate/velocity. The whole deployment is 2D.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// Wrap x into [-period/2, period/2).
inline double wrap_pm(double x, double period) {
  const double y = std::fmod(x + period / 2.0, period);
  return (y < 0.0 ? y + period : y) - period / 2.0;
}

/// Wrap x into [0, period).
inline double wrap_nonneg(double x, double period) {
  const double y = std::fmod(x, period);
  return y < 0.0 ? y + period : y;
}

/// Row-major flat index helpers for the small fixed-rank tensors the
/// simulator passes around. Kept free-standing so kernels can stay on raw
/// vectors without a tensor class in the hot path.
inline std::size_t idx2(std::size_t a, std::size_t b, std::size_t nb) {
  return a * nb + b;
}
inline std::size_t idx3(std::size_t a, std::size_t b, std::size_t c,
                        std::size_t nb, std::size_t nc) {
  return (a * nb + b) * nc + c;
}
inline std::size_t idx4(std::size_t a, std::size_t b, std::size_t c, std::size_t d,
                        std::size_t nb, std::size_t nc, std::size_t nd) {
  return ((a * nb + b) * nc + c) * nd + d;
}

}  // namespace cfisac
