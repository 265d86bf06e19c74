#include "cfisac/nn/complex.hpp"

#include <cmath>

namespace cfisac::nn {

CVar cvar(Var re, Var im) {
  if (!re.value().same_shape(im.value()))
    throw std::invalid_argument("cvar: re/im shape mismatch");
  return CVar{re, im};
}

CVar cconstant(Tape& t, std::vector<int> shape,
               const std::vector<std::complex<double>>& vals) {
  Tensor re(shape), im(shape);
  if (re.numel() != static_cast<std::int64_t>(vals.size()))
    throw std::invalid_argument("cconstant: shape/data size mismatch");
  for (std::size_t i = 0; i < vals.size(); ++i) {
    re.data[i] = vals[i].real();
    im.data[i] = vals[i].imag();
  }
  return CVar{t.constant(std::move(re)), t.constant(std::move(im))};
}

CVar cadd(CVar a, CVar b) { return {add(a.re, b.re), add(a.im, b.im)}; }
CVar csub(CVar a, CVar b) { return {sub(a.re, b.re), sub(a.im, b.im)}; }

CVar cmul(CVar a, CVar b) {
  Var re = sub(mul(a.re, b.re), mul(a.im, b.im));
  Var im = add(mul(a.re, b.im), mul(a.im, b.re));
  return {re, im};
}

CVar cconj(CVar a) { return {a.re, neg(a.im)}; }
CVar cneg(CVar a) { return {neg(a.re), neg(a.im)}; }

CVar cmatmul(CVar a, CVar b) {
  Var re = sub(matmul(a.re, b.re), matmul(a.im, b.im));
  Var im = add(matmul(a.re, b.im), matmul(a.im, b.re));
  return {re, im};
}

CVar ctranspose(CVar a) { return {transpose(a.re), transpose(a.im)}; }
CVar cadjoint(CVar a) { return {transpose(a.re), neg(transpose(a.im))}; }

CVar cscale(CVar a, std::complex<double> s) {
  Var re = sub(mul_scalar(a.re, s.real()), mul_scalar(a.im, s.imag()));
  Var im = add(mul_scalar(a.re, s.imag()), mul_scalar(a.im, s.real()));
  return {re, im};
}

CVar cscale_var(CVar a, Var s) { return {mul_svar(a.re, s), mul_svar(a.im, s)}; }

Var cabs2(CVar a) { return add(mul(a.re, a.re), mul(a.im, a.im)); }

CVar creciprocal(CVar a, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("creciprocal: eps must be positive");
  // Rescale small entries up to magnitude eps before inverting. The factor is
  // computed from values only, so the clamp does not contribute gradient.
  const Tensor& rv = a.re.value();
  const Tensor& iv = a.im.value();
  Tensor factor(rv.shape, 1.0);
  Tensor zero_fix_re(rv.shape, 0.0);
  bool any_scaled = false;
  for (std::size_t i = 0; i < rv.data.size(); ++i) {
    double m = std::hypot(rv.data[i], iv.data[i]);
    if (m == 0.0) {
      factor.data[i] = 0.0;  // kill the var path, substitute eps below
      zero_fix_re.data[i] = eps;
      any_scaled = true;
    } else if (m < eps) {
      factor.data[i] = eps / m;
      any_scaled = true;
    }
  }
  Var re = a.re, im = a.im;
  if (any_scaled) {
    Tape& t = *a.re.tape;
    Var f = t.constant(std::move(factor));
    re = add(mul(re, f), t.constant(std::move(zero_fix_re)));
    im = mul(im, f);
  }
  Var denom = add(mul(re, re), mul(im, im));
  return {divide(re, denom), neg(divide(im, denom))};
}

}  // namespace cfisac::nn
