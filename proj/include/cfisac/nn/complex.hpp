#pragma once

// Complex tensors as re/im pairs of tape vars. Arithmetic decomposes into
// real ops so gradients follow the Wirtinger-free "treat re and im as
// independent reals" convention, which is what the loss functions need.

#include <complex>

#include "cfisac/nn/tape.hpp"

namespace cfisac::nn {

struct CVar {
  Var re;
  Var im;
  const std::vector<int>& shape() const { return re.value().shape; }
};

CVar cvar(Var re, Var im);
CVar cconstant(Tape& t, std::vector<int> shape,
               const std::vector<std::complex<double>>& vals);

CVar cadd(CVar a, CVar b);
CVar csub(CVar a, CVar b);
/// Elementwise product.
CVar cmul(CVar a, CVar b);
CVar cconj(CVar a);
CVar cneg(CVar a);
CVar cmatmul(CVar a, CVar b);
CVar ctranspose(CVar a);
CVar cadjoint(CVar a);
CVar cscale(CVar a, std::complex<double> s);
CVar cscale_var(CVar a, Var s);  // real scalar node broadcast

/// Elementwise re^2 + im^2.
Var cabs2(CVar a);

/// Elementwise 1/z. Inputs with |z| below eps are rescaled to magnitude eps
/// (zero becomes eps + 0i); the rescale factor is treated as a constant.
CVar creciprocal(CVar a, double eps);

}  // namespace cfisac::nn
