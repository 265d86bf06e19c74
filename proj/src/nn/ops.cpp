#include <algorithm>
#include <cmath>
#include <cstring>

#include "cfisac/nn/tape.hpp"

// Pull-back lambdas capture node ids rather than tensor copies; parent values
// are read from the tape when the reverse sweep runs.

namespace cfisac::nn {

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("op: vars from different tapes");
}

void check_same_shape(Var a, Var b) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument("op: shape mismatch");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  bool rg = a.tracked() || b.tracked();
  int ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), rg, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    t.accumulate(bi, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  bool rg = a.tracked() || b.tracked();
  int ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), rg, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    Tensor ng = g;
    for (double& v : ng.data) v = -v;
    t.accumulate(bi, ng);
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  bool rg = a.tracked() || b.tracked();
  int ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), rg, [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.node(ai).value;
    const Tensor& bv2 = t.node(bi).value;
    Tensor ga = g, gb = g;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] *= bv2.data[i];
      gb.data[i] *= av.data[i];
    }
    t.accumulate(ai, ga);
    t.accumulate(bi, gb);
  });
}

Var divide(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= bv.data[i];
  bool rg = a.tracked() || b.tracked();
  int ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), rg, [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.node(ai).value;
    const Tensor& bv2 = t.node(bi).value;
    Tensor ga = g, gb = g;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      double inv = 1.0 / bv2.data[i];
      ga.data[i] *= inv;
      gb.data[i] *= -av.data[i] * inv * inv;
    }
    t.accumulate(ai, ga);
    t.accumulate(bi, gb);
  });
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v += s;
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(),
                      [ai](Tape& t, const Tensor& g) { t.accumulate(ai, g); });
}

Var mul_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (double& v : ga.data) v *= s;
    t.accumulate(ai, ga);
  });
}

Var mul_svar(Var x, Var s) {
  check_same_tape(x, s);
  if (s.value().numel() != 1) throw std::invalid_argument("mul_svar: s not scalar");
  double sv = s.value().item();
  Tensor out = x.value();
  for (double& v : out.data) v *= sv;
  bool rg = x.tracked() || s.tracked();
  int xi = x.id, si = s.id;
  return x.tape->push(std::move(out), rg, [xi, si](Tape& t, const Tensor& g) {
    const Tensor& xv = t.node(xi).value;
    double sval = t.node(si).value.item();
    Tensor gx = g;
    double gs = 0.0;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      gs += g.data[i] * xv.data[i];
      gx.data[i] *= sval;
    }
    t.accumulate(xi, gx);
    t.accumulate(si, Tensor::scalar(gs));
  });
}

Var div_svar(Var x, Var s) {
  check_same_tape(x, s);
  if (s.value().numel() != 1) throw std::invalid_argument("div_svar: s not scalar");
  double sv = s.value().item();
  Tensor out = x.value();
  for (double& v : out.data) v /= sv;
  bool rg = x.tracked() || s.tracked();
  int xi = x.id, si = s.id;
  return x.tape->push(std::move(out), rg, [xi, si](Tape& t, const Tensor& g) {
    const Tensor& xv = t.node(xi).value;
    double sval = t.node(si).value.item();
    double inv = 1.0 / sval;
    Tensor gx = g;
    double gs = 0.0;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      gs += -g.data[i] * xv.data[i] * inv * inv;
      gx.data[i] *= inv;
    }
    t.accumulate(xi, gx);
    t.accumulate(si, Tensor::scalar(gs));
  });
}

Var leaky_relu(Var a, double slope) {
  Tensor out = a.value();
  for (double& v : out.data) v = v >= 0.0 ? v : slope * v;
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai, slope](Tape& t, const Tensor& g) {
    const Tensor& av = t.node(ai).value;
    Tensor ga = g;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (av.data[i] < 0.0) ga.data[i] *= slope;
    t.accumulate(ai, ga);
  });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var tanh_op(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::tanh(v);
  int ai = a.id, oi = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), a.tracked(), [ai, oi](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(oi).value;
    Tensor ga = g;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] *= 1.0 - y.data[i] * y.data[i];
    t.accumulate(ai, ga);
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  int ai = a.id, oi = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), a.tracked(), [ai, oi](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(oi).value;
    Tensor ga = g;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] *= y.data[i] * (1.0 - y.data[i]);
    t.accumulate(ai, ga);
  });
}

Var exp_op(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::exp(v);
  int ai = a.id, oi = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), a.tracked(), [ai, oi](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(oi).value;
    Tensor ga = g;
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] *= y.data[i];
    t.accumulate(ai, ga);
  });
}

Var log_op(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::log(v);
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai](Tape& t, const Tensor& g) {
    const Tensor& av = t.node(ai).value;
    Tensor ga = g;
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] /= av.data[i];
    t.accumulate(ai, ga);
  });
}

Var sqrt_op(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::sqrt(v);
  int ai = a.id, oi = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), a.tracked(), [ai, oi](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(oi).value;
    Tensor ga = g;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] *= 0.5 / y.data[i];
    t.accumulate(ai, ga);
  });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes");
  int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aval = av.data[static_cast<std::size_t>(i * k + p)];
      if (aval == 0.0) continue;
      const double* brow = &bv.data[static_cast<std::size_t>(p * n)];
      double* orow = &out.data[static_cast<std::size_t>(i * n)];
      for (int j = 0; j < n; ++j) orow[j] += aval * brow[j];
    }
  bool rg = a.tracked() || b.tracked();
  int ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), rg, [ai, bi, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& av2 = t.node(ai).value;
    const Tensor& bv2 = t.node(bi).value;
    if (t.node(ai).requires_grad) {
      Tensor ga({m, k});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double gv = g.data[static_cast<std::size_t>(i * n + j)];
          if (gv == 0.0) continue;
          for (int p = 0; p < k; ++p)
            ga.data[static_cast<std::size_t>(i * k + p)] +=
                gv * bv2.data[static_cast<std::size_t>(p * n + j)];
        }
      t.accumulate(ai, ga);
    }
    if (t.node(bi).requires_grad) {
      Tensor gb({k, n});
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double aval = av2.data[static_cast<std::size_t>(i * k + p)];
          if (aval == 0.0) continue;
          const double* grow = &g.data[static_cast<std::size_t>(i * n)];
          double* brow = &gb.data[static_cast<std::size_t>(p * n)];
          for (int j = 0; j < n; ++j) brow[j] += aval * grow[j];
        }
      t.accumulate(bi, gb);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.ndim() != 2) throw std::invalid_argument("transpose: need 2D");
  int m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data[static_cast<std::size_t>(j * m + i)] =
          av.data[static_cast<std::size_t>(i * n + j)];
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai, m, n](Tape& t, const Tensor& g) {
    Tensor ga({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        ga.data[static_cast<std::size_t>(i * n + j)] =
            g.data[static_cast<std::size_t>(j * m + i)];
    t.accumulate(ai, ga);
  });
}

Var bias_add(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.numel() != av.dim(1))
    throw std::invalid_argument("bias_add: shape mismatch");
  int m = av.dim(0), n = av.dim(1);
  Tensor out = av;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data[static_cast<std::size_t>(i * n + j)] += bv.data[static_cast<std::size_t>(j)];
  bool rg = a.tracked() || b.tracked();
  int ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), rg, [ai, bi, m, n](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    if (t.node(bi).requires_grad) {
      Tensor gb(t.node(bi).value.shape);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          gb.data[static_cast<std::size_t>(j)] += g.data[static_cast<std::size_t>(i * n + j)];
      t.accumulate(bi, gb);
    }
  });
}

Var reshape(Var a, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  if (n != a.value().numel()) throw std::invalid_argument("reshape: numel mismatch");
  Tensor out = a.value();
  out.shape = shape;
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai](Tape& t, const Tensor& g) {
    Tensor ga = g;
    ga.shape = t.node(ai).value.shape;
    t.accumulate(ai, ga);
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input");
  Tape* tp = parts[0].tape;
  std::int64_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    if (p.tape != tp) throw std::invalid_argument("concat: vars from different tapes");
    total += p.value().numel();
    rg = rg || p.tracked();
  }
  Tensor out({static_cast<int>(total)});
  std::int64_t off = 0;
  std::vector<int> ids;
  std::vector<std::int64_t> offs;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    std::copy(pv.data.begin(), pv.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(off));
    ids.push_back(p.id);
    offs.push_back(off);
    off += pv.numel();
  }
  return tp->push(std::move(out), rg, [ids, offs](Tape& t, const Tensor& g) {
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const Tensor& pv = t.node(ids[p]).value;
      if (!t.node(ids[p]).requires_grad) continue;
      Tensor gp(pv.shape);
      std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(offs[p]),
                g.data.begin() + static_cast<std::ptrdiff_t>(offs[p] + pv.numel()),
                gp.data.begin());
      t.accumulate(ids[p], gp);
    }
  });
}

Var slice(Var a, std::int64_t offset, std::int64_t len) {
  const Tensor& av = a.value();
  if (offset < 0 || len < 0 || offset + len > av.numel())
    throw std::invalid_argument("slice: window out of range");
  Tensor out({static_cast<int>(len)});
  std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(offset),
            av.data.begin() + static_cast<std::ptrdiff_t>(offset + len), out.data.begin());
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai, offset](Tape& t, const Tensor& g) {
    Tensor ga(t.node(ai).value.shape);
    std::copy(g.data.begin(), g.data.end(),
              ga.data.begin() + static_cast<std::ptrdiff_t>(offset));
    t.accumulate(ai, ga);
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  std::int64_t len = rows[0].value().numel();
  for (Var r : rows)
    if (r.value().numel() != len) throw std::invalid_argument("stack_rows: ragged rows");
  Var flat = concat(rows);
  return reshape(flat, {static_cast<int>(rows.size()), static_cast<int>(len)});
}

Var gather_rows(Var a, const std::vector<int>& idx) {
  const Tensor& av = a.value();
  if (av.ndim() != 2) throw std::invalid_argument("gather_rows: need 2D");
  int n = av.dim(1);
  Tensor out({static_cast<int>(idx.size()), n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= av.dim(0))
      throw std::invalid_argument("gather_rows: index out of range");
    std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * n),
              av.data.begin() + static_cast<std::ptrdiff_t>((idx[r] + 1) * n),
              out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai, idx, n](Tape& t, const Tensor& g) {
    Tensor ga(t.node(ai).value.shape);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < n; ++j)
        ga.data[static_cast<std::size_t>(idx[r] * n + j)] +=
            g.data[r * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
    t.accumulate(ai, ga);
  });
}

Var gather_flat(Var a, const std::vector<std::int64_t>& idx) {
  const Tensor& av = a.value();
  Tensor out({static_cast<int>(idx.size())});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= av.numel())
      throw std::invalid_argument("gather_flat: index out of range");
    out.data[k] = av.data[static_cast<std::size_t>(idx[k])];
  }
  int ai = a.id;
  return a.tape->push(std::move(out), a.tracked(), [ai, idx](Tape& t, const Tensor& g) {
    Tensor ga(t.node(ai).value.shape);
    for (std::size_t k = 0; k < idx.size(); ++k)
      ga.data[static_cast<std::size_t>(idx[k])] += g.data[k];
    t.accumulate(ai, ga);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  int ai = a.id;
  return a.tape->push(Tensor::scalar(s), a.tracked(), [ai](Tape& t, const Tensor& g) {
    Tensor ga(t.node(ai).value.shape, g.item());
    t.accumulate(ai, ga);
  });
}

Var mean(Var a) {
  std::int64_t n = a.value().numel();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(n));
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  int m = 1, n = static_cast<int>(av.numel());
  if (av.ndim() == 2) {
    m = av.dim(0);
    n = av.dim(1);
  } else if (av.ndim() != 1) {
    throw std::invalid_argument("softmax_rows: need 1D or 2D");
  }
  Tensor out = av;
  for (int i = 0; i < m; ++i) {
    double* row = &out.data[static_cast<std::size_t>(i * n)];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (int j = 0; j < n; ++j) row[j] /= denom;
  }
  int ai = a.id, oi = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), a.tracked(), [ai, oi, m, n](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(oi).value;
    Tensor ga(y.shape);
    for (int i = 0; i < m; ++i) {
      const double* yr = &y.data[static_cast<std::size_t>(i * n)];
      const double* gr = &g.data[static_cast<std::size_t>(i * n)];
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += yr[j] * gr[j];
      double* gar = &ga.data[static_cast<std::size_t>(i * n)];
      for (int j = 0; j < n; ++j) gar[j] = yr[j] * (gr[j] - dot);
    }
    t.accumulate(ai, ga);
  });
}

Var detach(Var a) {
  return a.tape->push(a.value(), false, nullptr);
}

Var straight_through(Var soft, Tensor hard) {
  if (!soft.value().same_shape(hard))
    throw std::invalid_argument("straight_through: shape mismatch");
  int si = soft.id;
  return soft.tape->push(std::move(hard), soft.tracked(),
                         [si](Tape& t, const Tensor& g) { t.accumulate(si, g); });
}

Var conv3(Var x, Var kernels, Var bias, int stride) {
  check_same_tape(x, kernels);
  check_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  const Tensor& bv = bias.value();
  if (xv.ndim() != 4 || kv.ndim() != 5)
    throw std::invalid_argument("conv3: x must be 4D, kernels 5D");
  int cin = xv.dim(0), d1 = xv.dim(1), d2 = xv.dim(2), d3 = xv.dim(3);
  int cout = kv.dim(0);
  if (kv.dim(1) != cin || kv.dim(2) != 3 || kv.dim(3) != 3 || kv.dim(4) != 3)
    throw std::invalid_argument("conv3: kernel shape must be [Cout, Cin, 3, 3, 3]");
  if (bv.numel() != cout) throw std::invalid_argument("conv3: bias length mismatch");
  if (stride < 1) throw std::invalid_argument("conv3: stride must be positive");
  int o1 = (d1 - 1) / stride + 1;
  int o2 = (d2 - 1) / stride + 1;
  int o3 = (d3 - 1) / stride + 1;

  auto xat = [&](const Tensor& src, int c, int a, int b, int cc) {
    return src.data[static_cast<std::size_t>(((c * d1 + a) * d2 + b) * d3 + cc)];
  };
  auto kat = [&](const Tensor& src, int co, int ci, int ka, int kb, int kc) {
    return src.data[static_cast<std::size_t>((((co * cin + ci) * 3 + ka) * 3 + kb) * 3 + kc)];
  };

  Tensor out({cout, o1, o2, o3});
  for (int co = 0; co < cout; ++co)
    for (int a = 0; a < o1; ++a)
      for (int b = 0; b < o2; ++b)
        for (int c = 0; c < o3; ++c) {
          double acc = bv.data[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int ka = 0; ka < 3; ++ka) {
              int ia = a * stride + ka - 1;
              if (ia < 0 || ia >= d1) continue;
              for (int kb = 0; kb < 3; ++kb) {
                int ib = b * stride + kb - 1;
                if (ib < 0 || ib >= d2) continue;
                for (int kc = 0; kc < 3; ++kc) {
                  int ic = c * stride + kc - 1;
                  if (ic < 0 || ic >= d3) continue;
                  acc += kat(kv, co, ci, ka, kb, kc) * xat(xv, ci, ia, ib, ic);
                }
              }
            }
          out.data[static_cast<std::size_t>(((co * o1 + a) * o2 + b) * o3 + c)] = acc;
        }

  bool rg = x.tracked() || kernels.tracked() || bias.tracked();
  int xi = x.id, ki = kernels.id, bi = bias.id;
  return x.tape->push(
      std::move(out), rg,
      [xi, ki, bi, cin, cout, d1, d2, d3, o1, o2, o3, stride](Tape& t, const Tensor& g) {
        const Tensor& xv2 = t.node(xi).value;
        const Tensor& kv2 = t.node(ki).value;
        bool need_x = t.node(xi).requires_grad;
        bool need_k = t.node(ki).requires_grad;
        bool need_b = t.node(bi).requires_grad;
        Tensor gx = need_x ? Tensor(xv2.shape) : Tensor{};
        Tensor gk = need_k ? Tensor(kv2.shape) : Tensor{};
        Tensor gb = need_b ? Tensor(t.node(bi).value.shape) : Tensor{};
        for (int co = 0; co < cout; ++co)
          for (int a = 0; a < o1; ++a)
            for (int b = 0; b < o2; ++b)
              for (int c = 0; c < o3; ++c) {
                double gv =
                    g.data[static_cast<std::size_t>(((co * o1 + a) * o2 + b) * o3 + c)];
                if (gv == 0.0) continue;
                if (need_b) gb.data[static_cast<std::size_t>(co)] += gv;
                for (int ci = 0; ci < cin; ++ci)
                  for (int ka = 0; ka < 3; ++ka) {
                    int ia = a * stride + ka - 1;
                    if (ia < 0 || ia >= d1) continue;
                    for (int kb = 0; kb < 3; ++kb) {
                      int ib = b * stride + kb - 1;
                      if (ib < 0 || ib >= d2) continue;
                      for (int kc = 0; kc < 3; ++kc) {
                        int ic = c * stride + kc - 1;
                        if (ic < 0 || ic >= d3) continue;
                        std::size_t xoff =
                            static_cast<std::size_t>(((ci * d1 + ia) * d2 + ib) * d3 + ic);
                        std::size_t koff = static_cast<std::size_t>(
                            (((co * cin + ci) * 3 + ka) * 3 + kb) * 3 + kc);
                        if (need_x) gx.data[xoff] += gv * kv2.data[koff];
                        if (need_k) gk.data[koff] += gv * xv2.data[xoff];
                      }
                    }
                  }
              }
        if (need_x) t.accumulate(xi, gx);
        if (need_k) t.accumulate(ki, gk);
        if (need_b) t.accumulate(bi, gb);
      });
}

}  // namespace cfisac::nn
