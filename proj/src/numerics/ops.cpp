// SPDX-License-Identifier: Apache-2.0
#include "planet/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "planet/numerics/errors.hpp"

namespace planet {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "ᵀ");
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      c(i, j) = s;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul_tn: inner dimensions " + shape_str(a.shape()) + "ᵀ x " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  double* pc = c.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const auto ar = a.row(p);
    const auto br = b.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * br[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (auto& x : row) {
    x = std::exp(x - mx);
    s += x;
  }
  for (auto& x : row) x /= s;
}

}  // namespace kernels

Var matmul(const Var& a, const Var& b) {
  return a.tape().record(kernels::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.needs_grad()) t.accumulate(a, kernels::matmul_nt(g, b.value()));
    if (b.needs_grad()) t.accumulate(b, kernels::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return a.tape().record(kernels::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.needs_grad()) t.accumulate(a, kernels::matmul(g, b.value()));
    if (b.needs_grad()) t.accumulate(b, kernels::matmul_tn(g, a.value()));
  });
}

Var transpose(const Var& a) {
  return a.tape().record(kernels::transpose(a.value()), {a},
                         [a](Tape& t, const Tensor& g) { t.accumulate(a, kernels::transpose(g)); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (b.needs_grad()) {
      Tensor ng = g;
      for (auto& x : ng.data()) x = -x;
      t.accumulate(b, ng);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.needs_grad()) {
      Tensor ga = g;
      const auto bv = b.value().data();
      auto d = ga.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= bv[i];
      t.accumulate(a, ga);
    }
    if (b.needs_grad()) {
      Tensor gb = g;
      const auto av = a.value().data();
      auto d = gb.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= av[i];
      t.accumulate(b, gb);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& x : out.data()) x *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (auto& x : ga.data()) x *= s;
    t.accumulate(a, ga);
  });
}

Var add_row(const Var& a, const Var& bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_matrix(av, "add_row");
  if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: bias " + shape_str(bv.shape()) + " for " + shape_str(av.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
  }
  return a.tape().record(std::move(out), {a, bias}, [a, bias](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (bias.needs_grad()) {
      Tensor gb({1, g.cols()});
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
      t.accumulate(bias, gb);
    }
  });
}

Var scale_rows(const Var& a, const Var& w) {
  const Tensor& av = a.value();
  const Tensor& wv = w.value();
  require_matrix(av, "scale_rows");
  if (wv.rank() != 2 || wv.cols() != 1 || wv.rows() != av.rows()) {
    throw DimensionError("scale_rows: weights " + shape_str(wv.shape()) + " for " + shape_str(av.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (auto& x : out.row(i)) x *= wv(i, 0);
  }
  return a.tape().record(std::move(out), {a, w}, [a, w](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& wv = w.value();
    if (a.needs_grad()) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.rows(); ++i) {
        for (auto& x : ga.row(i)) x *= wv(i, 0);
      }
      t.accumulate(a, ga);
    }
    if (w.needs_grad()) {
      Tensor gw({wv.rows(), 1});
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * av(i, j);
        gw(i, 0) = s;
      }
      t.accumulate(w, gw);
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& x : out.data()) x = x > 0.0 ? x : 0.0;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    Tensor ga = g;
    const auto av = a.value().data();
    auto d = ga.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(av[i] > 0.0)) d[i] = 0.0;
    }
    t.accumulate(a, ga);
  });
}

Var log_sigmoid(const Var& a, double limit) {
  Tensor out = a.value();
  for (auto& x : out.data()) {
    const double z = std::clamp(x, -limit, limit);
    // log σ(z) = -log(1 + e^{-z}), split for stability.
    x = z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
  }
  return a.tape().record(std::move(out), {a}, [a, limit](Tape& t, const Tensor& g) {
    Tensor ga = g;
    const auto av = a.value().data();
    auto d = ga.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x = av[i];
      if (x < -limit || x > limit) {
        d[i] = 0.0;
      } else {
        d[i] *= 1.0 / (1.0 + std::exp(x));  // 1 - σ(x)
      }
    }
    t.accumulate(a, ga);
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape().record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor(a.value().shape(), g.item()));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var column_mean(const Var& a) {
  const Tensor& av = a.value();
  require_matrix(av, "column_mean");
  if (av.rows() == 0) throw ContractError("column_mean: no rows");
  const double inv = 1.0 / static_cast<double>(av.rows());
  Tensor out({1, av.cols()});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  }
  for (auto& x : out.data()) x *= inv;
  return a.tape().record(std::move(out), {a}, [a, inv](Tape& t, const Tensor& g) {
    Tensor ga(a.value().shape());
    for (std::size_t i = 0; i < ga.rows(); ++i) {
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(0, j) * inv;
    }
    t.accumulate(a, ga);
  });
}

Var row_sq_norm(const Var& a) {
  const Tensor& av = a.value();
  require_matrix(av, "row_sq_norm");
  Tensor out({av.rows(), 1});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (double x : av.row(i)) s += x * x;
    out(i, 0) = s;
  }
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    Tensor ga = a.value();
    for (std::size_t i = 0; i < ga.rows(); ++i) {
      for (auto& x : ga.row(i)) x *= 2.0 * g(i, 0);
    }
    t.accumulate(a, ga);
  });
}

Var softmax_rows(const Var& a) {
  Tensor out = a.value();
  require_matrix(out, "softmax_rows");
  for (std::size_t i = 0; i < out.rows(); ++i) kernels::softmax_inplace(out.row(i));
  const Tensor saved = out;
  return a.tape().record(std::move(out), {a}, [a, saved](Tape& t, const Tensor& g) {
    Tensor ga(saved.shape());
    for (std::size_t i = 0; i < saved.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < saved.cols(); ++j) dot += g(i, j) * saved(i, j);
      for (std::size_t j = 0; j < saved.cols(); ++j) ga(i, j) = saved(i, j) * (g(i, j) - dot);
    }
    t.accumulate(a, ga);
  });
}

Var log_softmax_rows(const Var& a) {
  Tensor out = a.value();
  require_matrix(out, "log_softmax_rows");
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    if (r.empty()) continue;
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double x : r) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    for (auto& x : r) x -= lse;
  }
  const Tensor saved = out;
  return a.tape().record(std::move(out), {a}, [a, saved](Tape& t, const Tensor& g) {
    Tensor ga(saved.shape());
    for (std::size_t i = 0; i < saved.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < saved.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < saved.cols(); ++j) ga(i, j) = g(i, j) - std::exp(saved(i, j)) * gs;
    }
    t.accumulate(a, ga);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t n = xv.rows(), d = xv.cols();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (gv.size() != d || bv.size() != d) {
    throw DimensionError("layer_norm: gain/bias size " + std::to_string(gv.size()) + "/" + std::to_string(bv.size()) +
                         " for last dim " + std::to_string(d));
  }
  Tensor xhat({n, d});
  Tensor inv_std({n, 1});
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = xv.row(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (r[j] - mu) * is;
      out(i, j) = gv[j] * xhat(i, j) + bv[j];
    }
  }
  return x.tape().record(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std](Tape& t, const Tensor& g) {
    const std::size_t n = xhat.rows(), d = xhat.cols();
    const Tensor& gv = gain.value();
    if (gain.needs_grad() || bias.needs_grad()) {
      Tensor gg(gain.value().shape());
      Tensor gb(bias.value().shape());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          gg[j] += g(i, j) * xhat(i, j);
          gb[j] += g(i, j);
        }
      }
      t.accumulate(gain, gg);
      t.accumulate(bias, gb);
    }
    if (x.needs_grad()) {
      Tensor gx({n, d});
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t i = 0; i < n; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dy = g(i, j) * gv[j];
          s1 += dy;
          s2 += dy * xhat(i, j);
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double dy = g(i, j) * gv[j];
          gx(i, j) = inv_std(i, 0) * (dy - inv_d * s1 - xhat(i, j) * inv_d * s2);
        }
      }
      t.accumulate(x, gx);
    }
  });
}

Var normalize_rows(const Var& a, double eps) {
  const Tensor& av = a.value();
  require_matrix(av, "normalize_rows");
  Tensor norms({av.rows(), 1});
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v * v;
    norms(i, 0) = std::sqrt(s);
    const double inv = 1.0 / (norms(i, 0) + eps);
    for (auto& v : out.row(i)) v *= inv;
  }
  return a.tape().record(std::move(out), {a}, [a, norms, eps](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    Tensor ga(av.shape());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      const double r = norms(i, 0);
      const double den = r + eps;
      double dot = 0.0;
      for (std::size_t j = 0; j < av.cols(); ++j) dot += g(i, j) * av(i, j);
      // d(x/(r+eps))/dx = I/(r+eps) - x xᵀ / (r (r+eps)²)
      const double coef = r > 0.0 ? dot / (r * den * den) : 0.0;
      for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = g(i, j) / den - av(i, j) * coef;
    }
    t.accumulate(a, ga);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    }
    off += pv.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = p.cols();
      if (p.needs_grad()) {
        Tensor gp({g.rows(), c});
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) gp(i, j) = g(i, off + j);
        }
        t.accumulate(p, gp);
      }
      off += c;
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_cols");
  if (begin > end || end > av.cols()) throw DimensionError("slice_cols: range out of bounds");
  Tensor out({av.rows(), end - begin});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  }
  return a.tape().record(std::move(out), {a}, [a, begin, end](Tape& t, const Tensor& g) {
    Tensor ga(a.value().shape());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = begin; j < end; ++j) ga(i, j) = g(i, j - begin);
    }
    t.accumulate(a, ga);
  });
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& index) {
  const Tensor& av = a.value();
  require_matrix(av, "gather_rows");
  Tensor out({index.size(), av.cols()});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.rows()) throw DimensionError("gather_rows: index out of range");
    const auto src = av.row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return a.tape().record(std::move(out), {a}, [a, index](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto dst = ga.row(index[i]);
      const auto src = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var pick(const Var& a, const std::vector<std::size_t>& index) {
  const Tensor& av = a.value();
  require_matrix(av, "pick");
  if (index.size() != av.rows()) throw DimensionError("pick: one index per row required");
  Tensor out({av.rows(), 1});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.cols()) throw DimensionError("pick: index out of range");
    out(i, 0) = av(i, index[i]);
  }
  return a.tape().record(std::move(out), {a}, [a, index](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < index.size(); ++i) ga(i, index[i]) += g(i, 0);
  });
}

Var row_dot(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({av.rows(), 1});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * bv(i, j);
    out(i, 0) = s;
  }
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.needs_grad()) {
      Tensor ga = bv;
      for (std::size_t i = 0; i < ga.rows(); ++i) {
        for (auto& x : ga.row(i)) x *= g(i, 0);
      }
      t.accumulate(a, ga);
    }
    if (b.needs_grad()) {
      Tensor gb = av;
      for (std::size_t i = 0; i < gb.rows(); ++i) {
        for (auto& x : gb.row(i)) x *= g(i, 0);
      }
      t.accumulate(b, gb);
    }
  });
}

Var dropout(const Var& a, double p) {
  Tape& tape = a.tape();
  if (!tape.training || p <= 0.0) return a;
  if (tape.dropout_rng == nullptr) throw ContractError("dropout: training tape has no rng");
  if (p >= 1.0) throw ConfigError("dropout: rate must be < 1");
  Tensor mask(a.value().shape());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = tape.dropout_rng->bernoulli(p) ? 0.0 : keep;
  Tensor out = a.value();
  auto o = out.data();
  const auto md = mask.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= md[i];
  return tape.record(std::move(out), {a}, [a, mask](Tape& t, const Tensor& g) {
    Tensor ga = g;
    auto d = ga.data();
    const auto md = mask.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= md[i];
    t.accumulate(a, ga);
  });
}

Var detach(const Var& a) { return a.tape().constant(a.tape().freeze(a.value())); }

}  // namespace planet
