#include "rlns/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rlns {

namespace {

bool want_grad(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void mark_output(Tensor& out) {
  out.impl()->requires_grad = true;
  out.impl()->leaf = false;
}

void check_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (int64_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      double* orow = po + i * n;
      for (int64_t kk = 0; kk < k; ++kk) {
        const double aik = arow[kk];
        const double* brow = pb + kk * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  if (want_grad({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, bi, oi, m, k, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      if (ai->requires_grad) {
        auto da = grad_dst(ai.get());
        const double* pb = bi->data.data();
        for (int64_t i = 0; i < m; ++i) {
          const double* grow = go + i * n;
          double* darow = da.data() + i * k;
          for (int64_t kk = 0; kk < k; ++kk) {
            const double* brow = pb + kk * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[kk] += acc;
          }
        }
      }
      if (bi->requires_grad) {
        auto db = grad_dst(bi.get());
        const double* pa = ai->data.data();
        for (int64_t i = 0; i < m; ++i) {
          const double* arow = pa + i * k;
          const double* grow = go + i * n;
          for (int64_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            double* dbrow = db.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (want_grad({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, bi, oi, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      if (ai->requires_grad) {
        auto da = grad_dst(ai.get());
        for (int64_t i = 0; i < n; ++i) da[i] += go[i];
      }
      if (bi->requires_grad) {
        auto db = grad_dst(bi.get());
        for (int64_t i = 0; i < n; ++i) db[i] += go[i];
      }
    });
  }
  return out;
}

Tensor add_rows(const Tensor& a, const Tensor& bias) {
  check_2d(a, "add_rows");
  if (bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
    throw std::invalid_argument("add_rows: bias " + shape_str(bias.shape()) + " does not match " +
                                shape_str(a.shape()));
  }
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] + bias.data()[j];
  }
  if (want_grad({&a, &bias})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = bias.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, bi, oi, m, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      if (ai->requires_grad) {
        auto da = grad_dst(ai.get());
        for (int64_t i = 0; i < m * n; ++i) da[i] += go[i];
      }
      if (bi->requires_grad) {
        auto db = grad_dst(bi.get());
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < n; ++j) db[j] += go[i * n + j];
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (want_grad({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, bi, oi, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      if (ai->requires_grad) {
        auto da = grad_dst(ai.get());
        for (int64_t i = 0; i < n; ++i) da[i] += go[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto db = grad_dst(bi.get());
        for (int64_t i = 0; i < n; ++i) db[i] += go[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, oi, s, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto da = grad_dst(ai.get());
      for (int64_t i = 0; i < n; ++i) da[i] += go[i] * s;
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  }
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, oi, m, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto da = grad_dst(ai.get());
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) da[i * n + j] += go[j * m + i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(shape, std::vector<double>(a.data().begin(), a.data().end()));
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    const int64_t n = a.numel();
    Tape::current()->record(oi, [ai, oi, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto da = grad_dst(ai.get());
      for (int64_t i = 0; i < n; ++i) da[i] += go[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const auto& p : parts) check_2d(p, "concat");
  int64_t rows = parts[0].dim(0), cols = parts[0].dim(1);
  if (axis == 0) {
    rows = 0;
    for (const auto& p : parts) {
      if (p.dim(1) != cols) throw std::invalid_argument("concat: column mismatch");
      rows += p.dim(0);
    }
  } else {
    cols = 0;
    for (const auto& p : parts) {
      if (p.dim(0) != rows) throw std::invalid_argument("concat: row mismatch");
      cols += p.dim(1);
    }
  }
  Tensor out = Tensor::zeros({rows, cols});
  std::vector<int64_t> offsets(parts.size(), 0);
  if (axis == 0) {
    int64_t r = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = r;
      const auto src = parts[p].data();
      std::copy(src.begin(), src.end(), out.data().begin() + r * cols);
      r += parts[p].dim(0);
    }
  } else {
    int64_t c = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = c;
      const int64_t w = parts[p].dim(1);
      for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < w; ++j) out.data()[i * cols + c + j] = parts[p].data()[i * w + j];
      }
      c += w;
    }
  }
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  if (Tape::current() != nullptr && rg) {
    mark_output(out);
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl_ptr());
    auto oi = out.impl_ptr();
    Tape::current()->record(oi, [impls, offsets, oi, rows, cols, axis]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      for (size_t p = 0; p < impls.size(); ++p) {
        if (!impls[p]->requires_grad) continue;
        auto dp = grad_dst(impls[p].get());
        const int64_t pr = impls[p]->shape[0], pc = impls[p]->shape[1];
        if (axis == 0) {
          for (int64_t i = 0; i < pr; ++i) {
            for (int64_t j = 0; j < pc; ++j) dp[i * pc + j] += go[(offsets[p] + i) * cols + j];
          }
        } else {
          for (int64_t i = 0; i < pr; ++i) {
            for (int64_t j = 0; j < pc; ++j) dp[i * pc + j] += go[i * cols + offsets[p] + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor take_rows(const Tensor& a, std::span<const int64_t> idx) {
  check_2d(a, "take_rows");
  const int64_t m = a.dim(0), n = a.dim(1);
  for (int64_t i : idx) {
    if (i < 0 || i >= m) throw std::invalid_argument("take_rows: index " + std::to_string(i) + " out of range");
  }
  Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), n});
  for (size_t r = 0; r < idx.size(); ++r) {
    const double* src = a.data().data() + idx[r] * n;
    std::copy(src, src + n, out.data().data() + r * n);
  }
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    std::vector<int64_t> ix(idx.begin(), idx.end());
    Tape::current()->record(oi, [ai, oi, ix, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto da = grad_dst(ai.get());
      for (size_t r = 0; r < ix.size(); ++r) {
        double* dst = da.data() + ix[r] * n;
        const double* src = go + r * n;
        for (int64_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor scatter_rows(const Tensor& rows, std::span<const int64_t> idx, int64_t n_rows) {
  check_2d(rows, "scatter_rows");
  if (static_cast<int64_t>(idx.size()) != rows.dim(0)) {
    throw std::invalid_argument("scatter_rows: index count does not match rows");
  }
  const int64_t n = rows.dim(1);
  for (int64_t i : idx) {
    if (i < 0 || i >= n_rows) throw std::invalid_argument("scatter_rows: index out of range");
  }
  Tensor out = Tensor::zeros({n_rows, n});
  for (size_t r = 0; r < idx.size(); ++r) {
    double* dst = out.data().data() + idx[r] * n;
    const double* src = rows.data().data() + r * n;
    for (int64_t j = 0; j < n; ++j) dst[j] += src[j];
  }
  if (want_grad({&rows})) {
    mark_output(out);
    auto ri = rows.impl_ptr(), oi = out.impl_ptr();
    std::vector<int64_t> ix(idx.begin(), idx.end());
    Tape::current()->record(oi, [ri, oi, ix, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto dr = grad_dst(ri.get());
      for (size_t r = 0; r < ix.size(); ++r) {
        const double* src = go + ix[r] * n;
        double* dst = dr.data() + r * n;
        for (int64_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor take_elems(const Tensor& a, std::span<const int64_t> flat_idx) {
  const int64_t total = a.numel();
  for (int64_t i : flat_idx) {
    if (i < 0 || i >= total) throw std::invalid_argument("take_elems: index out of range");
  }
  Tensor out = Tensor::zeros({static_cast<int64_t>(flat_idx.size())});
  for (size_t r = 0; r < flat_idx.size(); ++r) out.data()[r] = a.data()[flat_idx[r]];
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    std::vector<int64_t> ix(flat_idx.begin(), flat_idx.end());
    Tape::current()->record(oi, [ai, oi, ix]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto da = grad_dst(ai.get());
      for (size_t r = 0; r < ix.size(); ++r) da[ix[r]] += go[r];
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  check_2d(a, "scale_rows");
  if (w.rank() != 1 || w.dim(0) != a.dim(0)) {
    throw std::invalid_argument("scale_rows: weights " + shape_str(w.shape()) + " do not match " +
                                shape_str(a.shape()));
  }
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < m; ++i) {
    const double wi = w.data()[i];
    for (int64_t j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] * wi;
  }
  if (want_grad({&a, &w})) {
    mark_output(out);
    auto ai = a.impl_ptr(), wi_ = w.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, wi_, oi, m, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      if (ai->requires_grad) {
        auto da = grad_dst(ai.get());
        for (int64_t i = 0; i < m; ++i) {
          const double wv = wi_->data[i];
          for (int64_t j = 0; j < n; ++j) da[i * n + j] += go[i * n + j] * wv;
        }
      }
      if (wi_->requires_grad) {
        auto dw = grad_dst(wi_.get());
        for (int64_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += go[i * n + j] * ai->data[i * n + j];
          dw[i] += acc;
        }
      }
    });
  }
  return out;
}

namespace {

// Shared softmax core: per row, normalize over positions where keep(row,col)
// is true; other positions are exactly zero.
template <class Keep>
Tensor softmax_core(const Tensor& a, Keep keep, const char* op) {
  check_2d(a, op);
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j) {
      if (keep(i, j)) mx = std::max(mx, a.data()[i * n + j]);
    }
    if (!std::isfinite(mx)) continue;  // empty support: all-zero row
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (keep(i, j)) {
        const double e = std::exp(a.data()[i * n + j] - mx);
        out.data()[i * n + j] = e;
        z += e;
      }
    }
    for (int64_t j = 0; j < n; ++j) {
      if (keep(i, j)) out.data()[i * n + j] /= z;
    }
  }
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, oi, keep, m, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      const double* y = oi->data.data();
      auto da = grad_dst(ai.get());
      for (int64_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          if (keep(i, j)) dot += go[i * n + j] * y[i * n + j];
        }
        for (int64_t j = 0; j < n; ++j) {
          if (keep(i, j)) da[i * n + j] += y[i * n + j] * (go[i * n + j] - dot);
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  if (a.rank() == 1) {
    Tensor r = reshape(a, {1, a.dim(0)});
    Tensor s = softmax_core(r, [](int64_t, int64_t) { return true; }, "softmax");
    return reshape(s, {a.dim(0)});
  }
  check_2d(a, "softmax");
  if (axis == 1) return softmax_core(a, [](int64_t, int64_t) { return true; }, "softmax");
  if (axis == 0) return transpose(softmax_core(transpose(a), [](int64_t, int64_t) { return true; }, "softmax"));
  throw std::invalid_argument("softmax: invalid axis");
}

Tensor masked_softmax_rows(const Tensor& a, const std::vector<uint8_t>& mask) {
  if (static_cast<int64_t>(mask.size()) != a.numel()) {
    throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
  }
  const int64_t n = a.dim(1);
  auto m = std::make_shared<std::vector<uint8_t>>(mask);
  return softmax_core(a, [m, n](int64_t i, int64_t j) { return (*m)[static_cast<size_t>(i * n + j)] != 0; },
                      "masked_softmax_rows");
}

Tensor causal_softmax(const Tensor& scores) {
  if (scores.dim(0) != scores.dim(1)) {
    throw std::invalid_argument("causal_softmax: expected square scores, got " + shape_str(scores.shape()));
  }
  return softmax_core(scores, [](int64_t i, int64_t j) { return j <= i; }, "causal_softmax");
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  check_2d(x, "rms_norm");
  if (gain.rank() != 1 || gain.dim(0) != x.dim(1)) {
    throw std::invalid_argument("rms_norm: gain " + shape_str(gain.shape()) + " does not match " +
                                shape_str(x.shape()));
  }
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> rstore(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double v = x.data()[i * n + j];
      ss += v * v;
    }
    const double r = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    rstore[static_cast<size_t>(i)] = r;
    for (int64_t j = 0; j < n; ++j) out.data()[i * n + j] = x.data()[i * n + j] * r * gain.data()[j];
  }
  if (want_grad({&x, &gain})) {
    mark_output(out);
    auto xi = x.impl_ptr(), gi = gain.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [xi, gi, oi, rstore, m, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      if (xi->requires_grad) {
        auto dx = grad_dst(xi.get());
        for (int64_t i = 0; i < m; ++i) {
          const double r = rstore[static_cast<size_t>(i)];
          double dot = 0.0;
          for (int64_t j = 0; j < n; ++j) dot += go[i * n + j] * gi->data[j] * xi->data[i * n + j];
          const double c = r * r * r * dot / static_cast<double>(n);
          for (int64_t j = 0; j < n; ++j) {
            dx[i * n + j] += r * gi->data[j] * go[i * n + j] - c * xi->data[i * n + j];
          }
        }
      }
      if (gi->requires_grad) {
        auto dg = grad_dst(gi.get());
        for (int64_t i = 0; i < m; ++i) {
          const double r = rstore[static_cast<size_t>(i)];
          for (int64_t j = 0; j < n; ++j) dg[j] += go[i * n + j] * xi->data[i * n + j] * r;
        }
      }
    });
  }
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] = v / (1.0 + std::exp(-v));
  }
  if (want_grad({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [xi, oi, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto dx = grad_dst(xi.get());
      for (int64_t i = 0; i < n; ++i) {
        const double v = xi->data[i];
        const double s = 1.0 / (1.0 + std::exp(-v));
        dx[i] += go[i] * s * (1.0 + v * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  if (want_grad({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [xi, oi, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto dx = grad_dst(xi.get());
      for (int64_t i = 0; i < n; ++i) {
        const double v = xi->data[i];
        const double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        dx[i] += go[i] * (phi + v * pdf);
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  check_2d(table, "embedding");
  const int64_t v = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) throw std::invalid_argument("embedding: id " + std::to_string(id) + " out of range");
  }
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    const double* src = table.data().data() + static_cast<int64_t>(ids[r]) * d;
    std::copy(src, src + d, out.data().data() + r * d);
  }
  if (want_grad({&table})) {
    mark_output(out);
    auto ti = table.impl_ptr(), oi = out.impl_ptr();
    std::vector<int> ix(ids.begin(), ids.end());
    Tape::current()->record(oi, [ti, oi, ix, d]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto dt = grad_dst(ti.get());
      for (size_t r = 0; r < ix.size(); ++r) {
        double* dst = dt.data() + static_cast<int64_t>(ix[r]) * d;
        const double* src = go + r * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    const int64_t n = a.numel();
    Tape::current()->record(oi, [ai, oi, n]() {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      auto da = grad_dst(ai.get());
      for (int64_t i = 0; i < n; ++i) da[i] += g;
    });
  }
  return out;
}

Tensor mean_over_rows(const Tensor& a) {
  check_2d(a, "mean_over_rows");
  const int64_t m = a.dim(0), n = a.dim(1);
  if (m == 0) throw std::invalid_argument("mean_over_rows: empty tensor");
  Tensor out = Tensor::zeros({n});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out.data()[j] += a.data()[i * n + j];
  }
  for (int64_t j = 0; j < n; ++j) out.data()[j] /= static_cast<double>(m);
  if (want_grad({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->record(oi, [ai, oi, m, n]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      auto da = grad_dst(ai.get());
      const double inv = 1.0 / static_cast<double>(m);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) da[i * n + j] += go[j] * inv;
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> mask) {
  check_2d(logits, "cross_entropy");
  const int64_t t_count = logits.dim(0), v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != t_count || static_cast<int64_t>(mask.size()) != t_count) {
    throw std::invalid_argument("cross_entropy: targets/mask length must match logits rows");
  }
  double mask_sum = 0.0;
  for (double mv : mask) {
    if (mv < 0.0) throw std::invalid_argument("cross_entropy: negative mask weight");
    mask_sum += mv;
  }
  if (mask_sum == 0.0) throw std::invalid_argument("cross_entropy: degenerate all-zero mask");
  for (int y : targets) {
    if (y < 0 || y >= v) throw std::invalid_argument("cross_entropy: target out of vocabulary");
  }

  double loss = 0.0;
  for (int64_t t = 0; t < t_count; ++t) {
    if (mask[t] == 0.0) continue;
    const double* row = logits.data().data() + t * v;
    double mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    loss += mask[t] * (lse - row[targets[t]]);
  }
  loss /= mask_sum;
  Tensor out = Tensor::scalar(loss);
  if (want_grad({&logits})) {
    mark_output(out);
    auto li = logits.impl_ptr(), oi = out.impl_ptr();
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<double> mk(mask.begin(), mask.end());
    Tape::current()->record(oi, [li, oi, tg, mk, mask_sum, t_count, v]() {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      auto dl = grad_dst(li.get());
      for (int64_t t = 0; t < t_count; ++t) {
        if (mk[t] == 0.0) continue;
        const double* row = li->data.data() + t * v;
        double mx = row[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        const double w = g * mk[t] / mask_sum;
        for (int64_t j = 0; j < v; ++j) {
          double p = std::exp(row[j] - mx) / z;
          dl[t * v + j] += w * (p - (j == tg[t] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

std::vector<int64_t> top_k_indices(std::span<const double> x, int64_t k) {
  const int64_t n = static_cast<int64_t>(x.size());
  if (k < 1 || k > n) {
    throw std::invalid_argument("top_k_indices: k=" + std::to_string(k) + " out of range for n=" + std::to_string(n));
  }
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&x](int64_t a, int64_t b) {
    if (x[a] != x[b]) return x[a] > x[b];
    return a < b;
  });
  order.resize(static_cast<size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

std::pair<Tensor, Tensor> causal_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_2d(q, "causal_attention");
  if (q.shape() != k.shape() || q.dim(0) != v.dim(0)) {
    throw std::invalid_argument("causal_attention: q/k/v shapes disagree");
  }
  const double tau = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(matmul(q, transpose(k)), tau);
  Tensor probs = causal_softmax(scores);
  Tensor out = matmul(probs, v);
  return {out, probs};
}

}  // namespace rlns
