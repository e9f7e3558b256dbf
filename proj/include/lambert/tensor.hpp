#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lambert/rng.hpp"

// Dense row-major tensors with tape-free reverse-mode differentiation.
// Every op that touches a tensor requiring gradients attaches a Node holding
// the parent tensors and a backward closure; backward() walks the implicit
// DAG from a scalar loss. Gradients live in a GradStore keyed by data buffer,
// never on the tensors themselves, so independent graphs over shared
// parameters can run in parallel threads.
//
// The scalar type is a template parameter: training runs in float, the
// gradient-check harness re-runs the same graph in double.

namespace lambert::nn {

template <class S>
struct Node;

template <class S>
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<S>> data;
  bool requires_grad{false};
  std::shared_ptr<Node<S>> node;

  Tensor() = default;

  size_t numel() const { return data ? data->size() : 0; }
  bool defined() const { return static_cast<bool>(data); }

  S* ptr() { return data->data(); }
  const S* ptr() const { return data->data(); }

  S& operator[](size_t i) { return (*data)[i]; }
  const S& operator[](size_t i) const { return (*data)[i]; }

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  S item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return (*data)[0];
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data = std::make_shared<std::vector<T>>(numel());
    for (size_t i = 0; i < numel(); ++i) (*out.data)[i] = static_cast<T>((*data)[i]);
    out.requires_grad = requires_grad;
    return out;
  }
};

template <class S>
class GradStore;

template <class S>
struct Node {
  std::vector<Tensor<S>> parents;
  std::function<void(const Tensor<S>& out, GradStore<S>& gs)> backward;
};

// Gradient buffers keyed by the tensor's data buffer identity.
template <class S>
class GradStore {
 public:
  std::vector<S>& at(const Tensor<S>& t) {
    auto& g = grads_[t.data.get()];
    if (g.empty()) g.assign(t.numel(), S(0));
    return g;
  }
  const std::vector<S>* find(const Tensor<S>& t) const {
    auto it = grads_.find(t.data.get());
    return it == grads_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<const std::vector<S>*, std::vector<S>> grads_;
};

namespace detail {

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape entries must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ")";
  return os.str();
}

// c[m x n] += a[m x k] * b[k x n]
template <class S>
void gemm_nn(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    S* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <class S>
void gemm_nt(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    S* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const S* brow = b + static_cast<size_t>(j) * k;
      S acc = S(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
template <class S>
void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    const S* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const S av = arow[p];
      S* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <class S>
Tensor<S> zeros(std::vector<int> shape, bool requires_grad = false) {
  Tensor<S> t;
  size_t n = detail::shape_numel(shape);
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<S>>(n, S(0));
  t.requires_grad = requires_grad;
  return t;
}

template <class S>
Tensor<S> full(std::vector<int> shape, S value, bool requires_grad = false) {
  Tensor<S> t = zeros<S>(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

template <class S>
Tensor<S> from_values(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
  if (detail::shape_numel(shape) != values.size())
    throw std::invalid_argument("from_values: data length does not match shape " +
                                detail::shape_str(shape));
  Tensor<S> t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<S>>(std::move(values));
  t.requires_grad = requires_grad;
  return t;
}

template <class S>
Tensor<S> randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad = false) {
  Tensor<S> t = zeros<S>(std::move(shape), requires_grad);
  for (auto& v : *t.data) v = static_cast<S>(rng.normal(0.0, stddev));
  return t;
}

namespace detail {

template <class S>
void attach(Tensor<S>& out, std::vector<Tensor<S>> parents,
            std::function<void(const Tensor<S>&, GradStore<S>&)> fn) {
  out.requires_grad = false;
  for (const auto& p : parents) out.requires_grad |= p.requires_grad;
  if (out.requires_grad) {
    out.node = std::make_shared<Node<S>>();
    out.node->parents = std::move(parents);
    out.node->backward = std::move(fn);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("add: shape mismatch " + detail::shape_str(a.shape) + " vs " +
                                detail::shape_str(b.shape));
  Tensor<S> out = zeros<S>(a.shape);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  detail::attach<S>(out, {a, b}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (pa.requires_grad) {
      auto& ga = gs.at(pa);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = gs.at(pb);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("sub: shape mismatch " + detail::shape_str(a.shape) + " vs " +
                                detail::shape_str(b.shape));
  Tensor<S> out = zeros<S>(a.shape);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  detail::attach<S>(out, {a, b}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (pa.requires_grad) {
      auto& ga = gs.at(pa);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = gs.at(pb);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("mul: shape mismatch " + detail::shape_str(a.shape) + " vs " +
                                detail::shape_str(b.shape));
  Tensor<S> out = zeros<S>(a.shape);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  detail::attach<S>(out, {a, b}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (pa.requires_grad) {
      auto& ga = gs.at(pa);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*pb.data)[i];
    }
    if (pb.requires_grad) {
      auto& gb = gs.at(pb);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*pa.data)[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, double s) {
  Tensor<S> out = zeros<S>(a.shape);
  const S sv = static_cast<S>(s);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] * sv;
  detail::attach<S>(out, {a}, [sv](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    if (pa.requires_grad) {
      auto& ga = gs.at(pa);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
    }
  });
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = zeros<S>(a.shape);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = std::max((*a.data)[i], S(0));
  detail::attach<S>(out, {a}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    if (pa.requires_grad) {
      auto& ga = gs.at(pa);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += (*pa.data)[i] > S(0) ? g[i] : S(0);
    }
  });
  return out;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> out = zeros<S>(a.shape);
  for (size_t i = 0; i < out.numel(); ++i) {
    const S x = (*a.data)[i];
    (*out.data)[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                               : std::exp(x) / (S(1) + std::exp(x));
  }
  detail::attach<S>(out, {a}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    if (pa.requires_grad) {
      auto& ga = gs.at(pa);
      for (size_t i = 0; i < g.size(); ++i) {
        const S y = (*o.data)[i];
        ga[i] += g[i] * y * (S(1) - y);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + detail::shape_str(a.shape) +
                                " vs " + detail::shape_str(b.shape));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> out = zeros<S>({m, n});
  detail::gemm_nn(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  detail::attach<S>(out, {a, b}, [m, k, n](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (pa.requires_grad) detail::gemm_nt(g.data(), pb.ptr(), gs.at(pa).data(), m, n, k);
    if (pb.requires_grad) detail::gemm_tn(pa.ptr(), g.data(), gs.at(pb).data(), m, k, n);
  });
  return out;
}

// a[m x k] * b[n x k]^T -> [m x n]
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: incompatible shapes " + detail::shape_str(a.shape) +
                                " vs " + detail::shape_str(b.shape));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<S> out = zeros<S>({m, n});
  detail::gemm_nt(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  detail::attach<S>(out, {a, b}, [m, k, n](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pa = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (pa.requires_grad) detail::gemm_nn(g.data(), pb.ptr(), gs.at(pa).data(), m, n, k);
    if (pb.requires_grad) detail::gemm_tn(g.data(), pa.ptr(), gs.at(pb).data(), m, n, k);
  });
  return out;
}

template <class S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_bias: incompatible shapes " + detail::shape_str(x.shape) +
                                " vs " + detail::shape_str(b.shape));
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor<S> out = zeros<S>(x.shape);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      (*out.data)[static_cast<size_t>(r) * cols + c] =
          (*x.data)[static_cast<size_t>(r) * cols + c] + (*b.data)[c];
  detail::attach<S>(out, {x, b}, [rows, cols](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (px.requires_grad) {
      auto& gx = gs.at(px);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = gs.at(pb);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gb[c] += g[static_cast<size_t>(r) * cols + c];
    }
  });
  return out;
}

// x[R x in] * w[out x in]^T + b[out]
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  return add_bias(matmul_nt(x, w), b);
}

// gather rows of a table by index; backward scatter-adds
template <class S>
Tensor<S> rows(const Tensor<S>& table, const std::vector<int>& ids) {
  if (table.ndim() != 2)
    throw std::invalid_argument("rows: table must be 2-D, got " + detail::shape_str(table.shape));
  const int v = table.dim(0), n = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("rows: index " + std::to_string(id) + " out of range [0," +
                                  std::to_string(v) + ")");
  Tensor<S> out = zeros<S>({static_cast<int>(ids.size()), n});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.ptr() + static_cast<size_t>(ids[i]) * n, n, out.ptr() + i * n);
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  detail::attach<S>(out, {table}, [ids_copy, n](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pt = o.node->parents[0];
    if (pt.requires_grad) {
      auto& gt = gs.at(pt);
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        S* dst = gt.data() + static_cast<size_t>((*ids_copy)[i]) * n;
        const S* src = g.data() + i * n;
        for (int c = 0; c < n; ++c) dst[c] += src[c];
      }
    }
  });
  return out;
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& x, int offset, int len) {
  if (x.ndim() != 2 || offset < 0 || len <= 0 || offset + len > x.dim(1))
    throw std::invalid_argument("slice_cols: invalid slice [" + std::to_string(offset) + "," +
                                std::to_string(offset + len) + ") of " +
                                detail::shape_str(x.shape));
  const int rows_ = x.dim(0), cols = x.dim(1);
  Tensor<S> out = zeros<S>({rows_, len});
  for (int r = 0; r < rows_; ++r)
    std::copy_n(x.ptr() + static_cast<size_t>(r) * cols + offset, len,
                out.ptr() + static_cast<size_t>(r) * len);
  detail::attach<S>(out, {x}, [offset, len, rows_, cols](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    if (px.requires_grad) {
      auto& gx = gs.at(px);
      for (int r = 0; r < rows_; ++r) {
        S* dst = gx.data() + static_cast<size_t>(r) * cols + offset;
        const S* src = g.data() + static_cast<size_t>(r) * len;
        for (int c = 0; c < len; ++c) dst[c] += src[c];
      }
    }
  });
  return out;
}

template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int rows_ = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows_)
      throw std::invalid_argument("concat_cols: row mismatch " + detail::shape_str(p.shape));
    total += p.dim(1);
  }
  Tensor<S> out = zeros<S>({rows_, total});
  int off = 0;
  for (const auto& p : parts) {
    const int c = p.dim(1);
    for (int r = 0; r < rows_; ++r)
      std::copy_n(p.ptr() + static_cast<size_t>(r) * c, c,
                  out.ptr() + static_cast<size_t>(r) * total + off);
    off += c;
  }
  detail::attach<S>(out, parts, [rows_, total](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    int off2 = 0;
    for (const auto& p : o.node->parents) {
      const int c = p.dim(1);
      if (p.requires_grad) {
        auto& gp = gs.at(p);
        for (int r = 0; r < rows_; ++r) {
          const S* src = g.data() + static_cast<size_t>(r) * total + off2;
          S* dst = gp.data() + static_cast<size_t>(r) * c;
          for (int i = 0; i < c; ++i) dst[i] += src[i];
        }
      }
      off2 += c;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// normalization and reductions
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  if (axis < 0 || axis >= x.ndim())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for " +
                                detail::shape_str(x.shape));
  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(x.dim(i));
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<size_t>(x.dim(i));
  const size_t alen = static_cast<size_t>(x.dim(axis));

  Tensor<S> out = zeros<S>(x.shape);
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const size_t base = o * alen * inner + in;
      S mx = (*x.data)[base];
      for (size_t i = 1; i < alen; ++i) mx = std::max(mx, (*x.data)[base + i * inner]);
      S sum = S(0);
      for (size_t i = 0; i < alen; ++i) {
        const S e = std::exp((*x.data)[base + i * inner] - mx);
        (*out.data)[base + i * inner] = e;
        sum += e;
      }
      const S inv = S(1) / sum;
      for (size_t i = 0; i < alen; ++i) (*out.data)[base + i * inner] *= inv;
    }
  }
  detail::attach<S>(out, {x}, [outer, inner, alen](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    if (!px.requires_grad) return;
    auto& gx = gs.at(px);
    for (size_t ou = 0; ou < outer; ++ou) {
      for (size_t in = 0; in < inner; ++in) {
        const size_t base = ou * alen * inner + in;
        S dot = S(0);
        for (size_t i = 0; i < alen; ++i) dot += g[base + i * inner] * (*o.data)[base + i * inner];
        for (size_t i = 0; i < alen; ++i) {
          const size_t ix = base + i * inner;
          gx[ix] += (*o.data)[ix] * (g[ix] - dot);
        }
      }
    }
  });
  return out;
}

template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     double eps) {
  const int cols = x.dim(x.ndim() - 1);
  if (gamma.numel() != static_cast<size_t>(cols) || beta.numel() != static_cast<size_t>(cols))
    throw std::invalid_argument("layer_norm: gamma/beta must match last axis of " +
                                detail::shape_str(x.shape));
  const size_t rows_ = x.numel() / static_cast<size_t>(cols);
  Tensor<S> out = zeros<S>(x.shape);
  auto rstd = std::make_shared<std::vector<S>>(rows_);
  auto mean = std::make_shared<std::vector<S>>(rows_);
  for (size_t r = 0; r < rows_; ++r) {
    const S* xr = x.ptr() + r * cols;
    S mu = S(0);
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<S>(cols);
    S var = S(0);
    for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<S>(cols);
    const S rs = S(1) / std::sqrt(var + static_cast<S>(eps));
    (*mean)[r] = mu;
    (*rstd)[r] = rs;
    S* or_ = out.ptr() + r * cols;
    for (int c = 0; c < cols; ++c)
      or_[c] = (xr[c] - mu) * rs * (*gamma.data)[c] + (*beta.data)[c];
  }
  detail::attach<S>(out, {x, gamma, beta},
                    [rows_, cols, rstd, mean](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    const auto& pg = o.node->parents[1];
    const auto& pb = o.node->parents[2];
    for (size_t r = 0; r < rows_; ++r) {
      const S* xr = px.ptr() + r * cols;
      const S* gr = g.data() + r * cols;
      const S mu = (*mean)[r];
      const S rs = (*rstd)[r];
      if (pg.requires_grad || pb.requires_grad) {
        auto& ggamma = gs.at(pg);
        auto& gbeta = gs.at(pb);
        for (int c = 0; c < cols; ++c) {
          ggamma[c] += gr[c] * (xr[c] - mu) * rs;
          gbeta[c] += gr[c];
        }
      }
      if (px.requires_grad) {
        auto& gx = gs.at(px);
        S mean_dy = S(0), mean_dyxh = S(0);
        for (int c = 0; c < cols; ++c) {
          const S dyh = gr[c] * (*pg.data)[c];
          const S xh = (xr[c] - mu) * rs;
          mean_dy += dyh;
          mean_dyxh += dyh * xh;
        }
        mean_dy /= static_cast<S>(cols);
        mean_dyxh /= static_cast<S>(cols);
        S* gxr = gx.data() + r * cols;
        for (int c = 0; c < cols; ++c) {
          const S dyh = gr[c] * (*pg.data)[c];
          const S xh = (xr[c] - mu) * rs;
          gxr[c] += rs * (dyh - mean_dy - xh * mean_dyxh);
        }
      }
    }
  });
  return out;
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
  Tensor<S> out = zeros<S>({1});
  S acc = S(0);
  for (size_t i = 0; i < x.numel(); ++i) acc += (*x.data)[i];
  (*out.data)[0] = acc;
  detail::attach<S>(out, {x}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    if (px.requires_grad) {
      auto& gx = gs.at(px);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    }
  });
  return out;
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// mean cross-entropy over rows whose label is not ignore_index; labels index
// the last axis of logits[R x V]
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels,
                        int ignore_index = -1) {
  if (logits.ndim() != 2 || static_cast<size_t>(logits.dim(0)) != labels.size())
    throw std::invalid_argument("cross_entropy: logits " + detail::shape_str(logits.shape) +
                                " vs " + std::to_string(labels.size()) + " labels");
  const int r = logits.dim(0), v = logits.dim(1);
  int counted = 0;
  S total = S(0);
  auto lse = std::make_shared<std::vector<S>>(r);  // per-row logsumexp
  auto mxs = std::make_shared<std::vector<S>>(r);
  for (int i = 0; i < r; ++i) {
    const S* row = logits.ptr() + static_cast<size_t>(i) * v;
    S mx = row[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    S sum = S(0);
    for (int c = 0; c < v; ++c) sum += std::exp(row[c] - mx);
    (*mxs)[i] = mx;
    (*lse)[i] = std::log(sum) + mx;
    if (labels[i] != ignore_index) {
      if (labels[i] < 0 || labels[i] >= v)
        throw std::invalid_argument("cross_entropy: label out of range");
      total += (*lse)[i] - row[labels[i]];
      ++counted;
    }
  }
  if (counted == 0)
    throw std::invalid_argument("cross_entropy: no labeled positions");
  Tensor<S> out = zeros<S>({1});
  (*out.data)[0] = total / static_cast<S>(counted);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  detail::attach<S>(out, {logits},
                    [labels_copy, lse, mxs, v, counted, ignore_index](const Tensor<S>& o,
                                                                      GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pl = o.node->parents[0];
    if (!pl.requires_grad) return;
    auto& gl = gs.at(pl);
    const S w = g[0] / static_cast<S>(counted);
    for (size_t i = 0; i < labels_copy->size(); ++i) {
      if ((*labels_copy)[i] == ignore_index) continue;
      const S* row = pl.ptr() + i * v;
      S* grow = gl.data() + i * v;
      const S lsei = (*lse)[i];
      for (int c = 0; c < v; ++c) grow[c] += w * std::exp(row[c] - lsei);
      grow[(*labels_copy)[i]] -= w;
    }
  });
  return out;
}

// mean binary cross-entropy between sigmoid(z) and targets in [0,1],
// computed from logits for stability
template <class S>
Tensor<S> bce_with_logits(const Tensor<S>& z, const Tensor<S>& target) {
  if (z.shape != target.shape)
    throw std::invalid_argument("bce_with_logits: shape mismatch " +
                                detail::shape_str(z.shape) + " vs " +
                                detail::shape_str(target.shape));
  const size_t n = z.numel();
  S total = S(0);
  for (size_t i = 0; i < n; ++i) {
    const S zi = (*z.data)[i], ti = (*target.data)[i];
    total += std::max(zi, S(0)) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor<S> out = zeros<S>({1});
  (*out.data)[0] = total / static_cast<S>(n);
  detail::attach<S>(out, {z, target}, [n](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pz = o.node->parents[0];
    const auto& pt = o.node->parents[1];
    if (!pz.requires_grad) return;
    auto& gz = gs.at(pz);
    const S w = g[0] / static_cast<S>(n);
    for (size_t i = 0; i < n; ++i) {
      const S zi = (*pz.data)[i];
      const S s = zi >= S(0) ? S(1) / (S(1) + std::exp(-zi)) : std::exp(zi) / (S(1) + std::exp(zi));
      gz[i] += w * (s - (*pt.data)[i]);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// convolutions (3x3 kernels, padding 1)
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void conv2d_fwd(const S* x, const S* k, S* out, int cin, int h, int w, int cout, int stride) {
  const int oh = h / stride, ow = w / stride;
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        S acc = S(0);
        for (int ci = 0; ci < cin; ++ci) {
          const S* xc = x + (static_cast<size_t>(ci) * h) * w;
          const S* kc = k + ((static_cast<size_t>(co) * cin + ci) * 3) * 3;
          for (int dy = 0; dy < 3; ++dy) {
            const int iy = oy * stride + dy - 1;
            if (iy < 0 || iy >= h) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const int ix = ox * stride + dx - 1;
              if (ix < 0 || ix >= w) continue;
              acc += xc[static_cast<size_t>(iy) * w + ix] * kc[dy * 3 + dx];
            }
          }
        }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] += acc;
      }
    }
  }
}

// exact adjoint of conv2d_fwd in the x argument
template <class S>
void conv2d_adj(const S* y, const S* k, S* out, int cin, int h, int w, int cout, int stride) {
  const int oh = h / stride, ow = w / stride;
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const S yv = y[(static_cast<size_t>(co) * oh + oy) * ow + ox];
        for (int ci = 0; ci < cin; ++ci) {
          S* oc = out + (static_cast<size_t>(ci) * h) * w;
          const S* kc = k + ((static_cast<size_t>(co) * cin + ci) * 3) * 3;
          for (int dy = 0; dy < 3; ++dy) {
            const int iy = oy * stride + dy - 1;
            if (iy < 0 || iy >= h) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const int ix = ox * stride + dx - 1;
              if (ix < 0 || ix >= w) continue;
              oc[static_cast<size_t>(iy) * w + ix] += yv * kc[dy * 3 + dx];
            }
          }
        }
      }
    }
  }
}

// gradient w.r.t. the kernel: dk[co][ci][dy][dx] = sum_{oy,ox} g[co][oy][ox] x[ci][...]
template <class S>
void conv2d_kgrad(const S* x, const S* g, S* dk, int cin, int h, int w, int cout, int stride) {
  const int oh = h / stride, ow = w / stride;
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      const S* xc = x + (static_cast<size_t>(ci) * h) * w;
      S* kc = dk + ((static_cast<size_t>(co) * cin + ci) * 3) * 3;
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          S acc = S(0);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + dy - 1;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + dx - 1;
              if (ix < 0 || ix >= w) continue;
              acc += g[(static_cast<size_t>(co) * oh + oy) * ow + ox] *
                     xc[static_cast<size_t>(iy) * w + ix];
            }
          }
          kc[dy * 3 + dx] += acc;
        }
      }
    }
  }
}

template <class S>
void check_conv_shapes(const Tensor<S>& x, const Tensor<S>& k, int stride, const char* who) {
  if (x.ndim() != 3 || k.ndim() != 4 || k.dim(2) != 3 || k.dim(3) != 3)
    throw std::invalid_argument(std::string(who) + ": expected x(C,H,W), k(C',C,3,3), got " +
                                shape_str(x.shape) + " and " + shape_str(k.shape));
  if (stride <= 0) throw std::invalid_argument(std::string(who) + ": stride must be positive");
}

}  // namespace detail

// cross-correlation, 3x3 kernel, padding 1; output (C', H/stride, W/stride)
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& k, int stride) {
  detail::check_conv_shapes(x, k, stride, "conv2d");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = k.dim(0);
  if (k.dim(1) != cin)
    throw std::invalid_argument("conv2d: channel mismatch " + detail::shape_str(x.shape) +
                                " vs " + detail::shape_str(k.shape));
  if (h % stride != 0 || w % stride != 0)
    throw std::invalid_argument("conv2d: spatial dims " + detail::shape_str(x.shape) +
                                " not divisible by stride " + std::to_string(stride));
  Tensor<S> out = zeros<S>({cout, h / stride, w / stride});
  detail::conv2d_fwd(x.ptr(), k.ptr(), out.ptr(), cin, h, w, cout, stride);
  detail::attach<S>(out, {x, k}, [cin, h, w, cout, stride](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    const auto& pk = o.node->parents[1];
    if (px.requires_grad)
      detail::conv2d_adj(g.data(), pk.ptr(), gs.at(px).data(), cin, h, w, cout, stride);
    if (pk.requires_grad)
      detail::conv2d_kgrad(px.ptr(), g.data(), gs.at(pk).data(), cin, h, w, cout, stride);
  });
  return out;
}

// exact adjoint of conv2d with the same kernel geometry:
// y(C', h, w) -> (C, h*stride, w*stride)
template <class S>
Tensor<S> conv2d_transpose(const Tensor<S>& y, const Tensor<S>& k, int stride) {
  detail::check_conv_shapes(y, k, stride, "conv2d_transpose");
  const int cout = y.dim(0), oh = y.dim(1), ow = y.dim(2);
  if (k.dim(0) != cout)
    throw std::invalid_argument("conv2d_transpose: channel mismatch " +
                                detail::shape_str(y.shape) + " vs " + detail::shape_str(k.shape));
  const int cin = k.dim(1), h = oh * stride, w = ow * stride;
  Tensor<S> out = zeros<S>({cin, h, w});
  detail::conv2d_adj(y.ptr(), k.ptr(), out.ptr(), cin, h, w, cout, stride);
  detail::attach<S>(out, {y, k}, [cin, h, w, cout, stride](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& py = o.node->parents[0];
    const auto& pk = o.node->parents[1];
    if (py.requires_grad)
      detail::conv2d_fwd(g.data(), pk.ptr(), gs.at(py).data(), cin, h, w, cout, stride);
    if (pk.requires_grad)
      detail::conv2d_kgrad(g.data(), py.ptr(), gs.at(pk).data(), cin, h, w, cout, stride);
  });
  return out;
}

// same data in a new shape; backward passes gradients through unchanged
template <class S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int> shape) {
  if (detail::shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: cannot view " + detail::shape_str(x.shape) + " as " +
                                detail::shape_str(shape));
  Tensor<S> out = zeros<S>(std::move(shape));
  std::copy(x.data->begin(), x.data->end(), out.data->begin());
  detail::attach<S>(out, {x}, [](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    if (px.requires_grad) {
      auto& gx = gs.at(px);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
  return out;
}

// x(C,H,W) + b[C] broadcast over the spatial dims
template <class S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.ndim() != 3 || b.ndim() != 1 || b.dim(0) != x.dim(0))
    throw std::invalid_argument("add_channel_bias: incompatible shapes " +
                                detail::shape_str(x.shape) + " vs " + detail::shape_str(b.shape));
  const int c = x.dim(0);
  const size_t hw = static_cast<size_t>(x.dim(1)) * x.dim(2);
  Tensor<S> out = zeros<S>(x.shape);
  for (int ch = 0; ch < c; ++ch) {
    const S bv = (*b.data)[ch];
    for (size_t i = 0; i < hw; ++i)
      (*out.data)[ch * hw + i] = (*x.data)[ch * hw + i] + bv;
  }
  detail::attach<S>(out, {x, b}, [c, hw](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    const auto& pb = o.node->parents[1];
    if (px.requires_grad) {
      auto& gx = gs.at(px);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = gs.at(pb);
      for (int ch = 0; ch < c; ++ch) {
        S acc = S(0);
        for (size_t i = 0; i < hw; ++i) acc += g[ch * hw + i];
        gb[ch] += acc;
      }
    }
  });
  return out;
}

// Column-wise batch normalization over the rows of x[R x C]. In training mode
// the batch statistics (biased variance) normalize the input and, when the
// running tensors are given, update them in place with the stated momentum.
// In inference mode the running statistics are used and must be provided.
template <class S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>* running_mean, Tensor<S>* running_var, double momentum,
                     double eps, bool training) {
  if (x.ndim() != 2 || gamma.numel() != static_cast<size_t>(x.dim(1)) ||
      beta.numel() != static_cast<size_t>(x.dim(1)))
    throw std::invalid_argument("batch_norm: incompatible shapes " + detail::shape_str(x.shape));
  const int r = x.dim(0), c = x.dim(1);
  Tensor<S> out = zeros<S>(x.shape);

  if (!training) {
    if (!running_mean || !running_var)
      throw std::invalid_argument("batch_norm: inference requires running statistics");
    auto rm = running_mean->data;
    auto rv = running_var->data;
    auto rstd = std::make_shared<std::vector<S>>(static_cast<size_t>(c));
    for (int j = 0; j < c; ++j)
      (*rstd)[j] = S(1) / std::sqrt((*rv)[static_cast<size_t>(j)] + static_cast<S>(eps));
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        (*out.data)[static_cast<size_t>(i) * c + j] =
            ((*x.data)[static_cast<size_t>(i) * c + j] - (*rm)[static_cast<size_t>(j)]) *
                (*rstd)[j] * (*gamma.data)[static_cast<size_t>(j)] +
            (*beta.data)[static_cast<size_t>(j)];
    detail::attach<S>(out, {x, gamma, beta},
                      [r, c, rm, rstd](const Tensor<S>& o, GradStore<S>& gs) {
      const auto& g = gs.at(o);
      const auto& px = o.node->parents[0];
      const auto& pg = o.node->parents[1];
      const auto& pb = o.node->parents[2];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const size_t ix = static_cast<size_t>(i) * c + j;
          const S xh = ((*px.data)[ix] - (*rm)[static_cast<size_t>(j)]) * (*rstd)[j];
          if (px.requires_grad)
            gs.at(px)[ix] += g[ix] * (*pg.data)[static_cast<size_t>(j)] * (*rstd)[j];
          if (pg.requires_grad) gs.at(pg)[static_cast<size_t>(j)] += g[ix] * xh;
          if (pb.requires_grad) gs.at(pb)[static_cast<size_t>(j)] += g[ix];
        }
    });
    return out;
  }

  auto mean = std::make_shared<std::vector<S>>(static_cast<size_t>(c), S(0));
  auto var = std::make_shared<std::vector<S>>(static_cast<size_t>(c), S(0));
  for (int j = 0; j < c; ++j) {
    S mu = S(0);
    for (int i = 0; i < r; ++i) mu += (*x.data)[static_cast<size_t>(i) * c + j];
    mu /= static_cast<S>(r);
    S v = S(0);
    for (int i = 0; i < r; ++i) {
      const S d = (*x.data)[static_cast<size_t>(i) * c + j] - mu;
      v += d * d;
    }
    v /= static_cast<S>(r);
    (*mean)[static_cast<size_t>(j)] = mu;
    (*var)[static_cast<size_t>(j)] = v;
  }
  if (running_mean && running_var) {
    for (int j = 0; j < c; ++j) {
      auto& rm = (*running_mean->data)[static_cast<size_t>(j)];
      auto& rv = (*running_var->data)[static_cast<size_t>(j)];
      rm = static_cast<S>(momentum) * rm + static_cast<S>(1.0 - momentum) * (*mean)[static_cast<size_t>(j)];
      rv = static_cast<S>(momentum) * rv + static_cast<S>(1.0 - momentum) * (*var)[static_cast<size_t>(j)];
    }
  }
  auto rstd = std::make_shared<std::vector<S>>(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j)
    (*rstd)[j] = S(1) / std::sqrt((*var)[static_cast<size_t>(j)] + static_cast<S>(eps));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const size_t ix = static_cast<size_t>(i) * c + j;
      (*out.data)[ix] = ((*x.data)[ix] - (*mean)[static_cast<size_t>(j)]) * (*rstd)[j] *
                            (*gamma.data)[static_cast<size_t>(j)] +
                        (*beta.data)[static_cast<size_t>(j)];
    }
  detail::attach<S>(out, {x, gamma, beta},
                    [r, c, mean, rstd](const Tensor<S>& o, GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& px = o.node->parents[0];
    const auto& pg = o.node->parents[1];
    const auto& pb = o.node->parents[2];
    for (int j = 0; j < c; ++j) {
      const S mu = (*mean)[static_cast<size_t>(j)];
      const S rs = (*rstd)[j];
      const S gam = (*pg.data)[static_cast<size_t>(j)];
      S sum_dy = S(0), sum_dyxh = S(0);
      for (int i = 0; i < r; ++i) {
        const size_t ix = static_cast<size_t>(i) * c + j;
        const S xh = ((*px.data)[ix] - mu) * rs;
        sum_dy += g[ix];
        sum_dyxh += g[ix] * xh;
      }
      if (pg.requires_grad) gs.at(pg)[static_cast<size_t>(j)] += sum_dyxh;
      if (pb.requires_grad) gs.at(pb)[static_cast<size_t>(j)] += sum_dy;
      if (px.requires_grad) {
        auto& gx = gs.at(px);
        for (int i = 0; i < r; ++i) {
          const size_t ix = static_cast<size_t>(i) * c + j;
          const S xh = ((*px.data)[ix] - mu) * rs;
          gx[ix] += gam * rs *
                    (g[ix] - sum_dy / static_cast<S>(r) - xh * sum_dyxh / static_cast<S>(r));
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// backward pass
// ---------------------------------------------------------------------------

template <class S>
GradStore<S> backward(const Tensor<S>& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                detail::shape_str(loss.shape));
  GradStore<S> gs;
  gs.at(loss)[0] = S(1);
  if (!loss.node) return gs;

  // post-order DFS over nodes, dedup by node pointer
  std::vector<std::pair<Node<S>*, Tensor<S>>> order;
  std::unordered_map<Node<S>*, bool> seen;
  struct Frame {
    Tensor<S> t;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss, 0});
  seen[loss.node.get()] = true;
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node<S>* nd = f.t.node.get();
    if (f.next_parent < nd->parents.size()) {
      const Tensor<S>& p = nd->parents[f.next_parent++];
      if (p.node && p.requires_grad && !seen[p.node.get()]) {
        seen[p.node.get()] = true;
        stack.push_back({p, 0});
      }
    } else {
      order.emplace_back(nd, f.t);
      stack.pop_back();
    }
  }
  // children appear after parents in post-order; process in reverse
  for (auto it = order.rbegin(); it != order.rend(); ++it) it->first->backward(it->second, gs);
  return gs;
}

}  // namespace lambert::nn
