#include <algorithm>
#include <cmath>
#include <numeric>

#include "ect/ops.hpp"
#include "ops_detail.hpp"

namespace ect {

using detail::parent_grad;
using detail::split_axis;

namespace {

struct MatmulDims {
  std::size_t batch, m, p, q;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
  if (a.size() != b.size() || (a.size() != 2 && a.size() != 3))
    throw DimensionError("matmul: expected two rank-2 or two rank-3 operands, got " + shape_str(a) + " and " +
                         shape_str(b));
  const std::size_t off = a.size() - 2;
  if (off == 1 && a[0] != b[0])
    throw DimensionError("matmul: batch mismatch " + shape_str(a) + " vs " + shape_str(b));
  if (a[off + 1] != b[off])
    throw DimensionError("matmul: inner extents differ " + shape_str(a) + " vs " + shape_str(b));
  return {off ? a[0] : 1, a[off], a[off + 1], b[off + 1]};
}

// c[m,q] += a[m,p] * b[p,q]; each c[i,j] accumulates in ascending k.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * q;
    for (std::size_t k = 0; k < p; ++k) {
      const T aik = a[i * p + k];
      const T* brow = b + k * q;
      for (std::size_t j = 0; j < q; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[m,p] += g[m,q] * b[p,q]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < p; ++k) {
      T acc = 0;
      for (std::size_t j = 0; j < q; ++j) acc += g[i * q + j] * b[k * q + j];
      c[i * p + k] += acc;
    }
}

// c[p,q] += a[m,p]^T * g[m,q]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t p, std::size_t q) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < p; ++k) {
      const T aik = a[i * p + k];
      T* crow = c + k * q;
      const T* grow = g + i * q;
      for (std::size_t j = 0; j < q; ++j) crow[j] += aik * grow[j];
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto d = matmul_dims(a.shape(), b.shape());
  std::vector<T> out(d.batch * d.m * d.q, T(0));
  for (std::size_t bi = 0; bi < d.batch; ++bi)
    gemm_nn(a.data().data() + bi * d.m * d.p, b.data().data() + bi * d.p * d.q, out.data() + bi * d.m * d.q, d.m,
            d.p, d.q);
  Shape shape = a.rank() == 3 ? Shape{d.batch, d.m, d.q} : Shape{d.m, d.q};
  return make_result<T>(std::move(shape), std::move(out), {a, b}, [d](TensorNode<T>& n) {
    const auto& x = n.parents[0]->data;
    const auto& y = n.parents[1]->data;
    auto ga = parent_grad(n, 0);
    if (!ga.empty())
      for (std::size_t bi = 0; bi < d.batch; ++bi)
        gemm_nt(n.grad.data() + bi * d.m * d.q, y.data() + bi * d.p * d.q, ga.data() + bi * d.m * d.p, d.m, d.p,
                d.q);
    auto gb = parent_grad(n, 1);
    if (!gb.empty())
      for (std::size_t bi = 0; bi < d.batch; ++bi)
        gemm_tn(x.data() + bi * d.m * d.p, n.grad.data() + bi * d.m * d.q, gb.data() + bi * d.p * d.q, d.m, d.p,
                d.q);
  }, "matmul");
}

template <typename T>
Tensor<T> gather(const Tensor<T>& a, const std::vector<std::size_t>& index, Shape shape) {
  if (shape_numel(shape) != index.size())
    throw DimensionError("gather: index count " + std::to_string(index.size()) + " does not fill " + shape_str(shape));
  auto x = a.data();
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.size()) throw DimensionError("gather: index out of range for " + shape_str(a.shape()));
    out[i] = x[index[i]];
  }
  return make_result<T>(std::move(shape), std::move(out), {a}, [index](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += n.grad[i];
  }, "gather");
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw DimensionError("permute: axis list does not match rank of " + shape_str(s));
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: invalid axis permutation for " + shape_str(s));
    seen[ax] = true;
  }
  std::vector<std::size_t> stride(r, 1);
  for (std::size_t i = r; i-- > 1;) stride[i - 1] = stride[i] * s[i];
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[axes[i]];
  std::vector<std::size_t> index(a.numel());
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t flat = 0; flat < index.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += counter[i] * stride[axes[i]];
    index[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  return gather(a, index, std::move(out_shape));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw DimensionError("transpose: rank < 2 for " + shape_str(a.shape()));
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }, "reshape");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw DimensionError("concat: incompatible " + shape_str(first) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  const auto sp = split_axis(first, axis);
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) chunk[i] = parts[i].dim(axis) * sp.inner;
  const std::size_t row = out_shape[axis] * sp.inner;
  std::vector<T> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::size_t off = o * row;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto src = parts[i].data().subspan(o * chunk[i], chunk[i]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
      off += chunk[i];
    }
  }
  return make_result<T>(std::move(out_shape), std::move(out), parts, [chunk, row, outer = sp.outer](TensorNode<T>& n) {
    std::size_t base = 0;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      auto g = parent_grad(n, i);
      if (!g.empty())
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < chunk[i]; ++j) g[o * chunk[i] + j] += n.grad[o * row + base + j];
      base += chunk[i];
    }
  }, "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis])
    throw DimensionError("slice: [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(s));
  const auto sp = split_axis(s, axis);
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<std::size_t> index;
  index.reserve(shape_numel(out_shape));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = start; l < start + length; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i) index.push_back((o * sp.len + l) * sp.inner + i);
  return gather(a, index, std::move(out_shape));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis out of range for " + shape_str(x.shape()));
  const auto sp = split_axis(x.shape(), axis);
  auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      T peak = in[base];
      for (std::size_t l = 1; l < sp.len; ++l) peak = std::max(peak, in[base + l * sp.inner]);
      T total = 0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const T e = std::exp(in[base + l * sp.inner] - peak);
        out[base + l * sp.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= total;
    }
  return make_result<T>(x.shape(), std::move(out), {x}, [sp](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        T inner = 0;
        for (std::size_t l = 0; l < sp.len; ++l) inner += n.grad[base + l * sp.inner] * n.data[base + l * sp.inner];
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t at = base + l * sp.inner;
          g[at] += n.data[at] * (n.grad[at] - inner);
        }
      }
  }, "softmax");
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  auto in = x.data();
  std::vector<T> out(in.size());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += in[r * d + j] * in[r * d + j];
    norms[r] = std::sqrt(ss);
    const T denom = std::max(norms[r], eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[r * d + j] / denom;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [norms = std::move(norms), d, eps](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t r = 0; r < norms.size(); ++r) {
      const T* y = n.data.data() + r * d;
      const T* gy = n.grad.data() + r * d;
      if (norms[r] > eps) {
        T proj = 0;
        for (std::size_t j = 0; j < d; ++j) proj += y[j] * gy[j];
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += (gy[j] - y[j] * proj) / norms[r];
      } else {
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += gy[j] / eps;
      }
    }
  }, "l2_normalize_rows");
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t axis, T eps) {
  if (axis >= x.rank()) throw DimensionError("layer_norm: axis out of range for " + shape_str(x.shape()));
  const auto sp = split_axis(x.shape(), axis);
  if (gamma.numel() != sp.len || beta.numel() != sp.len)
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(sp.len) + " entries");
  auto in = x.data();
  auto ga = gamma.data();
  auto be = beta.data();
  std::vector<T> out(in.size());
  std::vector<T> xhat(in.size());
  std::vector<T> inv_std(sp.outer * sp.inner);
  const T count = static_cast<T>(sp.len);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      T mu = 0;
      for (std::size_t l = 0; l < sp.len; ++l) mu += in[base + l * sp.inner];
      mu /= count;
      T var = 0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const T c = in[base + l * sp.inner] - mu;
        var += c * c;
      }
      var /= count;
      const T inv = T(1) / std::sqrt(var + eps);
      inv_std[o * sp.inner + i] = inv;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const std::size_t at = base + l * sp.inner;
        xhat[at] = (in[at] - mu) * inv;
        out[at] = ga[l] * xhat[at] + be[l];
      }
    }
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [sp, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& n) {
    const auto& ga = n.parents[1]->data;
    auto gx = parent_grad(n, 0);
    auto ggamma = parent_grad(n, 1);
    auto gbeta = parent_grad(n, 2);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        T sum_g = 0, sum_gx = 0;
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t at = base + l * sp.inner;
          const T gh = n.grad[at] * ga[l];
          sum_g += gh;
          sum_gx += gh * xhat[at];
          if (!ggamma.empty()) ggamma[l] += n.grad[at] * xhat[at];
          if (!gbeta.empty()) gbeta[l] += n.grad[at];
        }
        if (gx.empty()) continue;
        const T inv = inv_std[o * sp.inner + i];
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t at = base + l * sp.inner;
          const T gh = n.grad[at] * ga[l];
          gx[at] += inv / count * (count * gh - sum_g - xhat[at] * sum_gx);
        }
      }
  }, "layer_norm");
}

template <typename T>
Tensor<T> scale_batches(const Tensor<T>& x, const Tensor<T>& factors) {
  const std::size_t batch = x.dim(0);
  const std::size_t h = factors.numel();
  if (batch % h != 0)
    throw DimensionError("scale_batches: " + std::to_string(h) + " factors do not tile batch " + std::to_string(batch));
  const std::size_t inner = x.numel() / batch;
  auto in = x.data();
  auto f = factors.data();
  std::vector<T> out(in.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < inner; ++i) out[b * inner + i] = in[b * inner + i] * f[b % h];
  return make_result<T>(x.shape(), std::move(out), {x, factors}, [batch, inner, h](TensorNode<T>& n) {
    const auto& in = n.parents[0]->data;
    const auto& f = n.parents[1]->data;
    auto gx = parent_grad(n, 0);
    auto gf = parent_grad(n, 1);
    for (std::size_t b = 0; b < batch; ++b) {
      T acc = 0;
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t at = b * inner + i;
        if (!gx.empty()) gx[at] += n.grad[at] * f[b % h];
        acc += n.grad[at] * in[at];
      }
      if (!gf.empty()) gf[b % h] += acc;
    }
  }, "scale_batches");
}

#define ECT_INST(T)                                                                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> gather(const Tensor<T>&, const std::vector<std::size_t>&, Shape);                        \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                              \
  template Tensor<T> transpose(const Tensor<T>&);                                                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                      \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                          \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                                  \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, T);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, T);        \
  template Tensor<T> scale_batches(const Tensor<T>&, const Tensor<T>&);
ECT_INSTANTIATE_FLOAT_DOUBLE(ECT_INST)
#undef ECT_INST

}  // namespace ect
