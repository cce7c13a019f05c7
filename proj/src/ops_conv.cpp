#include <algorithm>

#include "ect/ops.hpp"
#include "ops_detail.hpp"

namespace ect {

using detail::parent_grad;

namespace {

struct Conv2dGeom {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, pad, groups, hout, wout;
  std::size_t cin_g() const { return cin / groups; }
  std::size_t cout_g() const { return cout / groups; }
};

// Output columns ox for which ix = ox*stride + kx - pad lies in [0, w).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t pad, std::size_t stride,
                                                       std::size_t in, std::size_t out) {
  const long lo_num = static_cast<long>(pad) - static_cast<long>(k);
  long lo = lo_num <= 0 ? 0 : (lo_num + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  const long hi_num = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  long hi = hi_num < 0 ? 0 : hi_num / static_cast<long>(stride) + 1;
  lo = std::min<long>(lo, static_cast<long>(out));
  hi = std::clamp<long>(hi, lo, static_cast<long>(out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Visits every (output pixel, input pixel, weight) triple of the
// cross-correlation in a fixed order; `fn(out_idx, in_idx, w_idx, count)`
// handles a run of `count` consecutive output columns.
template <typename Fn>
void for_each_tap(const Conv2dGeom& g, Fn&& fn) {
  const std::size_t cig = g.cin_g(), cog = g.cout_g();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t gr = 0; gr < g.groups; ++gr)
      for (std::size_t oc = 0; oc < cog; ++oc) {
        const std::size_t co = gr * cog + oc;
        const std::size_t out_plane = (b * g.cout + co) * g.hout * g.wout;
        for (std::size_t ic = 0; ic < cig; ++ic) {
          const std::size_t ci = gr * cig + ic;
          const std::size_t in_plane = (b * g.cin + ci) * g.h * g.w;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto [oy0, oy1] = valid_range(ky, g.pad, g.stride, g.h, g.hout);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const auto [ox0, ox1] = valid_range(kx, g.pad, g.stride, g.w, g.wout);
              if (ox0 >= ox1) continue;
              const std::size_t widx = ((co * cig + ic) * g.kh + ky) * g.kw + kx;
              for (std::size_t oy = oy0; oy < oy1; ++oy) {
                const std::size_t iy = oy * g.stride + ky - g.pad;
                const std::size_t ix0 = ox0 * g.stride + kx - g.pad;
                fn(out_plane + oy * g.wout + ox0, in_plane + iy * g.w + ix0, widx, ox1 - ox0);
              }
            }
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opts) {
  if (input.rank() != 4 || weight.rank() != 4)
    throw DimensionError("conv2d: expected rank-4 input and weight, got " + shape_str(input.shape()) + " and " +
                         shape_str(weight.shape()));
  if (opts.groups == 0 || opts.stride == 0) throw DimensionError("conv2d: groups and stride must be positive");
  Conv2dGeom g{};
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = opts.stride;
  g.pad = opts.padding;
  g.groups = opts.groups;
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0)
    throw DimensionError("conv2d: channels " + std::to_string(g.cin) + "->" + std::to_string(g.cout) +
                         " not divisible by groups " + std::to_string(g.groups));
  if (weight.dim(1) != g.cin_g())
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(input.shape()) + " and groups " + std::to_string(g.groups));
  if (g.kh > g.h + 2 * g.pad || g.kw > g.w + 2 * g.pad)
    throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  if (bias.defined() && bias.numel() != g.cout) throw DimensionError("conv2d: bias must have Cout entries");
  g.hout = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wout = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  std::vector<T> out(g.batch * g.cout * g.hout * g.wout, T(0));
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t c = 0; c < g.cout; ++c)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((b * g.cout + c) * g.hout * g.wout), g.hout * g.wout,
                    bv[c]);
  }
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  const std::size_t st = g.stride;
  for_each_tap(g, [&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t count) {
    const T wv = wt[wi];
    T* o = out.data() + oi;
    const T* in = x + ii;
    for (std::size_t j = 0; j < count; ++j) o[j] += wv * in[j * st];
  });

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>({g.batch, g.cout, g.hout, g.wout}, std::move(out), std::move(inputs), [g](TensorNode<T>& n) {
    const auto& x = n.parents[0]->data;
    const auto& wt = n.parents[1]->data;
    auto gx = parent_grad(n, 0);
    auto gw = parent_grad(n, 1);
    const T* go = n.grad.data();
    const std::size_t st = g.stride;
    if (!gx.empty() || !gw.empty())
      for_each_tap(g, [&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t count) {
        if (!gx.empty()) {
          const T wv = wt[wi];
          T* gin = gx.data() + ii;
          for (std::size_t j = 0; j < count; ++j) gin[j * st] += wv * go[oi + j];
        }
        if (!gw.empty()) {
          T acc = 0;
          const T* in = x.data() + ii;
          for (std::size_t j = 0; j < count; ++j) acc += go[oi + j] * in[j * st];
          gw[wi] += acc;
        }
      });
    if (n.parents.size() == 3) {
      auto gb = parent_grad(n, 2);
      const std::size_t plane = g.hout * g.wout;
      if (!gb.empty())
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t c = 0; c < g.cout; ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += go[(b * g.cout + c) * plane + i];
            gb[c] += acc;
          }
    }
  }, "conv2d");
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride) {
  if (input.rank() != 4 || weight.rank() != 4)
    throw DimensionError("conv_transpose2d: expected rank-4 input and weight");
  if (stride != 2 || weight.dim(2) != 2 || weight.dim(3) != 2)
    throw UnsupportedError("conv_transpose2d: only kernel 2x2 with stride 2 is supported, got kernel " +
                           shape_str(weight.shape()) + " stride " + std::to_string(stride));
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (weight.dim(0) != cin)
    throw DimensionError("conv_transpose2d: weight " + shape_str(weight.shape()) + " vs input " +
                         shape_str(input.shape()));
  const std::size_t cout = weight.dim(1);
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv_transpose2d: bias must have Cout entries");
  const std::size_t ho = 2 * h, wo = 2 * w;
  std::vector<T> out(batch * cout * ho * wo, T(0));
  if (bias.defined())
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < cout; ++c)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((b * cout + c) * ho * wo), ho * wo, bias.data()[c]);
  auto x = input.data();
  auto wt = weight.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      T* o = out.data() + (b * cout + co) * ho * wo;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* in = x.data() + (b * cin + ci) * h * w;
        const T* k = wt.data() + (ci * cout + co) * 4;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t ky = 0; ky < 2; ++ky) {
            T* orow = o + (2 * y + ky) * wo;
            for (std::size_t xx = 0; xx < w; ++xx) {
              orow[2 * xx] += in[y * w + xx] * k[ky * 2];
              orow[2 * xx + 1] += in[y * w + xx] * k[ky * 2 + 1];
            }
          }
      }
    }
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>({batch, cout, ho, wo}, std::move(out), std::move(inputs),
                        [batch, cin, cout, h, w](TensorNode<T>& n) {
    const std::size_t ho = 2 * h, wo = 2 * w;
    const auto& x = n.parents[0]->data;
    const auto& wt = n.parents[1]->data;
    auto gx = parent_grad(n, 0);
    auto gw = parent_grad(n, 1);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t co = 0; co < cout; ++co) {
        const T* go = n.grad.data() + (b * cout + co) * ho * wo;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const std::size_t in_off = (b * cin + ci) * h * w;
          const std::size_t k_off = (ci * cout + co) * 4;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              for (std::size_t t = 0; t < 4; ++t) {
                const T gv = go[(2 * y + t / 2) * wo + 2 * xx + t % 2];
                if (!gx.empty()) gx[in_off + y * w + xx] += gv * wt[k_off + t];
                if (!gw.empty()) gw[k_off + t] += gv * x[in_off + y * w + xx];
              }
        }
      }
    if (n.parents.size() == 3) {
      auto gb = parent_grad(n, 2);
      if (!gb.empty())
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < cout; ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < ho * wo; ++i) acc += n.grad[(b * cout + c) * ho * wo + i];
            gb[c] += acc;
          }
    }
  }, "conv_transpose2d");
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding) {
  if (input.rank() != 3 || weight.rank() != 3)
    throw DimensionError("conv1d: expected rank-3 input and weight, got " + shape_str(input.shape()) + " and " +
                         shape_str(weight.shape()));
  const std::size_t batch = input.dim(0), cin = input.dim(1), len = input.dim(2);
  if (weight.dim(1) != cin)
    throw DimensionError("conv1d: weight " + shape_str(weight.shape()) + " vs input " + shape_str(input.shape()));
  // A [B,C,1,L] view turns this into conv2d with a 1 x kl kernel; padding is
  // only wanted along L, so pad H symmetrically by zero and crop.
  if (weight.dim(2) > len + 2 * padding)
    throw DimensionError("conv1d: kernel larger than padded input " + shape_str(input.shape()));
  auto x4 = reshape(input, {batch, cin, 1, len});
  auto w4 = reshape(weight, {weight.dim(0), cin, 1, weight.dim(2)});
  auto y = conv2d(x4, w4, bias, Conv2dOptions{1, padding, 1});
  // Padding also applied to the unit H axis: keep the middle row.
  auto mid = padding > 0 ? slice(y, 2, padding, 1) : y;
  return reshape(mid, {batch, weight.dim(0), mid.dim(3)});
}

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  if (input.rank() < 2) throw DimensionError("adaptive_avg_pool2d: rank < 2");
  const std::size_t h = input.shape()[input.rank() - 2];
  const std::size_t w = input.shape().back();
  if (h < out_h || w < out_w)
    throw DimensionError("adaptive_avg_pool2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                         " smaller than output grid " + std::to_string(out_h) + "x" + std::to_string(out_w));
  const std::size_t planes = input.numel() / (h * w);
  auto bounds = [](std::size_t i, std::size_t in, std::size_t out) {
    return std::pair{i * in / out, (i + 1) * in / out};
  };
  auto x = input.data();
  std::vector<T> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto [y0, y1] = bounds(i, h, out_h);
        const auto [x0, x1] = bounds(j, w, out_w);
        T acc = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += x[p * h * w + y * w + xx];
        out[(p * out_h + i) * out_w + j] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
  Shape shape = input.shape();
  shape[shape.size() - 2] = out_h;
  shape.back() = out_w;
  return make_result<T>(std::move(shape), std::move(out), {input}, [=](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < out_h; ++i)
        for (std::size_t j = 0; j < out_w; ++j) {
          const auto [y0, y1] = bounds(i, h, out_h);
          const auto [x0, x1] = bounds(j, w, out_w);
          const T share = n.grad[(p * out_h + i) * out_w + j] / static_cast<T>((y1 - y0) * (x1 - x0));
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t xx = x0; xx < x1; ++xx) g[p * h * w + y * w + xx] += share;
        }
  }, "adaptive_avg_pool2d");
}

namespace {
std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}
}  // namespace

template <typename T>
Tensor<T> pad_reflect2d(const Tensor<T>& input, std::size_t top, std::size_t bottom, std::size_t left,
                        std::size_t right) {
  if (input.rank() < 2) throw DimensionError("pad_reflect2d: rank < 2");
  const std::size_t h = input.shape()[input.rank() - 2];
  const std::size_t w = input.shape().back();
  const std::size_t planes = input.numel() / (h * w);
  const std::size_t ho = h + top + bottom, wo = w + left + right;
  std::vector<std::size_t> index;
  index.reserve(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ho; ++y) {
      const std::size_t sy = reflect_index(static_cast<long>(y) - static_cast<long>(top), h);
      for (std::size_t x = 0; x < wo; ++x)
        index.push_back(p * h * w + sy * w + reflect_index(static_cast<long>(x) - static_cast<long>(left), w));
    }
  Shape shape = input.shape();
  shape[shape.size() - 2] = ho;
  shape.back() = wo;
  return gather(input, index, std::move(shape));
}

#define ECT_INST(T)                                                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);       \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);          \
  template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> pad_reflect2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);
ECT_INSTANTIATE_FLOAT_DOUBLE(ECT_INST)
#undef ECT_INST

}  // namespace ect
