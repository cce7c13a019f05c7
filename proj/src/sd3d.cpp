#include "ect/sd3d.hpp"

#include <string>

#include "ect/ops.hpp"

namespace ect {

namespace {
std::string pair_str(const char* a, std::size_t av, const char* b, std::size_t bv) {
  return std::string(a) + "=" + std::to_string(av) + " is not divisible by " + b + "=" + std::to_string(bv);
}
}  // namespace

void SplitSpec::validate() const {
  if (group == 0 || splits == 0) throw DimensionError("sd3d: c and s must be positive");
  if (channels == 0 || height == 0 || width == 0) throw DimensionError("sd3d: empty feature map");
  if (channels % group != 0) throw DimensionError("sd3d: " + pair_str("C", channels, "c", group));
  if (height % splits != 0) throw DimensionError("sd3d: " + pair_str("H", height, "s", splits));
  if (width % splits != 0) throw DimensionError("sd3d: " + pair_str("W", width, "s", splits));
}

SplitSpec make_split_spec(std::size_t channels, std::size_t height, std::size_t width, std::size_t group,
                          std::size_t splits) {
  SplitSpec spec{channels, height, width, group, splits};
  spec.validate();
  return spec;
}

std::vector<std::size_t> sd3d_token_index(const SplitSpec& spec, std::size_t batch) {
  spec.validate();
  const std::size_t G = spec.spectral_groups();
  const std::size_t s = spec.splits;
  const std::size_t th = spec.tile_height(), tw = spec.tile_width();
  const std::size_t plane = spec.height * spec.width;
  const std::size_t per_sample = spec.channels * plane;
  std::vector<std::size_t> index;
  index.reserve(batch * per_sample);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t ty = 0; ty < s; ++ty)
        for (std::size_t tx = 0; tx < s; ++tx)
          for (std::size_t j = 0; j < spec.group; ++j) {
            const std::size_t channel = g + j * G;
            for (std::size_t y = 0; y < th; ++y) {
              const std::size_t row = b * per_sample + channel * plane + (ty * th + y) * spec.width + tx * tw;
              for (std::size_t x = 0; x < tw; ++x) index.push_back(row + x);
            }
          }
  return index;
}

template <typename T>
TokenGrid<T> sd3d_split(const Tensor<T>& fmap, std::size_t group, std::size_t splits, std::size_t head_count) {
  const bool batched = fmap.rank() == 4;
  if (!batched && fmap.rank() != 3)
    throw DimensionError("sd3d_split: expected [C,H,W] or [B,C,H,W], got " + shape_str(fmap.shape()));
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? fmap.dim(0) : 1;
  auto spec = make_split_spec(fmap.dim(off), fmap.dim(off + 1), fmap.dim(off + 2), group, splits);
  if (head_count == 0 || spec.token_dim() % head_count != 0)
    throw DimensionError("sd3d_split: head count " + std::to_string(head_count) + " does not divide token dim " +
                         std::to_string(spec.token_dim()));
  Shape shape = batched ? Shape{batch, spec.token_count(), spec.token_dim()}
                        : Shape{spec.token_count(), spec.token_dim()};
  return {gather(fmap, sd3d_token_index(spec, batch), std::move(shape)), spec, head_count};
}

template <typename T>
Tensor<T> sd3d_align(const TokenGrid<T>& grid) {
  const auto& spec = grid.spec;
  spec.validate();
  const auto& ts = grid.tokens.shape();
  const bool batched = ts.size() == 3;
  const std::size_t batch = batched ? ts[0] : 1;
  const Shape expected = batched ? Shape{batch, spec.token_count(), spec.token_dim()}
                                 : Shape{spec.token_count(), spec.token_dim()};
  if (ts != expected)
    throw DimensionError("sd3d_align: tokens " + shape_str(ts) + " do not match split spec " + shape_str(expected));
  const auto forward = sd3d_token_index(spec, batch);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  Shape shape = batched ? Shape{batch, spec.channels, spec.height, spec.width}
                        : Shape{spec.channels, spec.height, spec.width};
  return gather(grid.tokens, inverse, std::move(shape));
}

std::vector<std::size_t> channel_shuffle_order(std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0)
    throw DimensionError("channel_shuffle: " + pair_str("C", channels, "groups", groups));
  const std::size_t per = channels / groups;
  std::vector<std::size_t> order(channels);
  // (groups, per) -> (per, groups)
  for (std::size_t q = 0; q < per; ++q)
    for (std::size_t g = 0; g < groups; ++g) order[q * groups + g] = g * per + q;
  return order;
}

template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& fmap, std::size_t groups) {
  const bool batched = fmap.rank() == 4;
  if (!batched && fmap.rank() != 3)
    throw DimensionError("channel_shuffle: expected [C,H,W] or [B,C,H,W], got " + shape_str(fmap.shape()));
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? fmap.dim(0) : 1;
  const std::size_t channels = fmap.dim(off);
  const auto order = channel_shuffle_order(channels, groups);
  const std::size_t plane = fmap.dim(off + 1) * fmap.dim(off + 2);
  std::vector<std::size_t> index;
  index.reserve(fmap.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) index.push_back((b * channels + order[c]) * plane + p);
  return gather(fmap, index, fmap.shape());
}

template TokenGrid<float> sd3d_split(const Tensor<float>&, std::size_t, std::size_t, std::size_t);
template TokenGrid<double> sd3d_split(const Tensor<double>&, std::size_t, std::size_t, std::size_t);
template Tensor<float> sd3d_align(const TokenGrid<float>&);
template Tensor<double> sd3d_align(const TokenGrid<double>&);
template Tensor<float> channel_shuffle(const Tensor<float>&, std::size_t);
template Tensor<double> channel_shuffle(const Tensor<double>&, std::size_t);

}  // namespace ect
