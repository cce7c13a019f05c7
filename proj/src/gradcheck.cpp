#include "ect/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ect/error.hpp"
#include "ect/rng.hpp"

namespace ect {

GradCheckReport grad_check(const std::function<Tensor<double>()>& program, std::vector<Tensor<double>> params,
                           GradCheckOptions options) {
  if (options.stencil != 2 && options.stencil != 4)
    throw ConfigError("grad_check: stencil must be 2 or 4 points");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(program());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    auto g = p.grad_tensor();
    analytic.emplace_back(g.data().begin(), g.data().end());
  }

  GradCheckReport report;
  Rng rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      for (std::size_t i = 0; i < options.max_coords_per_param; ++i)
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (auto c : coords) {
      const double saved = values[c];
      auto at = [&](double offset) {
        values[c] = saved + offset;
        return program().item();
      };
      const double h = options.eps;
      double numeric;
      if (options.stencil == 4)
        numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      else
        numeric = (at(h) - at(-h)) / (2.0 * h);
      values[c] = saved;
      const double a = analytic[pi][c];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coordinates_checked;
      if (rel > report.max_rel_error || report.coordinates_checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          report.worst_param = pi;
          report.worst_index = c;
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return report;
}

}  // namespace ect
