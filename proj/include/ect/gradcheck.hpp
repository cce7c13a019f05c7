#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ect/tensor.hpp"

namespace ect {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  /// 2: (f(x+h) - f(x-h)) / 2h. 4: the fourth-order central stencil, which
  /// tolerates a larger h and so less cancellation in deep programs.
  int stencil = 2;
  /// 0 checks every coordinate; otherwise a seeded sample of at most this
  /// many coordinates per parameter tensor.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of a scalar program against central
/// differences. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::function<Tensor<double>()>& program, std::vector<Tensor<double>> params,
                           GradCheckOptions options = {});

}  // namespace ect
