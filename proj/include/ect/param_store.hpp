#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ect/rng.hpp"
#include "ect/tensor.hpp"

namespace ect {

enum class InitKind { TruncatedNormal, Zeros, Ones, Constant };

struct Init {
  InitKind kind = InitKind::TruncatedNormal;
  double value = 0.02;  // std for TruncatedNormal, fill for Constant

  static Init normal(double std = 0.02) { return {InitKind::TruncatedNormal, std}; }
  static Init zeros() { return {InitKind::Zeros, 0.0}; }
  static Init ones() { return {InitKind::Ones, 1.0}; }
  static Init constant(double v) { return {InitKind::Constant, v}; }
};

/// Ordered registry of named trainable tensors. Registration order is the
/// initialization order and the checkpoint order.
template <typename T>
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  Tensor<T> create(const std::string& name, Shape shape, Init init, Rng& rng);
  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws ConfigError for unknown names.
  Tensor<T> get(const std::string& name) const;
  std::vector<Tensor<T>> tensors() const;
  std::size_t scalar_count() const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace ect
