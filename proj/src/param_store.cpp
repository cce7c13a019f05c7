#include "ect/param_store.hpp"

namespace ect {

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape, Init init, Rng& rng) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  Tensor<T> t(std::move(shape), T(0));
  auto values = t.mutable_data();
  switch (init.kind) {
    case InitKind::TruncatedNormal:
      for (auto& v : values) v = static_cast<T>(rng.truncated_normal(init.value));
      break;
    case InitKind::Zeros:
      break;
    case InitKind::Ones:
      for (auto& v : values) v = T(1);
      break;
    case InitKind::Constant:
      for (auto& v : values) v = static_cast<T>(init.value);
      break;
  }
  t.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return entries_[it->second].second;
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace ect
