#include "clvqa/optim.hpp"

#include <cmath>
#include <cstring>

#include "clvqa/errors.hpp"
#include "clvqa/rng.hpp"

namespace clvqa {

Tensor& ParameterStore::add(const std::string& name, Tensor t, bool frozen) {
  if (index_.count(name)) throw contract_error("ParameterStore: duplicate name " + name);
  index_[name] = static_cast<int>(names_.size());
  names_.push_back(name);
  values_.push_back(std::move(t));
  frozen_.push_back(frozen ? 1 : 0);
  return values_.back();
}

int ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw contract_error("ParameterStore: unknown name " + name);
  return it->second;
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParameterStore::get(const std::string& name) {
  return values_[static_cast<std::size_t>(index_of(name))];
}

const Tensor& ParameterStore::get(const std::string& name) const {
  return values_[static_cast<std::size_t>(index_of(name))];
}

void ParameterStore::set_frozen(const std::string& name, bool frozen) {
  frozen_[static_cast<std::size_t>(index_of(name))] = frozen ? 1 : 0;
}

bool ParameterStore::frozen(const std::string& name) const {
  return frozen_[static_cast<std::size_t>(index_of(name))] != 0;
}

std::vector<std::string> ParameterStore::trainable_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!frozen_[i]) out.push_back(names_[i]);
  }
  return out;
}

std::uint64_t ParameterStore::content_hash(const std::string& name) const {
  const Tensor& t = values_[static_cast<std::size_t>(index_of(name))];
  std::uint64_t h = fnv1a64(name);
  for (int d : t.shape) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&d), sizeof(d)), h);
  }
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t.data.data()),
                               t.data.size() * sizeof(double)),
              h);
  return h;
}

std::uint64_t ParameterStore::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& name : names_) {
    const std::uint64_t part = content_hash(name);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&part), sizeof(part)), h);
  }
  return h;
}

void AdamW::step(ParameterStore& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    if (params.frozen(name)) continue;
    Tensor& theta = params.get(name);
    if (!theta.same_shape(grad)) {
      throw contract_error("AdamW: gradient shape " + grad.shape_str() +
                           " does not match parameter " + name + " " + theta.shape_str());
    }
    Tensor& m = m_.try_emplace(name, Tensor(theta.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(theta.shape)).first->second;
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = grad.data[i];
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      theta.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                  cfg_.weight_decay * theta.data[i]);
    }
  }
}

}  // namespace clvqa
