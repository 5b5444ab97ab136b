#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "clvqa/tensor.hpp"

namespace clvqa {

// Insertion-ordered named tensor collection for model and projection-bank
// weights. The order is the checkpoint serialization order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t, bool frozen = false);
  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  void set_frozen(const std::string& name, bool frozen);
  bool frozen(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::vector<std::string> trainable_names() const;
  std::size_t size() const { return names_.size(); }

  // FNV-1a over names, shapes and raw payload bytes; freeze-contract audits
  // compare these before/after training.
  std::uint64_t content_hash() const;
  std::uint64_t content_hash(const std::string& name) const;

 private:
  int index_of(const std::string& name) const;

  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::vector<Tensor> values_;
  std::vector<char> frozen_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam. Moments are kept per parameter name; frozen
// parameters are never touched.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // One optimizer step over every (non-frozen) parameter present in `grads`.
  void step(ParameterStore& params, const std::map<std::string, Tensor>& grads);

  long long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long long t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace clvqa
