#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "clvqa/rng.hpp"

namespace clvqa {

// Dense row-major 64-bit tensor. No implicit broadcasting; every op that
// needs expansion does it explicitly.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> shape_in, double fill = 0.0, bool grad = false);
  Tensor(std::vector<int> shape_in, std::vector<double> values, bool grad = false);

  static Tensor scalar(double v, bool grad = false);
  static Tensor uniform(std::vector<int> shape_in, Rng& rng, double lo, double hi,
                        bool grad = false);

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  // rank-2 accessors
  int rows() const;
  int cols() const;
  double& at(int i, int j);
  double at(int i, int j) const;

  // size of the trailing dimension; product of the leading ones
  int last_dim() const;
  int leading() const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;

  bool all_finite() const;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace clvqa
