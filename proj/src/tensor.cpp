#include "clvqa/tensor.hpp"

#include <cmath>
#include <sstream>

#include "clvqa/errors.hpp"

namespace clvqa {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw contract_error("tensor shape dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape_in, double fill, bool grad)
    : shape(std::move(shape_in)),
      data(shape_numel(shape), fill),
      requires_grad(grad) {}

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> values, bool grad)
    : shape(std::move(shape_in)), data(std::move(values)), requires_grad(grad) {
  if (shape_numel(shape) != data.size()) {
    throw contract_error("tensor data length does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(double v, bool grad) {
  Tensor t({1}, v, grad);
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape_in, Rng& rng, double lo, double hi,
                       bool grad) {
  Tensor t(std::move(shape_in), 0.0, grad);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw contract_error("rows(): tensor is not rank 2, shape " + shape_str());
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw contract_error("cols(): tensor is not rank 2, shape " + shape_str());
  return shape[1];
}

double& Tensor::at(int i, int j) {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

double Tensor::at(int i, int j) const {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

int Tensor::last_dim() const {
  if (shape.empty()) throw contract_error("last_dim(): tensor has empty shape");
  return shape.back();
}

int Tensor::leading() const {
  return static_cast<int>(numel() / static_cast<std::size_t>(last_dim()));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace clvqa
