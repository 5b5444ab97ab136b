#include "clvqa/gradcheck.hpp"

#include <cmath>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

double forward_value(const GraphBuilder& build, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<NodeId> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
  const NodeId root = build(g, leaves);
  const Tensor& out = g.value(root);
  if (out.numel() != 1) throw contract_error("grad_check: builder root must be scalar");
  return out.data[0];
}

}  // namespace

GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor> inputs,
                           double eps, double tol) {
  // analytic pass
  Graph g;
  std::vector<NodeId> leaves;
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
  const NodeId root = build(g, leaves);
  g.backward(root);

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad) continue;
    const Tensor& ga = g.grad(leaves[i]);
    for (std::size_t e = 0; e < inputs[i].numel(); ++e) {
      const double orig = inputs[i].data[e];
      inputs[i].data[e] = orig + eps;
      const double up = forward_value(build, inputs);
      inputs[i].data[e] = orig - eps;
      const double down = forward_value(build, inputs);
      inputs[i].data[e] = orig;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = ga.data[e];
      const double diff = std::abs(analytic - numeric);
      double rel = 0.0;
      if (diff > 1e-9) {
        rel = diff / std::max(std::abs(analytic), std::abs(numeric));
      }
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = static_cast<int>(i);
        report.worst_elem = e;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  report.ok = report.max_rel_err < tol;
  return report;
}

}  // namespace clvqa
