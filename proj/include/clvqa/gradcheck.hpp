#pragma once

#include <functional>
#include <string>
#include <vector>

#include "clvqa/graph.hpp"

namespace clvqa {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool ok = true;
  // input index / flat element of the worst deviation
  int worst_input = -1;
  std::size_t worst_elem = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Builds a scalar-rooted graph over leaves made from `inputs` and returns the
// root. The harness runs backward once for analytic gradients, then re-runs
// the forward at perturbed points for central finite differences.
using GraphBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor> inputs,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace clvqa
