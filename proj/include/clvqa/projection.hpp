#pragma once

#include <optional>
#include <vector>

#include "clvqa/graph.hpp"
#include "clvqa/rng.hpp"
#include "clvqa/tensor.hpp"

namespace clvqa {

// Per-task projection matrices over the merged embedding. Exactly one matrix
// (the current task's) is unfrozen at any time; earlier ones are bit-stable.
class ProjectionBank {
 public:
  ProjectionBank(int d_e, int d_proj) : d_e_(d_e), d_proj_(d_proj) {}

  // freezes all previous matrices and appends a fresh W_n drawn from
  // uniform(-1/sqrt(d_e), 1/sqrt(d_e))
  void add_task_projection(Rng& rng);

  int current_task() const { return static_cast<int>(weights_.size()); }
  int d_e() const { return d_e_; }
  int d_proj() const { return d_proj_; }
  const Tensor& weight(int task) const;  // task is 1-based
  Tensor& mutable_weight(int task);
  bool frozen(int task) const;

 private:
  int d_e_;
  int d_proj_;
  std::vector<Tensor> weights_;
  std::vector<char> frozen_;
};

// lambda_n = lambda0 / 2^(n-2) for task n >= 2
struct LambdaSchedule {
  double lambda0 = 0.05;
  double for_task(int n) const;
};

double lambda_for_task(int n, const LambdaSchedule& schedule);

// F_m = W_m e for every row of e (pure, no graph)
Tensor project(const ProjectionBank& bank, int task, const Tensor& e_rows);

// mean over valid positions and feature dimensions of squared differences
double pro_loss_pair_value(const Tensor& f_a, const Tensor& f_b,
                           const std::vector<double>& row_mask);

// sum over m < n of the pairwise drift losses; 0 when n == 1
double pro_loss_total_value(const ProjectionBank& bank, const Tensor& e_rows,
                            const std::vector<double>& row_mask);

// Graph form used in training: gradients reach W_n and, through both
// branches, the embedding; frozen matrices enter as constants.
NodeId pro_loss_total_node(Graph& g, NodeId e_stack, NodeId w_current_leaf,
                           const std::vector<Tensor>& frozen_prior,
                           const std::vector<double>& row_mask);

// Eq. 13 dispatch: a batch is either a current-task batch (L_GT + lambda *
// L_pro) or a replay batch (replay_weight * L_replay).
enum class BatchKind { current, replay };

struct LossParts {
  std::optional<double> l_gt;
  std::optional<double> l_pro;
  std::optional<double> l_replay;
};

double total_loss(BatchKind kind, const LossParts& parts, double lambda_n,
                  double replay_weight);

}  // namespace clvqa
