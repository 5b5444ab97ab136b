#include "clvqa/projection.hpp"

#include <cmath>

#include "clvqa/errors.hpp"

namespace clvqa {

void ProjectionBank::add_task_projection(Rng& rng) {
  for (char& f : frozen_) f = 1;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_e_));
  weights_.push_back(Tensor::uniform({d_e_, d_proj_}, rng, -bound, bound, true));
  frozen_.push_back(0);
}

const Tensor& ProjectionBank::weight(int task) const {
  if (task < 1 || task > current_task()) {
    throw contract_error("projection bank: task index " + std::to_string(task) +
                         " out of range");
  }
  return weights_[static_cast<std::size_t>(task - 1)];
}

Tensor& ProjectionBank::mutable_weight(int task) {
  if (task < 1 || task > current_task()) {
    throw contract_error("projection bank: task index " + std::to_string(task) +
                         " out of range");
  }
  return weights_[static_cast<std::size_t>(task - 1)];
}

bool ProjectionBank::frozen(int task) const {
  if (task < 1 || task > current_task()) {
    throw contract_error("projection bank: task index " + std::to_string(task) +
                         " out of range");
  }
  return frozen_[static_cast<std::size_t>(task - 1)] != 0;
}

double LambdaSchedule::for_task(int n) const {
  if (n < 2) {
    throw contract_error("lambda schedule: no regularizer before task 2");
  }
  return lambda0 * std::pow(2.0, -static_cast<double>(n - 2));
}

double lambda_for_task(int n, const LambdaSchedule& schedule) { return schedule.for_task(n); }

Tensor project(const ProjectionBank& bank, int task, const Tensor& e_rows) {
  const Tensor& w = bank.weight(task);
  if (e_rows.cols() != w.rows()) {
    throw contract_error("project: embedding dimension " + e_rows.shape_str() +
                         " does not match projection " + w.shape_str());
  }
  Graph g;
  Tensor e = e_rows;
  e.requires_grad = false;
  Tensor wc = w;
  wc.requires_grad = false;
  return g.value(g.matmul(g.constant(std::move(e)), g.constant(std::move(wc))));
}

double pro_loss_pair_value(const Tensor& f_a, const Tensor& f_b,
                           const std::vector<double>& row_mask) {
  Graph g;
  Tensor a = f_a;
  a.requires_grad = false;
  Tensor b = f_b;
  b.requires_grad = false;
  return g.value(g.masked_mse(g.constant(std::move(a)), g.constant(std::move(b)), row_mask))
      .data[0];
}

double pro_loss_total_value(const ProjectionBank& bank, const Tensor& e_rows,
                            const std::vector<double>& row_mask) {
  const int n = bank.current_task();
  if (n < 1) throw contract_error("pro_loss_total: projection bank is empty");
  if (n == 1) return 0.0;  // no prior tasks
  const Tensor f_n = project(bank, n, e_rows);
  double total = 0.0;
  for (int m = 1; m < n; ++m) {
    total += pro_loss_pair_value(f_n, project(bank, m, e_rows), row_mask);
  }
  return total;
}

NodeId pro_loss_total_node(Graph& g, NodeId e_stack, NodeId w_current_leaf,
                           const std::vector<Tensor>& frozen_prior,
                           const std::vector<double>& row_mask) {
  if (frozen_prior.empty()) {
    throw contract_error("pro_loss_total_node: needs at least one frozen projection");
  }
  const NodeId f_n = g.matmul(e_stack, w_current_leaf);
  NodeId total = -1;
  for (const Tensor& w_m : frozen_prior) {
    Tensor w = w_m;
    w.requires_grad = false;  // frozen matrices are constants
    const NodeId f_m = g.matmul(e_stack, g.constant(std::move(w)));
    const NodeId pair = g.masked_mse(f_n, f_m, row_mask);
    total = (total < 0) ? pair : g.add(total, pair);
  }
  return total;
}

double total_loss(BatchKind kind, const LossParts& parts, double lambda_n,
                  double replay_weight) {
  if (kind == BatchKind::current) {
    if (!parts.l_gt.has_value()) throw contract_error("total_loss: current batch is missing L_GT");
    if (!parts.l_pro.has_value()) throw contract_error("total_loss: current batch is missing L_pro");
    return *parts.l_gt + lambda_n * *parts.l_pro;
  }
  if (!parts.l_replay.has_value()) throw contract_error("total_loss: replay batch is missing L_replay");
  return replay_weight * *parts.l_replay;
}

}  // namespace clvqa
