#pragma once

#include <vector>

#include "clvqa/tensor.hpp"

namespace clvqa {

using NodeId = int;

enum class OpKind {
  leaf,
  matmul,
  add,
  add_rowvec,
  concat_cols,
  concat_rows,
  repeat_row,
  tanh_op,
  gather_rows,
  masked_mean_rows,
  softmax_temp,
  masked_cross_entropy,
  replay_blend,
  masked_mse,
  scale,
};

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by construction; backward() walks it once in reverse.
// Single-threaded; tensors are immutable after forward.
class Graph {
 public:
  NodeId leaf(Tensor t);
  // leaf with requires_grad forced off
  NodeId constant(Tensor t);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  // adds a length-c row vector to every row of an [r x c] matrix
  NodeId add_rowvec(NodeId m, NodeId v);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId repeat_row(NodeId v, int n);
  NodeId tanh(NodeId x);
  NodeId gather_rows(NodeId table, const std::vector<int>& ids);
  NodeId masked_mean_rows(NodeId x, const std::vector<double>& mask);
  // softmax over the trailing dimension with temperature T
  NodeId softmax_temp(NodeId logits, double temperature);
  // mean over masked positions of -log softmax(logits)[target]
  NodeId masked_cross_entropy(NodeId logits, const std::vector<int>& targets,
                              const std::vector<double>& mask);
  // per-token blend m*((1-alpha)*CE + alpha*KD)/sum(m); teacher side is constant
  NodeId replay_blend(NodeId student_logits, const Tensor& teacher_probs_temp,
                      const std::vector<int>& targets,
                      const std::vector<double>& mask,
                      const std::vector<double>& alphas, double temperature);
  // mean over valid rows and columns of squared difference
  NodeId masked_mse(NodeId a, NodeId b, const std::vector<double>& row_mask);
  NodeId scale(NodeId x, double factor);

  void backward(NodeId root);

  const Tensor& value(NodeId id) const;
  bool has_grad(NodeId id) const;
  const Tensor& grad(NodeId id) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  OpKind kind(NodeId id) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<NodeId> inputs;
    Tensor out;
    Tensor grad_val;
    bool grad_alloc = false;
    std::vector<int> ids;
    std::vector<double> mask;
    std::vector<Tensor> aux;
    double s0 = 0.0;
  };

  NodeId push(Node n);
  Node& at(NodeId id);
  const Node& at(NodeId id) const;
  void accumulate(NodeId id, std::size_t flat_index, double v);
  Tensor& grad_buffer(NodeId id);
  void backward_node(NodeId id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace clvqa
