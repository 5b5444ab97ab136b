#include "clvqa/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

void check_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw contract_error(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
  }
}

// in-place softmax over one slice, with max subtraction
void softmax_slice(const double* z, double* p, int k, double temperature) {
  double m = z[0];
  for (int i = 1; i < k; ++i) m = std::max(m, z[i]);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp((z[i] - m) / temperature);
    sum += p[i];
  }
  for (int i = 0; i < k; ++i) p[i] /= sum;
}

double logsumexp_slice(const double* z, int k) {
  double m = z[0];
  for (int i = 1; i < k; ++i) m = std::max(m, z[i]);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += std::exp(z[i] - m);
  return m + std::log(sum);
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::Node& Graph::at(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }
const Graph::Node& Graph::at(NodeId id) const {
  return nodes_.at(static_cast<std::size_t>(id));
}

const Tensor& Graph::value(NodeId id) const { return at(id).out; }
OpKind Graph::kind(NodeId id) const { return at(id).kind; }

bool Graph::has_grad(NodeId id) const { return at(id).grad_alloc; }

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = at(id);
  if (!n.grad_alloc) throw contract_error("grad(): node has no gradient");
  return n.grad_val;
}

NodeId Graph::leaf(Tensor t) {
  Node n;
  n.kind = OpKind::leaf;
  n.out = std::move(t);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor t) {
  t.requires_grad = false;
  return leaf(std::move(t));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_rank2(ta, "matmul");
  check_rank2(tb, "matmul");
  if (ta.cols() != tb.rows()) {
    throw contract_error("matmul: inner dimensions disagree: " + ta.shape_str() +
                         " vs " + tb.shape_str());
  }
  const int m = ta.rows(), k = ta.cols(), nn = tb.cols();
  Node n;
  n.kind = OpKind::matmul;
  n.inputs = {a, b};
  n.out = Tensor({m, nn}, 0.0, ta.requires_grad || tb.requires_grad);
  // ikj order: row of b streams through cache
  for (int i = 0; i < m; ++i) {
    double* orow = &n.out.data[static_cast<std::size_t>(i) * nn];
    const double* arow = &ta.data[static_cast<std::size_t>(i) * k];
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = &tb.data[static_cast<std::size_t>(kk) * nn];
      for (int j = 0; j < nn; ++j) orow[j] += av * brow[j];
    }
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw contract_error("add: shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Node n;
  n.kind = OpKind::add;
  n.inputs = {a, b};
  n.out = Tensor(ta.shape, 0.0, ta.requires_grad || tb.requires_grad);
  for (std::size_t i = 0; i < ta.numel(); ++i) n.out.data[i] = ta.data[i] + tb.data[i];
  return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId m, NodeId v) {
  const Tensor& tm = value(m);
  const Tensor& tv = value(v);
  check_rank2(tm, "add_rowvec");
  const int c = tm.cols();
  if (static_cast<int>(tv.numel()) != c) {
    throw contract_error("add_rowvec: vector length " + tv.shape_str() +
                         " does not match matrix " + tm.shape_str());
  }
  Node n;
  n.kind = OpKind::add_rowvec;
  n.inputs = {m, v};
  n.out = Tensor(tm.shape, 0.0, tm.requires_grad || tv.requires_grad);
  for (int i = 0; i < tm.rows(); ++i) {
    for (int j = 0; j < c; ++j) {
      n.out.data[static_cast<std::size_t>(i) * c + j] =
          tm.data[static_cast<std::size_t>(i) * c + j] + tv.data[static_cast<std::size_t>(j)];
    }
  }
  return push(std::move(n));
}

NodeId Graph::concat_cols(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_rank2(ta, "concat_cols");
  check_rank2(tb, "concat_cols");
  if (ta.rows() != tb.rows()) {
    throw contract_error("concat_cols: row counts differ: " + ta.shape_str() + " vs " +
                         tb.shape_str());
  }
  const int r = ta.rows(), c1 = ta.cols(), c2 = tb.cols();
  Node n;
  n.kind = OpKind::concat_cols;
  n.inputs = {a, b};
  n.out = Tensor({r, c1 + c2}, 0.0, ta.requires_grad || tb.requires_grad);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c1; ++j) n.out.at(i, j) = ta.at(i, j);
    for (int j = 0; j < c2; ++j) n.out.at(i, c1 + j) = tb.at(i, j);
  }
  return push(std::move(n));
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw contract_error("concat_rows: no inputs");
  int total_rows = 0;
  const int c = value(parts[0]).cols();
  bool grad = false;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    check_rank2(t, "concat_rows");
    if (t.cols() != c) {
      throw contract_error("concat_rows: column counts differ: " +
                           value(parts[0]).shape_str() + " vs " + t.shape_str());
    }
    total_rows += t.rows();
    grad = grad || t.requires_grad;
  }
  Node n;
  n.kind = OpKind::concat_rows;
  n.inputs = parts;
  n.out = Tensor({total_rows, c}, 0.0, grad);
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data.begin(), t.data.end(), n.out.data.begin() + static_cast<long>(off));
    off += t.numel();
  }
  return push(std::move(n));
}

NodeId Graph::repeat_row(NodeId v, int count) {
  const Tensor& tv = value(v);
  if (count < 1) throw contract_error("repeat_row: count must be positive");
  const int c = static_cast<int>(tv.numel());
  Node n;
  n.kind = OpKind::repeat_row;
  n.inputs = {v};
  n.out = Tensor({count, c}, 0.0, tv.requires_grad);
  for (int i = 0; i < count; ++i) {
    std::copy(tv.data.begin(), tv.data.end(),
              n.out.data.begin() + static_cast<long>(i) * c);
  }
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
  const Tensor& tx = value(x);
  Node n;
  n.kind = OpKind::tanh_op;
  n.inputs = {x};
  n.out = Tensor(tx.shape, 0.0, tx.requires_grad);
  for (std::size_t i = 0; i < tx.numel(); ++i) n.out.data[i] = std::tanh(tx.data[i]);
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId table, const std::vector<int>& ids) {
  const Tensor& tt = value(table);
  check_rank2(tt, "gather_rows");
  const int v = tt.rows(), d = tt.cols();
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw contract_error("gather_rows: id " + std::to_string(id) + " out of range [0," +
                           std::to_string(v) + ")");
    }
  }
  if (ids.empty()) throw contract_error("gather_rows: empty id list");
  Node n;
  n.kind = OpKind::gather_rows;
  n.inputs = {table};
  n.ids = ids;
  n.out = Tensor({static_cast<int>(ids.size()), d}, 0.0, tt.requires_grad);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = &tt.data[static_cast<std::size_t>(ids[i]) * d];
    std::copy(src, src + d, n.out.data.begin() + static_cast<long>(i) * d);
  }
  return push(std::move(n));
}

NodeId Graph::masked_mean_rows(NodeId x, const std::vector<double>& mask) {
  const Tensor& tx = value(x);
  check_rank2(tx, "masked_mean_rows");
  if (static_cast<int>(mask.size()) != tx.rows()) {
    throw contract_error("masked_mean_rows: mask length does not match rows");
  }
  double nvalid = 0.0;
  for (double mv : mask) nvalid += mv;
  if (nvalid < 1.0) throw contract_error("masked_mean_rows: degenerate all-masked input");
  const int d = tx.cols();
  Node n;
  n.kind = OpKind::masked_mean_rows;
  n.inputs = {x};
  n.mask = mask;
  n.s0 = nvalid;
  n.out = Tensor({1, d}, 0.0, tx.requires_grad);
  for (int l = 0; l < tx.rows(); ++l) {
    if (mask[static_cast<std::size_t>(l)] == 0.0) continue;
    for (int j = 0; j < d; ++j) n.out.data[static_cast<std::size_t>(j)] += tx.at(l, j);
  }
  for (int j = 0; j < d; ++j) n.out.data[static_cast<std::size_t>(j)] /= nvalid;
  return push(std::move(n));
}

NodeId Graph::softmax_temp(NodeId logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw contract_error("softmax_temp: temperature must be positive");
  }
  const Tensor& tz = value(logits);
  const int k = tz.last_dim();
  const int rows = tz.leading();
  Node n;
  n.kind = OpKind::softmax_temp;
  n.inputs = {logits};
  n.s0 = temperature;
  n.out = Tensor(tz.shape, 0.0, tz.requires_grad);
  for (int r = 0; r < rows; ++r) {
    softmax_slice(&tz.data[static_cast<std::size_t>(r) * k],
                  &n.out.data[static_cast<std::size_t>(r) * k], k, temperature);
  }
  return push(std::move(n));
}

NodeId Graph::masked_cross_entropy(NodeId logits, const std::vector<int>& targets,
                                   const std::vector<double>& mask) {
  const Tensor& tz = value(logits);
  const int k = tz.last_dim();
  const int rows = tz.leading();
  if (static_cast<int>(targets.size()) != rows || static_cast<int>(mask.size()) != rows) {
    throw contract_error("masked_cross_entropy: targets/mask length does not match logits");
  }
  double total_mask = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)] == 0.0) continue;
    total_mask += 1.0;
    if (targets[static_cast<std::size_t>(r)] < 0 || targets[static_cast<std::size_t>(r)] >= k) {
      throw contract_error("masked_cross_entropy: target " +
                           std::to_string(targets[static_cast<std::size_t>(r)]) +
                           " out of range at masked position " + std::to_string(r));
    }
  }
  if (total_mask < 1.0) throw contract_error("masked_cross_entropy: degenerate batch, mask is all zero");

  Node n;
  n.kind = OpKind::masked_cross_entropy;
  n.inputs = {logits};
  n.ids = targets;
  n.mask = mask;
  n.s0 = total_mask;
  n.aux.emplace_back(Tensor(tz.shape, 0.0, false));  // probs at masked rows
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)] == 0.0) continue;
    const double* z = &tz.data[static_cast<std::size_t>(r) * k];
    double* p = &n.aux[0].data[static_cast<std::size_t>(r) * k];
    softmax_slice(z, p, k, 1.0);
    loss += logsumexp_slice(z, k) - z[targets[static_cast<std::size_t>(r)]];
  }
  n.out = Tensor::scalar(loss / total_mask, tz.requires_grad);
  return push(std::move(n));
}

NodeId Graph::replay_blend(NodeId student_logits, const Tensor& teacher_probs_temp,
                           const std::vector<int>& targets,
                           const std::vector<double>& mask,
                           const std::vector<double>& alphas, double temperature) {
  const Tensor& tz = value(student_logits);
  if (!(temperature > 0.0)) throw contract_error("replay_blend: temperature must be positive");
  if (!tz.same_shape(teacher_probs_temp)) {
    throw contract_error("replay_blend: teacher/student shape mismatch: " +
                         teacher_probs_temp.shape_str() + " vs " + tz.shape_str());
  }
  const int k = tz.last_dim();
  const int rows = tz.leading();
  if (static_cast<int>(targets.size()) != rows || static_cast<int>(mask.size()) != rows ||
      static_cast<int>(alphas.size()) != rows) {
    throw contract_error("replay_blend: targets/mask/alpha length does not match logits");
  }
  double total_mask = 0.0;
  for (double mv : mask) total_mask += (mv != 0.0) ? 1.0 : 0.0;
  if (total_mask < 1.0) throw contract_error("replay_blend: degenerate batch, mask is all zero");

  Node n;
  n.kind = OpKind::replay_blend;
  n.inputs = {student_logits};
  n.ids = targets;
  n.mask = mask;
  n.s0 = temperature;
  n.aux.emplace_back(teacher_probs_temp);             // aux[0]: teacher probs (temp T)
  n.aux.emplace_back(Tensor({rows}, alphas, false));  // aux[1]: per-token alpha
  n.aux.emplace_back(Tensor(tz.shape, 0.0, false));   // aux[2]: student probs, T=1
  n.aux.emplace_back(Tensor(tz.shape, 0.0, false));   // aux[3]: student probs, temp T

  const double t2 = temperature * temperature;
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)] == 0.0) continue;
    const double alpha = alphas[static_cast<std::size_t>(r)];
    const int y = targets[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k) {
      throw contract_error("replay_blend: target " + std::to_string(y) +
                           " out of range at masked position " + std::to_string(r));
    }
    const double* z = &tz.data[static_cast<std::size_t>(r) * k];
    const double* pt = &teacher_probs_temp.data[static_cast<std::size_t>(r) * k];
    double* p1 = &n.aux[2].data[static_cast<std::size_t>(r) * k];
    double* ps = &n.aux[3].data[static_cast<std::size_t>(r) * k];
    softmax_slice(z, p1, k, 1.0);
    softmax_slice(z, ps, k, temperature);
    const double ce = logsumexp_slice(z, k) - z[y];
    double kd = 0.0;
    for (int j = 0; j < k; ++j) {
      if (pt[j] > 0.0) kd += pt[j] * (std::log(pt[j]) - std::log(ps[j]));
    }
    kd *= t2;
    loss += (1.0 - alpha) * ce + alpha * kd;
  }
  n.out = Tensor::scalar(loss / total_mask, tz.requires_grad);
  n.s0 = temperature;
  // stash the mask total for backward
  n.aux.emplace_back(Tensor::scalar(total_mask));
  return push(std::move(n));
}

NodeId Graph::masked_mse(NodeId a, NodeId b, const std::vector<double>& row_mask) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_rank2(ta, "masked_mse");
  if (!ta.same_shape(tb)) {
    throw contract_error("masked_mse: shape mismatch: " + ta.shape_str() + " vs " +
                         tb.shape_str());
  }
  if (static_cast<int>(row_mask.size()) != ta.rows()) {
    throw contract_error("masked_mse: mask length does not match rows");
  }
  double nvalid = 0.0;
  for (double mv : row_mask) nvalid += (mv != 0.0) ? 1.0 : 0.0;
  if (nvalid < 1.0) throw contract_error("masked_mse: degenerate all-masked input");
  const int d = ta.cols();
  Node n;
  n.kind = OpKind::masked_mse;
  n.inputs = {a, b};
  n.mask = row_mask;
  n.s0 = nvalid * d;
  double loss = 0.0;
  for (int i = 0; i < ta.rows(); ++i) {
    if (row_mask[static_cast<std::size_t>(i)] == 0.0) continue;
    for (int j = 0; j < d; ++j) {
      const double diff = ta.at(i, j) - tb.at(i, j);
      loss += diff * diff;
    }
  }
  n.out = Tensor::scalar(loss / n.s0, ta.requires_grad || tb.requires_grad);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
  const Tensor& tx = value(x);
  Node n;
  n.kind = OpKind::scale;
  n.inputs = {x};
  n.s0 = factor;
  n.out = Tensor(tx.shape, 0.0, tx.requires_grad);
  for (std::size_t i = 0; i < tx.numel(); ++i) n.out.data[i] = tx.data[i] * factor;
  return push(std::move(n));
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = at(id);
  if (!n.grad_alloc) {
    n.grad_val = Tensor(n.out.shape, 0.0, false);
    n.grad_alloc = true;
  }
  return n.grad_val;
}

void Graph::backward(NodeId root) {
  if (backward_done_) throw contract_error("backward: already run on this graph");
  const Node& r = at(root);
  if (r.out.numel() != 1) {
    throw contract_error("backward: root must be scalar, got " + r.out.shape_str());
  }
  backward_done_ = true;

  // mark nodes reachable from the root
  std::vector<char> reach(nodes_.size(), 0);
  std::vector<NodeId> stack{root};
  reach[static_cast<std::size_t>(root)] = 1;
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    for (NodeId in : at(id).inputs) {
      if (!reach[static_cast<std::size_t>(in)]) {
        reach[static_cast<std::size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }

  if (!r.out.requires_grad) return;  // nothing upstream wants a gradient
  grad_buffer(root).data[0] = 1.0;

  for (NodeId id = root; id >= 0; --id) {
    const Node& n = at(id);
    if (!reach[static_cast<std::size_t>(id)] || n.kind == OpKind::leaf) continue;
    if (!n.out.requires_grad || !n.grad_alloc) continue;
    backward_node(id);
  }
}

void Graph::backward_node(NodeId id) {
  Node& n = at(id);
  const Tensor& g = n.grad_val;
  auto wants = [this](NodeId in) { return value(in).requires_grad; };

  switch (n.kind) {
    case OpKind::matmul: {
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      const int m = ta.rows(), k = ta.cols(), nn = tb.cols();
      if (wants(n.inputs[0])) {
        Tensor& ga = grad_buffer(n.inputs[0]);
        for (int i = 0; i < m; ++i) {
          const double* grow = &g.data[static_cast<std::size_t>(i) * nn];
          double* garow = &ga.data[static_cast<std::size_t>(i) * k];
          for (int kk = 0; kk < k; ++kk) {
            const double* brow = &tb.data[static_cast<std::size_t>(kk) * nn];
            double acc = 0.0;
            for (int j = 0; j < nn; ++j) acc += grow[j] * brow[j];
            garow[kk] += acc;
          }
        }
      }
      if (wants(n.inputs[1])) {
        Tensor& gb = grad_buffer(n.inputs[1]);
        for (int i = 0; i < m; ++i) {
          const double* grow = &g.data[static_cast<std::size_t>(i) * nn];
          const double* arow = &ta.data[static_cast<std::size_t>(i) * k];
          for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* gbrow = &gb.data[static_cast<std::size_t>(kk) * nn];
            for (int j = 0; j < nn; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
      break;
    }
    case OpKind::add: {
      for (int which = 0; which < 2; ++which) {
        if (!wants(n.inputs[static_cast<std::size_t>(which)])) continue;
        Tensor& gi = grad_buffer(n.inputs[static_cast<std::size_t>(which)]);
        for (std::size_t i = 0; i < g.numel(); ++i) gi.data[i] += g.data[i];
      }
      break;
    }
    case OpKind::add_rowvec: {
      const Tensor& tm = value(n.inputs[0]);
      const int r = tm.rows(), c = tm.cols();
      if (wants(n.inputs[0])) {
        Tensor& gm = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) gm.data[i] += g.data[i];
      }
      if (wants(n.inputs[1])) {
        Tensor& gv = grad_buffer(n.inputs[1]);
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            gv.data[static_cast<std::size_t>(j)] += g.data[static_cast<std::size_t>(i) * c + j];
          }
        }
      }
      break;
    }
    case OpKind::concat_cols: {
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      const int r = ta.rows(), c1 = ta.cols(), c2 = tb.cols();
      if (wants(n.inputs[0])) {
        Tensor& ga = grad_buffer(n.inputs[0]);
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c1; ++j) {
            ga.at(i, j) += g.data[static_cast<std::size_t>(i) * (c1 + c2) + j];
          }
        }
      }
      if (wants(n.inputs[1])) {
        Tensor& gb = grad_buffer(n.inputs[1]);
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c2; ++j) {
            gb.at(i, j) += g.data[static_cast<std::size_t>(i) * (c1 + c2) + c1 + j];
          }
        }
      }
      break;
    }
    case OpKind::concat_rows: {
      std::size_t off = 0;
      for (NodeId in : n.inputs) {
        const Tensor& t = value(in);
        if (wants(in)) {
          Tensor& gi = grad_buffer(in);
          for (std::size_t i = 0; i < t.numel(); ++i) gi.data[i] += g.data[off + i];
        }
        off += t.numel();
      }
      break;
    }
    case OpKind::repeat_row: {
      if (wants(n.inputs[0])) {
        Tensor& gv = grad_buffer(n.inputs[0]);
        const int c = static_cast<int>(gv.numel());
        const int count = n.out.rows();
        for (int i = 0; i < count; ++i) {
          for (int j = 0; j < c; ++j) {
            gv.data[static_cast<std::size_t>(j)] += g.data[static_cast<std::size_t>(i) * c + j];
          }
        }
      }
      break;
    }
    case OpKind::tanh_op: {
      if (wants(n.inputs[0])) {
        Tensor& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double y = n.out.data[i];
          gx.data[i] += g.data[i] * (1.0 - y * y);
        }
      }
      break;
    }
    case OpKind::gather_rows: {
      if (wants(n.inputs[0])) {
        Tensor& gt = grad_buffer(n.inputs[0]);
        const int d = n.out.cols();
        for (std::size_t i = 0; i < n.ids.size(); ++i) {
          double* dst = &gt.data[static_cast<std::size_t>(n.ids[i]) * d];
          const double* src = &g.data[i * static_cast<std::size_t>(d)];
          for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
      break;
    }
    case OpKind::masked_mean_rows: {
      if (wants(n.inputs[0])) {
        Tensor& gx = grad_buffer(n.inputs[0]);
        const int d = gx.cols();
        for (int l = 0; l < gx.rows(); ++l) {
          if (n.mask[static_cast<std::size_t>(l)] == 0.0) continue;
          for (int j = 0; j < d; ++j) {
            gx.at(l, j) += g.data[static_cast<std::size_t>(j)] / n.s0;
          }
        }
      }
      break;
    }
    case OpKind::softmax_temp: {
      if (wants(n.inputs[0])) {
        Tensor& gx = grad_buffer(n.inputs[0]);
        const int k = n.out.last_dim();
        const int rows = n.out.leading();
        for (int r = 0; r < rows; ++r) {
          const double* p = &n.out.data[static_cast<std::size_t>(r) * k];
          const double* gr = &g.data[static_cast<std::size_t>(r) * k];
          double dot = 0.0;
          for (int j = 0; j < k; ++j) dot += gr[j] * p[j];
          double* gx_r = &gx.data[static_cast<std::size_t>(r) * k];
          for (int j = 0; j < k; ++j) gx_r[j] += p[j] * (gr[j] - dot) / n.s0;
        }
      }
      break;
    }
    case OpKind::masked_cross_entropy: {
      if (wants(n.inputs[0])) {
        Tensor& gz = grad_buffer(n.inputs[0]);
        const Tensor& probs = n.aux[0];
        const int k = probs.last_dim();
        const int rows = probs.leading();
        const double gscale = g.data[0] / n.s0;
        for (int r = 0; r < rows; ++r) {
          if (n.mask[static_cast<std::size_t>(r)] == 0.0) continue;
          const double* p = &probs.data[static_cast<std::size_t>(r) * k];
          double* gz_r = &gz.data[static_cast<std::size_t>(r) * k];
          for (int j = 0; j < k; ++j) gz_r[j] += gscale * p[j];
          gz_r[n.ids[static_cast<std::size_t>(r)]] -= gscale;
        }
      }
      break;
    }
    case OpKind::replay_blend: {
      if (wants(n.inputs[0])) {
        Tensor& gz = grad_buffer(n.inputs[0]);
        const Tensor& pt = n.aux[0];
        const Tensor& alphas = n.aux[1];
        const Tensor& p1 = n.aux[2];
        const Tensor& ps = n.aux[3];
        const double total_mask = n.aux[4].data[0];
        const double temperature = n.s0;
        const int k = pt.last_dim();
        const int rows = pt.leading();
        const double gscale = g.data[0] / total_mask;
        for (int r = 0; r < rows; ++r) {
          if (n.mask[static_cast<std::size_t>(r)] == 0.0) continue;
          const double alpha = alphas.data[static_cast<std::size_t>(r)];
          const int y = n.ids[static_cast<std::size_t>(r)];
          const double* p1r = &p1.data[static_cast<std::size_t>(r) * k];
          const double* psr = &ps.data[static_cast<std::size_t>(r) * k];
          const double* ptr = &pt.data[static_cast<std::size_t>(r) * k];
          double* gz_r = &gz.data[static_cast<std::size_t>(r) * k];
          for (int j = 0; j < k; ++j) {
            const double ce_grad = p1r[j] - (j == y ? 1.0 : 0.0);
            const double kd_grad = temperature * (psr[j] - ptr[j]);
            gz_r[j] += gscale * ((1.0 - alpha) * ce_grad + alpha * kd_grad);
          }
        }
      }
      break;
    }
    case OpKind::masked_mse: {
      const Tensor& ta = value(n.inputs[0]);
      const Tensor& tb = value(n.inputs[1]);
      const double gscale = 2.0 * g.data[0] / n.s0;
      const int d = ta.cols();
      for (int i = 0; i < ta.rows(); ++i) {
        if (n.mask[static_cast<std::size_t>(i)] == 0.0) continue;
        for (int j = 0; j < d; ++j) {
          const double diff = (ta.at(i, j) - tb.at(i, j)) * gscale;
          if (wants(n.inputs[0])) grad_buffer(n.inputs[0]).at(i, j) += diff;
          if (wants(n.inputs[1])) grad_buffer(n.inputs[1]).at(i, j) -= diff;
        }
      }
      break;
    }
    case OpKind::scale: {
      if (wants(n.inputs[0])) {
        Tensor& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] * n.s0;
      }
      break;
    }
    case OpKind::leaf:
      break;
  }
}

}  // namespace clvqa
