#include "clvqa/distill.hpp"

#include <cmath>

#include "clvqa/errors.hpp"

namespace clvqa {

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw config_error("distill.temperature must be positive");
  if (tau < 0.0 || tau >= 1.0) throw config_error("distill.tau must lie in [0,1)");
  if (alpha_max < 0.0 || alpha_max > 1.0) throw config_error("distill.alpha_max must lie in [0,1]");
  if (replay_weight < 0.0) throw config_error("distill.replay_weight must be non-negative");
}

Tensor teacher_probs(const Tensor& logits, double temperature) {
  Graph g;
  Tensor z = logits;
  z.requires_grad = false;
  const NodeId probs = g.softmax_temp(g.constant(std::move(z)), temperature);
  Tensor out = g.value(probs);
  out.requires_grad = false;
  return out;
}

std::vector<double> token_confidence(const Tensor& probs) {
  const int k = probs.last_dim();
  const int rows = probs.leading();
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double* p = &probs.data[static_cast<std::size_t>(r) * k];
    double best = p[0];
    for (int j = 1; j < k; ++j) best = std::max(best, p[j]);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double distill_weight(double confidence, double tau, double alpha_max) {
  if (confidence < tau) return 0.0;
  return (confidence - tau) / (1.0 - tau) * alpha_max;
}

double token_kd(const std::vector<double>& p_teacher,
                const std::vector<double>& log_p_student, double temperature) {
  if (p_teacher.size() != log_p_student.size()) {
    throw contract_error("token_kd: distribution sizes differ");
  }
  double kd = 0.0;
  for (std::size_t i = 0; i < p_teacher.size(); ++i) {
    if (p_teacher[i] > 0.0) kd += p_teacher[i] * (std::log(p_teacher[i]) - log_p_student[i]);
  }
  return kd * temperature * temperature;
}

std::vector<double> replay_alphas(const Tensor& teacher_logits, const DistillConfig& cfg) {
  const Tensor probs = teacher_probs(teacher_logits, cfg.temperature);
  std::vector<double> alphas = token_confidence(probs);
  for (double& a : alphas) a = distill_weight(a, cfg.tau, cfg.alpha_max);
  return alphas;
}

NodeId replay_loss_node(Graph& g, NodeId student_logits, const Tensor& teacher_logits,
                        const std::vector<int>& targets, const std::vector<double>& mask,
                        const DistillConfig& cfg) {
  cfg.validate();
  const Tensor probs = teacher_probs(teacher_logits, cfg.temperature);
  const std::vector<double> alphas = replay_alphas(teacher_logits, cfg);
  return g.replay_blend(student_logits, probs, targets, mask, alphas, cfg.temperature);
}

double replay_loss_value(const Tensor& student_logits, const Tensor& teacher_logits,
                         const std::vector<int>& targets, const std::vector<double>& mask,
                         const DistillConfig& cfg) {
  Graph g;
  Tensor z = student_logits;
  z.requires_grad = false;
  const NodeId node =
      replay_loss_node(g, g.constant(std::move(z)), teacher_logits, targets, mask, cfg);
  return g.value(node).data[0];
}

}  // namespace clvqa
