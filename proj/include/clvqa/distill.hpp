#pragma once

#include <vector>

#include "clvqa/graph.hpp"
#include "clvqa/tensor.hpp"

namespace clvqa {

struct DistillConfig {
  double temperature = 2.0;
  double tau = 0.5;         // teacher-confidence threshold
  double alpha_max = 0.7;   // maximum distillation ratio
  double replay_weight = 1.0;

  void validate() const;
};

// temperature-scaled teacher distribution; the result carries no gradient
Tensor teacher_probs(const Tensor& logits, double temperature);

// per-position max probability, one value per trailing-dimension slice
std::vector<double> token_confidence(const Tensor& probs);

// 0 below tau, then a linear ramp up to alpha_max at confidence 1
double distill_weight(double confidence, double tau, double alpha_max);

// KL(p_teacher || p_student) * T^2 with the 0*ln(0) = 0 convention;
// log_p_student holds log-probabilities
double token_kd(const std::vector<double>& p_teacher,
                const std::vector<double>& log_p_student, double temperature);

// Reference value of the blended replay loss: per token
// m * ((1-alpha)*CE + alpha*KD) averaged over sum(m), with alpha gated by
// the teacher's confidence.
double replay_loss_value(const Tensor& student_logits, const Tensor& teacher_logits,
                         const std::vector<int>& targets, const std::vector<double>& mask,
                         const DistillConfig& cfg);

// per-token alphas from teacher logits (Eq. 3-5 composed)
std::vector<double> replay_alphas(const Tensor& teacher_logits, const DistillConfig& cfg);

// Graph node for the same loss, used by the trainer; the teacher side enters
// as constants so no gradient can reach the snapshot.
NodeId replay_loss_node(Graph& g, NodeId student_logits, const Tensor& teacher_logits,
                        const std::vector<int>& targets, const std::vector<double>& mask,
                        const DistillConfig& cfg);

}  // namespace clvqa
