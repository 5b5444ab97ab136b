#pragma once

#include <map>
#include <string>
#include <vector>

#include "clvqa/graph.hpp"
#include "clvqa/optim.hpp"
#include "clvqa/taskstream.hpp"
#include "clvqa/vocab.hpp"

namespace clvqa {

struct ModelConfig {
  int d_e = 64;
  int d_h = 128;
  int max_positions = 32;
};

// parameter names used in the store and in checkpoints
namespace pname {
inline constexpr const char* scene_table = "embed.scene";
inline constexpr const char* text_table = "embed.text";
inline constexpr const char* pos_table = "embed.pos";
inline constexpr const char* w_hidden = "dec.w_hidden";
inline constexpr const char* b_hidden = "dec.b_hidden";
inline constexpr const char* w_out = "dec.w_out";
inline constexpr const char* b_out = "dec.b_out";
}  // namespace pname

ParameterStore init_model_params(int vocab_size, const ModelConfig& cfg, Rng& rng);
std::vector<std::string> model_param_names();

struct EncodedSample {
  std::vector<int> scene_ids;
  std::vector<int> question_ids;
  std::vector<int> answer_ids;
};

EncodedSample encode_sample(const Sample& s, const Vocabulary& vocab);

// Per-position merged scene+question embedding. Position j holds
// embedding(token_j) + positional(j); the table is picked by segment.
struct MergedEmbedding {
  Tensor rows;               // [len x d_e]
  std::vector<double> mask;  // 1.0 at valid positions
};

MergedEmbedding embed_sample(const EncodedSample& s, const ParameterStore& params,
                             const ModelConfig& cfg);

// Context-conditioned decoder. ctx is the masked mean of e; position t sees
// only ctx and prefix[t], so logits at t never depend on later prefix tokens.
// prefix must start with BOS.
Tensor decode_logits(const MergedEmbedding& e, const std::vector<int>& prefix,
                     const ParameterStore& params, const ModelConfig& cfg);

// Greedy argmax decoding from BOS until EOS or max_len tokens; ties break
// toward the lowest token id. When step_entropies is non-null it receives
// the natural-log entropy of the predictive distribution at each emitted
// position (EOS included).
std::vector<int> generate(const MergedEmbedding& e, const ParameterStore& params,
                          const ModelConfig& cfg, int max_len,
                          std::vector<double>* step_entropies = nullptr);

double loss_gt_value(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<double>& mask);

// One teacher-forced forward over a batch, expressed on a Graph so the
// trainer can hang losses off it.
struct BatchGraph {
  int num_samples = 0;
  int answer_len = 0;  // L: padded prefix/target length
  int embed_len = 0;   // S: padded merged-embedding length
  std::vector<int> targets;         // N*L, PAD at padded slots
  std::vector<double> answer_mask;  // N*L
  std::vector<double> embed_mask;   // N*S
  NodeId logits = -1;   // [N*L x V]
  NodeId e_stack = -1;  // [N*S x d_e]
  std::map<std::string, NodeId> param_leaves;
};

BatchGraph build_batch_graph(Graph& g, const std::vector<EncodedSample>& batch,
                             const ParameterStore& params, const ModelConfig& cfg);

// Teacher-forced logits for a whole batch from a frozen parameter set,
// shaped like BatchGraph.logits ([N*L x V]); padded rows stay zero.
Tensor batched_logits_nograd(const std::vector<EncodedSample>& batch,
                             const ParameterStore& params, const ModelConfig& cfg,
                             int answer_len);

}  // namespace clvqa
