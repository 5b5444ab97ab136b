#include "clvqa/model.hpp"

#include <algorithm>
#include <cmath>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

void check_token_ids(const std::vector<int>& ids, int vocab_size, const char* what) {
  for (int id : ids) {
    if (id < 0 || id >= vocab_size) {
      throw contract_error(std::string(what) + ": token id " + std::to_string(id) +
                           " out of range [0," + std::to_string(vocab_size) + ")");
    }
  }
}

}  // namespace

ParameterStore init_model_params(int vocab_size, const ModelConfig& cfg, Rng& rng) {
  if (vocab_size < 3) throw contract_error("init_model_params: vocabulary too small");
  ParameterStore p;
  const double se = 1.0 / std::sqrt(static_cast<double>(cfg.d_e));
  const double sh = 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
  p.add(pname::scene_table, Tensor::uniform({vocab_size, cfg.d_e}, rng, -se, se, true));
  p.add(pname::text_table, Tensor::uniform({vocab_size, cfg.d_e}, rng, -se, se, true));
  p.add(pname::pos_table, Tensor::uniform({cfg.max_positions, cfg.d_e}, rng, -se, se, true));
  p.add(pname::w_hidden, Tensor::uniform({2 * cfg.d_e, cfg.d_h}, rng, -se, se, true));
  p.add(pname::b_hidden, Tensor({cfg.d_h}, 0.0, true));
  p.add(pname::w_out, Tensor::uniform({cfg.d_h, vocab_size}, rng, -sh, sh, true));
  p.add(pname::b_out, Tensor({vocab_size}, 0.0, true));
  return p;
}

std::vector<std::string> model_param_names() {
  return {pname::scene_table, pname::text_table, pname::pos_table, pname::w_hidden,
          pname::b_hidden,   pname::w_out,      pname::b_out};
}

EncodedSample encode_sample(const Sample& s, const Vocabulary& vocab) {
  EncodedSample e;
  e.scene_ids = vocab.encode(s.scene_tokens);
  e.question_ids = vocab.encode(s.question_tokens);
  e.answer_ids = vocab.encode(s.answer_tokens);
  return e;
}

MergedEmbedding embed_sample(const EncodedSample& s, const ParameterStore& params,
                             const ModelConfig& cfg) {
  const Tensor& scene = params.get(pname::scene_table);
  const Tensor& text = params.get(pname::text_table);
  const Tensor& pos = params.get(pname::pos_table);
  const int len = static_cast<int>(s.scene_ids.size() + s.question_ids.size());
  if (len == 0) throw contract_error("embed_sample: sample has no scene or question tokens");
  if (len > cfg.max_positions) {
    throw contract_error("embed_sample: input length " + std::to_string(len) +
                         " exceeds max positions " + std::to_string(cfg.max_positions) +
                         "; refusing to truncate");
  }
  check_token_ids(s.scene_ids, scene.rows(), "embed_sample scene");
  check_token_ids(s.question_ids, text.rows(), "embed_sample question");

  MergedEmbedding out;
  out.rows = Tensor({len, cfg.d_e});
  out.mask.assign(static_cast<std::size_t>(len), 1.0);
  for (int j = 0; j < len; ++j) {
    const bool in_scene = j < static_cast<int>(s.scene_ids.size());
    const int tok = in_scene ? s.scene_ids[static_cast<std::size_t>(j)]
                             : s.question_ids[static_cast<std::size_t>(j) - s.scene_ids.size()];
    const Tensor& table = in_scene ? scene : text;
    for (int d = 0; d < cfg.d_e; ++d) {
      out.rows.at(j, d) = table.at(tok, d) + pos.at(j, d);
    }
  }
  return out;
}

namespace {

// hidden row + output logits for one (ctx, token) pair
void decode_step(const double* ctx, int token, const ParameterStore& params,
                 const ModelConfig& cfg, std::vector<double>& hidden,
                 double* logits_out) {
  const Tensor& text = params.get(pname::text_table);
  const Tensor& wh = params.get(pname::w_hidden);
  const Tensor& bh = params.get(pname::b_hidden);
  const Tensor& wo = params.get(pname::w_out);
  const Tensor& bo = params.get(pname::b_out);
  const int d_e = cfg.d_e, d_h = cfg.d_h;
  const int vocab = wo.cols();

  hidden.assign(static_cast<std::size_t>(d_h), 0.0);
  for (int i = 0; i < d_e; ++i) {
    const double x = ctx[i];
    if (x == 0.0) continue;
    const double* wrow = &wh.data[static_cast<std::size_t>(i) * d_h];
    for (int j = 0; j < d_h; ++j) hidden[static_cast<std::size_t>(j)] += x * wrow[j];
  }
  const double* emb = &text.data[static_cast<std::size_t>(token) * d_e];
  for (int i = 0; i < d_e; ++i) {
    const double x = emb[i];
    if (x == 0.0) continue;
    const double* wrow = &wh.data[static_cast<std::size_t>(d_e + i) * d_h];
    for (int j = 0; j < d_h; ++j) hidden[static_cast<std::size_t>(j)] += x * wrow[j];
  }
  for (int j = 0; j < d_h; ++j) {
    hidden[static_cast<std::size_t>(j)] =
        std::tanh(hidden[static_cast<std::size_t>(j)] + bh.data[static_cast<std::size_t>(j)]);
  }
  for (int v = 0; v < vocab; ++v) logits_out[v] = bo.data[static_cast<std::size_t>(v)];
  for (int j = 0; j < d_h; ++j) {
    const double h = hidden[static_cast<std::size_t>(j)];
    if (h == 0.0) continue;
    const double* wrow = &wo.data[static_cast<std::size_t>(j) * vocab];
    for (int v = 0; v < vocab; ++v) logits_out[v] += h * wrow[v];
  }
}

std::vector<double> context_of(const MergedEmbedding& e) {
  const int len = e.rows.rows();
  const int d = e.rows.cols();
  double nvalid = 0.0;
  std::vector<double> ctx(static_cast<std::size_t>(d), 0.0);
  for (int l = 0; l < len; ++l) {
    if (e.mask[static_cast<std::size_t>(l)] == 0.0) continue;
    nvalid += 1.0;
    for (int d2 = 0; d2 < d; ++d2) ctx[static_cast<std::size_t>(d2)] += e.rows.at(l, d2);
  }
  if (nvalid < 1.0) throw contract_error("decode: merged embedding is fully masked");
  for (double& v : ctx) v /= nvalid;
  return ctx;
}

}  // namespace

Tensor decode_logits(const MergedEmbedding& e, const std::vector<int>& prefix,
                     const ParameterStore& params, const ModelConfig& cfg) {
  if (prefix.empty()) throw contract_error("decode_logits: empty prefix");
  if (prefix[0] != Vocabulary::kBos) {
    throw contract_error("decode_logits: prefix must begin with BOS");
  }
  const Tensor& text = params.get(pname::text_table);
  check_token_ids(prefix, text.rows(), "decode_logits prefix");
  const int vocab = params.get(pname::w_out).cols();
  const std::vector<double> ctx = context_of(e);

  Tensor logits({static_cast<int>(prefix.size()), vocab});
  std::vector<double> hidden;
  for (std::size_t t = 0; t < prefix.size(); ++t) {
    decode_step(ctx.data(), prefix[t], params, cfg, hidden,
                &logits.data[t * static_cast<std::size_t>(vocab)]);
  }
  return logits;
}

std::vector<int> generate(const MergedEmbedding& e, const ParameterStore& params,
                          const ModelConfig& cfg, int max_len,
                          std::vector<double>* step_entropies) {
  if (max_len < 1) throw contract_error("generate: max_len must be at least 1");
  const int vocab = params.get(pname::w_out).cols();
  const std::vector<double> ctx = context_of(e);

  std::vector<int> out;
  std::vector<double> hidden;
  std::vector<double> logits(static_cast<std::size_t>(vocab));
  int current = Vocabulary::kBos;
  for (int step = 0; step < max_len; ++step) {
    decode_step(ctx.data(), current, params, cfg, hidden, logits.data());
    int best = 0;
    for (int v = 1; v < vocab; ++v) {
      if (logits[static_cast<std::size_t>(v)] > logits[static_cast<std::size_t>(best)]) best = v;
    }
    if (step_entropies) {
      // entropy of the predictive distribution at this position
      double mx = logits[0];
      for (int v = 1; v < vocab; ++v) mx = std::max(mx, logits[static_cast<std::size_t>(v)]);
      double z = 0.0;
      for (int v = 0; v < vocab; ++v) z += std::exp(logits[static_cast<std::size_t>(v)] - mx);
      double h = 0.0;
      for (int v = 0; v < vocab; ++v) {
        const double p = std::exp(logits[static_cast<std::size_t>(v)] - mx) / z;
        if (p > 0.0) h -= p * std::log(p);
      }
      step_entropies->push_back(h);
    }
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    current = best;
  }
  return out;
}

double loss_gt_value(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<double>& mask) {
  Graph g;
  Tensor z = logits;
  z.requires_grad = false;
  const NodeId zn = g.constant(std::move(z));
  return g.value(g.masked_cross_entropy(zn, targets, mask)).data[0];
}

BatchGraph build_batch_graph(Graph& g, const std::vector<EncodedSample>& batch,
                             const ParameterStore& params, const ModelConfig& cfg) {
  if (batch.empty()) throw contract_error("build_batch_graph: empty batch");

  BatchGraph plan;
  plan.num_samples = static_cast<int>(batch.size());
  for (const EncodedSample& s : batch) {
    if (s.answer_ids.empty()) throw contract_error("build_batch_graph: sample has no answer");
    plan.answer_len =
        std::max(plan.answer_len, static_cast<int>(s.answer_ids.size()) + 1);  // +EOS
    plan.embed_len = std::max(
        plan.embed_len, static_cast<int>(s.scene_ids.size() + s.question_ids.size()));
  }
  if (plan.embed_len > cfg.max_positions) {
    throw contract_error("build_batch_graph: input length exceeds max positions");
  }

  for (const char* name : {pname::scene_table, pname::text_table, pname::pos_table,
                           pname::w_hidden, pname::b_hidden, pname::w_out, pname::b_out}) {
    plan.param_leaves[name] = g.leaf(params.get(name));
  }
  const NodeId scene_leaf = plan.param_leaves[pname::scene_table];
  const NodeId text_leaf = plan.param_leaves[pname::text_table];
  const NodeId pos_leaf = plan.param_leaves[pname::pos_table];

  std::vector<int> all_positions(static_cast<std::size_t>(plan.embed_len));
  for (int j = 0; j < plan.embed_len; ++j) all_positions[static_cast<std::size_t>(j)] = j;

  std::vector<NodeId> row_blocks;
  std::vector<NodeId> e_blocks;
  for (const EncodedSample& s : batch) {
    const int s_len = static_cast<int>(s.scene_ids.size());
    const int q_len = static_cast<int>(s.question_ids.size());
    const int pad = plan.embed_len - s_len - q_len;

    std::vector<NodeId> parts;
    if (s_len > 0) parts.push_back(g.gather_rows(scene_leaf, s.scene_ids));
    std::vector<int> text_ids = s.question_ids;
    text_ids.insert(text_ids.end(), static_cast<std::size_t>(pad), Vocabulary::kPad);
    if (!text_ids.empty()) parts.push_back(g.gather_rows(text_leaf, text_ids));
    const NodeId tokens_e =
        parts.size() == 1 ? parts[0] : g.concat_rows(parts);
    const NodeId e_i = g.add(tokens_e, g.gather_rows(pos_leaf, all_positions));

    std::vector<double> emb_mask(static_cast<std::size_t>(plan.embed_len), 0.0);
    for (int j = 0; j < s_len + q_len; ++j) emb_mask[static_cast<std::size_t>(j)] = 1.0;
    plan.embed_mask.insert(plan.embed_mask.end(), emb_mask.begin(), emb_mask.end());

    const NodeId ctx = g.masked_mean_rows(e_i, emb_mask);
    std::vector<int> prefix;
    prefix.reserve(static_cast<std::size_t>(plan.answer_len));
    prefix.push_back(Vocabulary::kBos);
    prefix.insert(prefix.end(), s.answer_ids.begin(), s.answer_ids.end());
    while (static_cast<int>(prefix.size()) < plan.answer_len) {
      prefix.push_back(Vocabulary::kPad);
    }
    const NodeId prefix_emb = g.gather_rows(text_leaf, prefix);
    row_blocks.push_back(g.concat_cols(g.repeat_row(ctx, plan.answer_len), prefix_emb));
    e_blocks.push_back(e_i);

    for (int t = 0; t < plan.answer_len; ++t) {
      const bool valid = t < static_cast<int>(s.answer_ids.size()) + 1;
      int target = Vocabulary::kPad;
      if (valid) {
        target = t < static_cast<int>(s.answer_ids.size())
                     ? s.answer_ids[static_cast<std::size_t>(t)]
                     : Vocabulary::kEos;
      }
      plan.targets.push_back(target);
      plan.answer_mask.push_back(valid ? 1.0 : 0.0);
    }
  }

  const NodeId x = row_blocks.size() == 1 ? row_blocks[0] : g.concat_rows(row_blocks);
  const NodeId hidden = g.tanh(
      g.add_rowvec(g.matmul(x, plan.param_leaves[pname::w_hidden]),
                   plan.param_leaves[pname::b_hidden]));
  plan.logits = g.add_rowvec(g.matmul(hidden, plan.param_leaves[pname::w_out]),
                             plan.param_leaves[pname::b_out]);
  plan.e_stack = e_blocks.size() == 1 ? e_blocks[0] : g.concat_rows(e_blocks);
  return plan;
}

Tensor batched_logits_nograd(const std::vector<EncodedSample>& batch,
                             const ParameterStore& params, const ModelConfig& cfg,
                             int answer_len) {
  const int vocab = params.get(pname::w_out).cols();
  Tensor out({static_cast<int>(batch.size()) * answer_len, vocab});
  std::vector<double> hidden;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EncodedSample& s = batch[i];
    const MergedEmbedding e = embed_sample(s, params, cfg);
    const std::vector<double> ctx = context_of(e);
    std::vector<int> prefix;
    prefix.push_back(Vocabulary::kBos);
    prefix.insert(prefix.end(), s.answer_ids.begin(), s.answer_ids.end());
    const int real_len = std::min<int>(static_cast<int>(prefix.size()), answer_len);
    for (int t = 0; t < real_len; ++t) {
      decode_step(ctx.data(), prefix[static_cast<std::size_t>(t)], params, cfg, hidden,
                  &out.data[(i * static_cast<std::size_t>(answer_len) +
                             static_cast<std::size_t>(t)) *
                            static_cast<std::size_t>(vocab)]);
    }
  }
  return out;
}

}  // namespace clvqa
