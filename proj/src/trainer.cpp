#include "clvqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "clvqa/checkpoint.hpp"
#include "clvqa/distill.hpp"
#include "clvqa/errors.hpp"
#include "clvqa/graph.hpp"
#include "clvqa/memory.hpp"
#include "clvqa/model.hpp"

namespace clvqa {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string proj_name(int task) { return "proj.W." + std::to_string(task); }

struct LossLog {
  std::ofstream os;
  long long step = 0;

  explicit LossLog(const std::string& path) : os(path, std::ios::binary) {
    if (!os) throw runtime_abort("cannot open loss log " + path);
    os << "step,task,epoch,kind,loss\n";
  }
  void row(int task, int epoch, const char* kind, double loss) {
    os << ++step << ',' << task << ',' << epoch << ',' << kind << ',' << fmt_double(loss)
       << '\n';
    if (!os) throw runtime_abort("loss log write failed");
  }
};

struct FreezeAudit {
  struct Row {
    int task;
    std::string name;
    std::uint64_t before;
    std::uint64_t after;
  };
  std::vector<Row> rows;

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw runtime_abort("cannot open freeze audit " + path);
    os << "task,name,hash_start,hash_end,status\n";
    for (const Row& r : rows) {
      os << r.task << ',' << r.name << ',' << r.before << ',' << r.after << ','
         << (r.before == r.after ? "ok" : "changed") << '\n';
    }
  }
};

ParameterStore copy_model_params(const ParameterStore& src) {
  ParameterStore out;
  for (const std::string& name : model_param_names()) out.add(name, src.get(name));
  return out;
}

std::vector<EncodedSample> encode_batch(const std::vector<const Sample*>& samples,
                                        const Vocabulary& vocab) {
  std::vector<EncodedSample> out;
  out.reserve(samples.size());
  for (const Sample* s : samples) out.push_back(encode_sample(*s, vocab));
  return out;
}

// deterministic permutation cycle over the replay buffer
struct ReplayCycle {
  const MemoryBuffer* buffer = nullptr;
  Rng* rng = nullptr;
  std::vector<int> order;
  std::size_t cursor = 0;

  const Sample* next() {
    if (cursor >= order.size()) {
      order.resize(buffer->entries.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      rng->shuffle(order);
      cursor = 0;
    }
    return &buffer->entries[static_cast<std::size_t>(order[cursor++])].sample;
  }
};

struct TrainerState {
  RunConfig cfg;
  RunPaths paths;
  std::vector<TaskDataset> datasets;
  Vocabulary vocab;
  ParameterStore store;  // model params + projection weights
  ScoreMatrix matrix;
  FreezeAudit audit;
  std::vector<std::string> log_lines;
};

void append_run_log(TrainerState& st, const std::string& line) { st.log_lines.push_back(line); }

void train_batch_current(TrainerState& st, AdamW& optimizer, LossLog& log,
                         const std::vector<const Sample*>& batch, int task, int epoch) {
  Graph g;
  const BatchGraph plan =
      build_batch_graph(g, encode_batch(batch, st.vocab), st.store, st.cfg.model);
  const NodeId l_gt = g.masked_cross_entropy(plan.logits, plan.targets, plan.answer_mask);

  NodeId root = l_gt;
  NodeId w_leaf = -1;
  const bool with_pro = st.cfg.pro && task >= 2;
  if (with_pro) {
    std::vector<Tensor> frozen;
    for (int m = 1; m < task; ++m) frozen.push_back(st.store.get(proj_name(m)));
    w_leaf = g.leaf(st.store.get(proj_name(task)));
    const NodeId pro = pro_loss_total_node(g, plan.e_stack, w_leaf, frozen, plan.embed_mask);
    root = g.add(l_gt, g.scale(pro, st.cfg.lambda_schedule.for_task(task)));
  }
  g.backward(root);

  std::map<std::string, Tensor> grads;
  for (const auto& [name, leaf] : plan.param_leaves) grads.emplace(name, g.grad(leaf));
  if (with_pro) grads.emplace(proj_name(task), g.grad(w_leaf));
  optimizer.step(st.store, grads);
  log.row(task, epoch, "current", g.value(root).data[0]);
}

void train_batch_replay(TrainerState& st, AdamW& optimizer, LossLog& log,
                        const std::vector<const Sample*>& batch,
                        const std::optional<ParameterStore>& teacher, int task, int epoch) {
  Graph g;
  const std::vector<EncodedSample> encoded = encode_batch(batch, st.vocab);
  const BatchGraph plan = build_batch_graph(g, encoded, st.store, st.cfg.model);

  NodeId loss;
  if (st.cfg.kd) {
    const Tensor teacher_logits =
        batched_logits_nograd(encoded, *teacher, st.cfg.model, plan.answer_len);
    loss = replay_loss_node(g, plan.logits, teacher_logits, plan.targets, plan.answer_mask,
                            st.cfg.distill);
  } else {
    loss = g.masked_cross_entropy(plan.logits, plan.targets, plan.answer_mask);
  }
  const NodeId root = g.scale(loss, st.cfg.distill.replay_weight);
  g.backward(root);

  std::map<std::string, Tensor> grads;
  for (const auto& [name, leaf] : plan.param_leaves) grads.emplace(name, g.grad(leaf));
  optimizer.step(st.store, grads);
  log.row(task, epoch, "replay", g.value(root).data[0]);
}

void evaluate_into_matrix(TrainerState& st, int checkpoint) {
  const ParameterStore model = copy_model_params(st.store);
  const auto scores = evaluate_checkpoint(model, st.cfg.model, st.vocab, st.datasets);
  for (const auto& [key, value] : scores) {
    st.matrix.set(checkpoint, key.first, key.second, value);
  }
}

void run_continual_family(TrainerState& st, LossLog& log) {
  std::optional<MemoryBuffer> memory;
  std::optional<ParameterStore> teacher;
  std::uint64_t teacher_hash = 0;

  for (int task = 1; task <= kNumTasks; ++task) {
    const std::vector<Sample>& train = st.datasets[static_cast<std::size_t>(task - 1)].train;

    if (st.cfg.pro) {
      // freeze earlier projections, add this task's
      for (int m = 1; m < task; ++m) st.store.set_frozen(proj_name(m), true);
      Rng proj_rng(st.cfg.seed, "proj.init.task" + std::to_string(task));
      const double bound = 1.0 / std::sqrt(static_cast<double>(st.cfg.model.d_e));
      st.store.add(proj_name(task),
                   Tensor::uniform({st.cfg.model.d_e, st.cfg.d_proj}, proj_rng, -bound, bound,
                                   true));
    }
    if (st.cfg.kd && task >= 2) {
      teacher = copy_model_params(st.store);
      teacher_hash = teacher->content_hash();
    }

    // snapshot hashes of everything that must stay bit-stable during this task
    std::vector<std::pair<std::string, std::uint64_t>> frozen_before;
    if (st.cfg.pro) {
      for (int m = 1; m < task; ++m) {
        frozen_before.emplace_back(proj_name(m), st.store.content_hash(proj_name(m)));
      }
    }

    AdamW optimizer(AdamWConfig{st.cfg.lr, st.cfg.weight_decay, 0.9, 0.999, 1e-8});
    ReplayCycle replay;
    std::optional<Rng> replay_rng;
    const bool with_replay = st.cfg.er && task >= 2;
    if (with_replay) {
      replay_rng.emplace(st.cfg.seed, "replay.task" + std::to_string(task));
      replay.buffer = &*memory;
      replay.rng = &*replay_rng;
    }

    int since_replay = 0;
    for (int epoch = 1; epoch <= st.cfg.epochs; ++epoch) {
      std::vector<int> order(train.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      Rng shuffle_rng(st.cfg.seed,
                      "shuffle.task" + std::to_string(task) + ".epoch" + std::to_string(epoch));
      shuffle_rng.shuffle(order);

      for (std::size_t start = 0; start < order.size(); start += st.cfg.batch_size) {
        std::vector<const Sample*> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + st.cfg.batch_size); ++i) {
          batch.push_back(&train[static_cast<std::size_t>(order[i])]);
        }
        train_batch_current(st, optimizer, log, batch, task, epoch);

        if (with_replay && ++since_replay == st.cfg.replay_period) {
          since_replay = 0;
          std::vector<const Sample*> rbatch;
          for (int i = 0; i < st.cfg.batch_size; ++i) rbatch.push_back(replay.next());
          train_batch_replay(st, optimizer, log, rbatch, teacher, task, epoch);
        }
      }
    }

    // freeze contracts
    if (st.cfg.kd && task >= 2) {
      st.audit.rows.push_back({task, "teacher", teacher_hash, teacher->content_hash()});
    }
    for (const auto& [name, before] : frozen_before) {
      st.audit.rows.push_back({task, name, before, st.store.content_hash(name)});
    }

    save_checkpoint(st.store, st.paths.checkpoint(task));

    if (st.cfg.er) {
      Rng memory_rng(st.cfg.seed, "memory.task" + std::to_string(task));
      if (task == 1) {
        memory = populate_memory(train, st.cfg.memory_capacity, st.cfg.memory_k, memory_rng);
      } else {
        RefreshResult refreshed =
            refresh_memory(*memory, train, task, st.cfg.memory_k, memory_rng);
        if (refreshed.shortfall > 0) {
          append_run_log(st, "task " + std::to_string(task) + " memory shortfall " +
                                 std::to_string(refreshed.shortfall));
        }
        memory = std::move(refreshed.buffer);
      }
      memory->save(st.paths.memory_tsv());
    }

    evaluate_into_matrix(st, task);
  }
}

void run_joint(TrainerState& st, LossLog& log) {
  std::vector<const Sample*> pool;
  for (const TaskDataset& ds : st.datasets) {
    for (const Sample& s : ds.train) pool.push_back(&s);
  }
  AdamW optimizer(AdamWConfig{st.cfg.lr, st.cfg.weight_decay, 0.9, 0.999, 1e-8});
  for (int epoch = 1; epoch <= st.cfg.epochs; ++epoch) {
    std::vector<int> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(st.cfg.seed, "shuffle.joint.epoch" + std::to_string(epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += st.cfg.batch_size) {
      std::vector<const Sample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + st.cfg.batch_size); ++i) {
        batch.push_back(pool[static_cast<std::size_t>(order[i])]);
      }
      // task column 0 marks the joint pool
      train_batch_current(st, optimizer, log, batch, 0, epoch);
    }
  }
  save_checkpoint(st.store, st.paths.checkpoint(kNumTasks));
  evaluate_into_matrix(st, kNumTasks);
}

}  // namespace

std::vector<std::pair<std::string, TokenSeq>> predict_task(
    const ParameterStore& params, const ModelConfig& model_cfg, const Vocabulary& vocab,
    const std::vector<Sample>& samples, std::vector<double>* step_entropies) {
  std::vector<std::pair<std::string, TokenSeq>> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    const EncodedSample enc = encode_sample(s, vocab);
    const MergedEmbedding e = embed_sample(enc, params, model_cfg);
    const std::vector<int> ids =
        generate(e, params, model_cfg, kMaxAnswerTokens, step_entropies);
    out.emplace_back(s.id, vocab.decode(ids));
  }
  return out;
}

std::map<std::pair<int, std::string>, double> evaluate_checkpoint(
    const ParameterStore& params, const ModelConfig& model_cfg, const Vocabulary& vocab,
    const std::vector<TaskDataset>& datasets) {
  std::map<std::pair<int, std::string>, double> out;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const std::vector<Sample>& test = datasets[d].test;
    if (test.empty()) throw contract_error("evaluate: empty test set");
    std::vector<double> entropies;
    const auto preds = predict_task(params, model_cfg, vocab, test, &entropies);

    std::vector<TokenSeq> candidates, references;
    candidates.reserve(test.size());
    references.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      candidates.push_back(preds[i].second);
      references.push_back(test[i].answer_tokens);
    }
    const int task = static_cast<int>(d) + 1;
    const std::vector<double> b = bleu(candidates, references, 4);
    out[{task, "bleu1"}] = b[0];
    out[{task, "bleu2"}] = b[1];
    out[{task, "bleu3"}] = b[2];
    out[{task, "bleu4"}] = b[3];
    out[{task, "meteor"}] = meteor_exact(candidates, references);
    out[{task, "rouge_l"}] = rouge_l(candidates, references);
    out[{task, "cider"}] = cider(candidates, references);
    double mean_entropy = 0.0;
    if (!entropies.empty()) {
      for (double h : entropies) mean_entropy += h;
      mean_entropy /= static_cast<double>(entropies.size());
    }
    out[{task, "entropy"}] = mean_entropy;
  }
  return out;
}

RunResult run_training(const RunConfig& config, const std::string& out_dir) {
  RunConfig cfg = config;
  cfg.validate();

  // startup: data must exist before any artifact is written
  std::vector<TaskDataset> datasets;
  for (TaskId task : all_tasks()) datasets.push_back(load_task_dataset(cfg.data_dir, task));
  Vocabulary vocab = Vocabulary::load(cfg.data_dir + "/vocab.tsv");

  if (cfg.memory_capacity == 0) {
    cfg.memory_capacity =
        std::max<int>(1, static_cast<int>(datasets[0].train.size()) / 10);
  }

  RunPaths paths{out_dir};
  std::filesystem::create_directories(paths.checkpoints_dir());
  {
    std::ofstream snap(paths.config_snapshot(), std::ios::binary);
    if (!snap) throw runtime_abort("cannot write config snapshot");
    snap << cfg.canonical_text();
  }

  TrainerState st{cfg, paths, std::move(datasets), std::move(vocab), ParameterStore{},
                  ScoreMatrix{}, FreezeAudit{}, {}};
  Rng init_rng(cfg.seed, "model.init");
  st.store = init_model_params(st.vocab.size(), cfg.model, init_rng);

  try {
    LossLog log(paths.losses_csv());
    if (cfg.mode == RunMode::joint) {
      run_joint(st, log);
    } else {
      run_continual_family(st, log);
    }

    st.matrix.write_csv(paths.scorematrix_csv());
    st.audit.write(paths.freeze_audit_csv());
    if (!st.log_lines.empty()) {
      std::ofstream rl(paths.run_log(), std::ios::binary);
      for (const std::string& line : st.log_lines) rl << line << '\n';
    }
    write_report_files(st.matrix, paths);
  } catch (const std::exception& e) {
    std::ofstream marker(paths.abort_marker(), std::ios::binary);
    marker << "aborted: " << e.what() << '\n';
    throw runtime_abort(std::string("training aborted: ") + e.what());
  }

  return {std::move(st.matrix), paths, cfg};
}

void write_report_files(const ScoreMatrix& matrix, const RunPaths& paths) {
  const int checkpoints = matrix.max_checkpoint();
  const int tasks = matrix.max_task();

  std::ofstream os(paths.report_csv(), std::ios::binary);
  if (!os) throw data_error("report: cannot open " + paths.report_csv());
  os << "checkpoint,task,metric,value\n";
  for (int t = 1; t <= checkpoints; ++t) {
    for (int j = 1; j <= tasks; ++j) {
      for (const std::string& metric : ScoreMatrix::metric_names()) {
        const auto v = matrix.get(t, j, metric);
        if (!v.has_value()) continue;
        os << t << ',' << j << ',' << metric << ',' << fmt_double(*v) << '\n';
      }
    }
  }

  // forgetting curve: task 1 scores across checkpoints
  std::ofstream curve(paths.curve_csv(), std::ios::binary);
  if (!curve) throw data_error("report: cannot open " + paths.curve_csv());
  curve << "checkpoint,metric,value\n";
  for (int t = 1; t <= checkpoints; ++t) {
    for (const std::string& metric : ScoreMatrix::metric_names()) {
      const auto v = matrix.get(t, 1, metric);
      if (!v.has_value()) continue;
      curve << t << ',' << metric << ',' << fmt_double(*v) << '\n';
    }
  }
}

std::string render_report(const ScoreMatrix& matrix) {
  // Table-1 metric order; text metrics shown x100, CIDEr raw
  static const std::vector<std::pair<std::string, bool>> columns = {
      {"bleu1", true},  {"bleu2", true},   {"bleu3", true}, {"bleu4", true},
      {"meteor", true}, {"rouge_l", true}, {"cider", false}};
  const int n = matrix.max_checkpoint();
  const int tasks = matrix.max_task();

  std::ostringstream out;
  out << "scores at final checkpoint (corpus-level; text metrics x100)\n";
  out << "task      ";
  for (const auto& [metric, scaled] : columns) {
    out << ' ' << metric;
    for (std::size_t pad = metric.size(); pad < 7; ++pad) out << ' ';
  }
  out << '\n';
  for (int j = 1; j <= tasks; ++j) {
    char label[16];
    std::snprintf(label, sizeof(label), "task %-4d ", j);
    out << label;
    for (const auto& [metric, scaled] : columns) {
      const auto v = matrix.get(n, j, metric);
      char cell[16];
      if (v.has_value()) {
        std::snprintf(cell, sizeof(cell), " %7.2f", scaled ? *v * 100.0 : *v);
      } else {
        std::snprintf(cell, sizeof(cell), " %7s", "-");
      }
      out << cell;
    }
    out << '\n';
  }

  out << "average   ";
  for (const auto& [metric, scaled] : columns) {
    const double avg = matrix_average(matrix, metric);
    char cell[16];
    std::snprintf(cell, sizeof(cell), " %7.2f", scaled ? avg * 100.0 : avg);
    out << cell;
  }
  out << '\n';

  out << "forget    ";
  for (const auto& [metric, scaled] : columns) {
    char cell[16];
    bool have = true;
    double f = 0.0;
    try {
      f = aggregates(matrix, metric).forgetting;
    } catch (const contract_error&) {
      have = false;  // single-checkpoint runs have no forgetting
    }
    if (have) {
      std::snprintf(cell, sizeof(cell), " %7.2f", scaled ? f * 100.0 : f);
    } else {
      std::snprintf(cell, sizeof(cell), " %7s", "n/a");
    }
    out << cell;
  }
  out << '\n';

  out << "\nmean answer-token entropy per task (final checkpoint)\n";
  for (int j = 1; j <= tasks; ++j) {
    const auto v = matrix.get(n, j, "entropy");
    out << "task " << j << ": " << (v.has_value() ? fmt_double(*v) : "-") << '\n';
  }
  return out.str();
}

}  // namespace clvqa
