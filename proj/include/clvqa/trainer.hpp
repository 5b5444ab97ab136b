#pragma once

#include <map>
#include <string>
#include <vector>

#include "clvqa/config.hpp"
#include "clvqa/metrics.hpp"
#include "clvqa/optim.hpp"
#include "clvqa/taskstream.hpp"
#include "clvqa/vocab.hpp"

namespace clvqa {

struct RunPaths {
  std::string dir;

  std::string config_snapshot() const { return dir + "/config.snapshot"; }
  std::string losses_csv() const { return dir + "/losses.csv"; }
  std::string scorematrix_csv() const { return dir + "/scorematrix.csv"; }
  std::string checkpoints_dir() const { return dir + "/checkpoints"; }
  std::string checkpoint(int task) const {
    return checkpoints_dir() + "/task" + std::to_string(task) + ".clvq";
  }
  std::string report_csv() const { return dir + "/report.csv"; }
  std::string curve_csv() const { return dir + "/report_curve.csv"; }
  std::string freeze_audit_csv() const { return dir + "/freeze_audit.csv"; }
  std::string memory_tsv() const { return dir + "/memory.tsv"; }
  std::string run_log() const { return dir + "/run.log"; }
  std::string abort_marker() const { return dir + "/ABORTED"; }
};

struct RunResult {
  ScoreMatrix matrix;
  RunPaths paths;
  RunConfig resolved_config;
};

// Dispatches on config.mode; writes the full artifact set under out_dir.
RunResult run_training(const RunConfig& config, const std::string& out_dir);

// Greedy evaluation of one checkpoint on each task's test split; returns the
// per-task metric map keyed (task index 1..4, metric name). The entropy entry
// is the mean predictive entropy per emitted token.
std::map<std::pair<int, std::string>, double> evaluate_checkpoint(
    const ParameterStore& params, const ModelConfig& model_cfg, const Vocabulary& vocab,
    const std::vector<TaskDataset>& datasets);

// Greedy predictions for one task's samples: (id, candidate tokens).
std::vector<std::pair<std::string, TokenSeq>> predict_task(
    const ParameterStore& params, const ModelConfig& model_cfg, const Vocabulary& vocab,
    const std::vector<Sample>& samples, std::vector<double>* step_entropies = nullptr);

// report rendering (used by `train` at the end of a run and by `report`)
void write_report_files(const ScoreMatrix& matrix, const RunPaths& paths);
std::string render_report(const ScoreMatrix& matrix);

// answers are at most 12 tokens by construction
inline constexpr int kMaxAnswerTokens = 12;

}  // namespace clvqa
