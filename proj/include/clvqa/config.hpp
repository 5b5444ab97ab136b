#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "clvqa/distill.hpp"
#include "clvqa/model.hpp"
#include "clvqa/projection.hpp"

namespace clvqa {

enum class RunMode { continual, joint, vanilla };

const char* run_mode_name(RunMode mode);
RunMode run_mode_from_name(const std::string& name);

// Flat "key = value" configuration. Unknown keys are errors; '#' lines and
// blank lines are ignored.
struct RunConfig {
  RunMode mode = RunMode::continual;
  std::uint64_t seed = 0;
  std::string data_dir;

  int epochs = 4;
  int batch_size = 4;
  double lr = 1e-4;
  double weight_decay = 0.05;
  int replay_period = 4;  // one replay batch after every r current batches

  bool er = true;
  bool kd = true;
  bool pro = true;

  int memory_capacity = 0;  // 0 = auto: 10% of the per-task training size
  int memory_k = 5;

  DistillConfig distill;
  LambdaSchedule lambda_schedule;
  int d_proj = 32;

  ModelConfig model;

  void validate() const;
  // all keys, sorted, with resolved values; re-parsing reproduces the run
  std::string canonical_text() const;

  static RunConfig parse_text(const std::string& text);
  static RunConfig parse_file(const std::string& path);
};

}  // namespace clvqa
