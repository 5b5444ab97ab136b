#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clvqa/rng.hpp"
#include "clvqa/vocab.hpp"

namespace clvqa {

enum class TaskId { perception = 0, prediction = 1, planning = 2, behavior = 3 };
constexpr int kNumTasks = 4;

const char* task_name(TaskId task);
TaskId task_from_name(const std::string& name);
std::vector<TaskId> all_tasks();

// One object on the 4x4 token grid. The position tag is derived from the
// cell: column 0 is "left", column 3 is "right", the middle columns split
// into "front" (rows 0-1) and "back" (rows 2-3).
struct SceneObject {
  std::string cls;
  std::string attr;
  int cell = 0;

  std::string pos() const;
  std::string token() const;  // "cls_attr_pos"
};

struct Scene {
  std::vector<SceneObject> objects;  // sorted by cell; serialization order

  std::vector<std::string> tokens() const;
  std::uint64_t hash() const;
  static Scene from_tokens(const std::vector<std::string>& tokens);
};

struct Sample {
  std::string id;
  TaskId task = TaskId::perception;
  std::vector<std::string> scene_tokens;
  std::vector<std::string> question_tokens;
  std::vector<std::string> answer_tokens;
};

struct TaskDataset {
  TaskId task = TaskId::perception;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
};

struct StreamConfig {
  int train_per_task = 2000;
  int val_per_task = 250;
  int test_per_task = 250;
  // probability that a behavior question targets a parked trailer
  double parked_trailer_rate = 0.05;
  std::uint64_t seed = 0;
};

// Version of the question/answer rule tables below; bump when any template
// or rule changes so regenerated datasets are distinguishable.
constexpr int kRulesVersion = 1;

// The generator is its own oracle: answers are a pure function of
// (task, scene, question target) through these rules.
std::vector<std::string> question_for(TaskId task, const SceneObject& target);
std::vector<std::string> answer_for(TaskId task, const SceneObject& target);
// Re-derives the answer from serialized scene/question tokens; throws if the
// question's (class, position) target is missing or ambiguous in the scene.
std::vector<std::string> oracle_answer(TaskId task,
                                       const std::vector<std::string>& scene_tokens,
                                       const std::vector<std::string>& question_tokens);

std::vector<TaskDataset> generate_stream(const StreamConfig& config);

// File format: header "#clvqa-dataset v1", then one sample per line with
// tab-separated fields id, task, scene tokens (space-joined), question,
// answer.
void write_samples(const std::vector<Sample>& samples, const std::string& path);
std::vector<Sample> read_samples(const std::string& path);

void save_task_dataset(const TaskDataset& ds, const std::string& dir);
TaskDataset load_task_dataset(const std::string& dir, TaskId task);

Vocabulary build_vocabulary(const std::vector<TaskDataset>& datasets);

// gen-tasks entry point: writes per-task split files plus vocab.tsv
void write_stream(const std::vector<TaskDataset>& datasets, const Vocabulary& vocab,
                  const std::string& dir);

}  // namespace clvqa
