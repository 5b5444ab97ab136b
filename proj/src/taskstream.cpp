#include "clvqa/taskstream.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

const std::vector<std::string> kClasses = {"car",     "truck", "pedestrian",
                                           "trailer", "sign",  "signal"};

const std::vector<std::string>& attrs_for(const std::string& cls) {
  static const std::vector<std::string> vehicle = {"moving", "parked", "stationary",
                                                   "braking"};
  static const std::vector<std::string> pedestrian = {"moving", "stationary"};
  static const std::vector<std::string> fixed = {"stationary"};
  if (cls == "pedestrian") return pedestrian;
  if (cls == "sign" || cls == "signal") return fixed;
  return vehicle;
}

bool is_vehicle(const std::string& cls) {
  return cls == "car" || cls == "truck" || cls == "trailer";
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// rule table: what the target object will do next
std::string future_phrase(const std::string& attr) {
  if (attr == "moving") return "keep moving";
  if (attr == "braking") return "be stationary";
  if (attr == "parked") return "stay parked";
  return "stay stationary";
}

// rule table: safe ego action for the target object
std::string planning_phrase(const SceneObject& t) {
  const bool front = t.pos() == "front";
  if (t.cls == "pedestrian") {
    if (t.attr == "moving") {
      return front ? "yield to the pedestrian" : "slow down near the pedestrian";
    }
    return "pass the pedestrian with care";
  }
  if (t.cls == "signal") return front ? "stop at the signal" : "monitor the signal";
  if (t.cls == "sign") return front ? "follow the sign instructions" : "note the sign";
  if (t.attr == "braking") {
    return front ? "brake behind the " + t.cls : "keep distance from the " + t.cls;
  }
  if (t.attr == "moving") {
    return front ? "follow the " + t.cls + " at a safe gap"
                 : "continue and watch the " + t.cls;
  }
  if (t.attr == "parked") {
    return front ? "steer around the parked " + t.cls : "continue past the parked " + t.cls;
  }
  return front ? "wait for the " + t.cls + " to move" : "continue driving forward";
}

// rule table: ego behavior summary near the target object
std::string behavior_phrase(const SceneObject& t) {
  const bool front = t.pos() == "front";
  if (t.cls == "trailer" && t.attr == "parked") return "passing the parked trailer slowly";
  if (t.cls == "pedestrian") {
    return t.attr == "moving" ? "driving slowly near the pedestrian"
                              : "moving carefully past the pedestrian";
  }
  if (t.cls == "signal") return front ? "waiting at the signal" : "driving past the signal";
  if (t.cls == "sign") return front ? "slowing down near the sign" : "cruising past the sign";
  if (t.attr == "braking") {
    return front ? "braking behind the " + t.cls : "easing off near the " + t.cls;
  }
  if (t.attr == "moving") {
    return front ? "following the " + t.cls + " ahead" : "tracking the " + t.cls + " nearby";
  }
  if (t.attr == "parked") {
    return front ? "passing the parked " + t.cls : "rolling past the parked " + t.cls;
  }
  return front ? "holding position behind the " + t.cls : "going ahead at normal speed";
}

struct TargetKey {
  std::string cls;
  std::string pos;
};

// extracts "the <cls> to the <pos>" from a question
TargetKey parse_target(const std::vector<std::string>& question_tokens) {
  for (std::size_t i = 0; i + 3 < question_tokens.size(); ++i) {
    const std::string& cls = question_tokens[i];
    if (std::find(kClasses.begin(), kClasses.end(), cls) == kClasses.end()) continue;
    if (question_tokens[i + 1] == "to" && question_tokens[i + 2] == "the") {
      return {cls, question_tokens[i + 3]};
    }
  }
  throw data_error("question has no parseable target: " + join(question_tokens));
}

}  // namespace

const char* task_name(TaskId task) {
  switch (task) {
    case TaskId::perception: return "perception";
    case TaskId::prediction: return "prediction";
    case TaskId::planning: return "planning";
    case TaskId::behavior: return "behavior";
  }
  throw contract_error("task_name: invalid task id");
}

TaskId task_from_name(const std::string& name) {
  for (TaskId t : all_tasks()) {
    if (name == task_name(t)) return t;
  }
  throw data_error("unknown task name '" + name + "'");
}

std::vector<TaskId> all_tasks() {
  return {TaskId::perception, TaskId::prediction, TaskId::planning, TaskId::behavior};
}

std::string SceneObject::pos() const {
  const int row = cell / 4;
  const int col = cell % 4;
  if (col == 0) return "left";
  if (col == 3) return "right";
  return row <= 1 ? "front" : "back";
}

std::string SceneObject::token() const { return cls + "_" + attr + "_" + pos(); }

std::vector<std::string> Scene::tokens() const {
  std::vector<std::string> out;
  out.reserve(objects.size());
  for (const SceneObject& o : objects) out.push_back(o.token());
  return out;
}

std::uint64_t Scene::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const SceneObject& o : objects) {
    h = fnv1a64(o.token(), h);
    h = fnv1a64("|", h);
  }
  return h;
}

Scene Scene::from_tokens(const std::vector<std::string>& tokens) {
  Scene s;
  for (const std::string& tok : tokens) {
    const auto first = tok.find('_');
    const auto second = tok.find('_', first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw data_error("malformed scene token '" + tok + "'");
    }
    SceneObject o;
    o.cls = tok.substr(0, first);
    o.attr = tok.substr(first + 1, second - first - 1);
    // cell is not serialized; pick a representative cell for the tag
    const std::string pos = tok.substr(second + 1);
    if (pos == "left") o.cell = 0;
    else if (pos == "right") o.cell = 3;
    else if (pos == "front") o.cell = 1;
    else if (pos == "back") o.cell = 13;
    else throw data_error("malformed position tag in scene token '" + tok + "'");
    s.objects.push_back(std::move(o));
  }
  return s;
}

std::vector<std::string> question_for(TaskId task, const SceneObject& target) {
  const std::string base = "the " + target.cls + " to the " + target.pos();
  switch (task) {
    case TaskId::perception: return split_ws("what is the status of " + base + " ?");
    case TaskId::prediction: return split_ws("what will " + base + " do next ?");
    case TaskId::planning:
      return split_ws("what should the ego vehicle do about " + base + " ?");
    case TaskId::behavior:
      return split_ws("how does the ego vehicle behave near " + base + " ?");
  }
  throw contract_error("question_for: invalid task id");
}

std::vector<std::string> answer_for(TaskId task, const SceneObject& target) {
  switch (task) {
    case TaskId::perception:
      return split_ws("the " + target.cls + " to the " + target.pos() + " is " + target.attr);
    case TaskId::prediction:
      return split_ws("the " + target.cls + " to the " + target.pos() + " will " +
                      future_phrase(target.attr));
    case TaskId::planning:
      return split_ws("the ego vehicle should " + planning_phrase(target));
    case TaskId::behavior:
      return split_ws("the ego vehicle is " + behavior_phrase(target));
  }
  throw contract_error("answer_for: invalid task id");
}

std::vector<std::string> oracle_answer(TaskId task,
                                       const std::vector<std::string>& scene_tokens,
                                       const std::vector<std::string>& question_tokens) {
  const TargetKey key = parse_target(question_tokens);
  const Scene scene = Scene::from_tokens(scene_tokens);
  const SceneObject* found = nullptr;
  for (const SceneObject& o : scene.objects) {
    if (o.cls == key.cls && o.pos() == key.pos) {
      if (found) throw data_error("ambiguous question target " + key.cls + "/" + key.pos);
      found = &o;
    }
  }
  if (!found) throw data_error("question target " + key.cls + "/" + key.pos + " not in scene");
  return answer_for(task, *found);
}

namespace {

SceneObject sample_target(TaskId task, double parked_trailer_rate, Rng& rng) {
  SceneObject t;
  if (task == TaskId::behavior && rng.uniform() < parked_trailer_rate) {
    t.cls = "trailer";
    t.attr = "parked";
    return t;
  }
  while (true) {
    t.cls = kClasses[static_cast<std::size_t>(rng.index(kClasses.size()))];
    const auto& attrs = attrs_for(t.cls);
    t.attr = attrs[static_cast<std::size_t>(rng.index(attrs.size()))];
    if (task == TaskId::behavior && t.cls == "trailer" && t.attr == "parked") continue;
    return t;
  }
}

// scenes lean small so the pooled context stays informative
int sample_object_count(Rng& rng) {
  static const double cum[6] = {0.22, 0.48, 0.68, 0.82, 0.92, 1.0};
  const double u = rng.uniform();
  for (int i = 0; i < 6; ++i) {
    if (u < cum[i]) return i + 1;
  }
  return 6;
}

Sample make_sample(TaskId task, const StreamConfig& config, Rng& rng) {
  SceneObject target = sample_target(task, config.parked_trailer_rate, rng);
  const int n_objects = sample_object_count(rng);

  std::vector<int> cells(16);
  for (int i = 0; i < 16; ++i) cells[static_cast<std::size_t>(i)] = i;
  rng.shuffle(cells);
  target.cell = cells[0];

  Scene scene;
  scene.objects.push_back(target);
  for (int i = 1; i < n_objects; ++i) {
    SceneObject extra;
    extra.cell = cells[static_cast<std::size_t>(i)];
    do {
      extra.cls = kClasses[static_cast<std::size_t>(rng.index(kClasses.size()))];
      const auto& attrs = attrs_for(extra.cls);
      extra.attr = attrs[static_cast<std::size_t>(rng.index(attrs.size()))];
    } while (extra.cls == target.cls &&
             SceneObject{extra.cls, extra.attr, extra.cell}.pos() == target.pos());
    scene.objects.push_back(extra);
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });

  Sample s;
  s.task = task;
  s.scene_tokens = scene.tokens();
  s.question_tokens = question_for(task, target);
  s.answer_tokens = answer_for(task, target);
  return s;
}

std::vector<Sample> make_split(TaskId task, const StreamConfig& config, const char* split,
                               int count, std::set<std::uint64_t>& seen_scenes, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  int index = 0;
  while (static_cast<int>(out.size()) < count) {
    Sample s = make_sample(task, config, rng);
    const std::uint64_t h = Scene::from_tokens(s.scene_tokens).hash();
    if (!seen_scenes.insert(h).second) continue;  // splits stay disjoint by scene
    std::ostringstream id;
    id << task_name(task) << "-" << split << "-" << index++;
    s.id = id.str();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<TaskDataset> generate_stream(const StreamConfig& config) {
  if (config.train_per_task < 100) {
    throw contract_error("generate_stream: train size per task must be at least 100");
  }
  if (config.val_per_task < 1 || config.test_per_task < 1) {
    throw contract_error("generate_stream: val/test sizes must be positive");
  }
  std::vector<TaskDataset> out;
  for (TaskId task : all_tasks()) {
    Rng rng(config.seed, std::string("gen.") + task_name(task));
    std::set<std::uint64_t> seen;
    TaskDataset ds;
    ds.task = task;
    ds.seed = config.seed;
    ds.train = make_split(task, config, "train", config.train_per_task, seen, rng);
    ds.val = make_split(task, config, "val", config.val_per_task, seen, rng);
    ds.test = make_split(task, config, "test", config.test_per_task, seen, rng);
    out.push_back(std::move(ds));
  }
  return out;
}

void write_samples(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open " + path + " for writing");
  os << "#clvqa-dataset v1\n";
  for (const Sample& s : samples) {
    os << s.id << '\t' << task_name(s.task) << '\t' << join(s.scene_tokens) << '\t'
       << join(s.question_tokens) << '\t' << join(s.answer_tokens) << '\n';
  }
  if (!os) throw data_error("write failed for " + path);
}

std::vector<Sample> read_samples(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open dataset file " + path);
  std::string line;
  if (!std::getline(is, line) || line != "#clvqa-dataset v1") {
    throw data_error("dataset " + path + ": missing '#clvqa-dataset v1' header");
  }
  std::vector<Sample> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    static const char* kFieldNames[5] = {"id", "task", "scene", "question", "answer"};
    if (fields.size() != 5) {
      const std::string missing =
          fields.size() < 5 ? std::string(" (missing field '") + kFieldNames[fields.size()] + "')"
                            : std::string(" (too many fields)");
      throw data_error("dataset " + path + ": parse error at line " + std::to_string(lineno) +
                       missing);
    }
    for (std::size_t f = 0; f < 5; ++f) {
      if (fields[f].empty()) {
        throw data_error("dataset " + path + ": parse error at line " + std::to_string(lineno) +
                         " (missing field '" + kFieldNames[f] + "')");
      }
    }
    Sample s;
    s.id = fields[0];
    s.task = task_from_name(fields[1]);
    s.scene_tokens = split_ws(fields[2]);
    s.question_tokens = split_ws(fields[3]);
    s.answer_tokens = split_ws(fields[4]);
    out.push_back(std::move(s));
  }
  return out;
}

void save_task_dataset(const TaskDataset& ds, const std::string& dir) {
  const std::string stem = dir + "/" + task_name(ds.task);
  write_samples(ds.train, stem + ".train.tsv");
  write_samples(ds.val, stem + ".val.tsv");
  write_samples(ds.test, stem + ".test.tsv");
}

TaskDataset load_task_dataset(const std::string& dir, TaskId task) {
  const std::string stem = dir + "/" + std::string(task_name(task));
  TaskDataset ds;
  ds.task = task;
  ds.train = read_samples(stem + ".train.tsv");
  ds.val = read_samples(stem + ".val.tsv");
  ds.test = read_samples(stem + ".test.tsv");
  return ds;
}

Vocabulary build_vocabulary(const std::vector<TaskDataset>& datasets) {
  std::vector<std::string> tokens;
  for (const TaskDataset& ds : datasets) {
    for (const std::vector<Sample>* split : {&ds.train, &ds.val, &ds.test}) {
      for (const Sample& s : *split) {
        tokens.insert(tokens.end(), s.scene_tokens.begin(), s.scene_tokens.end());
        tokens.insert(tokens.end(), s.question_tokens.begin(), s.question_tokens.end());
        tokens.insert(tokens.end(), s.answer_tokens.begin(), s.answer_tokens.end());
      }
    }
  }
  return Vocabulary::build(tokens);
}

void write_stream(const std::vector<TaskDataset>& datasets, const Vocabulary& vocab,
                  const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const TaskDataset& ds : datasets) save_task_dataset(ds, dir);
  vocab.save(dir + "/vocab.tsv");
}

}  // namespace clvqa
