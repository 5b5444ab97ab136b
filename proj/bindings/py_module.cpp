#include <pybind11/pybind11.h>
#include <cmath>
#include <pybind11/stl.h>

#include "clvqa/config.hpp"
#include "clvqa/distill.hpp"
#include "clvqa/kmeans.hpp"
#include "clvqa/memory.hpp"
#include "clvqa/metrics.hpp"
#include "clvqa/projection.hpp"
#include "clvqa/taskstream.hpp"
#include "clvqa/tfidf.hpp"
#include "clvqa/trainer.hpp"

namespace py = pybind11;

namespace {

std::vector<double> py_softmax_temp(const std::vector<double>& logits, double temperature) {
  clvqa::Graph g;
  const auto node = g.softmax_temp(
      g.constant(clvqa::Tensor({static_cast<int>(logits.size())}, logits)), temperature);
  return g.value(node).data;
}

double py_token_kd(const std::vector<double>& p_teacher,
                   const std::vector<double>& p_student, double temperature) {
  std::vector<double> log_ps(p_student.size());
  for (std::size_t i = 0; i < p_student.size(); ++i) log_ps[i] = std::log(p_student[i]);
  return clvqa::token_kd(p_teacher, log_ps, temperature);
}

std::vector<int> py_kmeans_labels(const std::vector<std::vector<double>>& rows, int k,
                                  std::uint64_t seed) {
  if (rows.empty()) throw clvqa::contract_error("kmeans_labels: empty input");
  const int n = static_cast<int>(rows.size());
  const int v = static_cast<int>(rows[0].size());
  clvqa::Tensor matrix({n, v});
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != v) {
      throw clvqa::contract_error("kmeans_labels: ragged input");
    }
    for (int j = 0; j < v; ++j) matrix.at(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  clvqa::Rng rng(seed);
  return clvqa::kmeans(matrix, k, rng).assignments;
}

void py_gen_tasks(const std::string& out_dir, std::uint64_t seed, int size_per_task,
                  double imbalance) {
  clvqa::StreamConfig cfg;
  cfg.seed = seed;
  cfg.train_per_task = size_per_task;
  cfg.val_per_task = std::max(1, size_per_task / 8);
  cfg.test_per_task = std::max(1, size_per_task / 8);
  cfg.parked_trailer_rate = imbalance;
  const auto datasets = clvqa::generate_stream(cfg);
  clvqa::write_stream(datasets, clvqa::build_vocabulary(datasets), out_dir);
}

py::dict py_train(const std::string& config_text, const std::string& out_dir) {
  const clvqa::RunConfig cfg = clvqa::RunConfig::parse_text(config_text);
  const clvqa::RunResult result = clvqa::run_training(cfg, out_dir);
  py::dict scores;
  const int n = result.matrix.max_checkpoint();
  for (int j = 1; j <= result.matrix.max_task(); ++j) {
    py::dict task_scores;
    for (const std::string& metric : clvqa::ScoreMatrix::metric_names()) {
      const auto v = result.matrix.get(n, j, metric);
      if (v.has_value()) task_scores[py::str(metric)] = *v;
    }
    scores[py::int_(j)] = task_scores;
  }
  return scores;
}

double py_lambda_for_task(int n, double lambda0) {
  clvqa::LambdaSchedule schedule{lambda0};
  return schedule.for_task(n);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "continual-learning VQA core operations";

  m.def("gen_tasks", &py_gen_tasks, py::arg("out_dir"), py::arg("seed"),
        py::arg("size_per_task") = 2000, py::arg("imbalance") = 0.05,
        "generate the synthetic 4-task stream plus vocabulary");
  m.def("train", &py_train, py::arg("config_text"), py::arg("out_dir"),
        "run a training configuration; returns final per-task scores");

  m.def("softmax_temp", &py_softmax_temp, py::arg("logits"), py::arg("temperature"));
  m.def("distill_weight", &clvqa::distill_weight, py::arg("confidence"), py::arg("tau"),
        py::arg("alpha_max"));
  m.def("token_kd", &py_token_kd, py::arg("p_teacher"), py::arg("p_student"),
        py::arg("temperature"));
  m.def("lambda_for_task", &py_lambda_for_task, py::arg("n"), py::arg("lambda0") = 0.05);
  m.def("per_cluster_quota", &clvqa::per_cluster_quota, py::arg("cluster_sizes"),
        py::arg("total_select"));
  m.def("kmeans_labels", &py_kmeans_labels, py::arg("rows"), py::arg("k"), py::arg("seed"));

  m.def("bleu", &clvqa::bleu, py::arg("candidates"), py::arg("references"),
        py::arg("max_n") = 4);
  m.def("rouge_l", &clvqa::rouge_l, py::arg("candidates"), py::arg("references"));
  m.def("meteor_exact", &clvqa::meteor_exact, py::arg("candidates"), py::arg("references"));
  m.def("cider", &clvqa::cider, py::arg("candidates"), py::arg("references"));
  m.def("entropy", &clvqa::entropy, py::arg("probs"));

  py::register_exception<clvqa::contract_error>(m, "ContractError");
  py::register_exception<clvqa::config_error>(m, "ConfigError");
  py::register_exception<clvqa::data_error>(m, "DataError");

  m.attr("__version__") = "0.1.0";
}
