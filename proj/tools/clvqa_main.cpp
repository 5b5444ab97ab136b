#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clvqa/checkpoint.hpp"
#include "clvqa/config.hpp"
#include "clvqa/errors.hpp"
#include "clvqa/metrics.hpp"
#include "clvqa/model.hpp"
#include "clvqa/taskstream.hpp"
#include "clvqa/trainer.hpp"

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const clvqa::TokenSeq& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

int cmd_gen_tasks(const std::string& out_dir, std::uint64_t seed, int size_per_task,
                  double imbalance) {
  clvqa::StreamConfig cfg;
  cfg.seed = seed;
  cfg.train_per_task = size_per_task;
  cfg.val_per_task = std::max(1, size_per_task / 8);
  cfg.test_per_task = std::max(1, size_per_task / 8);
  cfg.parked_trailer_rate = imbalance;
  const auto datasets = clvqa::generate_stream(cfg);
  const clvqa::Vocabulary vocab = clvqa::build_vocabulary(datasets);
  clvqa::write_stream(datasets, vocab, out_dir);
  std::cout << "wrote " << datasets.size() << " task datasets and vocab (" << vocab.size()
            << " tokens) to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const clvqa::RunConfig cfg = clvqa::RunConfig::parse_file(config_path);
  const clvqa::RunResult result = clvqa::run_training(cfg, out_dir);
  std::cout << clvqa::render_report(result.matrix);
  std::cout << "run artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_path) {
  const clvqa::ParameterStore params = clvqa::load_checkpoint(checkpoint_path);
  const clvqa::Vocabulary vocab = clvqa::Vocabulary::load(data_dir + "/vocab.tsv");
  if (params.get(clvqa::pname::scene_table).rows() != vocab.size()) {
    throw clvqa::data_error("eval: checkpoint vocabulary size " +
                            std::to_string(params.get(clvqa::pname::scene_table).rows()) +
                            " does not match data vocabulary " + std::to_string(vocab.size()));
  }
  std::vector<clvqa::TaskDataset> datasets;
  for (clvqa::TaskId task : clvqa::all_tasks()) {
    datasets.push_back(clvqa::load_task_dataset(data_dir, task));
  }
  clvqa::ModelConfig model_cfg;
  model_cfg.d_e = params.get(clvqa::pname::scene_table).cols();
  model_cfg.d_h = params.get(clvqa::pname::w_out).rows();
  model_cfg.max_positions = params.get(clvqa::pname::pos_table).rows();

  const auto scores = clvqa::evaluate_checkpoint(params, model_cfg, vocab, datasets);
  std::ofstream os(out_path, std::ios::binary);
  if (!os) throw clvqa::data_error("eval: cannot open " + out_path + " for writing");
  os << "task,metric,value\n";
  for (const auto& [key, value] : scores) {
    os << key.first << ',' << key.second << ',' << fmt_double(value) << '\n';
  }

  // per-task prediction dumps in the score-CLI input format
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto preds =
        clvqa::predict_task(params, model_cfg, vocab, datasets[d].test, nullptr);
    const std::string path =
        out_path + ".preds." + clvqa::task_name(datasets[d].task) + ".tsv";
    std::ofstream ps(path, std::ios::binary);
    if (!ps) throw clvqa::data_error("eval: cannot open " + path + " for writing");
    for (std::size_t i = 0; i < preds.size(); ++i) {
      ps << preds[i].first << '\t' << join(preds[i].second) << '\t'
         << join(datasets[d].test[i].answer_tokens) << '\n';
    }
  }
  std::cout << "wrote scores to " << out_path << "\n";
  return 0;
}

int cmd_score(const std::string& pred_path, const std::string& out_path) {
  std::ifstream is(pred_path, std::ios::binary);
  if (!is) throw clvqa::data_error("score: cannot open " + pred_path);
  std::vector<clvqa::TokenSeq> candidates, references;
  std::string line;
  int lineno = 0;
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
    if (fields.size() != 3) {
      throw clvqa::data_error("score: line " + std::to_string(lineno) +
                              " must be id<TAB>candidate<TAB>reference");
    }
    clvqa::TokenSeq cand, ref;
    std::istringstream cs(fields[1]);
    std::string tok;
    while (cs >> tok) cand.push_back(tok);
    std::istringstream rs(fields[2]);
    while (rs >> tok) ref.push_back(tok);
    candidates.push_back(std::move(cand));
    references.push_back(std::move(ref));
  }
  if (candidates.empty()) throw clvqa::data_error("score: no prediction lines in " + pred_path);

  std::ofstream os(out_path, std::ios::binary);
  if (!os) throw clvqa::data_error("score: cannot open " + out_path + " for writing");
  os << "metric,value\n";
  const std::vector<double> b = clvqa::bleu(candidates, references, 4);
  os << "bleu1," << fmt_double(b[0]) << "\n";
  os << "bleu2," << fmt_double(b[1]) << "\n";
  os << "bleu3," << fmt_double(b[2]) << "\n";
  os << "bleu4," << fmt_double(b[3]) << "\n";
  os << "meteor," << fmt_double(clvqa::meteor_exact(candidates, references)) << "\n";
  os << "rouge_l," << fmt_double(clvqa::rouge_l(candidates, references)) << "\n";
  os << "cider," << fmt_double(clvqa::cider(candidates, references)) << "\n";
  std::cout << "wrote scores to " << out_path << "\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  clvqa::RunPaths paths{run_dir};
  std::vector<std::string> missing;
  for (const std::string& p : {paths.config_snapshot(), paths.losses_csv(),
                               paths.scorematrix_csv(), paths.checkpoints_dir()}) {
    if (!std::filesystem::exists(p)) missing.push_back(p);
  }
  if (!missing.empty()) {
    std::string msg = "report: incomplete run, missing artifacts:";
    for (const std::string& p : missing) msg += "\n  " + p;
    throw clvqa::data_error(msg);
  }
  const clvqa::ScoreMatrix matrix = clvqa::ScoreMatrix::read_csv(paths.scorematrix_csv());
  clvqa::write_report_files(matrix, paths);
  std::cout << clvqa::render_report(matrix);
  std::cout << "wrote " << paths.report_csv() << " and " << paths.curve_csv() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale continual-learning VQA trainer"};
  app.require_subcommand(1);

  std::string out_dir, config_path, checkpoint_path, data_dir, out_path, pred_path, run_dir;
  std::uint64_t seed = 0;
  int size_per_task = 2000;
  double imbalance = 0.05;

  auto* gen = app.add_subcommand("gen-tasks", "generate the synthetic 4-task stream");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "generation seed")->required();
  gen->add_option("--size-per-task", size_per_task, "training samples per task (default 2000)");
  gen->add_option("--imbalance", imbalance,
                  "parked-trailer rate in the behavior task (default 0.05)");

  auto* train = app.add_subcommand("train", "run a training configuration");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_dir, "run directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on all task test sets");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "data directory")->required();
  eval->add_option("--out", out_path, "output scores CSV")->required();

  auto* score = app.add_subcommand("score", "score a predictions file");
  score->add_option("--pred", pred_path, "id<TAB>candidate<TAB>reference lines")->required();
  score->add_option("--out", out_path, "output CSV")->required();

  auto* report = app.add_subcommand("report", "summarize a finished run");
  report->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_tasks(out_dir, seed, size_per_task, imbalance);
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (eval->parsed()) return cmd_eval(checkpoint_path, data_dir, out_path);
    if (score->parsed()) return cmd_score(pred_path, out_path);
    if (report->parsed()) return cmd_report(run_dir);
  } catch (const clvqa::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const clvqa::contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const clvqa::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
