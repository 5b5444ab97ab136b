#include "clvqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

void check_corpus(const std::vector<TokenSeq>& candidates,
                  const std::vector<TokenSeq>& references, const char* op) {
  if (candidates.empty()) throw contract_error(std::string(op) + ": empty corpus");
  if (candidates.size() != references.size()) {
    throw contract_error(std::string(op) + ": candidate/reference counts differ");
  }
}

std::string ngram_key(const TokenSeq& tokens, std::size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += tokens[start + static_cast<std::size_t>(i)];
  }
  return key;
}

std::unordered_map<std::string, int> ngram_counts(const TokenSeq& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) >= n) {
    for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= tokens.size(); ++s) {
      ++counts[ngram_key(tokens, s, n)];
    }
  }
  return counts;
}

}  // namespace

std::vector<double> bleu(const std::vector<TokenSeq>& candidates,
                         const std::vector<TokenSeq>& references, int max_n) {
  check_corpus(candidates, references, "bleu");
  if (max_n < 1) throw contract_error("bleu: max_n must be at least 1");

  std::vector<double> clipped(static_cast<std::size_t>(max_n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(max_n), 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& cand = candidates[i];
    const TokenSeq& ref = references[i];
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      const auto cc = ngram_counts(cand, n);
      const auto rc = ngram_counts(ref, n);
      for (const auto& [gram, count] : cc) {
        const auto it = rc.find(gram);
        if (it != rc.end()) clipped[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
      if (static_cast<int>(cand.size()) >= n) {
        total[static_cast<std::size_t>(n - 1)] +=
            static_cast<double>(cand.size()) - n + 1;
      }
    }
  }

  const double bp =
      (cand_len >= ref_len || cand_len == 0.0) ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  std::vector<double> scores(static_cast<std::size_t>(max_n), 0.0);
  for (int k = 1; k <= max_n; ++k) {
    double log_sum = 0.0;
    bool zero = cand_len == 0.0;
    for (int n = 1; n <= k; ++n) {
      const double c = clipped[static_cast<std::size_t>(n - 1)];
      const double t = total[static_cast<std::size_t>(n - 1)];
      if (c <= 0.0 || t <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(c / t);
    }
    scores[static_cast<std::size_t>(k - 1)] = zero ? 0.0 : bp * std::exp(log_sum / k);
  }
  return scores;
}

namespace {

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                      : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double rouge_l_pair(const TokenSeq& candidate, const TokenSeq& reference) {
  if (reference.empty()) throw contract_error("rouge_l: empty reference");
  if (candidate.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  constexpr double beta = 1.2;
  return (1.0 + beta * beta) * p * r / (r + beta * beta * p);
}

double rouge_l(const std::vector<TokenSeq>& candidates,
               const std::vector<TokenSeq>& references) {
  check_corpus(candidates, references, "rouge_l");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    sum += rouge_l_pair(candidates[i], references[i]);
  }
  return sum / static_cast<double>(candidates.size());
}

namespace {

constexpr int kInfChunks = 1 << 20;

struct AlignSearch {
  const TokenSeq& cand;
  const TokenSeq& ref;
  int required;  // maximum achievable matches
  std::unordered_map<std::uint64_t, int> memo;

  // remaining achievable matches from candidate position ci with `mask` of
  // used reference slots
  int upper_bound(std::size_t ci, std::uint32_t mask) const {
    std::unordered_map<std::string, int> cand_left;
    for (std::size_t i = ci; i < cand.size(); ++i) ++cand_left[cand[i]];
    std::unordered_map<std::string, int> ref_left;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!(mask & (1u << j))) ++ref_left[ref[j]];
    }
    int total = 0;
    for (const auto& [w, c] : cand_left) {
      const auto it = ref_left.find(w);
      if (it != ref_left.end()) total += std::min(c, it->second);
    }
    return total;
  }

  // min chunks completing from (ci, mask, adj); adj is the reference slot
  // matched by candidate position ci-1, or -1
  int solve(std::size_t ci, std::uint32_t mask, int adj) {
    const int done = static_cast<int>(__builtin_popcount(mask));
    if (done + upper_bound(ci, mask) < required) return kInfChunks;
    if (ci == cand.size()) return 0;
    const std::uint64_t key = static_cast<std::uint64_t>(mask) |
                              (static_cast<std::uint64_t>(ci) << 32) |
                              (static_cast<std::uint64_t>(adj + 1) << 48);
    const auto it = memo.find(key);
    if (it != memo.end()) return it->second;

    int best = solve(ci + 1, mask, -1);  // leave ci unmatched
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (mask & (1u << j)) continue;
      if (ref[j] != cand[ci]) continue;
      const int new_chunk = (adj == static_cast<int>(j) - 1) ? 0 : 1;
      const int rest = solve(ci + 1, mask | (1u << j), static_cast<int>(j));
      if (rest < kInfChunks) best = std::min(best, new_chunk + rest);
    }
    memo[key] = best;
    return best;
  }
};

}  // namespace

MeteorAlignment meteor_align(const TokenSeq& candidate, const TokenSeq& reference) {
  std::unordered_map<std::string, int> cc, rc;
  for (const auto& t : candidate) ++cc[t];
  for (const auto& t : reference) ++rc[t];
  int matches = 0;
  for (const auto& [w, c] : cc) {
    const auto it = rc.find(w);
    if (it != rc.end()) matches += std::min(c, it->second);
  }
  if (matches == 0) return {0, 0};
  if (reference.size() > 31) throw contract_error("meteor: reference longer than 31 tokens");
  AlignSearch search{candidate, reference, matches, {}};
  const int chunks = search.solve(0, 0, -1);
  return {matches, chunks};
}

double meteor_exact_pair(const TokenSeq& candidate, const TokenSeq& reference) {
  if (reference.empty()) throw contract_error("meteor: empty reference");
  if (candidate.empty()) return 0.0;
  const MeteorAlignment a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frac = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frac * frac * frac;
  return f_mean * (1.0 - penalty);
}

double meteor_exact(const std::vector<TokenSeq>& candidates,
                    const std::vector<TokenSeq>& references) {
  check_corpus(candidates, references, "meteor");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    sum += meteor_exact_pair(candidates[i], references[i]);
  }
  return sum / static_cast<double>(candidates.size());
}

double cider(const std::vector<TokenSeq>& candidates,
             const std::vector<TokenSeq>& references) {
  check_corpus(candidates, references, "cider");
  const double corpus_size = static_cast<double>(references.size());
  double score = 0.0;
  for (int n = 1; n <= 4; ++n) {
    // document frequencies over the reference corpus
    std::unordered_map<std::string, int> df;
    std::vector<std::unordered_map<std::string, int>> ref_counts;
    ref_counts.reserve(references.size());
    for (const TokenSeq& ref : references) {
      ref_counts.push_back(ngram_counts(ref, n));
      for (const auto& [gram, count] : ref_counts.back()) ++df[gram];
    }
    auto idf = [&](const std::string& gram) {
      const auto it = df.find(gram);
      const double d = (it == df.end()) ? 0.0 : static_cast<double>(it->second);
      return std::log(corpus_size / (1.0 + d));
    };

    double order_sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto cc = ngram_counts(candidates[i], n);
      const auto& rc = ref_counts[i];
      double dot = 0.0, cnorm = 0.0, rnorm = 0.0;
      for (const auto& [gram, count] : cc) {
        const double w = count * idf(gram);
        cnorm += w * w;
        const auto it = rc.find(gram);
        if (it != rc.end()) dot += w * (it->second * idf(gram));
      }
      for (const auto& [gram, count] : rc) {
        const double w = count * idf(gram);
        rnorm += w * w;
      }
      if (cnorm > 0.0 && rnorm > 0.0) {
        order_sum += dot / (std::sqrt(cnorm) * std::sqrt(rnorm));
      }
    }
    score += 10.0 * order_sum / static_cast<double>(candidates.size());
  }
  return score / 4.0;
}

double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

const std::vector<std::string>& ScoreMatrix::metric_names() {
  static const std::vector<std::string> names = {"bleu1",  "bleu2",   "bleu3", "bleu4",
                                                 "meteor", "rouge_l", "cider", "entropy"};
  return names;
}

void ScoreMatrix::set(int checkpoint, int task, const std::string& metric, double value) {
  cells_[{checkpoint, task, metric}] = value;
}

std::optional<double> ScoreMatrix::get(int checkpoint, int task,
                                       const std::string& metric) const {
  const auto it = cells_.find({checkpoint, task, metric});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

int ScoreMatrix::max_checkpoint() const {
  int best = 0;
  for (const auto& [key, value] : cells_) best = std::max(best, std::get<0>(key));
  return best;
}

int ScoreMatrix::max_task() const {
  int best = 0;
  for (const auto& [key, value] : cells_) best = std::max(best, std::get<1>(key));
  return best;
}

void ScoreMatrix::write_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("score matrix: cannot open " + path + " for writing");
  os << "checkpoint,task,metric,value\n";
  for (const auto& [key, value] : cells_) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << buf
       << '\n';
  }
  if (!os) throw data_error("score matrix: write failed for " + path);
}

ScoreMatrix ScoreMatrix::read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("score matrix: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "checkpoint,task,metric,value") {
    throw data_error("score matrix: bad header in " + path);
  }
  ScoreMatrix m;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string t, j, metric, value;
    if (!std::getline(ss, t, ',') || !std::getline(ss, j, ',') ||
        !std::getline(ss, metric, ',') || !std::getline(ss, value)) {
      throw data_error("score matrix: malformed line " + std::to_string(lineno) + " in " + path);
    }
    m.set(std::stoi(t), std::stoi(j), metric, std::stod(value));
  }
  return m;
}

double matrix_average(const ScoreMatrix& matrix, const std::string& metric) {
  const int n = matrix.max_checkpoint();
  const int tasks = matrix.max_task();
  if (n < 1 || tasks < 1) throw contract_error("matrix_average: empty score matrix");
  double sum = 0.0;
  for (int j = 1; j <= tasks; ++j) {
    const auto v = matrix.get(n, j, metric);
    if (!v.has_value()) {
      throw contract_error("matrix_average: missing final score for task " + std::to_string(j));
    }
    sum += *v;
  }
  return sum / tasks;
}

Aggregates aggregates(const ScoreMatrix& matrix, const std::string& metric) {
  const int n = matrix.max_checkpoint();
  if (n < 2) throw contract_error("aggregates: forgetting undefined for fewer than 2 checkpoints");
  Aggregates out;
  out.average = matrix_average(matrix, metric);
  double sum = 0.0;
  for (int j = 1; j < n; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (int t = j; t < n; ++t) {
      const auto v = matrix.get(t, j, metric);
      if (!v.has_value()) {
        throw contract_error("aggregates: missing score a_{" + std::to_string(t) + "," +
                             std::to_string(j) + "}");
      }
      best = std::max(best, *v);
    }
    const auto final_v = matrix.get(n, j, metric);
    if (!final_v.has_value()) {
      throw contract_error("aggregates: missing final score for task " + std::to_string(j));
    }
    sum += best - *final_v;
  }
  out.forgetting = sum / (n - 1);
  return out;
}

}  // namespace clvqa
