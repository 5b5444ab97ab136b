#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace clvqa {

using TokenSeq = std::vector<std::string>;

// Corpus BLEU-1..max_n: clipped modified n-gram precision, geometric mean
// over orders, brevity penalty exp(1 - r/c) when c < r. A zero clipped count
// at any order zeroes that score.
std::vector<double> bleu(const std::vector<TokenSeq>& candidates,
                         const std::vector<TokenSeq>& references, int max_n = 4);

// LCS-based F measure with beta = 1.2
double rouge_l_pair(const TokenSeq& candidate, const TokenSeq& reference);
double rouge_l(const std::vector<TokenSeq>& candidates,
               const std::vector<TokenSeq>& references);

// Exact-match METEOR: unigram alignment maximizing matches then minimizing
// chunks; F_mean = 10PR/(R+9P), penalty = 0.5*(chunks/m)^3.
struct MeteorAlignment {
  int matches = 0;
  int chunks = 0;
};
MeteorAlignment meteor_align(const TokenSeq& candidate, const TokenSeq& reference);
double meteor_exact_pair(const TokenSeq& candidate, const TokenSeq& reference);
double meteor_exact(const std::vector<TokenSeq>& candidates,
                    const std::vector<TokenSeq>& references);

// TF-IDF n-gram cosine with idf = ln(|corpus| / (1 + df)) over the reference
// corpus; 10 * mean cosine per order, averaged over orders 1..4.
double cider(const std::vector<TokenSeq>& candidates,
             const std::vector<TokenSeq>& references);

// natural-log entropy with the 0*log(0) = 0 convention
double entropy(const std::vector<double>& probs);

// a_{t,j}: metric on task j's test set after training through checkpoint t
class ScoreMatrix {
 public:
  static const std::vector<std::string>& metric_names();

  void set(int checkpoint, int task, const std::string& metric, double value);
  std::optional<double> get(int checkpoint, int task, const std::string& metric) const;
  int max_checkpoint() const;
  int max_task() const;
  bool empty() const { return cells_.empty(); }

  void write_csv(const std::string& path) const;
  static ScoreMatrix read_csv(const std::string& path);

 private:
  std::map<std::tuple<int, int, std::string>, double> cells_;
};

struct Aggregates {
  double average = 0.0;
  double forgetting = 0.0;
};

// average = mean_j a_{N,j}; forgetting = mean over j < N of
// (max_{j<=t<N} a_{t,j} - a_{N,j}); requires the lower-triangular entries
double matrix_average(const ScoreMatrix& matrix, const std::string& metric);
Aggregates aggregates(const ScoreMatrix& matrix, const std::string& metric);

}  // namespace clvqa
