#include "clvqa/tfidf.hpp"

#include <cmath>
#include <unordered_map>

#include "clvqa/errors.hpp"

namespace clvqa {

std::pair<TfidfModel, Tensor> tfidf_fit_transform(
    const std::vector<std::vector<std::string>>& documents) {
  const int n = static_cast<int>(documents.size());
  if (n == 0) throw contract_error("tfidf_fit_transform: empty corpus");

  TfidfModel model;
  model.document_count = n;
  for (const auto& doc : documents) {
    for (const std::string& term : doc) model.vocabulary.emplace(term, 0);
  }
  int col = 0;
  for (auto& [term, index] : model.vocabulary) index = col++;
  const int v = col;

  std::vector<int> df(static_cast<std::size_t>(v), 0);
  std::vector<std::unordered_map<int, int>> counts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (const std::string& term : documents[static_cast<std::size_t>(i)]) {
      ++counts[static_cast<std::size_t>(i)][model.vocabulary.at(term)];
    }
    for (const auto& [column, count] : counts[static_cast<std::size_t>(i)]) {
      ++df[static_cast<std::size_t>(column)];
    }
  }

  model.idf.resize(static_cast<std::size_t>(v));
  for (int j = 0; j < v; ++j) {
    model.idf[static_cast<std::size_t>(j)] =
        std::log((1.0 + n) / (1.0 + df[static_cast<std::size_t>(j)])) + 1.0;
  }

  Tensor matrix({n, v});
  for (int i = 0; i < n; ++i) {
    const double len = static_cast<double>(documents[static_cast<std::size_t>(i)].size());
    if (len == 0.0) continue;  // empty document keeps a zero row
    double norm2 = 0.0;
    for (const auto& [column, count] : counts[static_cast<std::size_t>(i)]) {
      const double w = (count / len) * model.idf[static_cast<std::size_t>(column)];
      matrix.at(i, column) = w;
      norm2 += w * w;
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (int j = 0; j < v; ++j) matrix.at(i, j) *= inv;
    }
  }
  return {std::move(model), std::move(matrix)};
}

}  // namespace clvqa
