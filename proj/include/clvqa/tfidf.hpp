#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clvqa/tensor.hpp"

namespace clvqa {

struct TfidfModel {
  std::map<std::string, int> vocabulary;  // term -> column, sorted terms
  std::vector<double> idf;
  int document_count = 0;
};

// tf = raw count / document length; idf = ln((1+N)/(1+df)) + 1 (smoothed);
// rows L2-normalized.
std::pair<TfidfModel, Tensor> tfidf_fit_transform(
    const std::vector<std::vector<std::string>>& documents);

}  // namespace clvqa
