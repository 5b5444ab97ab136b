#pragma once

#include <vector>

#include "clvqa/rng.hpp"
#include "clvqa/tensor.hpp"

namespace clvqa {

struct Clustering {
  int k = 0;
  std::vector<int> assignments;  // sample -> cluster, each in [0, k)
  Tensor centroids;              // [k x V]
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;  // after each assignment pass
};

// k-means++ seeding followed by Lloyd iterations until the assignment
// reaches a fixpoint or max_iter. Empty clusters are repaired by stealing
// the farthest point from the largest cluster.
Clustering kmeans(const Tensor& matrix, int k, Rng& rng, int max_iter = 100);

}  // namespace clvqa
