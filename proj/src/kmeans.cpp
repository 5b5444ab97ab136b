#include "clvqa/kmeans.hpp"

#include <algorithm>
#include <cmath>

#include "clvqa/errors.hpp"

namespace clvqa {
namespace {

double dist2(const Tensor& m, int row, const Tensor& c, int crow) {
  const int v = m.cols();
  const double* a = &m.data[static_cast<std::size_t>(row) * v];
  const double* b = &c.data[static_cast<std::size_t>(crow) * v];
  double acc = 0.0;
  for (int j = 0; j < v; ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

void copy_row(const Tensor& src, int srow, Tensor& dst, int drow) {
  const int v = src.cols();
  std::copy(src.data.begin() + static_cast<long>(srow) * v,
            src.data.begin() + static_cast<long>(srow + 1) * v,
            dst.data.begin() + static_cast<long>(drow) * v);
}

}  // namespace

Clustering kmeans(const Tensor& matrix, int k, Rng& rng, int max_iter) {
  const int n = matrix.rows();
  if (k < 1) throw contract_error("kmeans: k must be at least 1");
  if (k > n) {
    throw contract_error("kmeans: k=" + std::to_string(k) + " exceeds sample count " +
                         std::to_string(n));
  }

  Clustering result;
  result.k = k;
  result.centroids = Tensor({k, matrix.cols()});

  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n));
  copy_row(matrix, rng.index(static_cast<std::size_t>(n)), result.centroids, 0);
  for (int i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = dist2(matrix, i, result.centroids, 0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    int pick;
    if (total <= 0.0) {
      pick = rng.index(static_cast<std::size_t>(n));
    } else {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    }
    copy_row(matrix, pick, result.centroids, c);
    for (int i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], dist2(matrix, i, result.centroids, c));
    }
  }

  std::vector<int> assignments(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    // assignment: nearest centroid, ties toward the lowest index
    std::vector<int> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(matrix, i, result.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double d = dist2(matrix, i, result.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      next[static_cast<std::size_t>(i)] = best;
    }

    // repair empty clusters: steal the farthest point from the largest cluster
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : next) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] != 0) continue;
      int largest = 0;
      for (int c2 = 1; c2 < k; ++c2) {
        if (counts[static_cast<std::size_t>(c2)] > counts[static_cast<std::size_t>(largest)]) {
          largest = c2;
        }
      }
      int farthest = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (next[static_cast<std::size_t>(i)] != largest) continue;
        const double d = dist2(matrix, i, result.centroids, largest);
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      next[static_cast<std::size_t>(farthest)] = c;
      copy_row(matrix, farthest, result.centroids, c);
      --counts[static_cast<std::size_t>(largest)];
      ++counts[static_cast<std::size_t>(c)];
    }

    result.iterations = iter + 1;
    double pass_inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      pass_inertia += dist2(matrix, i, result.centroids, next[static_cast<std::size_t>(i)]);
    }
    result.inertia_history.push_back(pass_inertia);
    const bool fixpoint = (iter > 0 && next == assignments);
    assignments = std::move(next);
    if (fixpoint) break;
    if (iter + 1 == max_iter) break;  // keep assignments consistent with centroids

    // update: centroid = mean of its members
    Tensor sums({k, matrix.cols()});
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = assignments[static_cast<std::size_t>(i)];
      ++sizes[static_cast<std::size_t>(c)];
      for (int j = 0; j < matrix.cols(); ++j) sums.at(c, j) += matrix.at(i, j);
    }
    for (int c = 0; c < k; ++c) {
      for (int j = 0; j < matrix.cols(); ++j) {
        result.centroids.at(c, j) = sums.at(c, j) / sizes[static_cast<std::size_t>(c)];
      }
    }
  }

  result.assignments = assignments;
  result.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    result.inertia += dist2(matrix, i, result.centroids, assignments[static_cast<std::size_t>(i)]);
  }
  return result;
}

}  // namespace clvqa
