#pragma once

#include <map>
#include <string>
#include <vector>

#include "clvqa/rng.hpp"
#include "clvqa/taskstream.hpp"

namespace clvqa {

struct MemoryEntry {
  Sample sample;
  int source_task = 0;  // 1-based task index
  int cluster_id = 0;
};

// Curated replay set. `share` holds the per-task target share; actual counts
// may fall short of a target by the quota-floor deficit (< k entries), which
// the trainer records as a shortfall.
struct MemoryBuffer {
  std::vector<MemoryEntry> entries;
  int capacity = 0;
  std::map<int, int> share;

  std::map<int, int> per_task_counts() const;
  void validate() const;

  // line format: task<TAB>cluster<TAB>scene tokens<TAB>question<TAB>answer
  void save(const std::string& path) const;
};

// quota_c = floor(size_c / total * total_select), capped at size_c
std::vector<int> per_cluster_quota(const std::vector<int>& cluster_sizes, int total_select);

struct CuratedEntry {
  Sample sample;
  int cluster_id = 0;
};

// TF-IDF over questions -> k-means -> proportional quotas -> seeded uniform
// sampling without replacement inside each cluster.
std::vector<CuratedEntry> curate_task_memory(const std::vector<Sample>& dataset, int s_task,
                                             int k, Rng& rng);

MemoryBuffer populate_memory(const std::vector<Sample>& first_task_data, int capacity, int k,
                             Rng& rng);

struct RefreshResult {
  MemoryBuffer buffer;
  int shortfall = 0;  // entries the new task could not fill
};

// Equal per-task shares floor(S/n): earlier tasks evict uniformly at random
// within clusters down to their share, the new task contributes a curated
// floor(S/n) slice.
RefreshResult refresh_memory(const MemoryBuffer& buffer,
                             const std::vector<Sample>& new_task_data, int task_index, int k,
                             Rng& rng);

}  // namespace clvqa
