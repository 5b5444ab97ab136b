#include "clvqa/memory.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "clvqa/errors.hpp"
#include "clvqa/kmeans.hpp"
#include "clvqa/tfidf.hpp"

namespace clvqa {
namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// largest-remainder apportionment of `target` among buckets, capped at the
// bucket size; deviates from exact proportionality by less than one entry
std::vector<int> apportion(const std::vector<int>& sizes, int target) {
  const long long total = [&] {
    long long t = 0;
    for (int s : sizes) t += s;
    return t;
  }();
  std::vector<int> out(sizes.size(), 0);
  if (total == 0 || target <= 0) return out;
  std::vector<std::pair<long long, int>> rema;  // (-fraction numerator, bucket)
  int assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const long long num = static_cast<long long>(sizes[i]) * target;
    out[i] = static_cast<int>(num / total);
    assigned += out[i];
    rema.emplace_back(-(num % total), static_cast<int>(i));
  }
  std::sort(rema.begin(), rema.end());
  int rest = target - assigned;
  for (const auto& [negfrac, i] : rema) {
    if (rest == 0) break;
    if (negfrac == 0) break;  // no fractional parts left
    if (out[static_cast<std::size_t>(i)] < sizes[static_cast<std::size_t>(i)]) {
      ++out[static_cast<std::size_t>(i)];
      --rest;
    }
  }
  return out;
}

}  // namespace

std::map<int, int> MemoryBuffer::per_task_counts() const {
  std::map<int, int> counts;
  for (const MemoryEntry& e : entries) ++counts[e.source_task];
  return counts;
}

void MemoryBuffer::validate() const {
  if (static_cast<int>(entries.size()) > capacity) {
    throw contract_error("memory buffer exceeds capacity");
  }
  std::set<std::string> ids;
  for (const MemoryEntry& e : entries) {
    if (e.source_task < 1) throw contract_error("memory entry with invalid task provenance");
    if (e.cluster_id < 0) throw contract_error("memory entry with invalid cluster provenance");
    if (!ids.insert(e.sample.id).second) {
      throw contract_error("duplicate sample id in memory buffer: " + e.sample.id);
    }
  }
  for (const auto& [task, count] : per_task_counts()) {
    auto it = share.find(task);
    if (it == share.end()) throw contract_error("memory task missing from share map");
    if (count > it->second) throw contract_error("memory task count exceeds its share");
  }
}

void MemoryBuffer::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("memory buffer: cannot open " + path + " for writing");
  for (const MemoryEntry& e : entries) {
    os << e.source_task << '\t' << e.cluster_id << '\t' << join(e.sample.scene_tokens) << '\t'
       << join(e.sample.question_tokens) << '\t' << join(e.sample.answer_tokens) << '\n';
  }
  if (!os) throw data_error("memory buffer: write failed for " + path);
}

std::vector<int> per_cluster_quota(const std::vector<int>& cluster_sizes, int total_select) {
  if (cluster_sizes.empty()) throw contract_error("per_cluster_quota: empty size list");
  if (total_select < 0) throw contract_error("per_cluster_quota: negative selection size");
  long long total = 0;
  for (int s : cluster_sizes) {
    if (s <= 0) throw contract_error("per_cluster_quota: cluster sizes must be positive");
    total += s;
  }
  std::vector<int> quotas(cluster_sizes.size());
  for (std::size_t c = 0; c < cluster_sizes.size(); ++c) {
    const long long q = static_cast<long long>(cluster_sizes[c]) * total_select / total;
    quotas[c] = static_cast<int>(std::min<long long>(q, cluster_sizes[c]));
  }
  return quotas;
}

std::vector<CuratedEntry> curate_task_memory(const std::vector<Sample>& dataset, int s_task,
                                             int k, Rng& rng) {
  if (dataset.empty()) throw contract_error("curate_task_memory: empty dataset");
  if (s_task > static_cast<int>(dataset.size())) {
    throw contract_error("curate_task_memory: selection size exceeds dataset size");
  }
  if (k < 1) throw contract_error("curate_task_memory: k must be at least 1");
  const int k_eff = std::min<int>(k, static_cast<int>(dataset.size()));

  std::vector<std::vector<std::string>> questions;
  questions.reserve(dataset.size());
  for (const Sample& s : dataset) questions.push_back(s.question_tokens);
  auto [model, matrix] = tfidf_fit_transform(questions);
  const Clustering clustering = kmeans(matrix, k_eff, rng);

  std::vector<std::vector<int>> members(static_cast<std::size_t>(k_eff));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    members[static_cast<std::size_t>(clustering.assignments[i])].push_back(
        static_cast<int>(i));
  }
  std::vector<int> sizes;
  for (const auto& m : members) sizes.push_back(static_cast<int>(m.size()));
  const std::vector<int> quotas = per_cluster_quota(sizes, s_task);

  std::vector<CuratedEntry> out;
  for (int c = 0; c < k_eff; ++c) {
    const auto& mem = members[static_cast<std::size_t>(c)];
    std::vector<int> picks =
        rng.sample_without_replacement(static_cast<int>(mem.size()), quotas[static_cast<std::size_t>(c)]);
    std::sort(picks.begin(), picks.end());
    for (int p : picks) {
      out.push_back({dataset[static_cast<std::size_t>(mem[static_cast<std::size_t>(p)])], c});
    }
  }
  return out;
}

MemoryBuffer populate_memory(const std::vector<Sample>& first_task_data, int capacity, int k,
                             Rng& rng) {
  if (capacity < 1) throw contract_error("populate_memory: capacity must be positive");
  const int want = std::min<int>(capacity, static_cast<int>(first_task_data.size()));
  MemoryBuffer buffer;
  buffer.capacity = capacity;
  buffer.share[1] = want;
  for (CuratedEntry& e : curate_task_memory(first_task_data, want, k, rng)) {
    buffer.entries.push_back({std::move(e.sample), 1, e.cluster_id});
  }
  buffer.validate();
  return buffer;
}

RefreshResult refresh_memory(const MemoryBuffer& buffer,
                             const std::vector<Sample>& new_task_data, int task_index, int k,
                             Rng& rng) {
  if (task_index < 2) throw contract_error("refresh_memory: task index must be at least 2");
  const int share = buffer.capacity / task_index;

  RefreshResult result;
  result.buffer.capacity = buffer.capacity;

  // group existing entries by (task, cluster), preserving stored order
  std::map<int, std::map<int, std::vector<const MemoryEntry*>>> by_task;
  for (const MemoryEntry& e : buffer.entries) {
    by_task[e.source_task][e.cluster_id].push_back(&e);
  }

  for (const auto& [task, clusters] : by_task) {
    int count = 0;
    std::vector<int> sizes;
    for (const auto& [cluster, members] : clusters) {
      sizes.push_back(static_cast<int>(members.size()));
      count += static_cast<int>(members.size());
    }
    std::vector<int> keep_per_cluster;
    if (count <= share) {
      keep_per_cluster = sizes;  // already within the new share
    } else {
      keep_per_cluster = apportion(sizes, share);
    }
    std::size_t ci = 0;
    for (const auto& [cluster, members] : clusters) {
      std::vector<int> picks = rng.sample_without_replacement(
          static_cast<int>(members.size()), keep_per_cluster[ci]);
      std::sort(picks.begin(), picks.end());
      for (int p : picks) result.buffer.entries.push_back(*members[static_cast<std::size_t>(p)]);
      ++ci;
    }
    result.buffer.share[task] = share;
  }

  const int want_new = std::min<int>(share, static_cast<int>(new_task_data.size()));
  std::vector<CuratedEntry> curated = curate_task_memory(new_task_data, want_new, k, rng);
  result.shortfall = share - static_cast<int>(curated.size());
  for (CuratedEntry& e : curated) {
    result.buffer.entries.push_back({std::move(e.sample), task_index, e.cluster_id});
  }
  result.buffer.share[task_index] = share;
  result.buffer.validate();
  return result;
}

}  // namespace clvqa
