#pragma once

// Covisibility filtering without a visibility graph: database images are
// linked whenever one query feature matches into both, and pose estimation
// runs per connected component.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/lift.hpp"
#include "meshloc/ransac.hpp"

namespace meshloc {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

// Partition of match indices by connected component of the on-the-fly
// image graph. Components are ordered by their first match index, and
// indices inside a component stay in input order.
inline std::vector<std::vector<std::size_t>> covis_components(std::span<const Match2D3D> matches) {
  std::map<ImageId, std::size_t> node;
  for (const Match2D3D& m : matches) {
    if (m.sources.empty()) throw Error("covisibility: match without database sources");
    for (const Observation& o : m.sources) node.try_emplace(o.db_image, node.size());
  }
  UnionFind uf(node.size());
  for (const auto& group : group_by_query(matches)) {
    const std::size_t anchor = node.at(matches[group.front()].sources.front().db_image);
    for (std::size_t i : group)
      for (const Observation& o : matches[i].sources) uf.unite(anchor, node.at(o.db_image));
  }

  std::map<std::size_t, std::size_t> component_of_root;
  std::vector<std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const std::size_t root = uf.find(node.at(matches[i].sources.front().db_image));
    const auto [it, inserted] = component_of_root.try_emplace(root, components.size());
    if (inserted) components.emplace_back();
    components[it->second].push_back(i);
  }
  return components;
}

// Runs loransac_pose on all matches, or per covisibility component when
// `use_filter` is set. Components with fewer than four matches are skipped;
// the winner has the most inliers, then the lowest MSAC score, then the lowest
// component id. Inlier indices refer to the full match list.
inline std::optional<LocalizationResult> estimate_with_covisibility(std::span<const Match2D3D> matches,
                                                                    const CameraIntrinsics& k,
                                                                    const RansacConfig& cfg, bool use_filter) {
  if (!use_filter) return loransac_pose(matches, k, cfg);

  std::optional<LocalizationResult> best;
  const auto components = covis_components(matches);
  std::vector<Match2D3D> subset;
  for (std::size_t cid = 0; cid < components.size(); ++cid) {
    const auto& idx = components[cid];
    if (idx.size() < 4) continue;
    subset.clear();
    for (std::size_t i : idx) subset.push_back(matches[i]);
    auto result = loransac_pose(subset, k, cfg);
    if (!result) continue;
    for (std::size_t& i : result->inliers) i = idx[i];
    result->component_id = cid;
    const auto better = [](const LocalizationResult& a, const LocalizationResult& b) {
      if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
      if (a.msac_score != b.msac_score) return a.msac_score < b.msac_score;
      return a.component_id < b.component_id;
    };
    if (!best || better(*result, *best)) best = std::move(result);
  }
  return best;
}

}  // namespace meshloc
