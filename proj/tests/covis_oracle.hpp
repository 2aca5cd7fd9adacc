#pragma once

// Brute-force covisibility: transitive closure of the image adjacency built
// from query features, compared against a union-find partition.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "meshloc/covis.hpp"

namespace meshloc::test {

// Random match sets over `images` database images. Features sit at distinct
// pixel centers; each carries 1-3 matches with 1-2 sources each.
inline std::vector<Match2D3D> random_covis_matches(std::mt19937_64& rng, std::size_t features, ImageId images) {
  std::uniform_int_distribution<int> per_feature(1, 3), per_match(1, 2);
  std::uniform_int_distribution<ImageId> image(0, images - 1);
  std::vector<Match2D3D> out;
  for (std::size_t f = 0; f < features; ++f) {
    const Vec2 q(static_cast<double>(f) + 0.5, static_cast<double>(f % 7) + 0.5);
    const int nm = per_feature(rng);
    for (int m = 0; m < nm; ++m) {
      Match2D3D match;
      match.query_pt = q;
      const int ns = per_match(rng);
      for (int s = 0; s < ns; ++s) match.sources.push_back({image(rng), Vec2::Zero()});
      out.push_back(std::move(match));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// Empty string when `components` is the closure partition, else a reason.
inline std::string check_covis_partition(const std::vector<Match2D3D>& matches,
                                         const std::vector<std::vector<std::size_t>>& components) {
  ImageId images = 0;
  for (const auto& m : matches)
    for (const auto& o : m.sources) images = std::max<ImageId>(images, o.db_image + 1);
  std::vector<std::vector<bool>> reach(images, std::vector<bool>(images, false));
  for (ImageId i = 0; i < images; ++i) reach[i][i] = true;
  // Direct edges: all sources of all matches of one feature.
  for (std::size_t i = 0; i < matches.size(); ++i)
    for (std::size_t j = 0; j < matches.size(); ++j) {
      if (query_key(matches[i].query_pt) != query_key(matches[j].query_pt)) continue;
      for (const auto& a : matches[i].sources)
        for (const auto& b : matches[j].sources) reach[a.db_image][b.db_image] = true;
    }
  for (ImageId k = 0; k < images; ++k)
    for (ImageId i = 0; i < images; ++i)
      for (ImageId j = 0; j < images; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;

  std::vector<int> comp_of(matches.size(), -1);
  for (std::size_t c = 0; c < components.size(); ++c) {
    if (components[c].empty()) return "empty component";
    for (std::size_t i : components[c]) {
      if (i >= matches.size()) return "index out of range";
      if (comp_of[i] != -1) return "index " + std::to_string(i) + " appears twice";
      comp_of[i] = static_cast<int>(c);
    }
  }
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (comp_of[i] == -1) return "index " + std::to_string(i) + " missing";
  for (std::size_t i = 0; i < matches.size(); ++i)
    for (std::size_t j = 0; j < matches.size(); ++j) {
      const bool linked = reach[matches[i].sources.front().db_image][matches[j].sources.front().db_image];
      if (linked != (comp_of[i] == comp_of[j]))
        return "matches " + std::to_string(i) + " and " + std::to_string(j) + " disagree with the closure";
    }
  return {};
}

}  // namespace meshloc::test
