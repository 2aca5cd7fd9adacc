#pragma once

// Text formats used by the localization pipeline.
//
//   database views  name qw qx qy qz tx ty tz MODEL width height params...
//   queries         name MODEL width height params...
//   pairs           query_name db_name
//   matches         "# qx qy dx dy [score]" header, then one match per line,
//                   stored as <query>__<db>.txt
//   poses           name qw qx qy qz tx ty tz
//
// Poses use the projective convention x_cam = R x + t with a Hamilton
// quaternion for R. Camera models: SIMPLE_PINHOLE (f cx cy), PINHOLE
// (fx fy cx cy), SIMPLE_RADIAL (f cx cy k), RADIAL (f cx cy k1 k2).
// Lines starting with '#' and blank lines are ignored everywhere.

#include <Eigen/Core>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "meshloc/error.hpp"
#include "meshloc/geom.hpp"

namespace meshloc {

struct PoseRecord {
  std::string name;
  Eigen::Vector4d qvec = {1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  Vec3 tvec = Vec3::Zero();

  Pose pose() const { return pose_from_projective(rotation_from_quaternion(qvec[0], qvec[1], qvec[2], qvec[3]), tvec); }

  static PoseRecord from_pose(std::string name, const Pose& pose) {
    const ProjectivePose p = pose_to_projective(pose);
    return {std::move(name), quaternion_from_rotation(p.rotation), p.translation};
  }

  friend bool operator==(const PoseRecord&, const PoseRecord&) = default;
};

struct DbViewRecord {
  std::string name;
  Pose pose;
  CameraIntrinsics intrinsics;
};

struct QueryRecord {
  std::string name;
  CameraIntrinsics intrinsics;
};

struct MatchRecord {
  Vec2 query_pt = Vec2::Zero();
  Vec2 db_pt = Vec2::Zero();
  std::optional<double> score;
};

namespace format_detail {

inline std::string fmt_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Calls `fn(tokens, line_offset)` for every non-comment line.
inline void for_each_line(const std::filesystem::path& path,
                          const std::function<void(const std::vector<std::string>&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string t; ss >> t;) tokens.push_back(std::move(t));
    try {
      fn(tokens, line_offset);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.message(), e.offset());
    } catch (const Error& e) {
      throw ParseError(path.string() + ": " + e.what(), line_offset);
    }
  }
}

inline double to_double(const std::string& s, std::size_t offset) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("malformed number '" + s + "'", offset);
  return v;
}

inline int to_int(const std::string& s, std::size_t offset) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("malformed integer '" + s + "'", offset);
  return v;
}

}  // namespace format_detail

// Parses "MODEL width height params..." starting at tokens[first].
inline CameraIntrinsics parse_camera(const std::vector<std::string>& tokens, std::size_t first, std::size_t offset) {
  using format_detail::to_double;
  if (tokens.size() < first + 3) throw ParseError("missing camera model", offset);
  const std::string& model = tokens[first];
  CameraIntrinsics k;
  k.width = format_detail::to_int(tokens[first + 1], offset);
  k.height = format_detail::to_int(tokens[first + 2], offset);
  std::vector<double> p;
  for (std::size_t i = first + 3; i < tokens.size(); ++i) p.push_back(to_double(tokens[i], offset));
  auto expect = [&](std::size_t n) {
    if (p.size() != n)
      throw ParseError(model + " expects " + std::to_string(n) + " parameters, got " + std::to_string(p.size()),
                       offset);
  };
  if (model == "SIMPLE_PINHOLE") {
    expect(3);
    k.fx = k.fy = p[0];
    k.cx = p[1];
    k.cy = p[2];
  } else if (model == "PINHOLE") {
    expect(4);
    k.fx = p[0];
    k.fy = p[1];
    k.cx = p[2];
    k.cy = p[3];
  } else if (model == "SIMPLE_RADIAL") {
    expect(4);
    k.fx = k.fy = p[0];
    k.cx = p[1];
    k.cy = p[2];
    k.distortion = {p[3]};
  } else if (model == "RADIAL") {
    expect(5);
    k.fx = k.fy = p[0];
    k.cx = p[1];
    k.cy = p[2];
    k.distortion = {p[3], p[4]};
  } else {
    throw ParseError("unsupported camera model '" + model + "'", offset);
  }
  try {
    k.validate();
  } catch (const Error& e) {
    throw ParseError(e.what(), offset);
  }
  return k;
}

inline std::string format_camera(const CameraIntrinsics& k) {
  using format_detail::fmt_double;
  std::string s;
  const std::string size = " " + std::to_string(k.width) + " " + std::to_string(k.height);
  if (k.distortion.empty() && k.fx == k.fy) {
    s = "SIMPLE_PINHOLE" + size + " " + fmt_double(k.fx);
  } else if (k.distortion.empty()) {
    s = "PINHOLE" + size + " " + fmt_double(k.fx) + " " + fmt_double(k.fy);
  } else if (k.fx != k.fy) {
    throw Error("radial camera models require fx == fy");
  } else {
    s = (k.distortion.size() == 1 ? "SIMPLE_RADIAL" : "RADIAL") + size + " " + fmt_double(k.fx);
  }
  s += " " + fmt_double(k.cx) + " " + fmt_double(k.cy);
  for (double d : k.distortion) s += " " + fmt_double(d);
  return s;
}

inline std::string format_pose(const PoseRecord& r) {
  using format_detail::fmt_double;
  std::string s = r.name;
  for (int i = 0; i < 4; ++i) s += " " + fmt_double(r.qvec[i]);
  for (int i = 0; i < 3; ++i) s += " " + fmt_double(r.tvec[i]);
  return s;
}

inline PoseRecord parse_pose_tokens(const std::vector<std::string>& t, std::size_t offset) {
  if (t.size() < 8) throw ParseError("pose line needs name qw qx qy qz tx ty tz", offset);
  PoseRecord r;
  r.name = t[0];
  for (int i = 0; i < 4; ++i) r.qvec[i] = format_detail::to_double(t[1 + i], offset);
  for (int i = 0; i < 3; ++i) r.tvec[i] = format_detail::to_double(t[5 + i], offset);
  if (!(r.qvec.norm() > 0.0)) throw ParseError("zero quaternion", offset);
  return r;
}

inline std::vector<PoseRecord> read_poses(const std::filesystem::path& path) {
  std::vector<PoseRecord> out;
  format_detail::for_each_line(path, [&](const auto& t, std::size_t off) {
    if (t.size() != 8) throw ParseError("pose line needs exactly 8 fields", off);
    out.push_back(parse_pose_tokens(t, off));
  });
  return out;
}

// Shortest decimal representation that round-trips every double exactly.
inline void write_poses(const std::filesystem::path& path, const std::vector<PoseRecord>& poses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const PoseRecord& r : poses) out << format_pose(r) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

inline std::vector<DbViewRecord> read_db_views(const std::filesystem::path& path) {
  std::vector<DbViewRecord> out;
  format_detail::for_each_line(path, [&](const auto& t, std::size_t off) {
    const PoseRecord r = parse_pose_tokens(t, off);
    out.push_back({r.name, r.pose(), parse_camera(t, 8, off)});
  });
  return out;
}

inline void write_db_views(const std::filesystem::path& path, const std::vector<DbViewRecord>& views) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "# name qw qx qy qz tx ty tz MODEL width height params...\n";
  for (const DbViewRecord& v : views)
    out << format_pose(PoseRecord::from_pose(v.name, v.pose)) << ' ' << format_camera(v.intrinsics) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

inline std::vector<QueryRecord> read_queries(const std::filesystem::path& path) {
  std::vector<QueryRecord> out;
  format_detail::for_each_line(path, [&](const auto& t, std::size_t off) {
    if (t.empty()) return;
    out.push_back({t[0], parse_camera(t, 1, off)});
  });
  return out;
}

inline void write_queries(const std::filesystem::path& path, const std::vector<QueryRecord>& queries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "# name MODEL width height params...\n";
  for (const QueryRecord& q : queries) out << q.name << ' ' << format_camera(q.intrinsics) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

using PairList = std::vector<std::pair<std::string, std::string>>;

inline PairList read_pairs(const std::filesystem::path& path) {
  PairList out;
  format_detail::for_each_line(path, [&](const auto& t, std::size_t off) {
    if (t.size() != 2) throw ParseError("pair line needs 'query_name db_name'", off);
    out.emplace_back(t[0], t[1]);
  });
  return out;
}

inline void write_pairs(const std::filesystem::path& path, const PairList& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [q, d] : pairs) out << q << ' ' << d << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

// File-name stem for an image name; path separators become '_'.
inline std::string file_stem(std::string_view name) {
  std::string s(name);
  for (char& c : s)
    if (c == '/' || c == '\\') c = '_';
  return s;
}

inline std::filesystem::path matches_path(const std::filesystem::path& dir, std::string_view query,
                                          std::string_view db) {
  return dir / (file_stem(query) + "__" + file_stem(db) + ".txt");
}

inline std::vector<MatchRecord> read_matches(const std::filesystem::path& path) {
  std::vector<MatchRecord> out;
  format_detail::for_each_line(path, [&](const auto& t, std::size_t off) {
    if (t.size() != 4 && t.size() != 5) throw ParseError("match line needs 'qx qy dx dy [score]'", off);
    using format_detail::to_double;
    MatchRecord m{{to_double(t[0], off), to_double(t[1], off)}, {to_double(t[2], off), to_double(t[3], off)}, {}};
    if (t.size() == 5) m.score = to_double(t[4], off);
    out.push_back(m);
  });
  return out;
}

inline void write_matches(const std::filesystem::path& path, const std::vector<MatchRecord>& matches) {
  using format_detail::fmt_double;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const bool scores = !matches.empty() && matches.front().score.has_value();
  out << (scores ? "# qx qy dx dy score\n" : "# qx qy dx dy\n");
  for (const MatchRecord& m : matches) {
    out << fmt_double(m.query_pt.x()) << ' ' << fmt_double(m.query_pt.y()) << ' ' << fmt_double(m.db_pt.x()) << ' '
        << fmt_double(m.db_pt.y());
    if (scores) out << ' ' << fmt_double(m.score.value_or(0.0));
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace meshloc
