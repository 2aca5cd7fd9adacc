// meshloc: localize, render, evaluate, synth.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "meshloc/pipeline.hpp"
#include "meshloc/synth.hpp"

namespace {

using meshloc::PipelineConfig;

struct ConfigKey {
  const char* key;
  const char* help;
  bool boolean = false;
};

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"mesh", "triangle mesh (PLY)"},
      {"db_views", "database views file"},
      {"queries", "query cameras file"},
      {"pairs", "retrieval pairs file"},
      {"matches_dir", "directory of <query>__<db>.txt match files"},
      {"depth_cache", "directory with <db>.dmap depth maps; missing ones are rendered"},
      {"output", "estimated poses file"},
      {"diagnostics", "per-query diagnostics JSON"},
      {"render_dir", "output directory of render"},
      {"strategy", "individual | merge | triangulate"},
      {"covisibility", "estimate per covisibility component", true},
      {"position_averaging", "refine the position by grid averaging", true},
      {"pa_d_vol", "averaging half extent (m)"},
      {"pa_d_step", "averaging grid step (m)"},
      {"pa_inliers_only", "count averaging support among RANSAC inliers only", true},
      {"inlier_px", "inlier threshold (px)"},
      {"min_iterations", "minimum RANSAC iterations"},
      {"max_iterations", "maximum RANSAC iterations"},
      {"confidence", "RANSAC confidence"},
      {"cauchy_scale_px", "Cauchy loss scale (px), defaults to inlier_px"},
      {"render_style", "depth | colored | tricolor | ao"},
      {"top_k", "retrieved database images used per query"},
      {"threads", "worker threads"},
      {"seed", "random seed"},
  };
  return keys;
}

std::string flag_name(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

// Config options shared by subcommands. Values given on the command line
// override the config file.
struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App& app, const std::vector<std::string>& keys) {
    app.add_option("--config", config_file, "declarative config file (key = value lines)")->check(CLI::ExistingFile);
    for (const ConfigKey& k : config_keys()) {
      if (std::find(keys.begin(), keys.end(), k.key) == keys.end()) continue;
      CLI::Option* opt = app.add_option(flag_name(k.key), values[k.key], k.help);
      if (k.boolean) opt->expected(0, 1)->default_str("true");
      options[k.key] = opt;
    }
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config_file.empty()) meshloc::load_config_file(cfg, config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      std::string v = values.at(key);
      if (v.empty()) v = "true";
      meshloc::set_config_value(cfg, key, v);
    }
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> all_keys() {
  std::vector<std::string> out;
  for (const ConfigKey& k : config_keys()) out.push_back(k.key);
  return out;
}

int run_localize(const ConfigOptions& opts) {
  const PipelineConfig cfg = opts.build();
  const meshloc::LocalizationContext ctx(cfg);
  const auto results = meshloc::localize_all(ctx);
  meshloc::write_outcomes(cfg, results);
  std::size_t localized = 0;
  for (const auto& r : results) {
    if (r.pose) ++localized;
    for (const std::string& w : r.diagnostics.warnings) std::cerr << "warning: " << r.name << ": " << w << "\n";
  }
  std::cout << "localized " << localized << " / " << results.size() << " queries\n";
  return 0;
}

int run_render(const ConfigOptions& opts) {
  const PipelineConfig cfg = opts.build();
  meshloc::render_db_views(cfg);
  std::cout << "rendered database views to " << cfg.render_dir.string() << "\n";
  return 0;
}

meshloc::EvalThresholds parse_thresholds(const std::string& s) {
  if (s == "aachen") return meshloc::EvalThresholds::aachen();
  if (s == "12scenes") return meshloc::EvalThresholds::twelve_scenes();
  // m1,deg1;m2,deg2;...
  meshloc::EvalThresholds t;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t end = std::min(s.find(';', pos), s.size());
    const std::string level = s.substr(pos, end - pos);
    const std::size_t comma = level.find(',');
    if (comma == std::string::npos) throw meshloc::Error("threshold level '" + level + "' is not 'meters,degrees'");
    t.levels.emplace_back(std::stod(level.substr(0, comma)), std::stod(level.substr(comma + 1)));
    pos = end + 1;
  }
  t.validate();
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh-based visual localization"};
  app.require_subcommand(1);

  ConfigOptions localize_opts;
  CLI::App* localize = app.add_subcommand("localize", "estimate query poses from 2D-2D matches");
  localize_opts.add(*localize, all_keys());

  ConfigOptions render_opts;
  CLI::App* render = app.add_subcommand("render", "render images and depth maps of the database views");
  render_opts.add(*render, {"mesh", "db_views", "render_dir", "render_style", "threads"});

  std::string estimates, gt, thresholds = "aachen";
  CLI::App* eval = app.add_subcommand("evaluate", "percentage of queries within pose error thresholds");
  eval->add_option("--estimates", estimates, "estimated poses")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "ground-truth poses")->required()->check(CLI::ExistingFile);
  eval->add_option("--thresholds", thresholds, "aachen | 12scenes | 'm,deg;m,deg;...'")->capture_default_str();

  std::string synth_out;
  std::uint64_t synth_seed = 0;
  meshloc::SceneParams scene_params;
  meshloc::ExportParams export_params;
  double focal = scene_params.intrinsics.fx;
  CLI::App* synth = app.add_subcommand("synth", "export a synthetic room benchmark");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "scene and match seed")->capture_default_str();
  synth->add_option("--queries", scene_params.num_queries, "number of queries")->capture_default_str();
  synth->add_option("--db-views", scene_params.num_db_views, "number of database views")->capture_default_str();
  synth->add_option("--min-triangles", scene_params.min_triangles, "room mesh triangle budget")->capture_default_str();
  synth->add_option("--boxes", scene_params.num_boxes, "box obstacles")->capture_default_str();
  synth->add_option("--width", scene_params.intrinsics.width, "image width")->capture_default_str();
  synth->add_option("--height", scene_params.intrinsics.height, "image height")->capture_default_str();
  synth->add_option("--focal", focal, "focal length (px)")->capture_default_str();
  synth->add_option("--inliers", export_params.matches.n_inliers, "true features per query")->capture_default_str();
  synth->add_option("--outliers", export_params.matches.n_outliers, "outlier matches per query")->capture_default_str();
  synth->add_option("--noise", export_params.matches.noise_px, "pixel noise sigma")->capture_default_str();
  synth->add_option("--min-views", export_params.matches.min_views, "views each feature must be seen in")
      ->capture_default_str();
  synth->add_option("--max-views", export_params.matches.max_views, "matches per feature")->capture_default_str();
  synth->add_option("--top-k", export_params.top_k, "pairs listed per query")->capture_default_str();
  synth->add_option("--query-k1", export_params.query_k1, "radial distortion of query cameras")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (localize->parsed()) return run_localize(localize_opts);
    if (render->parsed()) return run_render(render_opts);
    if (eval->parsed()) {
      const auto t = parse_thresholds(thresholds);
      const auto pct = meshloc::evaluate_files(estimates, gt, t);
      for (std::size_t i = 0; i < pct.size(); ++i) {
        std::printf("%g m, %g deg: %.1f%%\n", t.levels[i].first, t.levels[i].second, pct[i]);
      }
      return 0;
    }
    if (synth->parsed()) {
      namespace fs = std::filesystem;
      scene_params.intrinsics.fx = scene_params.intrinsics.fy = focal;
      scene_params.intrinsics.cx = 0.5 * scene_params.intrinsics.width;
      scene_params.intrinsics.cy = 0.5 * scene_params.intrinsics.height;
      export_params.matches.seed = synth_seed;
      const auto scene = meshloc::generate_scene(scene_params, synth_seed);
      const fs::path dir = synth_out;
      meshloc::export_scene(dir, scene, export_params);

      PipelineConfig cfg = meshloc::exported_scene_config(dir);
      cfg.top_k = export_params.top_k;
      cfg.seed = synth_seed;
      meshloc::io_detail::write_file(dir / "config.txt", meshloc::format_config(cfg, dir));
      std::cout << "wrote synthetic benchmark to " << dir.string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
