//==============================================================================
// Copyright 2026 The reloc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================

// Command-line front end: synth, build-db, retrieve, relocalize, evaluate,
// render-pano. Exit codes: 0 success, 1 internal error, 2 usage or input error.

#include "reloc/reloc.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;
using namespace reloc;

namespace
{

struct QueryInput
{
  std::int64_t id = 0;
  std::string name;
  fs::path path;
};

/// A directory lists its *.pgm / *.ppm / *.png files sorted by name; numeric
/// stems become query ids, other files are numbered in order.
std::vector<QueryInput> list_queries(const fs::path& p)
{
  std::vector<QueryInput> out;
  if (fs::is_regular_file(p))
  {
    out.push_back({0, p.filename().string(), p});
    return out;
  }
  if (!fs::is_directory(p))
    throw Error("query path not found: " + p.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p))
  {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".png"))
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw Error("no query images in " + p.string());
  for (std::size_t i = 0; i < files.size(); ++i)
  {
    const auto stem = files[i].stem().string();
    const bool numeric = !stem.empty() && std::all_of(stem.begin(), stem.end(), ::isdigit);
    out.push_back({numeric ? std::stoll(stem) : static_cast<std::int64_t>(i), files[i].filename().string(), files[i]});
  }
  return out;
}

std::ofstream open_output(const fs::path& p)
{
  if (p.has_parent_path())
    fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out)
    throw Error("cannot write " + p.string());
  return out;
}

/// Options shared by the commands that read a pipeline configuration.
struct ConfigOptions
{
  std::string file;
  std::vector<std::string> overrides;
  bool no_hec = false, no_equalization = false;
  bool no_covis_cluster = false, no_two_stage = false, no_covis_filter = false;

  void add_map_flags(CLI::App* app)
  {
    app->add_flag("--no-hec", no_hec, "Render faces without the equiangular warp");
    app->add_flag("--no-equalization", no_equalization, "Min-max intensity scaling, no CLAHE");
  }
  void add_query_flags(CLI::App* app)
  {
    app->add_flag("--no-covis-cluster", no_covis_cluster, "Use the plain top-K' candidates");
    app->add_flag("--no-two-stage,--single-stage", no_two_stage, "Skip match clustering and crop re-matching");
    app->add_flag("--no-covis-filter", no_covis_filter, "Keep correspondences regardless of covisibility");
  }
  void add_common(CLI::App* app)
  {
    app->add_option("--config", file, "INI configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override a key: section.key=value (repeatable)");
  }

  PipelineConfig resolve() const
  {
    PipelineConfig cfg;
    if (!file.empty())
      apply_ini(cfg, file);
    for (const auto& o : overrides)
      apply_override(cfg, o);
    if (no_hec) cfg.map.projection.use_hec = false;
    if (no_equalization) cfg.map.equalize = false;
    if (no_covis_cluster) cfg.retrieval.use_covis_cluster = false;
    if (no_two_stage) cfg.association.use_two_stage = false;
    if (no_covis_filter) cfg.association.use_covis_filter = false;
    if (const auto seed = env_seed())
      cfg.ransac.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void draw_line(GrayImage& img, Vec2 a, Vec2 b, std::uint8_t v)
{
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(b.x() - a.x()), std::abs(b.y() - a.y())))) + 1;
  for (int i = 0; i <= steps; ++i)
  {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
    const int x = static_cast<int>(std::lround(p.x())), y = static_cast<int>(std::lround(p.y()));
    if (img.contains(x, y))
      img.at(x, y) = v;
  }
}

/// Side-by-side image (query left, map panorama right, both dimmed) with one
/// segment per correspondence; RANSAC inliers are drawn white.
GrayImage match_canvas(const GrayImage& query, const GrayImage& map, const std::vector<Correspondence2D3D>& corrs,
                       const std::vector<bool>& inliers)
{
  GrayImage out(query.width + map.width, std::max(query.height, map.height));
  for (int y = 0; y < query.height; ++y)
    for (int x = 0; x < query.width; ++x)
      out.at(x, y) = query.at(x, y) / 2;
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      out.at(query.width + x, y) = map.at(x, y) / 2;
  for (std::size_t i = 0; i < corrs.size(); ++i)
  {
    const std::uint8_t v = inliers[i] ? 255 : 150;
    draw_line(out, corrs[i].query_px, corrs[i].map_px + Vec2(query.width, 0.0), v);
  }
  return out;
}

/// Writes <dir>/query_<id>/corrs.txt ("qx qy X Y Z covis stage" per RANSAC input)
/// and one cand_<image_id>.pgm per candidate that contributed correspondences.
void dump_matches(const fs::path& dir, std::int64_t query_id, const GrayImage& query, const Database& db,
                  const QueryOutcome& o)
{
  const fs::path qdir = dir / ("query_" + std::to_string(query_id));
  fs::create_directories(qdir);
  auto out = open_output(qdir / "corrs.txt");
  out << std::setprecision(10);
  std::map<std::int64_t, std::pair<std::vector<Correspondence2D3D>, std::vector<bool>>> by_image;
  for (std::size_t i = 0; i < o.correspondences.size(); ++i)
  {
    const auto& c = o.correspondences[i];
    out << c.query_px.x() << ' ' << c.query_px.y() << ' ' << c.point_xyz.x() << ' ' << c.point_xyz.y() << ' '
        << c.point_xyz.z() << ' ' << c.covis << ' ' << (c.stage == Stage::First ? 1 : 2) << '\n';
    auto& slot = by_image[c.image_id];
    slot.first.push_back(c);
    slot.second.push_back(i < o.result.inliers.size() && o.result.inliers[i]);
  }
  for (const auto& [id, entry] : by_image)
    write_pgm(match_canvas(query, image_by_id(db, id).intensity, entry.first, entry.second),
              qdir / ("cand_" + std::to_string(id) + ".pgm"));
}

/// Quantiles and bucket counts of per-point covisibility.
void print_covis_summary(const Database& db, std::ostream& os)
{
  std::vector<std::int64_t> v;
  v.reserve(db.covis.size());
  for (const auto& [id, c] : db.covis)
    v.push_back(c);
  if (v.empty())
  {
    os << "covis: no visible points\n";
    return;
  }
  std::sort(v.begin(), v.end());
  const auto q = [&](double f) { return v[static_cast<std::size_t>(f * static_cast<double>(v.size() - 1))]; };
  os << "covis: " << v.size() << " visible points, min " << v.front() << " median " << q(0.5) << " p90 " << q(0.9)
     << " max " << v.back() << "\n";
  const std::int64_t edges[] = {1, 2, 3, 5, 10, 20};
  os << "covis histogram:";
  for (std::size_t i = 0; i < std::size(edges); ++i)
  {
    const auto lo = std::lower_bound(v.begin(), v.end(), edges[i]);
    const auto hi = i + 1 < std::size(edges) ? std::lower_bound(v.begin(), v.end(), edges[i + 1]) : v.end();
    os << ' ' << (i + 1 < std::size(edges) ? "[" + std::to_string(edges[i]) + "," + std::to_string(edges[i + 1]) + ")"
                                            : ">=" + std::to_string(edges[i]))
       << '=' << (hi - lo);
  }
  os << "\n";
}

std::vector<int> default_k_list(int k)
{
  std::vector<int> out;
  for (const int v : {1, 5, 10, 20, 50})
    if (v <= k)
      out.push_back(v);
  if (out.empty() || out.back() != k)
    out.push_back(k);
  return out;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Cross-modal visual relocalization against LiDAR intensity panoramas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "reloc 1.0.0");

  //--- synth
  DatasetConfig synth_cfg;
  std::string synth_out, synth_texture = "blobs", synth_shape = "straight";
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene, trajectory and queries");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Scene and query seed");
  synth->add_option("--poses", synth_cfg.n_poses, "Trajectory poses")->check(CLI::PositiveNumber);
  synth->add_option("--spacing", synth_cfg.spacing_m, "Pose spacing (m)")->check(CLI::PositiveNumber);
  synth->add_option("--queries", synth_cfg.n_queries, "Number of queries")->check(CLI::NonNegativeNumber);
  synth->add_option("--shape", synth_shape, "Trajectory shape")->check(CLI::IsMember({"straight", "loop"}));
  synth->add_option("--texture", synth_texture, "Surface texture")->check(CLI::IsMember({"checker", "blobs", "stripes"}));
  synth->add_option("--walls", synth_cfg.scene.wall_count, "Wall count (>= 1)");
  synth->add_option("--density", synth_cfg.scene.points_per_m2, "Points per square meter");
  synth->add_option("--noise", synth_cfg.scene.intensity_noise_sigma, "Intensity noise sigma (raw units)");
  synth->add_option("--gain", synth_cfg.query.gain, "Query photometric gain");
  synth->add_option("--bias", synth_cfg.query.bias, "Query photometric bias");

  //--- build-db
  ConfigOptions build_opts;
  std::string build_cloud, build_traj, build_out;
  auto* build = app.add_subcommand("build-db", "Render map panoramas and extract features");
  build->add_option("--cloud", build_cloud, "Point cloud (.ply with intensity)")->required()->check(CLI::ExistingFile);
  build->add_option("--traj", build_traj, "Trajectory text file")->required()->check(CLI::ExistingFile);
  build->add_option("--out", build_out, "Database directory")->required();
  build_opts.add_common(build);
  build_opts.add_map_flags(build);

  //--- retrieve
  ConfigOptions retr_opts;
  std::string retr_db, retr_queries, retr_intr, retr_out;
  auto* retr = app.add_subcommand("retrieve", "Global retrieval of map images for each query");
  retr->add_option("--db", retr_db, "Database directory")->required();
  retr->add_option("--queries", retr_queries, "Query image or directory")->required();
  retr->add_option("--intrinsics", retr_intr, "Query camera intrinsics")->required()->check(CLI::ExistingFile);
  retr->add_option("--out", retr_out, "Output file")->required();
  retr_opts.add_common(retr);

  //--- relocalize
  ConfigOptions reloc_opts;
  std::string reloc_db, reloc_queries, reloc_intr, reloc_out, reloc_dump, reloc_retr_out, reloc_stats;
  auto* rel = app.add_subcommand("relocalize", "Estimate the 6-DoF pose of each query");
  rel->add_option("--db", reloc_db, "Database directory")->required();
  rel->add_option("--queries", reloc_queries, "Query image or directory")->required();
  rel->add_option("--intrinsics", reloc_intr, "Query camera intrinsics")->required()->check(CLI::ExistingFile);
  rel->add_option("--out", reloc_out, "Pose output file")->required();
  rel->add_option("--retrievals-out", reloc_retr_out, "Also write the top-K retrieval lists");
  rel->add_option("--stats", reloc_stats, "Per-query stage counters (TSV)");
  rel->add_option("--dump-matches", reloc_dump, "Directory for correspondences and match images");
  reloc_opts.add_common(rel);
  reloc_opts.add_query_flags(rel);

  //--- evaluate
  std::string eval_db, eval_gt, eval_poses, eval_retr, eval_tsv, eval_format = "text";
  std::vector<int> eval_k;
  double eval_dist = 5.0;
  auto* eval = app.add_subcommand("evaluate", "Score retrieval and relocalization results");
  eval->add_option("--db", eval_db, "Database directory (for retrieval recall)");
  eval->add_option("--gt", eval_gt, "Ground-truth query poses")->required()->check(CLI::ExistingFile);
  eval->add_option("--poses", eval_poses, "relocalize output")->check(CLI::ExistingFile);
  eval->add_option("--retrievals", eval_retr, "retrieve output")->check(CLI::ExistingFile);
  eval->add_option("--k", eval_k, "Retrieval K values");
  eval->add_option("--dist", eval_dist, "Retrieval distance threshold (m)");
  eval->add_option("--format", eval_format, "Report format on stdout")->check(CLI::IsMember({"text", "tsv"}));
  eval->add_option("--tsv", eval_tsv, "Also write the tab-separated report to this file");

  //--- render-pano
  ConfigOptions pano_opts;
  std::string pano_cloud, pano_traj, pano_out;
  int pano_index = 0;
  auto* pano = app.add_subcommand("render-pano", "Render one panorama from a trajectory pose");
  pano->add_option("--cloud", pano_cloud, "Point cloud")->required()->check(CLI::ExistingFile);
  pano->add_option("--traj", pano_traj, "Trajectory")->required()->check(CLI::ExistingFile);
  pano->add_option("--index", pano_index, "Trajectory entry (position in file)");
  pano->add_option("--out", pano_out, "Output .pgm")->required();
  pano_opts.add_common(pano);
  pano_opts.add_map_flags(pano);

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try
  {
    const auto t0 = std::chrono::steady_clock::now();
    if (*synth)
    {
      synth_cfg.scene.seed = env_seed().value_or(synth_seed);
      synth_cfg.scene.texture = parse_texture(synth_texture);
      synth_cfg.shape = parse_path_shape(synth_shape);
      const auto ds = generate_dataset(synth_cfg);
      save_dataset(ds, synth_out);
      std::cerr << "synth: " << ds.cloud.size() << " points, " << ds.trajectory.size() << " poses, "
                << ds.queries.size() << " queries -> " << synth_out << "\n";
    }
    else if (*build)
    {
      const auto cfg = build_opts.resolve();
      const auto db = build_database(load_point_cloud(build_cloud), load_trajectory(build_traj), cfg.map);
      save_database(db, build_out);
      std::cout << "build-db: " << db.size() << " map images in " << seconds_since(t0) << " s -> " << build_out << "\n";
      print_covis_summary(db, std::cout);
    }
    else if (*retr)
    {
      const auto cfg = retr_opts.resolve();
      const auto db = load_database(retr_db);
      const auto k = load_intrinsics(retr_intr);
      const auto qs = list_queries(retr_queries);
      std::vector<RetrievalRecord> recs(qs.size());
      parallel_for(qs.size(), [&](std::size_t i) {
        const auto view = prepare_query(read_image(qs[i].path), k, db.config);
        recs[i] = {qs[i].id, label_candidates(retrieve_query(db, view, cfg.retrieval.k), db, cfg.retrieval)};
      });
      auto out = open_output(retr_out);
      for (std::size_t i = 0; i < qs.size(); ++i)
        write_retrieval_record(recs[i], out, qs[i].name);
      std::cerr << "retrieve: " << qs.size() << " queries in " << seconds_since(t0) << " s\n";
    }
    else if (*rel)
    {
      const auto cfg = reloc_opts.resolve();
      const auto db = load_database(reloc_db);
      const auto k = load_intrinsics(reloc_intr);
      const auto qs = list_queries(reloc_queries);
      auto out = open_output(reloc_out);
      std::ofstream rout, sout;
      if (!reloc_retr_out.empty())
        rout = open_output(reloc_retr_out);
      if (!reloc_stats.empty())
      {
        sout = open_output(reloc_stats);
        sout << "query\tstatus\tcandidates_tried\tcandidates_accepted\tmatches\tlifted\tcorrespondences\tinliers\n";
      }

      // Outcomes are emitted in input order as soon as every earlier query is done.
      struct Slot
      {
        GrayImage image;
        QueryOutcome outcome;
        bool ready = false;
      };
      std::vector<Slot> slots(qs.size());
      std::mutex mu;
      std::size_t next = 0;
      int ok = 0;
      const auto emit = [&](std::size_t i) {
        const auto& o = slots[i].outcome;
        write_pose_record(make_pose_record(qs[i].id, o.result), out, qs[i].name);
        out.flush();
        ok += o.result.ok();
        if (rout.is_open())
          write_retrieval_record({qs[i].id, label_candidates(o.retrieved, db, cfg.retrieval)}, rout, qs[i].name);
        if (sout.is_open())
        {
          const auto& r = o.result;
          sout << qs[i].id << '\t' << (r.ok() ? "OK" : "FAILED") << '\t' << r.stats.candidates_tried << '\t'
               << r.stats.candidates_accepted << '\t' << r.stats.matches << '\t' << r.stats.lifted << '\t'
               << r.stats.filtered << '\t' << r.inlier_count << '\n';
        }
        if (!reloc_dump.empty() && !slots[i].image.empty())
          dump_matches(reloc_dump, qs[i].id, slots[i].image, db, o);
        slots[i] = Slot{};
      };
      parallel_for(qs.size(), [&](std::size_t i) {
        Slot s;
        try
        {
          s.image = read_image(qs[i].path);
        }
        catch (const Error& e)
        {
          s.outcome.result.reason = std::string("unreadable query: ") + e.what();
        }
        if (!s.image.empty())
        {
          try
          {
            s.outcome = relocalize_query(db, s.image, k, cfg);
          }
          catch (const Error& e)
          {
            s.outcome.result = RelocalizationResult{};
            s.outcome.result.reason = e.what();
          }
        }
        s.ready = true;
        std::lock_guard<std::mutex> lock(mu);
        slots[i] = std::move(s);
        while (next < slots.size() && slots[next].ready)
          emit(next++);
      });
      std::cerr << "relocalize: " << ok << "/" << qs.size() << " succeeded in " << seconds_since(t0) << " s\n";
    }
    else if (*eval)
    {
      if (eval_poses.empty() && eval_retr.empty())
        throw Error("evaluate: give --poses and/or --retrievals");
      if (!eval_retr.empty() && eval_db.empty())
        throw Error("evaluate: --retrievals needs --db");
      const auto gt = load_trajectory(eval_gt);
      Database db;
      std::vector<RetrievalRecord> retrievals;
      std::vector<PoseRecord> poses;
      if (!eval_retr.empty())
      {
        db = load_database(eval_db);
        std::ifstream in(eval_retr);
        retrievals = read_retrieval_records(in);
        if (retrievals.empty())
          throw Error("evaluate: no retrieval results in " + eval_retr);
      }
      if (!eval_poses.empty())
      {
        std::ifstream in(eval_poses);
        poses = read_pose_records(in);
        if (poses.empty())
          throw Error("evaluate: no pose results in " + eval_poses);
      }
      if (eval_k.empty())
        eval_k = default_k_list(PipelineConfig{}.retrieval.k);
      const auto rep = evaluate(db, gt, eval_retr.empty() ? nullptr : &retrievals,
                                eval_poses.empty() ? nullptr : &poses, eval_k, default_rr_thresholds(), eval_dist);
      if (eval_format == "tsv")
        write_report_tsv(rep, std::cout);
      else
        write_report_text(rep, std::cout);
      if (!eval_tsv.empty())
      {
        auto tout = open_output(eval_tsv);
        write_report_tsv(rep, tout);
      }
    }
    else if (*pano)
    {
      const auto cfg = pano_opts.resolve();
      const auto traj = load_trajectory(pano_traj);
      if (pano_index < 0 || pano_index >= static_cast<int>(traj.size()))
        throw Error("render-pano: index out of range");
      const auto cloud = load_point_cloud(pano_cloud);
      const auto norm = cfg.map.equalize ? equalize_map_intensity(cloud) : linear_map_intensity(cloud);
      const Pose& pose = traj[static_cast<std::size_t>(pano_index)].pose;
      auto img = render_panorama(crop_local_map(norm, pose, cfg.map.max_dist_m), pose, cfg.map.projection, pano_index);
      write_pgm(normalize_contrast(img.intensity, cfg.map), pano_out);
    }
    return 0;
  }
  catch (const Error& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  catch (const std::exception& e)
  {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
