#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "plvo/codec.hpp"
#include "plvo/matcher.hpp"
#include "plvo/pipeline.hpp"
#include "plvo/synthetic.hpp"

namespace fs = std::filesystem;
using namespace plvo;

namespace {

struct CameraFlags {
  double fx = 400.0, fy = 400.0, cx = 320.0, cy = 240.0, baseline = 0.2;
  int width = 640, height = 480;

  CameraRig rig() const { return {fx, fy, cx, cy, baseline, width, height}; }
};

void add_camera_flags(CLI::App* cmd, CameraFlags& camera) {
  cmd->add_option("--fx", camera.fx, "focal length x (px)");
  cmd->add_option("--fy", camera.fy, "focal length y (px)");
  cmd->add_option("--cx", camera.cx, "principal point x (px)");
  cmd->add_option("--cy", camera.cy, "principal point y (px)");
  cmd->add_option("--baseline", camera.baseline, "stereo baseline (m)");
  cmd->add_option("--width", camera.width, "image width (px)");
  cmd->add_option("--height", camera.height, "image height (px)");
}

struct ProfileFlags {
  std::string name = "daytime";
  double point_dropout = -1.0;
  double line_dropout = -1.0;
  double descriptor_noise = -1.0;
  double pixel_noise = -1.0;
  double confidence_scale = -1.0;

  DegradationProfile resolve() const {
    DegradationProfile profile = builtin_profile(name);
    if (point_dropout >= 0.0) profile.point_dropout = point_dropout;
    if (line_dropout >= 0.0) profile.line_dropout = line_dropout;
    if (descriptor_noise >= 0.0)
      profile.descriptor_noise_sigma = descriptor_noise;
    if (pixel_noise >= 0.0) profile.pixel_noise_sigma = pixel_noise;
    if (confidence_scale >= 0.0) profile.confidence_scale = confidence_scale;
    return profile;
  }
};

void add_profile_flags(CLI::App* cmd, ProfileFlags& profile) {
  cmd->add_option("--profile", profile.name,
                  "degradation profile: daytime|fog|nighttime|clean")
      ->check(CLI::IsMember({"daytime", "fog", "nighttime", "clean"}));
  cmd->add_option("--point-dropout", profile.point_dropout,
                  "override profile point dropout");
  cmd->add_option("--line-dropout", profile.line_dropout,
                  "override profile line dropout");
  cmd->add_option("--descriptor-noise", profile.descriptor_noise,
                  "override profile descriptor noise sigma");
  cmd->add_option("--pixel-noise", profile.pixel_noise,
                  "override profile pixel noise sigma (px)");
  cmd->add_option("--confidence-scale", profile.confidence_scale,
                  "override profile confidence scale");
}

void write_manifest(CLI::App* cmd, const fs::path& path) {
  detail::write_file_atomic(path, cmd->config_to_str(true, false));
}

std::vector<fs::path> sorted_files(const fs::path& dir,
                                   const std::string& extension) {
  if (!fs::is_directory(dir))
    throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == extension)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<FrameFeatures> load_frames(const fs::path& dir) {
  std::vector<FrameFeatures> frames;
  for (const fs::path& path : sorted_files(dir, ".plvo"))
    frames.push_back(load_features(path));
  if (frames.empty())
    throw IoError("no .plvo feature files in " + dir.string());
  return frames;
}

int descriptor_dim_of(const std::vector<FrameFeatures>& frames) {
  for (const FrameFeatures& f : frames) {
    if (!f.ppoints.empty()) return f.ppoints.front().dim();
    if (!f.lpoints.empty()) return f.lpoints.front().dim();
  }
  throw Error("cannot infer descriptor dimension: all frames are empty");
}

MatcherWeights resolve_weights(const std::string& spec, int dim) {
  if (spec == "identity") {
    MatcherWeights weights;
    weights.point = EncoderWeights::descriptor_only(dim);
    weights.line = EncoderWeights::descriptor_only(dim);
    return weights;
  }
  return load_weights(spec);
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.plvo", index);
  return buf;
}

// ---------------------------------------------------------------- synth --

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 1;
  int frames = 50;
  int n_points = 240;
  int n_lines = 40;
  int descriptor_dim = 32;
  std::string trajectory = "straight";
  double speed = 0.35;
  double arc_radius = 30.0;
  int stop_begin = -1;
  int stop_length = 0;
  int repetitive_copies = 0;
  int repetitive_motif = 6;
  CameraFlags camera;
  ProfileFlags profile;
};

int run_synth(CLI::App* cmd, const SynthArgs& args) {
  if (args.frames == 0) return 0;  // nothing to emit
  WorldConfig wc;
  wc.n_points = args.n_points;
  wc.n_lines = args.n_lines;
  wc.descriptor_dim = args.descriptor_dim;
  wc.repetitive_copies = args.repetitive_copies;
  wc.repetitive_motif = args.repetitive_motif;
  const World world = generate_world(args.seed, wc);

  TrajectoryConfig tc;
  tc.kind = trajectory_kind_from_string(args.trajectory);
  tc.frames = args.frames;
  tc.speed = args.speed;
  tc.arc_radius = args.arc_radius;
  tc.stop_begin = args.stop_begin;
  tc.stop_length = args.stop_length;
  const std::vector<SE3Pose> poses = make_trajectory(tc);

  const CameraRig camera = args.camera.rig();
  const DegradationProfile profile = args.profile.resolve();
  const fs::path out(args.out);
  fs::create_directories(out / "frames");
  std::vector<TrajectoryEntry> gt;
  for (int k = 0; k < args.frames; ++k) {
    const FrameFeatures frame = render_frame(
        world, poses[k], camera, profile, mix_seed(args.seed, 1000 + k), k);
    save_features(frame, out / "frames" / frame_name(k));
    gt.push_back({k, poses[k]});
  }
  save_trajectory_csv(gt, out / "gt_trajectory.csv");
  write_manifest(cmd, out / "synth.manifest");
  std::cout << "wrote " << args.frames << " frames to "
            << (out / "frames").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train --

struct TrainArgs {
  std::string out;
  std::string loss_csv;
  std::string data;
  std::uint64_t seed = 7;
  int steps = 2000;
  std::string kind = "both";
  int dim = 32;
  int layers = 4;
  std::vector<int> hidden = {32, 64, 32};
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999;
  int sinkhorn_iters = 30;
  int n_points = 240;
  int n_lines = 40;
  int n_worlds = 6;
  double repetitive_fraction = 0.0;
  bool noise_mixture = false;
  double mixture_lo = 0.02, mixture_hi = 0.30;
  ProfileFlags profile;
};

void save_loss_csv(const std::vector<double>& losses, const fs::path& path) {
  std::string text = "step,loss\n";
  for (size_t k = 0; k < losses.size(); ++k)
    text += std::to_string(k) + ',' + detail::format_double(losses[k]) + '\n';
  detail::write_file_atomic(path, text);
}

int run_train(CLI::App* cmd, const TrainArgs& args) {
  const bool train_points = args.kind != "line";
  const bool train_lines = args.kind != "point";
  std::vector<double> losses;
  MatcherWeights weights;

  if (!args.data.empty()) {
    // Offline mode: consecutive pairs from a synth directory.
    const std::vector<FrameFeatures> frames = load_frames(args.data);
    if (frames.size() < 2) throw Error("train: need at least 2 frames");
    const int dim = descriptor_dim_of(frames);
    Rng init_rng(mix_seed(args.seed, 0x1217));
    weights.point =
        EncoderWeights::init(dim, args.layers, args.hidden, init_rng);
    weights.line =
        EncoderWeights::init(dim, args.layers, args.hidden, init_rng);
    OptimizerConfig optimizer{args.lr, args.beta1, args.beta2, 1e-8};
    MatcherTrainer trainer(std::move(weights), optimizer, args.sinkhorn_iters);
    Rng rng(mix_seed(args.seed, 0x7EA1));
    for (int step = 0; step < args.steps; ++step) {
      const size_t k = rng.below(frames.size() - 1);
      const GroundTruth gt = ground_truth_matches(frames[k], frames[k + 1]);
      losses.push_back(trainer.step(frames[k], frames[k + 1], gt,
                                    train_points, train_lines));
    }
    weights = trainer.weights();
  } else {
    TrainConfig config;
    config.steps = args.steps;
    config.seed = args.seed;
    config.dim = args.dim;
    config.layers = args.layers;
    config.hidden = args.hidden;
    config.optimizer = {args.lr, args.beta1, args.beta2, 1e-8};
    config.sinkhorn_iters = args.sinkhorn_iters;
    config.world.n_points = args.n_points;
    config.world.n_lines = args.n_lines;
    config.world.descriptor_dim = args.dim;
    config.n_worlds = args.n_worlds;
    config.repetitive_fraction = args.repetitive_fraction;
    config.profile = args.profile.resolve();
    config.noise_mixture = args.noise_mixture;
    config.mixture_sigma_lo = args.mixture_lo;
    config.mixture_sigma_hi = args.mixture_hi;
    config.train_points = train_points;
    config.train_lines = train_lines;
    TrainResult result = train_matcher(config);
    weights = std::move(result.weights);
    losses = std::move(result.loss_log);
  }

  save_weights(weights, args.out);
  if (!args.loss_csv.empty()) save_loss_csv(losses, args.loss_csv);
  write_manifest(cmd, fs::path(args.out).string() + ".manifest");
  std::cout << "saved weights to " << args.out << " after " << losses.size()
            << " steps\n";
  return 0;
}

// ---------------------------------------------------------------- match --

struct MatchArgs {
  std::string frame_a, frame_b;
  std::string weights = "identity";
  std::string out;
  double score_threshold = 0.2;
  int sinkhorn_iters = 100;
  double sinkhorn_tol = 1e-6;
  double line_majority = 0.5;
  int line_min_support = 2;
  bool ablate_positions = false;
};

int run_match(CLI::App* cmd, const MatchArgs& args) {
  const FrameFeatures fa = load_features(args.frame_a);
  const FrameFeatures fb = load_features(args.frame_b);
  const int dim = fa.ppoints.empty()
                      ? (fa.lpoints.empty() ? 0 : fa.lpoints.front().dim())
                      : fa.ppoints.front().dim();
  const MatcherWeights weights = resolve_weights(args.weights, dim);
  MatchConfig config;
  config.score_threshold = args.score_threshold;
  config.sinkhorn_max_iters = args.sinkhorn_iters;
  config.sinkhorn_tol = args.sinkhorn_tol;
  config.line_majority = args.line_majority;
  config.line_min_support = args.line_min_support;
  config.ablate_position_mlp = args.ablate_positions;
  const PairMatchResult result = match_pair(fa, fb, weights, config);
  const auto records =
      to_match_records(fa.frame_id, fb.frame_id, result.points, result.lines);
  save_match_csv(records, args.out);
  write_manifest(cmd, fs::path(args.out).string() + ".manifest");
  std::printf("point matches: %zu/%zu\n", result.points.pairs.size(),
              fa.ppoints.size());
  std::printf("l-point matches: %zu/%zu\n", result.lpoints.pairs.size(),
              fa.lpoints.size());
  std::printf("line matches: %zu/%zu\n", result.lines.size(),
              fa.lines.size());
  return 0;
}

// ---------------------------------------------------------------- track --

struct TrackArgs {
  std::string data;
  std::string weights = "identity";
  std::string out;
  std::string log_csv;
  std::string masks;
  std::string plot;
  std::string features = "both";
  std::uint64_t seed = 1;
  int jobs = 1;
  double score_threshold = 0.2;
  double stationary_px = 0.3;
  double huber_delta = 2.0;
  int ransac_iterations = 200;
  double inlier_threshold = 3.0;
  CameraFlags camera;
};

int run_track(CLI::App* cmd, const TrackArgs& args) {
  const std::vector<FrameFeatures> frames = load_frames(args.data);
  const MatcherWeights weights =
      resolve_weights(args.weights, descriptor_dim_of(frames));
  TrackConfig config;
  config.match.score_threshold = args.score_threshold;
  config.pose.huber_delta = args.huber_delta;
  config.pose.ransac_iterations = args.ransac_iterations;
  config.pose.ransac_inlier_threshold = args.inlier_threshold;
  config.stationary_median_px = args.stationary_px;
  config.seed = args.seed;
  config.jobs = args.jobs;
  config.use_points = args.features != "lines";
  config.use_lines = args.features != "points";

  std::vector<MaskImage> masks;
  if (!args.masks.empty())
    for (const fs::path& path : sorted_files(args.masks, ".pgm"))
      masks.push_back(load_mask(path));

  const TrackResult result =
      track(frames, args.camera.rig(), weights, config, masks);
  save_trajectory_csv(result.trajectory.entries, args.out);
  if (!args.log_csv.empty())
    save_pair_log_csv(result.frame_logs, result.pair_logs, args.log_csv);
  if (!args.plot.empty()) {
    PlotSeries series;
    series.label = "estimate";
    series.color = "#1f77b4";
    series.points = trajectory_xz(result.trajectory);
    write_svg_plot(args.plot, "estimated trajectory (top-down)", "x [m]",
                   "z [m]", {&series, 1});
  }
  write_manifest(cmd, fs::path(args.out).string() + ".manifest");
  int fallbacks = 0;
  for (const PairLog& log : result.pair_logs) fallbacks += log.fallback;
  std::printf("tracked %zu frames (%d fallback pairs)\n",
              result.trajectory.size(), fallbacks);
  std::printf("point matches: %ld/%ld", result.stats.point_matches,
              result.stats.point_detections);
  if (result.stats.point_pct_valid)
    std::printf(" (%.1f%%)", result.stats.point_match_pct);
  std::printf("\nline matches: %ld/%ld", result.stats.line_matches,
              result.stats.line_detections);
  if (result.stats.line_pct_valid)
    std::printf(" (%.1f%%)", result.stats.line_match_pct);
  std::printf("\n");
  return 0;
}

// ----------------------------------------------------------------- eval --

struct EvalArgs {
  std::string traj;
  std::string gt;
  std::string ape_csv;
  std::string plot;
  bool no_align = false;
  bool with_scale = false;
};

int run_eval(CLI::App* cmd, const EvalArgs& args) {
  Trajectory traj, gt;
  traj.entries = load_trajectory_csv(args.traj);
  gt.entries = load_trajectory_csv(args.gt);

  Trajectory compared = traj;
  bool aligned = false;
  if (!args.no_align) {
    try {
      compared = align_umeyama(traj, gt, args.with_scale).first;
      aligned = true;
    } catch (const DegenerateGeometry& e) {
      std::cerr << "warning: alignment degenerate (" << e.what()
                << "); using raw world-frame error\n";
    }
  }
  const ApeResult result = ape(compared, gt);
  if (!args.ape_csv.empty()) {
    save_ape_csv(result, args.ape_csv);
    write_manifest(cmd, fs::path(args.ape_csv).string() + ".manifest");
  }
  if (!args.plot.empty()) {
    PlotSeries est, gts;
    est.label = "estimate";
    est.color = "#1f77b4";
    est.points = trajectory_xz(compared);
    gts.label = "ground truth";
    gts.color = "#2ca02c";
    gts.points = trajectory_xz(gt);
    const std::vector<PlotSeries> series{est, gts};
    write_svg_plot(args.plot, "trajectories (top-down)", "x [m]", "z [m]",
                   series);
    PlotSeries err;
    err.label = "APE";
    err.color = "#d62728";
    for (const auto& [frame_id, e] : result.series)
      err.points.emplace_back(static_cast<double>(frame_id), e);
    const fs::path ape_plot =
        fs::path(args.plot).parent_path() /
        (fs::path(args.plot).stem().string() + "_ape.svg");
    write_svg_plot(ape_plot, "absolute pose error", "frame", "APE [m]",
                   {&err, 1});
  }
  std::printf("alignment: %s\n",
              aligned ? (args.with_scale ? "sim3" : "se3") : "none");
  std::printf("APE RMSE: %.9g m\n", result.rmse);
  std::printf("APE mean: %.9g m\n", result.mean);
  std::printf("APE max:  %.9g m\n", result.max);
  return 0;
}

// ---------------------------------------------------------------- stats --

struct StatsArgs {
  std::string log_csv;
  std::string out;
};

int run_stats(CLI::App* cmd, const StatsArgs& args) {
  const auto [frames, pairs] = load_pair_log_csv(args.log_csv);
  const MatchStats stats = match_stats(frames, pairs);
  if (!args.out.empty()) {
    save_stats_csv(stats, args.out);
    write_manifest(cmd, fs::path(args.out).string() + ".manifest");
  }
  std::cout << format_stats_table(stats);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-line matching and stereo visual odometry"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read option defaults from an INI file");

  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic labeled sequence");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");
  synth_cmd->add_option("--frames", synth.frames, "number of frames");
  synth_cmd->add_option("--n-points", synth.n_points, "point landmarks");
  synth_cmd->add_option("--n-lines", synth.n_lines, "line landmarks");
  synth_cmd->add_option("--descriptor-dim", synth.descriptor_dim,
                        "descriptor dimension");
  synth_cmd
      ->add_option("--trajectory", synth.trajectory, "straight|arc|figure8")
      ->check(CLI::IsMember({"straight", "arc", "figure8"}));
  synth_cmd->add_option("--speed", synth.speed, "meters per frame");
  synth_cmd->add_option("--arc-radius", synth.arc_radius, "arc radius (m)");
  synth_cmd->add_option("--stop-begin", synth.stop_begin,
                        "first frame of a full stop (-1 = none)");
  synth_cmd->add_option("--stop-length", synth.stop_length,
                        "number of stationary frames");
  synth_cmd->add_option("--repetitive-copies", synth.repetitive_copies,
                        "repetitive-structure copies (0 = off)");
  synth_cmd->add_option("--repetitive-motif", synth.repetitive_motif,
                        "lines per repeated motif");
  add_camera_flags(synth_cmd, synth.camera);
  add_profile_flags(synth_cmd, synth.profile);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train the matcher");
  train_cmd->add_option("--out", train.out, "output weights file")->required();
  train_cmd->add_option("--loss-csv", train.loss_csv, "loss log CSV");
  train_cmd->add_option("--data", train.data,
                        "feature directory (offline pairs); otherwise frames "
                        "are generated on the fly");
  train_cmd->add_option("--seed", train.seed, "RNG seed");
  train_cmd->add_option("--steps", train.steps, "training steps");
  train_cmd->add_option("--kind", train.kind, "point|line|both")
      ->check(CLI::IsMember({"point", "line", "both"}));
  train_cmd->add_option("--dim", train.dim, "descriptor dimension");
  train_cmd->add_option("--layers", train.layers, "attention layers");
  train_cmd->add_option("--hidden", train.hidden, "position MLP hidden sizes");
  train_cmd->add_option("--lr", train.lr, "Adam learning rate");
  train_cmd->add_option("--beta1", train.beta1, "Adam beta1");
  train_cmd->add_option("--beta2", train.beta2, "Adam beta2");
  train_cmd->add_option("--sinkhorn-iters", train.sinkhorn_iters,
                        "unrolled Sinkhorn iterations");
  train_cmd->add_option("--n-points", train.n_points, "world point landmarks");
  train_cmd->add_option("--n-lines", train.n_lines, "world line landmarks");
  train_cmd->add_option("--n-worlds", train.n_worlds, "training worlds");
  train_cmd->add_option("--repetitive-fraction", train.repetitive_fraction,
                        "fraction of repetitive-structure worlds");
  train_cmd->add_flag("--noise-mixture", train.noise_mixture,
                      "sample descriptor noise per pair");
  train_cmd->add_option("--mixture-lo", train.mixture_lo,
                        "noise mixture lower sigma");
  train_cmd->add_option("--mixture-hi", train.mixture_hi,
                        "noise mixture upper sigma");
  add_profile_flags(train_cmd, train.profile);

  MatchArgs match;
  CLI::App* match_cmd = app.add_subcommand("match", "match two feature files");
  match_cmd->add_option("--frame-a", match.frame_a, "first feature file")
      ->required();
  match_cmd->add_option("--frame-b", match.frame_b, "second feature file")
      ->required();
  match_cmd->add_option("--weights", match.weights,
                        "weights file or 'identity'");
  match_cmd->add_option("--out", match.out, "match CSV")->required();
  match_cmd->add_option("--score-threshold", match.score_threshold,
                        "assignment score threshold");
  match_cmd->add_option("--sinkhorn-iters", match.sinkhorn_iters,
                        "Sinkhorn iteration cap");
  match_cmd->add_option("--sinkhorn-tol", match.sinkhorn_tol,
                        "Sinkhorn marginal tolerance");
  match_cmd->add_option("--line-majority", match.line_majority,
                        "line vote majority fraction");
  match_cmd->add_option("--line-min-support", match.line_min_support,
                        "minimum agreeing L-point matches");
  match_cmd->add_flag("--ablate-positions", match.ablate_positions,
                      "zero the position MLP (ablation)");

  TrackArgs track_args;
  CLI::App* track_cmd =
      app.add_subcommand("track", "run the VO pipeline over a sequence");
  track_cmd->add_option("--data", track_args.data, "feature directory")
      ->required();
  track_cmd->add_option("--weights", track_args.weights,
                        "weights file or 'identity'");
  track_cmd->add_option("--out", track_args.out, "trajectory CSV")->required();
  track_cmd->add_option("--log", track_args.log_csv, "per-frame/pair log CSV");
  track_cmd->add_option("--masks", track_args.masks,
                        "directory of PGM masks (one per frame)");
  track_cmd->add_option("--plot", track_args.plot, "SVG trajectory plot");
  track_cmd
      ->add_option("--features", track_args.features, "points|lines|both")
      ->check(CLI::IsMember({"points", "lines", "both"}));
  track_cmd->add_option("--seed", track_args.seed, "RNG seed");
  track_cmd->add_option("--jobs", track_args.jobs, "worker threads");
  track_cmd->add_option("--score-threshold", track_args.score_threshold,
                        "assignment score threshold");
  track_cmd->add_option("--stationary-px", track_args.stationary_px,
                        "stationary snap threshold (px)");
  track_cmd->add_option("--huber-delta", track_args.huber_delta,
                        "Huber delta (px)");
  track_cmd->add_option("--ransac-iterations", track_args.ransac_iterations,
                        "RANSAC iterations");
  track_cmd->add_option("--inlier-threshold", track_args.inlier_threshold,
                        "RANSAC inlier threshold (px)");
  add_camera_flags(track_cmd, track_args.camera);

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a trajectory against ground truth");
  eval_cmd->add_option("--traj", eval.traj, "estimated trajectory CSV")
      ->required();
  eval_cmd->add_option("--gt", eval.gt, "ground-truth trajectory CSV")
      ->required();
  eval_cmd->add_option("--ape-csv", eval.ape_csv, "per-frame APE CSV");
  eval_cmd->add_option("--plot", eval.plot, "SVG plot path");
  eval_cmd->add_flag("--no-align", eval.no_align,
                     "skip Umeyama alignment (raw world-frame error)");
  eval_cmd->add_flag("--with-scale", eval.with_scale, "Sim3 alignment");

  StatsArgs stats;
  CLI::App* stats_cmd =
      app.add_subcommand("stats", "aggregate a track log into match stats");
  stats_cmd->add_option("--log", stats.log_csv, "track log CSV")->required();
  stats_cmd->add_option("--out", stats.out, "stats CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth_cmd, synth);
    if (train_cmd->parsed()) return run_train(train_cmd, train);
    if (match_cmd->parsed()) return run_match(match_cmd, match);
    if (track_cmd->parsed()) return run_track(track_cmd, track_args);
    if (eval_cmd->parsed()) return run_eval(eval_cmd, eval);
    if (stats_cmd->parsed()) return run_stats(stats_cmd, stats);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
