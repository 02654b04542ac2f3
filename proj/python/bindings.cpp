#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "plvo/codec.hpp"
#include "plvo/geometry.hpp"
#include "plvo/line_matching.hpp"
#include "plvo/matcher.hpp"
#include "plvo/pipeline.hpp"
#include "plvo/synthetic.hpp"

namespace py = pybind11;
using namespace plvo;

namespace {

py::dict match_set_dict(const MatchSet& matches) {
  py::list pairs;
  for (const auto& pr : matches.pairs)
    pairs.append(py::make_tuple(pr.idx_a, pr.idx_b, pr.score));
  py::dict out;
  out["pairs"] = pairs;
  out["unmatched_a"] = matches.unmatched_a;
  out["unmatched_b"] = matches.unmatched_b;
  return out;
}

MatcherWeights weights_from_spec(const std::string& spec, int dim) {
  if (spec == "identity") {
    MatcherWeights weights;
    weights.point = EncoderWeights::descriptor_only(dim);
    weights.line = EncoderWeights::descriptor_only(dim);
    return weights;
  }
  return load_weights(spec);
}

}  // namespace

PYBIND11_MODULE(_plvo, m) {
  m.doc() = "point-line matching and stereo visual odometry core";

  py::register_exception<Error>(m, "PlvoError");

  // --- optimal transport matching ----------------------------------------
  m.def(
      "sinkhorn",
      [](const MatX& log_scores, const VecX& a, const VecX& b, int max_iters,
         double tol) {
        const SinkhornResult result =
            sinkhorn(log_scores, a, b, max_iters, tol);
        py::dict out;
        out["assignment"] = result.assignment;
        out["iterations"] = result.iterations;
        out["violation"] = result.violation;
        out["converged"] = result.converged;
        return out;
      },
      py::arg("log_scores"), py::arg("a"), py::arg("b"),
      py::arg("max_iters") = 100, py::arg("tol") = 1e-6,
      "Log-domain Sinkhorn over raw log-scores with the given marginals.");

  m.def(
      "default_marginals",
      [](int m_, int n_) {
        const auto [a, b] = default_marginals(m_, n_);
        return py::make_tuple(a, b);
      },
      py::arg("m"), py::arg("n"),
      "Unit mass per feature plus dustbin capacities.");

  m.def("affinity", &affinity, py::arg("ha"), py::arg("hb"), py::arg("metric"),
        py::arg("temperature"),
        "exp(h_a E h_b^T / temperature), clamped before exponentiation.");

  m.def("augment_dustbin", &augment_dustbin, py::arg("scores"), py::arg("z"),
        "Appends the dustbin row/column to log(scores).");

  m.def(
      "extract_matches",
      [](const MatX& assignment, double threshold) {
        return match_set_dict(extract_matches(assignment, threshold));
      },
      py::arg("assignment"), py::arg("score_threshold") = 0.2,
      "Mutual-max extraction over the non-dustbin block.");

  m.def(
      "nll_loss",
      [](const MatX& assignment,
         const std::vector<std::pair<int, int>>& pairs,
         const std::vector<int>& unmatched_a,
         const std::vector<int>& unmatched_b) {
        return nll_loss(assignment, pairs, unmatched_a, unmatched_b);
      },
      py::arg("assignment"), py::arg("pairs"), py::arg("unmatched_a"),
      py::arg("unmatched_b"));

  // --- geometry ------------------------------------------------------------
  m.def(
      "triangulate_from_disparity",
      [](double fx, double fy, double cx, double cy, double baseline,
         double u, double v, double disparity) {
        const CameraRig camera(fx, fy, cx, cy, baseline, 4096, 4096);
        return triangulate_from_disparity(camera, u, v, disparity);
      },
      py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
      py::arg("baseline"), py::arg("u"), py::arg("v"), py::arg("disparity"));

  m.def(
      "sample_line_points",
      [](const Vec2& a, const Vec2& b, double spacing, int min_samples) {
        const auto samples = sample_line_points(a, b, spacing, min_samples);
        MatX out(samples.size(), 2);
        for (size_t k = 0; k < samples.size(); ++k)
          out.row(k) = samples[k].transpose();
        return out;
      },
      py::arg("a"), py::arg("b"), py::arg("spacing"),
      py::arg("min_samples") = 2);

  // --- file-level workflows --------------------------------------------
  m.def(
      "synth_sequence",
      [](const std::filesystem::path& out_dir, int frames, std::uint64_t seed,
         int n_points, int n_lines, const std::string& profile, int dim,
         int repetitive_copies) {
        WorldConfig wc;
        wc.n_points = n_points;
        wc.n_lines = n_lines;
        wc.descriptor_dim = dim;
        wc.repetitive_copies = repetitive_copies;
        const World world = generate_world(seed, wc);
        const auto poses =
            make_trajectory({TrajectoryKind::Straight, frames, 0.35});
        const CameraRig camera = default_camera();
        const DegradationProfile prof = builtin_profile(profile);
        std::filesystem::create_directories(out_dir);
        std::vector<TrajectoryEntry> gt;
        std::vector<std::string> files;
        for (int k = 0; k < frames; ++k) {
          char name[32];
          std::snprintf(name, sizeof(name), "frame_%05d.plvo", k);
          const FrameFeatures frame = render_frame(
              world, poses[k], camera, prof, mix_seed(seed, 1000 + k), k);
          save_features(frame, out_dir / name);
          files.push_back((out_dir / name).string());
          gt.push_back({k, poses[k]});
        }
        save_trajectory_csv(gt, out_dir / "gt_trajectory.csv");
        return files;
      },
      py::arg("out_dir"), py::arg("frames") = 2, py::arg("seed") = 1,
      py::arg("n_points") = 120, py::arg("n_lines") = 20,
      py::arg("profile") = "daytime", py::arg("descriptor_dim") = 32,
      py::arg("repetitive_copies") = 0,
      "Renders a labeled synthetic sequence; returns the feature files.");

  m.def(
      "match_files",
      [](const std::filesystem::path& frame_a,
         const std::filesystem::path& frame_b, const std::string& weights,
         double score_threshold, bool ablate_positions) {
        const FrameFeatures fa = load_features(frame_a);
        const FrameFeatures fb = load_features(frame_b);
        const int dim =
            fa.ppoints.empty()
                ? (fa.lpoints.empty() ? 32 : fa.lpoints.front().dim())
                : fa.ppoints.front().dim();
        MatchConfig config;
        config.score_threshold = score_threshold;
        config.ablate_position_mlp = ablate_positions;
        const PairMatchResult result =
            match_pair(fa, fb, weights_from_spec(weights, dim), config);
        py::dict out;
        out["points"] = match_set_dict(result.points);
        out["lpoints"] = match_set_dict(result.lpoints);
        py::list lines;
        for (const LineMatch& lm : result.lines)
          lines.append(py::make_tuple(lm.line_id_a, lm.line_id_b, lm.support,
                                      lm.total, lm.score));
        out["lines"] = lines;
        out["sinkhorn_iterations"] = result.point_info.iterations;
        return out;
      },
      py::arg("frame_a"), py::arg("frame_b"), py::arg("weights") = "identity",
      py::arg("score_threshold") = 0.2, py::arg("ablate_positions") = false,
      "Full point/line matching between two feature files.");

  m.def(
      "ground_truth_pairs",
      [](const std::filesystem::path& frame_a,
         const std::filesystem::path& frame_b) {
        const GroundTruth gt = ground_truth_matches(load_features(frame_a),
                                                    load_features(frame_b));
        py::dict out;
        out["point_pairs"] = gt.point_pairs;
        out["lpoint_pairs"] = gt.lpoint_pairs;
        out["line_pairs"] = gt.line_pairs;
        return out;
      },
      py::arg("frame_a"), py::arg("frame_b"));

  m.def(
      "track_files",
      [](const std::vector<std::filesystem::path>& frame_files,
         const std::string& weights, std::uint64_t seed) {
        std::vector<FrameFeatures> frames;
        for (const auto& path : frame_files)
          frames.push_back(load_features(path));
        if (frames.empty()) throw EmptySequence("track_files: no frames");
        int dim = 32;
        for (const auto& f : frames)
          if (!f.ppoints.empty()) {
            dim = f.ppoints.front().dim();
            break;
          }
        TrackConfig config;
        config.seed = seed;
        const TrackResult result = track(
            frames, default_camera(), weights_from_spec(weights, dim), config);
        MatX positions(result.trajectory.size(), 3);
        for (size_t k = 0; k < result.trajectory.size(); ++k)
          positions.row(k) =
              result.trajectory.entries[k].pose.translation().transpose();
        py::dict out;
        out["positions"] = positions;
        out["point_matches"] = result.stats.point_matches;
        out["line_matches"] = result.stats.line_matches;
        out["point_detections"] = result.stats.point_detections;
        out["line_detections"] = result.stats.line_detections;
        return out;
      },
      py::arg("frame_files"), py::arg("weights") = "identity",
      py::arg("seed") = 1,
      "Runs the VO pipeline over feature files; returns positions and stats.");

  m.def(
      "ape_from_csv",
      [](const std::filesystem::path& traj_csv,
         const std::filesystem::path& gt_csv, bool align) {
        Trajectory traj, gt;
        traj.entries = load_trajectory_csv(traj_csv);
        gt.entries = load_trajectory_csv(gt_csv);
        Trajectory compared = traj;
        if (align) compared = align_umeyama(traj, gt, false).first;
        const ApeResult result = ape(compared, gt);
        py::dict out;
        out["rmse"] = result.rmse;
        out["mean"] = result.mean;
        out["max"] = result.max;
        return out;
      },
      py::arg("traj_csv"), py::arg("gt_csv"), py::arg("align") = true);

  m.def(
      "train",
      [](const std::filesystem::path& out, int steps, std::uint64_t seed,
         int dim, int layers, const std::string& kind) {
        TrainConfig config;
        config.steps = steps;
        config.seed = seed;
        config.dim = dim;
        config.layers = layers;
        config.world.descriptor_dim = dim;
        config.train_points = kind != "line";
        config.train_lines = kind != "point";
        TrainResult result = train_matcher(config);
        save_weights(result.weights, out);
        return result.loss_log;
      },
      py::arg("out"), py::arg("steps") = 200, py::arg("seed") = 7,
      py::arg("dim") = 32, py::arg("layers") = 4, py::arg("kind") = "both",
      "Trains the matcher on synthetic pairs and checkpoints it.");
}
