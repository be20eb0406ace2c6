#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icoreg/error.hpp"
#include "icoreg/evalmetrics.hpp"
#include "icoreg/parallel.hpp"
#include "icoreg/pipeline.hpp"
#include "icoreg/ply.hpp"

namespace {

using namespace icoreg;
using pipeline::BenchmarkConfig;
namespace fs = std::filesystem;

// Flags shared by every subcommand. Layering: defaults, then --config, then
// --set, then the dedicated flags.
struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<double> voxel, tau, tau_c, tau_r;
  std::optional<std::string> modes, weights;
  std::optional<std::size_t> iterations;
  bool quiet = false;
};

BenchmarkConfig resolve(const GlobalOptions& g) {
  BenchmarkConfig cfg;
  if (!g.config_path.empty()) cfg.apply(pipeline::read_key_values(g.config_path));
  std::map<std::string, std::string> kv;
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kInvalidArgument, "--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  auto put = [&](const char* key, const auto& opt) {
    if (!opt) return;
    std::ostringstream os;
    os.precision(17);
    os << *opt;
    kv[key] = os.str();
  };
  put("seed", g.seed);
  put("voxel", g.voxel);
  put("tau", g.tau);
  put("tau_c", g.tau_c);
  put("tau_r", g.tau_r);
  put("modes", g.modes);
  put("budgets", g.iterations);
  put("weights", g.weights);
  cfg.apply(kv);
  cfg.validate();
  if (g.threads) set_thread_count(*g.threads);
  return cfg;
}

groupnet::NetworkWeights weights_for(const BenchmarkConfig& cfg) {
  return cfg.weights.empty() ? groupnet::init_weights(groupnet::NetworkShape{}, cfg.weights_seed, false)
                             : groupnet::load_weights(cfg.weights);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

void emit_transform(const geom::RigidTransform& t, const std::string& out) {
  if (out.empty()) std::cout << pipeline::format_transform(t) << "\n";
  else write_text(out, pipeline::format_transform(t) + "\n");
}

pipeline::FeatureConfig feature_config(const BenchmarkConfig& cfg, std::uint64_t stream) {
  pipeline::FeatureConfig f = cfg.features;
  f.seed = pipeline::derive_seed(cfg.seed, stream, 0);
  return f;
}

ransac::RansacConfig ransac_config(const BenchmarkConfig& cfg) {
  ransac::RansacConfig rc;
  rc.mode = cfg.modes.front();
  rc.max_iterations = cfg.budgets.front();
  rc.inlier_threshold = cfg.inlier_threshold;
  rc.refit = cfg.refit;
  rc.distance_check = cfg.distance_check;
  rc.seed = pipeline::derive_seed(cfg.seed, 4, 0);
  return rc;
}

void report_registration(const geom::RigidTransform& est, const geom::RigidTransform& gt,
                         std::span<const Vec3> points, const BenchmarkConfig& cfg) {
  const double d = evalmetrics::alignment_distance(est, gt, points, cfg.rr_distance);
  const auto e = evalmetrics::pose_error(est, gt);
  std::cout << "alignment_distance " << d << " m\n"
            << "registered " << (d < cfg.tau_r ? "yes" : "no") << "\n"
            << "rotation_error " << e.rotation << " deg\n"
            << "translation_error " << e.translation << " m\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point cloud registration with icosahedral group features"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", pipeline::tool_version());

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override one configuration key (key=value); repeatable");
  app.add_option("--seed", g.seed, "Base seed of every random stream");
  app.add_option("--threads", g.threads, "Worker threads (0: ICOREG_THREADS or hardware)");
  app.add_option("--voxel", g.voxel, "Voxel size in meters");
  app.add_option("--mode", g.modes, "RANSAC mode(s): vanilla, crv, ose (comma list for benchmark)");
  app.add_option("--iterations", g.iterations, "RANSAC iteration budget");
  app.add_option("--tau", g.tau, "RANSAC inlier threshold in meters");
  app.add_option("--tau-c", g.tau_c, "Correspondence inlier distance in meters");
  app.add_option("--tau-r", g.tau_r, "Registration distance threshold in meters");
  app.add_option("--weights", g.weights, "Network weights file (default: random init)");
  app.add_flag("--quiet", g.quiet, "Suppress library warnings");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic pair: p.ply, q.ply and gt.txt");
  std::string synth_dir;
  bool synth_ascii = false;
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_flag("--ascii", synth_ascii, "Write ASCII PLY");

  // extract
  auto* extract = app.add_subcommand("extract", "Compute keypoint features of a PLY cloud");
  std::string extract_in, extract_out;
  bool extract_target = false;
  extract->add_option("input", extract_in, "Input PLY")->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--out", extract_out, "Output feature file")->required();
  extract->add_flag("--target", extract_target, "Use the target-cloud keypoint stream");

  // match
  auto* match = app.add_subcommand("match", "Match two feature files into a correspondence CSV");
  std::string match_p, match_q, match_out, match_gt;
  match->add_option("p", match_p, "Source feature file")->required()->check(CLI::ExistingFile);
  match->add_option("q", match_q, "Target feature file")->required()->check(CLI::ExistingFile);
  match->add_option("-o,--out", match_out, "Output CSV")->required();
  match->add_option("--gt", match_gt, "Ground-truth transform file; reports the inlier ratio")
      ->check(CLI::ExistingFile);

  // register
  auto* reg = app.add_subcommand("register", "Estimate the transform mapping P onto Q");
  std::string reg_p, reg_q, reg_corr, reg_out, reg_gt;
  reg->add_option("p", reg_p, "Source PLY")->check(CLI::ExistingFile);
  reg->add_option("q", reg_q, "Target PLY")->check(CLI::ExistingFile);
  reg->add_option("--corr", reg_corr, "Correspondence CSV instead of clouds")->check(CLI::ExistingFile);
  reg->add_option("-o,--out", reg_out, "Output transform file (default: stdout)");
  reg->add_option("--gt", reg_gt, "Ground-truth transform file; reports RR and pose errors")
      ->check(CLI::ExistingFile);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Run the benchmark suite and write a JSON report");
  std::string bench_out;
  bench->add_option("-o,--out", bench_out, "Report file (default: no file)");

  // icp
  auto* icp = app.add_subcommand("icp", "Refine a transform with point-to-point ICP");
  std::string icp_src, icp_dst, icp_init, icp_out;
  icp->add_option("src", icp_src, "Source PLY")->required()->check(CLI::ExistingFile);
  icp->add_option("dst", icp_dst, "Target PLY")->required()->check(CLI::ExistingFile);
  icp->add_option("--init", icp_init, "Initial transform file (default: identity)")->check(CLI::ExistingFile);
  icp->add_option("-o,--out", icp_out, "Output transform file (default: stdout)");

  // train
  auto* train = app.add_subcommand("train", "Train network weights on synthetic patch pairs");
  std::string train_out;
  std::size_t train_pairs = 200;
  bool train_regressor = false;
  groupnet::TrainOptions train_opts;
  train->add_option("-o,--out", train_out, "Output weights file")->required();
  train->add_option("--pairs", train_pairs, "Training pairs")->capture_default_str();
  train->add_option("--epochs", train_opts.epochs, "Epochs")->capture_default_str();
  train->add_option("--batch", train_opts.batch_size, "Batch size")->capture_default_str();
  train->add_option("--lr", train_opts.learning_rate, "Initial learning rate")->capture_default_str();
  train->add_option("--lambda", train_opts.lambda, "Invariant loss weight")->capture_default_str();
  train->add_flag("--regressor", train_regressor, "Also train the rotation regressor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.quiet) set_warnings_enabled(false);
    const BenchmarkConfig cfg = resolve(g);

    if (*synth) {
      pipeline::SynthConfig sc = cfg.synth;
      sc.seed = pipeline::derive_seed(cfg.seed, 1, 0);
      const auto pair = pipeline::synth_pair(sc);
      const fs::path dir(synth_dir);
      fs::create_directories(dir);
      const auto format = synth_ascii ? pipeline::PlyFormat::kAscii : pipeline::PlyFormat::kBinaryLittleEndian;
      pipeline::write_ply(pair.p, dir / "p.ply", format);
      pipeline::write_ply(pair.q, dir / "q.ply", format);
      write_text(dir / "gt.txt", pipeline::format_transform(pair.truth) + "\n");
      std::cout << "wrote " << pair.p.size() << " + " << pair.q.size() << " points to " << dir.string() << "\n";
    } else if (*extract) {
      const auto w = weights_for(cfg);
      const backbone::HistogramBackbone phi;
      const auto t0 = std::chrono::steady_clock::now();
      const auto f = pipeline::describe_cloud(pipeline::read_ply(extract_in), feature_config(cfg, extract_target ? 3 : 2),
                                              phi, w);
      pipeline::save_features(f, extract_out);
      std::cout << f.cloud.size() << " points, " << f.keypoints.size() << " keypoints, "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
    } else if (*match) {
      const auto w = weights_for(cfg);
      const auto p = pipeline::load_features(match_p), q = pipeline::load_features(match_q);
      pipeline::RotationSource used;
      const auto c = pipeline::match_features(p, q, w, cfg.match, &used);
      pipeline::write_correspondences(c, match_out);
      std::cout << c.size() << " correspondences, rotations from " << pipeline::to_string(used) << "\n";
      if (!match_gt.empty()) {
        const auto gt = pipeline::parse_transform(read_text(match_gt));
        std::cout << "inlier_ratio " << evalmetrics::correspondence_eval(c, gt, cfg.tau_c) << "\n";
      }
    } else if (*reg) {
      std::vector<matchrot::Correspondence> c;
      std::vector<Vec3> eval_points;
      std::optional<pipeline::CloudFeatures> fp, fq;
      if (!reg_corr.empty()) {
        if (!reg_p.empty() || !reg_q.empty()) throw Error(ErrorKind::kInvalidArgument, "give either --corr or two clouds");
        c = pipeline::read_correspondences(reg_corr);
        for (const auto& x : c) eval_points.push_back(x.p);
      } else {
        if (reg_p.empty() || reg_q.empty()) throw Error(ErrorKind::kInvalidArgument, "register needs two clouds or --corr");
        const auto w = weights_for(cfg);
        const backbone::HistogramBackbone phi;
        fp = pipeline::describe_cloud(pipeline::read_ply(reg_p), feature_config(cfg, 2), phi, w);
        fq = pipeline::describe_cloud(pipeline::read_ply(reg_q), feature_config(cfg, 3), phi, w);
        c = pipeline::match_features(*fp, *fq, w, cfg.match);
        for (auto k : fp->keypoints) eval_points.push_back(fp->cloud.points[k]);
      }
      const auto result = ransac::run_ransac(c, ransac_config(cfg));
      for (const auto& m : result.warnings) warn(m);
      geom::RigidTransform t = result.transform;
      if (cfg.icp && fp) t = geom::icp(fp->cloud, fq->cloud, t, cfg.icp_options).transform;
      std::cerr << c.size() << " correspondences, " << result.inlier_indices.size() << " inliers\n";
      emit_transform(t, reg_out);
      if (!reg_gt.empty()) {
        if (eval_points.empty()) throw Error(ErrorKind::kInvalidArgument, "no points to evaluate against");
        report_registration(t, pipeline::parse_transform(read_text(reg_gt)), eval_points, cfg);
      }
    } else if (*bench) {
      set_warnings_enabled(false);
      const auto report = pipeline::run_benchmark(cfg);
      if (!bench_out.empty()) write_text(bench_out, pipeline::report_to_json(report));
      std::cout << pipeline::summary_table(report);
      return report.failures == 0 ? 0 : 3;
    } else if (*icp) {
      const geom::RigidTransform init = icp_init.empty() ? geom::RigidTransform{}
                                                         : pipeline::parse_transform(read_text(icp_init));
      const auto r = geom::icp(pipeline::read_ply(icp_src), pipeline::read_ply(icp_dst), init, cfg.icp_options);
      std::cerr << "rmse " << r.rmse_trace.front() << " -> " << r.rmse_trace.back() << "\n";
      emit_transform(r.transform, icp_out);
    } else if (*train) {
      pipeline::TrainingSetConfig tc;
      tc.pairs = train_pairs;
      tc.features = cfg.features;
      tc.seed = pipeline::derive_seed(cfg.seed, 5, 0);
      const backbone::HistogramBackbone phi;
      const auto data = pipeline::synth_training_pairs(tc, phi);
      train_opts.seed = cfg.seed;
      groupnet::TrainReport rep;
      auto w = groupnet::train_embedder(data, groupnet::init_weights(groupnet::NetworkShape{}, cfg.weights_seed,
                                                                     train_regressor),
                                        train_opts, &rep);
      for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
        std::cout << "embedder epoch " << e << " loss " << rep.epoch_loss[e] << "\n";
      if (train_regressor) {
        auto ro = groupnet::regressor_train_options();
        ro.epochs = train_opts.epochs;
        ro.seed = cfg.seed;
        groupnet::TrainReport rrep;
        w = groupnet::train_regressor(data, w, ro, &rrep);
        for (std::size_t e = 0; e < rrep.epoch_loss.size(); ++e)
          std::cout << "regressor epoch " << e << " loss " << rrep.epoch_loss[e] << "\n";
      }
      groupnet::save_weights(w, train_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
