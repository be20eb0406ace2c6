#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "icoreg/error.hpp"
#include "icoreg/parallel.hpp"
#include "icoreg/pipeline.hpp"
#include "icoreg/ply.hpp"

namespace icoreg::pipeline {

const char* tool_version() { return "icoreg 0.1.0"; }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct PairSource {
  std::string p_path, q_path;
  RigidTransform truth;
};

std::vector<PairSource> read_pair_list(const std::filesystem::path& list) {
  std::ifstream in(list);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + list.string());
  const auto base = list.parent_path();
  std::vector<PairSource> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    PairSource s;
    if (!(ls >> s.p_path)) continue;
    if (!(ls >> s.q_path))
      throw Error(ErrorKind::kFormat, list.string() + ":" + std::to_string(lineno) + ": expected two paths");
    std::string rest((std::istreambuf_iterator<char>(ls)), std::istreambuf_iterator<char>());
    s.truth = parse_transform(rest);
    for (auto* p : {&s.p_path, &s.q_path})
      if (std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw Error(ErrorKind::kInvalidArgument, list.string() + " lists no pairs");
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

PairRecord run_pair(std::size_t index, const BenchmarkConfig& cfg, const std::vector<PairSource>& listed,
                    const backbone::Backbone& phi, const groupnet::NetworkWeights& w) {
  PairRecord rec;
  rec.index = index;
  try {
    PointCloud p, q;
    if (listed.empty()) {
      const SynthConfig sc = cfg.pair_synth_config(index);
      SynthPair pair = synth_pair(sc);
      p = std::move(pair.p);
      q = std::move(pair.q);
      rec.truth = pair.truth;
      rec.p_source = rec.q_source = "synth:" + sc.base_shape + ":" + std::to_string(sc.seed);
    } else {
      const PairSource& s = listed[index];
      rec.p_source = s.p_path;
      rec.q_source = s.q_path;
      rec.truth = s.truth;
      p = read_ply(s.p_path);
      q = read_ply(s.q_path);
    }

    FeatureConfig fc = cfg.features;
    auto t = Clock::now();
    fc.seed = derive_seed(cfg.seed, 2, index);
    const CloudFeatures fp = describe_cloud(p, fc, phi, w);
    rec.feature_seconds_p = seconds_since(t);
    t = Clock::now();
    fc.seed = derive_seed(cfg.seed, 3, index);
    const CloudFeatures fq = describe_cloud(q, fc, phi, w);
    rec.feature_seconds_q = seconds_since(t);
    rec.p_points = fp.cloud.size();
    rec.q_points = fq.cloud.size();
    rec.p_keypoints = fp.keypoints.size();
    rec.q_keypoints = fq.keypoints.size();

    t = Clock::now();
    RotationSource used;
    const auto c = match_features(fp, fq, w, cfg.match, &used);
    rec.match_seconds = seconds_since(t);
    rec.rotation_source = to_string(used);
    rec.correspondences = c.size();
    rec.inlier_ratio = evalmetrics::correspondence_eval(c, rec.truth, cfg.tau_c);

    std::vector<Vec3> eval_points;
    for (std::size_t k : fp.keypoints) eval_points.push_back(fp.cloud.points[k]);
    auto correct = [&](const RigidTransform& est) {
      return evalmetrics::rr(est, rec.truth, eval_points, cfg.tau_r, cfg.rr_distance);
    };
    std::size_t walk = *std::max_element(cfg.budgets.begin(), cfg.budgets.end());
    if (!cfg.curve_budgets.empty())
      walk = std::max(walk, *std::max_element(cfg.curve_budgets.begin(), cfg.curve_budgets.end()));

    for (const auto mode : cfg.modes)
      for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        ransac::RansacConfig rc;
        rc.mode = mode;
        rc.inlier_threshold = cfg.inlier_threshold;
        rc.refit = cfg.refit;
        rc.distance_check = cfg.distance_check;
        rc.seed = derive_seed(cfg.seed, 4, index * cfg.trials + trial);
        const auto first = evalmetrics::iterations_to_success(c, rc, walk, correct);
        for (const std::size_t budget : cfg.budgets) {
          RunRecord run;
          run.mode = mode;
          run.budget = budget;
          run.trial = trial;
          run.seed = rc.seed;
          rc.max_iterations = budget;
          t = Clock::now();
          const auto r = ransac::run_ransac(c, rc);
          run.transform = r.transform;
          run.inliers = r.inlier_indices.size();
          if (cfg.icp) {
            run.transform = geom::icp(fp.cloud, fq.cloud, r.transform, cfg.icp_options).transform;
            run.icp_applied = true;
          }
          run.seconds = seconds_since(t);
          run.alignment_distance = evalmetrics::alignment_distance(run.transform, rec.truth, eval_points, cfg.rr_distance);
          const auto err = evalmetrics::pose_error(run.transform, rec.truth);
          run.eval.inlier_ratio = rec.inlier_ratio;
          run.eval.registration_correct = run.alignment_distance < cfg.tau_r;
          run.eval.rotation_error = err.rotation;
          run.eval.translation_error = err.translation;
          run.eval.iterations_to_success = first;
          rec.runs.push_back(run);
        }
      }
  } catch (const std::exception& e) {
    rec.failure = e.what();
    rec.runs.clear();
  }
  return rec;
}

}  // namespace

void aggregate(BenchmarkReport& report, std::span<const ransac::Mode> modes, std::span<const std::size_t> budgets,
               std::size_t trials, std::span<const std::size_t> curve_budgets) {
  const auto& pairs = report.pairs;
  report.summaries.clear();
  report.curves.clear();
  report.failures = 0;
  report.fmr = report.mean_inlier_ratio = 0.0;
  report.mean_feature_seconds = report.mean_alignment_seconds = 0.0;
  if (pairs.empty()) return;

  std::vector<double> ratios;
  double feature_sum = 0.0, align_sum = 0.0;
  std::size_t clouds = 0, runs = 0;
  for (const auto& p : pairs) {
    ratios.push_back(p.failure.empty() ? p.inlier_ratio : 0.0);
    if (!p.failure.empty()) {
      ++report.failures;
      continue;
    }
    feature_sum += p.feature_seconds_p + p.feature_seconds_q;
    clouds += 2;
    for (const auto& r : p.runs) {
      align_sum += r.seconds;
      ++runs;
    }
  }
  report.fmr = evalmetrics::fmr(ratios);
  double ir = 0.0;
  for (double r : ratios) ir += r;
  report.mean_inlier_ratio = ir / static_cast<double>(ratios.size());
  if (clouds) report.mean_feature_seconds = feature_sum / static_cast<double>(clouds);
  if (runs) report.mean_alignment_seconds = align_sum / static_cast<double>(runs);

  const double n = static_cast<double>(pairs.size());
  for (const auto mode : modes) {
    for (const std::size_t budget : budgets) {
      ModeSummary s;
      s.mode = mode;
      s.budget = budget;
      std::vector<double> recall(trials, 0.0), rot, trans;
      double secs = 0.0;
      std::size_t count = 0;
      for (const auto& p : pairs)
        for (const auto& r : p.runs) {
          if (r.mode != mode || r.budget != budget || r.trial >= trials) continue;
          secs += r.seconds;
          ++count;
          if (!r.eval.registration_correct) continue;
          recall[r.trial] += 1.0 / n;
          rot.push_back(r.eval.rotation_error);
          trans.push_back(r.eval.translation_error);
        }
      for (double v : recall) s.rr_mean += v / static_cast<double>(trials);
      for (double v : recall) s.rr_std += (v - s.rr_mean) * (v - s.rr_mean) / static_cast<double>(trials);
      s.rr_std = std::sqrt(s.rr_std);
      s.median_rotation_error = median(rot);
      s.median_translation_error = median(trans);
      if (count) s.mean_seconds = secs / static_cast<double>(count);
      report.summaries.push_back(s);
    }
    if (curve_budgets.empty() || budgets.empty()) continue;
    CurveBlock c;
    c.mode = mode;
    std::vector<std::optional<std::size_t>> first;
    std::vector<double> hits;
    for (const auto& p : pairs) {
      if (!p.failure.empty()) {
        first.insert(first.end(), trials, std::nullopt);
        continue;
      }
      for (const auto& r : p.runs)
        if (r.mode == mode && r.budget == budgets.front()) {
          first.push_back(r.eval.iterations_to_success);
          if (r.eval.iterations_to_success) hits.push_back(static_cast<double>(*r.eval.iterations_to_success));
        }
    }
    c.points = evalmetrics::success_curve(first, curve_budgets);
    c.median_iterations = median(hits);
    report.curves.push_back(std::move(c));
  }
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  const backbone::HistogramBackbone phi;
  const groupnet::NetworkWeights w = cfg.weights.empty()
                                         ? groupnet::init_weights(groupnet::NetworkShape{}, cfg.weights_seed, false)
                                         : groupnet::load_weights(cfg.weights);
  const std::vector<PairSource> listed = cfg.pair_list.empty() ? std::vector<PairSource>{} : read_pair_list(cfg.pair_list);
  const std::size_t n = listed.empty() ? cfg.pairs : listed.size();

  BenchmarkReport report;
  report.tool_version = tool_version();
  report.config = cfg.to_key_values();
  report.pairs.resize(n);
  parallel_for(n, [&](std::size_t i) { report.pairs[i] = run_pair(i, cfg, listed, phi, w); });
  aggregate(report, cfg.modes, cfg.budgets, cfg.trials, cfg.curve_budgets);
  report.total_seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

json transform_json(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(t.rotation(i, k));
  return {{"rotation", r}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform transform_from(const json& j) {
  RigidTransform t;
  const auto& r = j.at("rotation");
  const auto& tr = j.at("translation");
  if (r.size() != 9 || tr.size() != 3) throw Error(ErrorKind::kFormat, "transform needs 9 + 3 numbers");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) t.rotation(i, k) = r.at(3 * i + k).get<double>();
  for (int i = 0; i < 3; ++i) t.translation[i] = tr.at(i).get<double>();
  return t;
}

json run_json(const RunRecord& r) {
  return {{"mode", ransac::to_string(r.mode)},
          {"budget", r.budget},
          {"trial", r.trial},
          {"seed", r.seed},
          {"inlier_ratio", r.eval.inlier_ratio},
          {"registration_correct", r.eval.registration_correct},
          {"rotation_error_deg", r.eval.rotation_error},
          {"translation_error", r.eval.translation_error},
          {"iterations_to_success",
           r.eval.iterations_to_success ? json(*r.eval.iterations_to_success) : json(nullptr)},
          {"alignment_distance", r.alignment_distance},
          {"inliers", r.inliers},
          {"icp_applied", r.icp_applied},
          {"seconds", r.seconds},
          {"transform", transform_json(r.transform)}};
}

RunRecord run_from(const json& j) {
  RunRecord r;
  r.mode = ransac::parse_mode(j.at("mode").get<std::string>());
  r.budget = j.at("budget").get<std::size_t>();
  r.trial = j.at("trial").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.eval.inlier_ratio = j.at("inlier_ratio").get<double>();
  r.eval.registration_correct = j.at("registration_correct").get<bool>();
  r.eval.rotation_error = j.at("rotation_error_deg").get<double>();
  r.eval.translation_error = j.at("translation_error").get<double>();
  if (const auto& k = j.at("iterations_to_success"); !k.is_null()) r.eval.iterations_to_success = k.get<std::size_t>();
  r.alignment_distance = j.at("alignment_distance").get<double>();
  r.inliers = j.at("inliers").get<std::size_t>();
  r.icp_applied = j.at("icp_applied").get<bool>();
  r.seconds = j.at("seconds").get<double>();
  r.transform = transform_from(j.at("transform"));
  return r;
}

json pair_json(const PairRecord& p) {
  json runs = json::array();
  for (const auto& r : p.runs) runs.push_back(run_json(r));
  return {{"index", p.index},
          {"p_source", p.p_source},
          {"q_source", p.q_source},
          {"truth", transform_json(p.truth)},
          {"p_points", p.p_points},
          {"q_points", p.q_points},
          {"p_keypoints", p.p_keypoints},
          {"q_keypoints", p.q_keypoints},
          {"correspondences", p.correspondences},
          {"inlier_ratio", p.inlier_ratio},
          {"rotation_source", p.rotation_source},
          {"feature_seconds_p", p.feature_seconds_p},
          {"feature_seconds_q", p.feature_seconds_q},
          {"match_seconds", p.match_seconds},
          {"failure", p.failure},
          {"runs", runs}};
}

PairRecord pair_from(const json& j) {
  PairRecord p;
  p.index = j.at("index").get<std::size_t>();
  p.p_source = j.at("p_source").get<std::string>();
  p.q_source = j.at("q_source").get<std::string>();
  p.truth = transform_from(j.at("truth"));
  p.p_points = j.at("p_points").get<std::size_t>();
  p.q_points = j.at("q_points").get<std::size_t>();
  p.p_keypoints = j.at("p_keypoints").get<std::size_t>();
  p.q_keypoints = j.at("q_keypoints").get<std::size_t>();
  p.correspondences = j.at("correspondences").get<std::size_t>();
  p.inlier_ratio = j.at("inlier_ratio").get<double>();
  p.rotation_source = j.at("rotation_source").get<std::string>();
  p.feature_seconds_p = j.at("feature_seconds_p").get<double>();
  p.feature_seconds_q = j.at("feature_seconds_q").get<double>();
  p.match_seconds = j.at("match_seconds").get<double>();
  p.failure = j.at("failure").get<std::string>();
  for (const auto& r : j.at("runs")) p.runs.push_back(run_from(r));
  return p;
}

}  // namespace

std::string report_to_json(const BenchmarkReport& report) {
  json pairs = json::array(), summaries = json::array(), curves = json::array();
  for (const auto& p : report.pairs) pairs.push_back(pair_json(p));
  for (const auto& s : report.summaries)
    summaries.push_back({{"mode", ransac::to_string(s.mode)},
                         {"budget", s.budget},
                         {"rr_mean", s.rr_mean},
                         {"rr_std", s.rr_std},
                         {"median_rotation_error_deg", s.median_rotation_error},
                         {"median_translation_error", s.median_translation_error},
                         {"mean_seconds", s.mean_seconds}});
  for (const auto& c : report.curves) {
    json points = json::array();
    for (const auto& pt : c.points) points.push_back({{"iterations", pt.iterations}, {"fraction", pt.fraction}});
    curves.push_back({{"mode", ransac::to_string(c.mode)}, {"median_iterations", c.median_iterations}, {"points", points}});
  }
  const json doc = {{"schema", BenchmarkReport::kSchema},
                    {"tool_version", report.tool_version},
                    {"config", report.config},
                    {"aggregate",
                     {{"fmr", report.fmr},
                      {"mean_inlier_ratio", report.mean_inlier_ratio},
                      {"failures", report.failures},
                      {"modes", summaries},
                      {"success_curves", curves}}},
                    {"timing",
                     {{"feature_seconds_per_cloud", report.mean_feature_seconds},
                      {"alignment_seconds_per_run", report.mean_alignment_seconds},
                      {"total_seconds", report.total_seconds}}},
                    {"pairs", pairs}};
  return doc.dump(2);
}

BenchmarkReport report_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("schema").get<std::string>() != BenchmarkReport::kSchema)
      throw Error(ErrorKind::kFormat, "unsupported report schema '" + doc.at("schema").get<std::string>() + "'");
    BenchmarkReport r;
    r.tool_version = doc.at("tool_version").get<std::string>();
    r.config = doc.at("config").get<std::map<std::string, std::string>>();
    const auto& agg = doc.at("aggregate");
    r.fmr = agg.at("fmr").get<double>();
    r.mean_inlier_ratio = agg.at("mean_inlier_ratio").get<double>();
    r.failures = agg.at("failures").get<std::size_t>();
    for (const auto& s : agg.at("modes")) {
      ModeSummary m;
      m.mode = ransac::parse_mode(s.at("mode").get<std::string>());
      m.budget = s.at("budget").get<std::size_t>();
      m.rr_mean = s.at("rr_mean").get<double>();
      m.rr_std = s.at("rr_std").get<double>();
      m.median_rotation_error = s.at("median_rotation_error_deg").get<double>();
      m.median_translation_error = s.at("median_translation_error").get<double>();
      m.mean_seconds = s.at("mean_seconds").get<double>();
      r.summaries.push_back(m);
    }
    for (const auto& c : agg.at("success_curves")) {
      CurveBlock b;
      b.mode = ransac::parse_mode(c.at("mode").get<std::string>());
      b.median_iterations = c.at("median_iterations").get<double>();
      for (const auto& pt : c.at("points"))
        b.points.push_back({pt.at("iterations").get<std::size_t>(), pt.at("fraction").get<double>()});
      r.curves.push_back(std::move(b));
    }
    const auto& timing = doc.at("timing");
    r.mean_feature_seconds = timing.at("feature_seconds_per_cloud").get<double>();
    r.mean_alignment_seconds = timing.at("alignment_seconds_per_run").get<double>();
    r.total_seconds = timing.at("total_seconds").get<double>();
    for (const auto& p : doc.at("pairs")) r.pairs.push_back(pair_from(p));
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed report: ") + e.what());
  }
}

std::string summary_table(const BenchmarkReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "pairs %zu  failures %zu  FMR %.3f  IR %.3f\n", report.pairs.size(),
                report.failures, report.fmr, report.mean_inlier_ratio);
  out << line;
  std::snprintf(line, sizeof(line), "%-8s %8s %8s %8s %10s %10s %10s %10s\n", "mode", "budget", "RR", "RR std",
                "rot(deg)", "trans(m)", "t2(s)", "med iters");
  out << line;
  for (const auto& s : report.summaries) {
    double med = 0.0;
    for (const auto& c : report.curves)
      if (c.mode == s.mode) med = c.median_iterations;
    std::snprintf(line, sizeof(line), "%-8s %8zu %8.3f %8.3f %10.3f %10.4f %10.4f %10.1f\n", ransac::to_string(s.mode),
                  s.budget, s.rr_mean, s.rr_std, s.median_rotation_error, s.median_translation_error, s.mean_seconds,
                  med);
    out << line;
  }
  std::snprintf(line, sizeof(line), "t1 %.3f s/cloud  t2 %.4f s/run  T %.1f s\n", report.mean_feature_seconds,
                report.mean_alignment_seconds, report.total_seconds);
  out << line;
  return out.str();
}

}  // namespace icoreg::pipeline
