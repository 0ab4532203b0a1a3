#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/filter.hpp"
#include "dyncog/forest.hpp"
#include "dyncog/fusion.hpp"
#include "dyncog/gateway.hpp"
#include "dyncog/kinematics.hpp"
#include "dyncog/metrics.hpp"
#include "dyncog/relations.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/synth.hpp"
#include "dyncog/tcm.hpp"
#include "dyncog/util.hpp"

#ifndef DYNCOG_ASSET_DIR
#define DYNCOG_ASSET_DIR "assets"
#endif

namespace dyncog {

inline std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("DYNCOG_ASSETS"); env && *env) return env;
  return DYNCOG_ASSET_DIR;
}

/// Every knob of a run, echoed as run_config.json next to the outputs.
struct RunConfig {
  std::filesystem::path asset_dir = default_asset_dir();
  std::filesystem::path model_path;  // empty: <assets>/models/toy_forest.txt
  std::uint64_t seed = 0;
  double alpha = 0.6;
  double eps_rel = 0.05;
  int min_persistence = 2;
  bool tcm_temporal = true, tcm_motion = true, tcm_spatial = true;
  std::string fusion_mode = "fusion";
  double overlay_alpha = 0.5;
  std::optional<int> boundary_tolerance;  // empty: 0.8% of the diagonal
  std::string layout = "motion,diagnostic";
  GateThresholds gate;
  int retries = 2;
  int prompt_frames = 8;
  std::vector<std::string> template_kinds;  // empty: all six

  std::filesystem::path templates() const { return asset_dir / "templates"; }
  std::filesystem::path model() const { return model_path.empty() ? asset_dir / "models" / "toy_forest.txt" : model_path; }

  json to_json() const {
    json kinds = json::array();
    for (const auto& k : template_kinds) kinds.push_back(k);
    return {{"asset_dir", asset_dir.string()},
            {"model", model().string()},
            {"seed", seed},
            {"alpha", alpha},
            {"eps_rel", eps_rel},
            {"min_persistence", min_persistence},
            {"tcm", {{"T", tcm_temporal}, {"M", tcm_motion}, {"S", tcm_spatial}}},
            {"fusion_mode", fusion_mode},
            {"overlay_alpha", overlay_alpha},
            {"boundary_tolerance", boundary_tolerance ? json(*boundary_tolerance) : json("auto")},
            {"layout", layout},
            {"gate",
             {{"min_score", gate.min_score},
              {"max_focal_instability", gate.max_focal_instability},
              {"max_rotation_step_deg", gate.max_rotation_step_deg}}},
            {"retries", retries},
            {"prompt_frames", prompt_frames},
            {"template_kinds", kinds}};
  }

  TcmConfig tcm() const {
    TcmConfig c;
    c.include_temporal = tcm_temporal;
    c.include_motion = tcm_motion;
    c.include_spatial = tcm_spatial;
    return c;
  }
};

inline void write_config_echo(const RunConfig& cfg, const std::filesystem::path& out_dir, const json& extra = {}) {
  json j = cfg.to_json();
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_text_file(out_dir / "run_config.json", j.dump(2) + "\n");
}

// Filtering -----------------------------------------------------------------------

struct FilterOutcome {
  std::string video_id;
  VideoFeatures features;
  DiagnosticReply diagnostic;
  std::vector<double> vector;
  DynamismScore score;
  GateDecision decision;
};

inline FilterOutcome filter_video(const VideoManifest& m, const ForestModel& model, const FeatureLayout& layout,
                                  const DiagnosticReply& diagnostic, const GateThresholds& gate) {
  FilterOutcome o;
  o.video_id = m.video_id;
  if (layout.size() != model.n_features)
    throw Error(Errc::layout_mismatch, "layout '" + layout.to_string() + "' has " + std::to_string(layout.size()) +
                                           " features, model expects " + std::to_string(model.n_features));
  o.features = extract_video_features(m);
  o.diagnostic = diagnostic;
  o.vector = assemble_features(o.features.motion, o.features.geometric, o.features.coverage, diagnostic.answers, layout);
  o.score = score_video(model, o.vector);
  o.decision = gate_decision(o.score.value, o.features.geometric, diagnostic.verdict, gate);
  return o;
}

/// Calls fn(i) for every i in [0, n) on up to `jobs` threads. If any call
/// throws, the exception of the lowest failing index is rethrown once all
/// workers have stopped.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t width = std::clamp<std::size_t>(jobs > 0 ? static_cast<std::size_t>(jobs) : 1, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (width == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Filters a batch of videos on a pool of `jobs` workers. Output is ordered by
/// video_id whatever the input order or pool width.
inline std::vector<FilterOutcome> filter_videos(const std::vector<VideoManifest>& videos,
                                                const std::vector<DiagnosticReply>& diagnostics,
                                                const ForestModel& model, const FeatureLayout& layout,
                                                const GateThresholds& gate, int jobs = 1) {
  if (diagnostics.size() != videos.size())
    throw Error(Errc::dimension_mismatch, "one diagnostic reply per video is required");
  std::vector<FilterOutcome> out(videos.size());
  parallel_for(videos.size(), jobs,
               [&](std::size_t i) { out[i] = filter_video(videos[i], model, layout, diagnostics[i], gate); });
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.video_id < b.video_id; });
  return out;
}

/// Asks the diagnostic questions through the gateway.
inline DiagnosticReply diagnose(Transport& transport, const VideoManifest& m, const RunConfig& cfg) {
  const auto questions = load_question_bank(cfg.asset_dir / "diagnostic_questions.txt");
  const std::string tpl = read_text_file(cfg.templates() / "diagnostic.txt");
  return ask_diagnostic(transport, m.video_id, questions, sample_frames(m, cfg.prompt_frames), tpl);
}

inline std::string feature_table(const FeatureLayout& layout, const std::vector<FilterOutcome>& rows) {
  std::string out = "video_id";
  for (const auto& n : layout.names()) out += "\t" + n;
  out += "\n";
  for (const auto& r : rows) {
    out += r.video_id;
    for (double v : r.vector) out += "\t" + detail::exact(v);
    out += "\n";
  }
  return out;
}

inline json decisions_json(const std::vector<FilterOutcome>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"video_id", r.video_id},
                   {"score", r.score.value},
                   {"accept", r.decision.accept},
                   {"reasons", r.decision.reasons},
                   {"geometric",
                    {{"depth_continuity", r.features.geometric.depth_continuity},
                     {"focal_stability", r.features.geometric.focal_stability},
                     {"angular_acceleration_deg_s2", r.features.geometric.angular_acceleration_deg_s2},
                     {"translational_jerk_m_s3", r.features.geometric.translational_jerk_m_s3},
                     {"max_rotation_step_deg", r.features.geometric.max_rotation_step_deg}}},
                   {"coverage",
                    {{"moving_pixel_ratio", r.features.coverage.moving_pixel_ratio},
                     {"spatial_dispersion", r.features.coverage.spatial_dispersion}}}});
  }
  return arr;
}

// Toy model -----------------------------------------------------------------------

/// Motion features of a synthetic scene straight from the renderer.
inline MotionFeatures synth_motion_features(const synth::Scene& s) {
  std::vector<GrayImage> frames;
  frames.reserve(static_cast<std::size_t>(s.frames));
  for (int t = 0; t < s.frames; ++t) frames.push_back(to_gray(synth::render(s, t).rgb));
  return motion_features(frames, s.fps);
}

/// Training rows for the bundled toy model: the scripted two-object layout
/// with object A at speeds 0, 0.25, ..., 1.25 m/s labelled 0..5, several
/// texture seeds each. Diagnostic answers are fixed at 0.
inline std::vector<TrainingRow> toy_training_rows(std::uint64_t seed, int seeds_per_level = 3) {
  std::vector<TrainingRow> rows;
  for (int level = 0; level <= 5; ++level) {
    for (int k = 0; k < seeds_per_level; ++k) {
      synth::Scene s = synth::scripted_two_object(derive_seed(seed, "toy-" + std::to_string(level) + "-" + std::to_string(k)));
      s.objects[0].velocity = Vec3(0.25 * level, 0.0, 0.0);
      const auto motion = synth_motion_features(s);
      rows.push_back({assemble_features(motion, {}, {}, DiagnosticVector::constant(0.0)), static_cast<double>(level)});
    }
  }
  return rows;
}

inline ForestModel train_toy_model(std::uint64_t seed = 0) {
  return train_forest(toy_training_rows(seed), {100, 12, derive_seed(seed, "forest")});
}

// End to end ----------------------------------------------------------------------

struct VideoAnalysis {
  TrackSet tracks;
  RelationTimeline timeline;
  CognitiveMap map;
  std::string document;
};

inline VideoAnalysis analyse_video(const VideoManifest& m, const RunConfig& cfg) {
  VideoAnalysis a;
  a.tracks = build_tracks(m, {cfg.alpha});
  a.timeline = infer_timeline(a.tracks, m, {cfg.eps_rel, cfg.min_persistence});
  a.map = build_tcm(m, a.tracks, a.timeline, cfg.tcm());
  a.document = serialize_tcm(a.map);
  return a;
}

inline void write_analysis(const VideoAnalysis& a, const std::filesystem::path& dir) {
  write_text_file(dir / "tcm.txt", a.document);
  json tracks = json::array();
  for (const auto& t : a.tracks.tracks) tracks.push_back(track_to_json(t));
  write_text_file(dir / "tracks.json", tracks.dump(2) + "\n");
  std::string lines;
  for (const auto& l : timeline_to_json_lines(a.timeline)) lines += l.dump() + "\n";
  write_text_file(dir / "timeline.jsonl", lines);
}

/// Grounding baseline that repeats the gold mask of the first annotated
/// frame on every frame (a "nothing moves" predictor).
inline Masklet static_first_frame_baseline(const Masklet& gold) {
  Masklet p = gold;
  if (gold.frames.empty()) return p;
  const BinaryMask first = gold.frames.begin()->second;
  for (auto& [t, mk] : p.frames) mk = first;
  return p;
}

struct QaGenOutput {
  std::vector<QAItem> qa;
  std::vector<GroundingItem> grounding;
  std::vector<RejectedItem> rejected;
  std::vector<std::string> raw_replies;
};

inline QaGenOutput run_qa_generation(Transport& transport, const VideoManifest& m, const std::string& tcm_document,
                                     const RunConfig& cfg) {
  std::vector<TemplateKind> kinds;
  if (cfg.template_kinds.empty()) kinds.assign(kTemplateKinds.begin(), kTemplateKinds.end());
  for (const auto& k : cfg.template_kinds) kinds.push_back(parse_template_kind(k));
  const auto frames = sample_frames(m, cfg.prompt_frames);
  QaGenOutput out;
  for (TemplateKind k : kinds) {
    const auto tpl = load_template(cfg.templates(), k);
    const auto payload = render_prompt(tpl, tcm_document, frames, level_of(k), load_level_rules(cfg.templates(), level_of(k)));
    auto r = generate_qa(transport, m, payload, k, {cfg.retries});
    out.qa.insert(out.qa.end(), r.qa.begin(), r.qa.end());
    out.grounding.insert(out.grounding.end(), r.grounding.begin(), r.grounding.end());
    out.rejected.insert(out.rejected.end(), r.rejected.begin(), r.rejected.end());
    out.raw_replies.insert(out.raw_replies.end(), r.raw_replies.begin(), r.raw_replies.end());
  }
  return out;
}

inline void write_qa_outputs(const QaGenOutput& g, const std::filesystem::path& dir) {
  std::string qa, gr, rej, raw;
  for (const auto& q : g.qa) qa += qa_to_json(q).dump() + "\n";
  for (const auto& x : g.grounding) gr += grounding_to_json(x).dump() + "\n";
  for (const auto& r : g.rejected) rej += json{{"reason", r.reason}, {"item", r.item}}.dump() + "\n";
  for (const auto& r : g.raw_replies) raw += json(r).dump() + "\n";
  write_text_file(dir / "qa.jsonl", qa);
  write_text_file(dir / "grounding.jsonl", gr);
  write_text_file(dir / "rejected.jsonl", rej);
  write_text_file(dir / "raw_replies.jsonl", raw);
}

struct EvalInputs {
  std::vector<QAItem> qa;
  std::map<std::string, char> predictions;
  std::vector<GroundingItem> grounding;
  std::map<std::string, Masklet> grounding_predictions;  // by item_id; missing -> baseline
};

inline ScoreReport evaluate(const EvalInputs& in, std::optional<int> tolerance) {
  const AccuracyResult acc = accuracy(in.predictions, in.qa);
  std::vector<GroundingResult> gr;
  for (const auto& g : in.grounding) {
    auto it = in.grounding_predictions.find(g.item_id);
    const Masklet pred = it != in.grounding_predictions.end() ? it->second : static_first_frame_baseline(g.gold);
    gr.push_back({g.item_id, g.level, jf_masklet(pred, g.gold, tolerance)});
  }
  return build_report(acc, gr);
}

inline void write_report(const ScoreReport& r, const std::filesystem::path& dir) {
  write_text_file(dir / "report.txt", report_to_text(r));
  write_text_file(dir / "report.json", report_to_json(r).dump(2) + "\n");
}

struct RunSummary {
  FilterOutcome filter;
  bool analysed = false;
  std::size_t qa_items = 0, grounding_items = 0;
  std::optional<ScoreReport> report;
};

/// filter -> tcm -> fuse -> qa-gen -> answer -> eval for one manifest.
/// Rejected videos stop after the filter stage.
inline RunSummary run_pipeline(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                               const RunConfig& cfg, Transport& transport) {
  std::filesystem::create_directories(out_dir);
  write_config_echo(cfg, out_dir, {{"manifest", manifest_path.string()}});
  const VideoManifest m = resample_to_rate(load_manifest(manifest_path));
  RunSummary s;

  const ForestModel model = load_forest(cfg.model());
  const FeatureLayout layout = FeatureLayout::parse(cfg.layout);
  s.filter = filter_video(m, model, layout, diagnose(transport, m, cfg), cfg.gate);
  write_text_file(out_dir / "filter" / "features.tsv", feature_table(layout, {s.filter}));
  write_text_file(out_dir / "filter" / "decisions.json", decisions_json({s.filter}).dump(2) + "\n");
  if (!s.filter.decision.accept) return s;

  const VideoAnalysis a = analyse_video(m, cfg);
  write_analysis(a, out_dir / "tcm");
  s.analysed = true;

  FusionMode fm;
  fm.kind = parse_fusion_kind(cfg.fusion_mode);
  fm.overlay_alpha = cfg.overlay_alpha;
  const auto seq = compose_sequence(m, fm);
  write_sequence(seq, out_dir / "fused");

  const QaGenOutput g = run_qa_generation(transport, m, a.document, cfg);
  write_qa_outputs(g, out_dir / "qa");
  s.qa_items = g.qa.size();
  s.grounding_items = g.grounding.size();

  EvalInputs in;
  in.qa = g.qa;
  in.grounding = g.grounding;
  const std::string answer_tpl = read_text_file(cfg.templates() / "vqa_answer.txt");
  std::string preds;
  const auto frames = sample_frames(m, cfg.prompt_frames);
  for (const auto& q : g.qa) {
    const std::string reply = answer_vqa(transport, q, frames, answer_tpl);
    const auto label = parse_choice(reply, q.options);
    if (label) in.predictions[q.qa_id] = *label;
    preds += json{{"qa_id", q.qa_id}, {"reply", reply}}.dump() + "\n";
  }
  write_text_file(out_dir / "eval" / "predictions.jsonl", preds);
  s.report = evaluate(in, cfg.boundary_tolerance);
  write_report(*s.report, out_dir / "eval");
  return s;
}

}  // namespace dyncog
