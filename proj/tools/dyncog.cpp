// dyncog: command-line front end for the dynamic-scene benchmark toolkit.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dyncog/error.hpp"
#include "dyncog/gateway_http.hpp"
#include "dyncog/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dyncog;

namespace {

struct TransportFlags {
  std::string mock;
  EndpointConfig endpoint;
  bool use_http = false;

  void add(CLI::App* app) {
    app->add_option("--mock", mock, "Canned-reply fixture (JSON) used instead of a live endpoint");
    app->add_flag("--http", use_http, "Send requests to the HTTP endpoint");
    app->add_option("--endpoint", endpoint.base_url, "Endpoint base URL")->capture_default_str();
    app->add_option("--model-name", endpoint.model, "Model name sent with each request")->capture_default_str();
    app->add_option("--api-key-env", endpoint.api_key_env, "Environment variable holding the API key")
        ->capture_default_str();
    app->add_option("--timeout", endpoint.timeout_s, "Request timeout in seconds")->capture_default_str();
  }

  std::unique_ptr<Transport> make() const {
    if (!mock.empty()) return std::make_unique<MockTransport>(MockTransport::from_file(mock));
    if (use_http) return std::make_unique<HttpTransport>(endpoint);
    return nullptr;
  }

  json echo() const {
    return {{"transport", !mock.empty() ? "mock" : use_http ? "http" : "none"},
            {"mock", mock},
            {"endpoint", endpoint.base_url},
            {"model_name", endpoint.model},
            {"api_key_env", endpoint.api_key_env},
            {"timeout_s", endpoint.timeout_s}};
  }
};

void add_knobs(CLI::App* app, RunConfig& cfg) {
  app->add_option("--assets", cfg.asset_dir, "Asset directory (templates, question bank, models)")
      ->capture_default_str();
  app->add_option("--seed", cfg.seed, "Top-level seed")->capture_default_str();
  app->add_option("--alpha", cfg.alpha, "EMA smoothing factor for positions")->capture_default_str();
  app->add_option("--eps-rel", cfg.eps_rel, "Closing-speed band labelled parallel (m/s)")->capture_default_str();
  app->add_option("--min-persistence", cfg.min_persistence, "Frames a relation label must hold")
      ->capture_default_str();
}

int run_synth(const std::string& scene, int level, std::uint64_t seed, int width, int height, int frames,
              const fs::path& out) {
  synth::Scene s;
  if (scene == "scripted") s = synth::scripted_two_object(seed);
  else if (scene == "static") s = synth::scripted_static(seed);
  else if (scene == "planted") s = synth::planted_clip(level, seed, width, height, frames);
  else throw Error(Errc::usage, "unknown scene '" + scene + "' (scripted, static, planted)");
  const auto manifest = synth::write_scene(s, out);
  std::cout << manifest.string() << "\n";
  return 0;
}

std::vector<TrainingRow> read_training_table(const fs::path& path) {
  const auto lines = split_lines(read_text_file(path));
  if (lines.empty()) throw Error(Errc::empty_training_set, "empty training table");
  std::vector<std::string> header;
  {
    std::stringstream ss(lines[0]);
    std::string cell;
    while (std::getline(ss, cell, '\t')) header.push_back(cell);
  }
  const auto label_col = std::find(header.begin(), header.end(), "label") - header.begin();
  if (label_col == static_cast<std::ptrdiff_t>(header.size()))
    throw Error(Errc::schema_violation, "training table needs a 'label' column");
  std::vector<TrainingRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    std::stringstream ss(lines[i]);
    std::string cell;
    TrainingRow r;
    std::ptrdiff_t col = 0;
    while (std::getline(ss, cell, '\t')) {
      if (col == label_col) r.label = std::stod(cell);
      else if (col > 0) r.features.push_back(std::stod(cell));  // column 0 is the video id
      ++col;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dyncog: dynamic-scene benchmark construction and evaluation"};
  app.require_subcommand(1);
  RunConfig cfg;

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic RGB-D scene with manifest");
  std::string scene = "scripted";
  int level = 3, width = 320, height = 240, frames = 12;
  fs::path synth_out;
  synth_cmd->add_option("--scene", scene, "scripted | static | planted")->capture_default_str();
  synth_cmd->add_option("--level", level, "Planted dynamism level 0..5")->capture_default_str();
  synth_cmd->add_option("--width", width, "Planted clip width")->capture_default_str();
  synth_cmd->add_option("--height", height, "Planted clip height")->capture_default_str();
  synth_cmd->add_option("--frames", frames, "Planted clip length")->capture_default_str();
  synth_cmd->add_option("--seed", cfg.seed, "Scene seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a dynamism forest");
  bool toy = false;
  fs::path train_table, train_out;
  ForestParams fp;
  train_cmd->add_flag("--toy", toy, "Train the bundled toy model on rendered scripted scenes");
  train_cmd->add_option("--table", train_table, "Feature table (TSV with video_id first and a 'label' column)");
  train_cmd->add_option("--trees", fp.trees, "Tree count")->capture_default_str();
  train_cmd->add_option("--max-depth", fp.max_depth, "Maximum tree depth")->capture_default_str();
  train_cmd->add_option("--seed", cfg.seed, "Top-level seed")->capture_default_str();
  train_cmd->add_option("--out", train_out, "Model file to write")->required();

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Score and gate videos by dynamism");
  std::vector<fs::path> manifests;
  fs::path out_dir, filter_model, filter_train;
  double diag_constant = 0.0;
  int jobs = 1;
  TransportFlags tf;
  filter_cmd->add_option("--manifest", manifests, "Video manifest(s)")->required();
  filter_cmd->add_option("--model", filter_model, "Forest model file");
  filter_cmd->add_option("--train-table", filter_train, "Train a model from this feature table instead");
  filter_cmd->add_option("--layout", cfg.layout, "Feature groups: motion,diagnostic[,geometric][,coverage]")
      ->capture_default_str();
  filter_cmd->add_option("--min-score", cfg.gate.min_score, "Score gate")->capture_default_str();
  filter_cmd->add_option("--max-focal", cfg.gate.max_focal_instability, "Focal-stability gate")->capture_default_str();
  filter_cmd->add_option("--max-rotation-step", cfg.gate.max_rotation_step_deg, "Per-frame rotation gate (deg)")
      ->capture_default_str();
  filter_cmd->add_option("--diagnostic-constant", diag_constant,
                         "Diagnostic answer used for every question when no model transport is given")
      ->capture_default_str();
  filter_cmd->add_option("--assets", cfg.asset_dir, "Asset directory")->capture_default_str();
  filter_cmd->add_option("--trees", fp.trees, "Tree count when training")->capture_default_str();
  filter_cmd->add_option("--max-depth", fp.max_depth, "Tree depth when training")->capture_default_str();
  filter_cmd->add_option("--seed", cfg.seed, "Top-level seed")->capture_default_str();
  filter_cmd->add_option("--jobs", jobs, "Videos processed in parallel")->capture_default_str()->check(CLI::PositiveNumber);
  filter_cmd->add_option("--out", out_dir, "Output directory")->required();
  tf.add(filter_cmd);

  // tcm
  auto* tcm_cmd = app.add_subcommand("tcm", "Render the textual cognitive map of a video");
  fs::path manifest, tcm_out;
  bool on_t = false, on_m = false, on_s = false;
  tcm_cmd->add_option("--manifest", manifest, "Video manifest")->required();
  tcm_cmd->add_flag("--T", on_t, "Include temporal lines");
  tcm_cmd->add_flag("--M", on_m, "Include motion lines");
  tcm_cmd->add_flag("--S", on_s, "Include spatial lines");
  tcm_cmd->add_option("--out", tcm_out, "Output document path")->required();
  add_knobs(tcm_cmd, cfg);

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "Compose raw / mask-overlay / fused frame sequences");
  std::string fuse_layout = "interleaved";
  fuse_cmd->add_option("--manifest", manifest, "Video manifest")->required();
  fuse_cmd->add_option("--mode", cfg.fusion_mode, "raw | masked_only | fusion")->capture_default_str();
  fuse_cmd->add_option("--alpha", cfg.overlay_alpha, "Overlay opacity")->capture_default_str();
  fuse_cmd->add_option("--layout", fuse_layout, "interleaved | side-by-side (fusion mode)")->capture_default_str();
  fuse_cmd->add_option("--out", out_dir, "Output directory")->required();

  // qa-gen
  auto* qa_cmd = app.add_subcommand("qa-gen", "Generate VQA and grounding items through the model gateway");
  fs::path tcm_in;
  qa_cmd->add_option("--manifest", manifest, "Video manifest")->required();
  qa_cmd->add_option("--tcm", tcm_in, "Cognitive-map document")->required();
  qa_cmd->add_option("--kind", cfg.template_kinds, "Template kind(s); default all six");
  qa_cmd->add_option("--retries", cfg.retries, "Retries per malformed reply")->capture_default_str();
  qa_cmd->add_option("--prompt-frames", cfg.prompt_frames, "Frames attached to each prompt")->capture_default_str();
  qa_cmd->add_option("--assets", cfg.asset_dir, "Asset directory")->capture_default_str();
  qa_cmd->add_option("--out", out_dir, "Output directory")->required();
  tf.add(qa_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score VQA predictions and grounding masklets");
  fs::path qa_file, pred_file, grounding_file, grounding_pred_file;
  int tolerance = -1;
  eval_cmd->add_option("--qa", qa_file, "QA items (JSON lines)")->required();
  eval_cmd->add_option("--predictions", pred_file, "Predictions: {qa_id, label} or {qa_id, reply} per line")
      ->required();
  eval_cmd->add_option("--grounding", grounding_file, "Grounding items (JSON lines)");
  eval_cmd->add_option("--grounding-predictions", grounding_pred_file,
                       "Predicted masklets: {item_id, masklet} per line; missing items use the static baseline");
  eval_cmd->add_option("--tolerance", tolerance, "Boundary tolerance in px; -1 = 0.8% of the diagonal")
      ->capture_default_str();
  eval_cmd->add_option("--out", out_dir, "Output directory")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "filter -> tcm -> fuse -> qa-gen -> eval for one video");
  run_cmd->add_option("--manifest", manifest, "Video manifest")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--model", cfg.model_path, "Forest model (default: bundled toy model)");
  run_cmd->add_option("--layout", cfg.layout, "Feature groups")->capture_default_str();
  run_cmd->add_option("--fusion", cfg.fusion_mode, "raw | masked_only | fusion")->capture_default_str();
  run_cmd->add_option("--overlay-alpha", cfg.overlay_alpha, "Overlay opacity")->capture_default_str();
  run_cmd->add_option("--retries", cfg.retries, "Retries per malformed reply")->capture_default_str();
  run_cmd->add_option("--prompt-frames", cfg.prompt_frames, "Frames attached to each prompt")->capture_default_str();
  run_cmd->add_option("--kind", cfg.template_kinds, "Template kind(s); default all six");
  run_cmd->add_option("--min-score", cfg.gate.min_score, "Score gate")->capture_default_str();
  add_knobs(run_cmd, cfg);
  tf.add(run_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) return run_synth(scene, level, cfg.seed, width, height, frames, synth_out);

    if (*train_cmd) {
      ForestModel model;
      if (toy) {
        model = train_toy_model(cfg.seed);
      } else if (!train_table.empty()) {
        fp.seed = derive_seed(cfg.seed, "forest");
        model = train_forest(read_training_table(train_table), fp);
      } else {
        throw Error(Errc::usage, "train needs --toy or --table");
      }
      write_text_file(train_out, serialize_forest(model));
      write_config_echo(cfg, train_out.parent_path().empty() ? fs::path(".") : train_out.parent_path(),
                        {{"command", "train"}, {"toy", toy}, {"table", train_table.string()}, {"trees", fp.trees},
                         {"max_depth", fp.max_depth}});
      return 0;
    }

    if (*filter_cmd) {
      if (filter_model.empty() && filter_train.empty())
        throw Error(Errc::usage, "filter needs --model or --train-table");
      fs::create_directories(out_dir);
      write_config_echo(cfg, out_dir,
                        {{"command", "filter"}, {"model", filter_model.string()}, {"train_table", filter_train.string()},
                         {"diagnostic_constant", diag_constant}, {"jobs", jobs}, {"gateway", tf.echo()}});
      ForestModel model;
      if (!filter_model.empty()) {
        model = load_forest(filter_model);
      } else {
        fp.seed = derive_seed(cfg.seed, "forest");
        model = train_forest(read_training_table(filter_train), fp);
      }
      const FeatureLayout layout = FeatureLayout::parse(cfg.layout);
      auto transport = tf.make();
      std::vector<VideoManifest> videos;
      std::vector<DiagnosticReply> diags;
      for (const auto& path : manifests) {
        videos.push_back(resample_to_rate(load_manifest(path)));
        // Gateway calls stay sequential so canned and live replies arrive in a fixed order.
        diags.push_back(transport ? diagnose(*transport, videos.back(), cfg)
                                  : DiagnosticReply{DiagnosticVector::constant(diag_constant), std::nullopt});
      }
      const auto outcomes = filter_videos(videos, diags, model, layout, cfg.gate, jobs);
      write_text_file(out_dir / "features.tsv", feature_table(layout, outcomes));
      write_text_file(out_dir / "decisions.json", decisions_json(outcomes).dump(2) + "\n");
      for (const auto& o : outcomes) {
        std::string reasons;
        for (const auto& r : o.decision.reasons) reasons += (reasons.empty() ? "" : ",") + r;
        std::printf("%s\t%s\t%s\t%s\n", o.video_id.c_str(), fixed(o.score.value, 3).c_str(),
                    o.decision.accept ? "accept" : "reject", reasons.c_str());
      }
      return 0;
    }

    if (*tcm_cmd) {
      cfg.tcm_temporal = on_t;
      cfg.tcm_motion = on_m;
      cfg.tcm_spatial = on_s;
      const VideoManifest m = resample_to_rate(load_manifest(manifest));
      const VideoAnalysis a = analyse_video(m, cfg);
      write_text_file(tcm_out, a.document);
      write_config_echo(cfg, tcm_out.parent_path().empty() ? fs::path(".") : tcm_out.parent_path(),
                        {{"command", "tcm"}, {"manifest", manifest.string()}});
      for (const auto& w : a.tracks.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }

    if (*fuse_cmd) {
      const VideoManifest m = load_manifest(manifest);
      FusionMode fm;
      fm.kind = parse_fusion_kind(cfg.fusion_mode);
      fm.overlay_alpha = cfg.overlay_alpha;
      if (fuse_layout == "side-by-side" || fuse_layout == "side_by_side") fm.layout = FusionLayout::side_by_side;
      else if (fuse_layout != "interleaved") throw Error(Errc::usage, "unknown layout '" + fuse_layout + "'");
      write_sequence(compose_sequence(m, fm), out_dir);
      write_config_echo(cfg, out_dir, {{"command", "fuse"}, {"manifest", manifest.string()}, {"layout", fuse_layout}});
      return 0;
    }

    if (*qa_cmd) {
      auto transport = tf.make();
      if (!transport) throw Error(Errc::usage, "qa-gen needs --mock or --http");
      const VideoManifest m = resample_to_rate(load_manifest(manifest));
      fs::create_directories(out_dir);
      write_config_echo(cfg, out_dir,
                        {{"command", "qa-gen"}, {"manifest", manifest.string()}, {"tcm", tcm_in.string()},
                         {"gateway", tf.echo()}});
      try {
        const auto g = run_qa_generation(*transport, m, read_text_file(tcm_in), cfg);
        write_qa_outputs(g, out_dir);
        std::printf("%zu qa items, %zu grounding items, %zu rejected\n", g.qa.size(), g.grounding.size(),
                    g.rejected.size());
      } catch (const MalformedGenerationError& e) {
        std::string raw;
        for (const auto& r : e.raw_replies) raw += json(r).dump() + "\n";
        write_text_file(out_dir / "malformed_replies.jsonl", raw);
        throw;
      }
      return 0;
    }

    if (*eval_cmd) {
      EvalInputs in;
      in.qa = load_qa_items(qa_file);
      std::map<std::string, const QAItem*> by_id;
      for (const auto& q : in.qa) by_id[q.qa_id] = &q;
      for (const auto& j : read_json_lines(pred_file)) {
        const std::string id = j.at("qa_id").get<std::string>();
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(Errc::unknown_qa_id, "prediction for unknown qa_id '" + id + "'");
        std::optional<char> label;
        if (j.contains("label")) label = parse_choice(j.at("label").get<std::string>(), it->second->options);
        else label = parse_choice(j.at("reply").get<std::string>(), it->second->options);
        if (label) in.predictions[id] = *label;
      }
      if (!grounding_file.empty())
        for (const auto& j : read_json_lines(grounding_file)) in.grounding.push_back(grounding_from_json(j));
      if (!grounding_pred_file.empty())
        for (const auto& j : read_json_lines(grounding_pred_file))
          in.grounding_predictions[j.at("item_id").get<std::string>()] = masklet_from_json(j.at("masklet"));
      if (tolerance >= 0) cfg.boundary_tolerance = tolerance;
      const ScoreReport r = evaluate(in, cfg.boundary_tolerance);
      write_report(r, out_dir);
      write_config_echo(cfg, out_dir,
                        {{"command", "eval"}, {"qa", qa_file.string()}, {"predictions", pred_file.string()},
                         {"grounding", grounding_file.string()},
                         {"grounding_predictions", grounding_pred_file.string()}});
      std::cout << report_to_text(r);
      return 0;
    }

    if (*run_cmd) {
      auto transport = tf.make();
      if (!transport) throw Error(Errc::usage, "run needs --mock or --http");
      const RunSummary s = run_pipeline(manifest, out_dir, cfg, *transport);
      std::printf("%s: score %s, %s\n", s.filter.video_id.c_str(), fixed(s.filter.score.value, 3).c_str(),
                  s.filter.decision.accept ? "accepted" : "rejected");
      if (s.report)
        std::printf("%zu qa items, %zu grounding items, overall accuracy %s, grounding J&F %s\n", s.qa_items,
                    s.grounding_items, fixed(s.report->overall_accuracy, 1).c_str(),
                    fixed(s.report->grounding_average.jf, 1).c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
