// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "dyncog/gateway_http.hpp"
#include "dyncog/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

#ifndef DYNCOG_CLI_PATH
#define DYNCOG_CLI_PATH "dyncog"
#endif

using namespace dyncog;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream note;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) note << "failed: " << what << "; ";
    ok = ok && cond;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vec3 matrix_backproject(const Intrinsics& k, const Mat3& r_wc, const Vec3& t_wc, double u, double v, double d) {
  Eigen::Matrix3d K;
  K << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  return r_wc * (K.inverse() * Vec3(u, v, 1.0) * d) + t_wc;
}

// 1
void geometry(Check& c) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_oracle = 0, worst_round = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics k{100 + 900 * u(rng), 100 + 900 * u(rng), 10 + 600 * u(rng), 10 + 400 * u(rng), 640, 480};
    CameraPose pose;
    pose.rotation = testsupport::random_rotation(rng);
    pose.translation = Vec3(20 * u(rng) - 10, 20 * u(rng) - 10, 20 * u(rng) - 10);
    const Vec2 px(640 * u(rng), 480 * u(rng));
    const double d = 0.1 + 50 * u(rng);
    const Vec3 w = backproject(k, pose, px, d);
    const Vec3 o = matrix_backproject(k, pose.rotation, pose.translation, px.x(), px.y(), d);
    worst_oracle = std::max(worst_oracle, (w - o).norm() / std::max(1.0, o.norm()));
    const Projection pr = project(k, pose, w);
    worst_round = std::max({worst_round, std::abs(pr.pixel.x() - px.x()) / std::max(1.0, px.x()),
                            std::abs(pr.pixel.y() - px.y()) / std::max(1.0, px.y()), std::abs(pr.depth_m - d) / d});
  }
  const double dt = seconds_since(t0);
  c.expect(worst_oracle <= 1e-9, "backproject vs matrix oracle");
  c.expect(worst_round <= 1e-9, "project after backproject");
  c.expect(dt < 1.0, "runtime");
  c.note << "max rel err " << worst_oracle << ", round trip " << worst_round << ", " << fixed(dt, 3) << " s";
}

struct Scripted {
  VideoManifest manifest;
  TrackSet tracks;
  RelationTimeline timeline;
};

const Scripted& scripted() {
  static const Scripted s = [] {
    Scripted out;
    out.manifest = load_manifest(testsupport::scripted_manifest());
    out.tracks = build_tracks(out.manifest);
    out.timeline = infer_timeline(out.tracks, out.manifest);
    return out;
  }();
  return s;
}

// 2
void kinematics(Check& c) {
  const auto& s = scripted();
  const ObjectTrack* a = s.tracks.find(1);
  c.expect(a != nullptr, "track A present");
  if (!a) return;
  double worst = 0;
  for (const auto& smp : a->samples) {
    if (smp.t < 5) continue;
    c.expect(smp.velocity.has_value(), "velocity after frame 5");
    if (smp.velocity) worst = std::max(worst, (*smp.velocity - Vec3(1, 0, 0)).norm());
  }
  c.expect(worst <= 0.05, "smoothed velocity within 5%");

  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double affine = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 p0(u(rng), u(rng), u(rng)), v(u(rng), u(rng), u(rng));
    std::vector<TimedPoint> pts;
    for (int i = 0; i < 30; ++i) pts.push_back({i / 6.0, p0 + v * (i / 6.0)});
    const auto d = differentiate(pts);
    for (std::size_t i = 1; i < pts.size(); ++i) affine = std::max(affine, (*d.velocity[i] - v).cwiseAbs().maxCoeff());
    for (std::size_t i = 2; i < pts.size(); ++i) affine = std::max(affine, d.acceleration[i]->cwiseAbs().maxCoeff());
  }
  c.expect(affine <= 1e-12, "affine differentiation exact");
  c.note << "max |v - truth| after frame 5 = " << fixed(worst, 4) << " m/s, affine err " << affine;
}

// 3
void relations(Check& c) {
  const double eps = RelationOptions{}.eps_rel;
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const double h = 1.0 / 6.0;
  int checked = 0, pairs = 0;
  while (pairs < 1000) {
    // Two constant-velocity tracks sampled at 6 fps; velocities come from
    // differencing the sampled positions, not from the generator.
    const Vec3 pa(u(rng), u(rng), u(rng)), pb(u(rng), u(rng), u(rng)), va(u(rng), u(rng), u(rng)),
        vb(u(rng), u(rng), u(rng));
    std::vector<TimedPoint> ta, tb;
    for (int i = 0; i < 12; ++i) {
      ta.push_back({i * h, pa + va * (i * h)});
      tb.push_back({i * h, pb + vb * (i * h)});
    }
    const auto da = differentiate(ta), db = differentiate(tb);
    bool coincident = false;
    for (const auto& p : ta) coincident = coincident || (p.value - tb[&p - ta.data()].value).norm() < 1e-6;
    if (coincident) continue;
    ++pairs;
    for (std::size_t i = 1; i + 1 < ta.size(); ++i) {
      const double cs = closing_speed(ta[i].value, tb[i].value, *da.velocity[i], *db.velocity[i]);
      if (std::abs(cs) <= 2 * eps) continue;
      const double dist_change = (tb[i + 1].value - ta[i + 1].value).norm() -
                                 (tb[i - 1].value - ta[i - 1].value).norm();
      const Relation want = dist_change < 0 ? Relation::approaching : Relation::receding;
      c.expect(classify_relation(cs, eps) == want, "relation sign vs distance series");
      ++checked;
    }
  }
  std::vector<Relation> seq;
  for (const auto& r : scripted().timeline.pair_series(1, 2))
    if (seq.empty() || seq.back() != r.stable) seq.push_back(r.stable);
  c.expect(seq == std::vector<Relation>{Relation::approaching, Relation::parallel, Relation::receding},
           "overtake sequence");
  c.note << pairs << " pairs, " << checked << " samples outside the parallel band; overtake:";
  for (auto r : seq) c.note << " " << to_string(r);
}

TcmConfig toggles(int mask) {
  TcmConfig cfg;
  cfg.include_temporal = mask & 1;
  cfg.include_motion = mask & 2;
  cfg.include_spatial = mask & 4;
  return cfg;
}

// 4
void tcm(Check& c) {
  const auto& s = scripted();
  std::vector<std::multiset<std::string>> sets(8);
  for (int mask = 0; mask < 8; ++mask) {
    const auto doc = serialize_tcm(build_tcm(s.manifest, s.tracks, s.timeline, toggles(mask)));
    c.expect(doc == serialize_tcm(build_tcm(s.manifest, s.tracks, s.timeline, toggles(mask))), "byte determinism");
    const auto lines = split_lines(doc);
    sets[static_cast<std::size_t>(mask)] = {lines.begin() + 1, lines.end()};
  }
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      if ((a & b) == a)
        c.expect(std::includes(sets[b].begin(), sets[b].end(), sets[a].begin(), sets[a].end()), "toggle monotonicity");
  const auto rows = load_ablation_rows(json::parse(read_text_file(testsupport::fixture("tcm_ablation.json"))));
  const double delta = ablation_delta(rows, "w/ T + M + S", "w/o TCM");
  c.expect(delta == 5.5, "ablation delta");
  c.note << "8 configurations nested, delta " << fixed(delta, 1);
}

BinaryMask to_mask(const oracle::Grid& g) {
  BinaryMask m(g.w, g.h);
  for (std::size_t i = 0; i < g.v.size(); ++i) m.bits[i] = static_cast<std::uint8_t>(g.v[i]);
  return m;
}

// 5
void metrics(Check& c) {
  const auto t0 = Clock::now();
  std::vector<std::pair<oracle::Grid, oracle::Grid>> pairs;
  std::mt19937_64 rng(105);
  for (int i = 0; i < 250; ++i) {
    const int w = 1 + static_cast<int>(rng() % 32), h = 1 + static_cast<int>(rng() % 32);
    oracle::Grid a(w, h), b(w, h);
    const int density = 2 + static_cast<int>(rng() % 6);
    for (auto& v : a.v) v = rng() % density == 0;
    for (auto& v : b.v) v = rng() % density == 0;
    pairs.emplace_back(a, b);
  }
  // Adversarial: empty, full, one-pixel shifts of a block.
  for (int w : {1, 7, 32}) {
    oracle::Grid empty(w, w), full(w, w), blk(w, w), shifted(w, w);
    std::fill(full.v.begin(), full.v.end(), 1);
    for (int y = w / 4; y < 3 * w / 4 + 1; ++y)
      for (int x = w / 4; x < 3 * w / 4 + 1; ++x) {
        blk.v[static_cast<std::size_t>(y) * w + x] = 1;
        if (x + 1 < w) shifted.v[static_cast<std::size_t>(y) * w + x + 1] = 1;
      }
    for (const auto& [p, q] : std::vector<std::pair<oracle::Grid, oracle::Grid>>{
             {empty, empty}, {empty, full}, {full, full}, {full, empty}, {blk, shifted}, {shifted, blk}, {blk, full}})
      pairs.emplace_back(p, q);
  }
  int mismatches = 0;
  for (const auto& [a, b] : pairs) {
    const BinaryMask ma = to_mask(a), mb = to_mask(b);
    if (region_similarity_J(ma, mb) != oracle::jaccard(a, b)) ++mismatches;
    for (int tol : {0, 1, 2, 4})
      if (boundary_accuracy_F(ma, mb, tol) != oracle::boundary_f(a, b, tol)) ++mismatches;
  }
  c.expect(mismatches == 0, "J/F vs brute force");

  // Grounding average over the three levels of one published baseline.
  const std::vector<GroundingResult> levels = {{"l1", Level::inter_object, {0.660, 0.660, 0.660}},
                                               {"l2", Level::object_scene, {0.711, 0.711, 0.711}},
                                               {"l3", Level::camera_object, {0.586, 0.586, 0.586}}};
  const std::string avg = fixed(build_report({}, levels).grounding_average.jf, 1);
  c.expect(avg == "65.2", "three-level grounding average");
  const double dt = seconds_since(t0);
  c.expect(dt < 10.0, "runtime");
  c.note << pairs.size() << " pairs, " << mismatches << " mismatches, average " << avg << ", " << fixed(dt, 2) << " s";
}

QAItem four_option(int i, char answer) {
  QAItem q;
  q.qa_id = "q" + std::to_string(i);
  q.video_id = "v";
  q.subtask = subtasks()[static_cast<std::size_t>(i) % subtasks().size()].second;
  q.level = *level_of_subtask(q.subtask);
  q.question = "?";
  q.options = {"a", "b", "c", "d"};
  q.answer = answer;
  return q;
}

// 6
void chance(Check& c) {
  std::mt19937_64 rng(106);
  std::vector<QAItem> items;
  std::map<std::string, char> preds;
  for (int i = 0; i < 10000; ++i) {
    items.push_back(four_option(i, static_cast<char>('A' + rng() % 4)));
    preds[items.back().qa_id] = static_cast<char>('A' + rng() % 4);
  }
  const auto acc = accuracy(preds, items);
  int correct = 0, total = 0;
  for (const auto& [_, s] : acc.per_subtask) correct += s.correct, total += s.total;
  const double pct = 100.0 * correct / total;
  c.expect(std::abs(pct - 25.0) <= 2.0, "uniform random near 25");
  c.expect(chance_random(items) == 25.0, "analytic chance");

  int fixtures = 0;
  for (int skew = 1; skew <= 20; ++skew) {
    std::vector<QAItem> biased;
    for (int i = 0; i < 400; ++i) {
      const bool favour = static_cast<int>(rng() % 20) < skew;
      biased.push_back(four_option(i, favour ? 'B' : static_cast<char>('A' + rng() % 4)));
    }
    const auto freq = chance_frequency(biased);
    const auto rnd = chance_random_by_subtask(biased);
    for (const auto& [s, f] : freq) c.expect(f >= rnd.at(s), "frequency >= random");
    ++fixtures;
  }
  c.note << "random predictions " << fixed(pct, 2) << "%, frequency >= random on " << fixtures << " skewed fixtures";
}

// 7
void filter(Check& c) {
  const auto t0 = Clock::now();
  struct Clip {
    int level;
    std::vector<double> features;
  };
  std::vector<Clip> clips(60);
  parallel_for(clips.size(), static_cast<int>(std::max(1u, std::thread::hardware_concurrency())), [&](std::size_t i) {
    const int level = static_cast<int>(i % 6);
    const auto scene = synth::planted_clip(level, 1000 + i);
    clips[i] = {level, assemble_features(synth_motion_features(scene), {}, {}, DiagnosticVector::constant(0.0))};
  });
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(107));
  std::vector<TrainingRow> train;
  for (std::size_t i = 0; i < 40; ++i) train.push_back({clips[order[i]].features, static_cast<double>(clips[order[i]].level)});
  const ForestModel model = train_forest(train, {100, 12, 107});
  std::vector<double> scores, levels;
  for (std::size_t i = 40; i < 60; ++i) {
    scores.push_back(score_video(model, clips[order[i]].features).value);
    levels.push_back(clips[order[i]].level);
  }
  const double rho = spearman(scores, levels);
  c.expect(rho >= 0.8, "Spearman on held-out clips");

  const ForestModel bundled = load_forest(default_asset_dir() / "models" / "toy_forest.txt");
  const DiagnosticReply diag{DiagnosticVector::constant(0.0), std::nullopt};
  const auto dyn = filter_video(load_manifest(testsupport::scripted_manifest()), bundled, {}, diag, {});
  const auto stat = filter_video(load_manifest(testsupport::static_manifest()), bundled, {}, diag, {});
  c.expect(dyn.decision.accept, "dynamic accepted");
  c.expect(!stat.decision.accept, "static rejected");
  c.expect(dyn.vector.size() == 31 && FeatureLayout{}.size() == 31, "31 features");
  const double dt = seconds_since(t0);
  c.expect(dt < 60.0, "runtime");
  c.note << "rho " << fixed(rho, 3) << ", scores dynamic " << fixed(dyn.score.value, 2) << " static "
         << fixed(stat.score.value, 2) << ", " << dyn.vector.size() << " features, " << fixed(dt, 1) << " s";
}

// 8
void fusion(Check& c) {
  const auto m = load_manifest(testsupport::scripted_manifest());
  int frames_checked = 0;
  for (int t : {0, 11, 29}) {
    const RgbImage raw = m.load_frame(t);
    const auto masks = m.load_masks(t);
    std::vector<int> ids;
    for (const auto& im : masks) ids.push_back(im.object_id);
    const Palette pal = make_palette(ids);
    c.expect(overlay(raw, masks, 0.0, pal).data == raw.data, "alpha 0 identity");
    const RgbImage full = overlay(raw, masks, 1.0, pal);
    const RgbImage half = overlay(raw, masks, 0.5, pal);
    for (std::size_t p = 0; p < raw.data.size() / 3; ++p) {
      const InstanceMask* top = nullptr;
      for (const auto& im : masks)
        if (im.pixels.bits[p] && (!top || im.object_id > top->object_id)) top = &im;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        if (top) {
          c.expect(full.data[p * 3 + ch] == pal.at(top->object_id)[ch], "alpha 1 palette colour");
        } else {
          c.expect(full.data[p * 3 + ch] == raw.data[p * 3 + ch] && half.data[p * 3 + ch] == raw.data[p * 3 + ch],
                   "background untouched");
        }
      }
    }
    ++frames_checked;
  }
  const auto seq = compose_sequence(m, FusionMode{});
  c.expect(seq.size() == 2 * static_cast<std::size_t>(m.frame_count()), "fused length doubles");
  for (std::size_t i = 0; i < seq.size(); i += 2) {
    c.expect(seq[i].kind == "raw" && seq[i].image.data == m.load_frame(static_cast<int>(i / 2)).data, "raw at even");
    c.expect(seq[i + 1].kind == "overlay", "overlay at odd");
  }
  c.note << frames_checked << " frames pixel-checked, sequence " << m.frame_count() << " -> " << seq.size();
}

// 9
void end_to_end(Check& c) {
  const auto manifest = testsupport::scripted_manifest();
  const auto out = testsupport::scratch("acceptance-run");
  const std::string cmd = std::string("\"") + DYNCOG_CLI_PATH + "\" run --manifest \"" + manifest.string() +
                          "\" --mock \"" + testsupport::fixture("mock_scripted.json").string() + "\" --out \"" +
                          out.string() + "\" >/dev/null 2>&1";
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  const double dt = seconds_since(t0);
  c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "run exits 0");
  c.expect(dt < 30.0, "runtime");
  if (!c.ok) return;

  const json decisions = json::parse(read_text_file(out / "filter" / "decisions.json"));
  c.expect(decisions.size() == 1 && decisions[0]["accept"] == true, "filter accepted");
  c.expect(std::filesystem::exists(out / "tcm" / "tcm.txt"), "map written");

  std::map<std::string, QAItem> qa;
  for (const auto& j : read_json_lines(out / "qa" / "qa.jsonl")) {
    QAItem q = qa_from_json(j);  // validates
    qa[q.qa_id] = q;
  }
  std::vector<GroundingItem> grounding;
  for (const auto& j : read_json_lines(out / "qa" / "grounding.jsonl")) grounding.push_back(grounding_from_json(j));
  c.expect(!qa.empty() && !grounding.empty(), "qa and grounding emitted");

  std::map<std::string, std::pair<int, int>> per_subtask;
  for (const auto& [_, q] : qa) per_subtask[q.subtask].second++;
  for (const auto& j : read_json_lines(out / "eval" / "predictions.jsonl")) {
    const auto& q = qa.at(j.at("qa_id").get<std::string>());
    if (parse_choice(j.at("reply").get<std::string>(), q.options) == q.answer) per_subtask[q.subtask].first++;
  }
  std::map<Level, std::vector<double>> by_level;
  for (const auto& [s, n] : per_subtask) by_level[*level_of_subtask(s)].push_back(100.0 * n.first / n.second);
  double overall = 0;
  const json report = json::parse(read_text_file(out / "eval" / "report.json"));
  for (const auto& [l, v] : by_level) {
    double sum = 0;
    for (double x : v) sum += x;
    overall += sum / static_cast<double>(v.size());
  }
  overall /= static_cast<double>(by_level.size());
  c.expect(report["qa"]["overall"].get<double>() == overall, "overall accuracy recomputes");
  c.expect(report["qa"]["count"].get<std::size_t>() == qa.size(), "qa count");

  std::map<Level, std::vector<double>> jf;
  for (const auto& g : grounding) jf[g.level].push_back(100.0 * jf_masklet(static_first_frame_baseline(g.gold), g.gold).jf);
  double avg = 0;
  for (const auto& [l, v] : jf) {
    double sum = 0;
    for (double x : v) sum += x;
    avg += sum / static_cast<double>(v.size());
  }
  avg /= static_cast<double>(jf.size());
  c.expect(report["grounding"]["average"]["J&F"].get<double>() == avg, "grounding average recomputes");
  c.note << qa.size() << " qa, " << grounding.size() << " grounding, overall " << fixed(overall, 1) << ", J&F "
         << fixed(avg, 1) << ", " << fixed(dt, 1) << " s";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"geometry oracle", geometry},   {"kinematics", kinematics},     {"relation oracle", relations},
      {"map ablation mechanics", tcm}, {"metrics oracle", metrics},    {"chance baselines", chance},
      {"filter pipeline", filter},     {"mask fusion", fusion},        {"end to end with mock gateway", end_to_end}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.note << "threw " << e.what();
    }
    failed += !c.ok;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (c.ok ? "PASS" : "FAIL") << "  "
              << c.note.str() << std::endl;
  }
  return failed ? 1 : 0;
}
