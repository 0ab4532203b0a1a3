#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

// Benchmark items ---------------------------------------------------------------

enum class Level { inter_object, object_scene, camera_object };

inline constexpr std::array<Level, 3> kLevels = {Level::inter_object, Level::object_scene, Level::camera_object};

inline const char* to_string(Level l) {
  switch (l) {
    case Level::inter_object: return "inter_object";
    case Level::object_scene: return "object_scene";
    case Level::camera_object: return "camera_object";
  }
  return "inter_object";
}

inline const char* display_name(Level l) {
  switch (l) {
    case Level::inter_object: return "Inter-Object";
    case Level::object_scene: return "Object-Scene";
    case Level::camera_object: return "Camera-Object";
  }
  return "Inter-Object";
}

inline Level parse_level(const std::string& s) {
  for (Level l : kLevels)
    if (s == to_string(l) || s == display_name(l)) return l;
  throw Error(Errc::schema_violation, "unknown level '" + s + "'");
}

/// The nine subtasks, three per level, in report column order.
inline const std::vector<std::pair<Level, std::string>>& subtasks() {
  static const std::vector<std::pair<Level, std::string>> table = {
      {Level::inter_object, "Act. & Obj. Desc."},     {Level::inter_object, "Move. & Temp. Dyn."},
      {Level::inter_object, "Spatial Rel. & Change"}, {Level::object_scene, "Mov. Patterns & Traj."},
      {Level::object_scene, "Spatial Rel. & Comp."},  {Level::object_scene, "Scene Focus & Dyn."},
      {Level::camera_object, "Cam. Motion & Orient."}, {Level::camera_object, "Cam-Obj. Interaction"},
      {Level::camera_object, "Temp. & Visual Change"},
  };
  return table;
}

inline std::optional<Level> level_of_subtask(const std::string& name) {
  for (const auto& [l, s] : subtasks())
    if (s == name) return l;
  return std::nullopt;
}

struct QAItem {
  std::string qa_id;
  std::string video_id;
  Level level = Level::inter_object;
  std::string subtask;
  std::string question;
  std::vector<std::string> options;  // labelled A, B, ... in order
  char answer = 'A';

  static char label(std::size_t i) { return static_cast<char>('A' + i); }

  /// Stored items may carry 2..4 options; generated items must carry exactly 4.
  void validate() const {
    if (qa_id.empty()) throw Error(Errc::schema_violation, "qa_id must be non-empty");
    if (options.size() < 2 || options.size() > 4)
      throw Error(Errc::schema_violation, "item " + qa_id + ": needs 2 to 4 options");
    for (std::size_t i = 0; i < options.size(); ++i)
      for (std::size_t j = i + 1; j < options.size(); ++j)
        if (options[i] == options[j]) throw Error(Errc::schema_violation, "item " + qa_id + ": duplicate options");
    if (answer < 'A' || answer >= label(options.size()))
      throw Error(Errc::schema_violation, "item " + qa_id + ": answer is not one of the labels");
    const auto l = level_of_subtask(subtask);
    if (!l) throw Error(Errc::schema_violation, "item " + qa_id + ": unknown subtask '" + subtask + "'");
    if (*l != level) throw Error(Errc::schema_violation, "item " + qa_id + ": subtask does not belong to its level");
  }
};

inline json qa_to_json(const QAItem& q) {
  json opts = json::object();
  for (std::size_t i = 0; i < q.options.size(); ++i) opts[std::string(1, QAItem::label(i))] = q.options[i];
  return {{"qa_id", q.qa_id},         {"video_id", q.video_id}, {"level", to_string(q.level)},
          {"subtask", q.subtask},     {"question", q.question}, {"options", opts},
          {"answer", std::string(1, q.answer)}};
}

inline QAItem qa_from_json(const json& j) {
  QAItem q;
  try {
    q.qa_id = j.at("qa_id").get<std::string>();
    q.video_id = j.value("video_id", "");
    q.level = parse_level(j.at("level").get<std::string>());
    q.subtask = j.at("subtask").get<std::string>();
    q.question = j.at("question").get<std::string>();
    const auto& opts = j.at("options");
    if (opts.is_array()) {
      for (const auto& o : opts) q.options.push_back(o.get<std::string>());
    } else {
      for (std::size_t i = 0; i < opts.size(); ++i) {
        const std::string key(1, QAItem::label(i));
        if (!opts.contains(key)) throw Error(Errc::schema_violation, "options must be labelled A, B, C, D in order");
        q.options.push_back(opts.at(key).get<std::string>());
      }
    }
    const auto ans = j.at("answer").get<std::string>();
    if (ans.size() != 1) throw Error(Errc::schema_violation, "answer must be a single label");
    q.answer = ans[0];
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("qa item: ") + e.what());
  }
  q.validate();
  return q;
}

/// One JSON object per line; blank lines are skipped.
inline std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::vector<json> out;
  int n = 0;
  for (const auto& line : split_lines(read_text_file(path))) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::schema_violation, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<QAItem> load_qa_items(const std::filesystem::path& path) {
  std::vector<QAItem> items;
  for (const auto& j : read_json_lines(path)) items.push_back(qa_from_json(j));
  return items;
}

struct GroundingItem {
  std::string item_id;
  std::string video_id;
  Level level = Level::inter_object;
  std::string referring_text;
  Masklet gold;

  void validate() const {
    if (item_id.empty()) throw Error(Errc::schema_violation, "grounding item_id must be non-empty");
    const bool any = std::any_of(gold.frames.begin(), gold.frames.end(), [](const auto& f) { return !f.second.empty(); });
    if (!any) throw Error(Errc::schema_violation, "grounding item " + item_id + ": gold masklet is empty");
  }
};

inline json grounding_to_json(const GroundingItem& g) {
  return {{"item_id", g.item_id},
          {"video_id", g.video_id},
          {"level", to_string(g.level)},
          {"referring_text", g.referring_text},
          {"gold", masklet_to_json(g.gold)}};
}

inline GroundingItem grounding_from_json(const json& j) {
  GroundingItem g;
  try {
    g.item_id = j.at("item_id").get<std::string>();
    g.video_id = j.value("video_id", "");
    g.level = parse_level(j.value("level", "inter_object"));
    g.referring_text = j.at("referring_text").get<std::string>();
    g.gold = masklet_from_json(j.at("gold"));
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("grounding item: ") + e.what());
  }
  g.validate();
  return g;
}

// Multiple choice -----------------------------------------------------------------

/// Maps a free-text reply to a label: the first standalone capital A-D that
/// names an existing option, else an exact (trimmed) option text, else none.
inline std::optional<char> parse_choice(const std::string& reply, const std::vector<std::string>& options) {
  const char last = static_cast<char>('A' + std::min<std::size_t>(options.size(), 4) - 1);
  auto word = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
  for (std::size_t i = 0; i < reply.size(); ++i) {
    const char c = reply[i];
    if (c < 'A' || c > last) continue;
    const bool before = i > 0 && word(static_cast<unsigned char>(reply[i - 1]));
    const bool after = i + 1 < reply.size() && word(static_cast<unsigned char>(reply[i + 1]));
    if (!before && !after) return c;
  }
  const std::string t = trim(reply);
  for (std::size_t i = 0; i < options.size(); ++i)
    if (t == trim(options[i])) return QAItem::label(i);
  return std::nullopt;
}

// Accuracy ------------------------------------------------------------------------

struct Tally {
  int correct = 0;
  int total = 0;
  double percent() const { return total ? 100.0 * correct / total : 0.0; }
};

struct AccuracyResult {
  std::map<std::string, Tally> per_subtask;
};

/// Missing predictions count as wrong; predictions for unknown ids throw.
inline AccuracyResult accuracy(const std::map<std::string, char>& predictions, const std::vector<QAItem>& gold) {
  std::map<std::string, const QAItem*> by_id;
  for (const auto& q : gold) by_id[q.qa_id] = &q;
  for (const auto& [id, _] : predictions)
    if (!by_id.contains(id)) throw Error(Errc::unknown_qa_id, "prediction for unknown qa_id '" + id + "'");
  AccuracyResult r;
  for (const auto& q : gold) {
    Tally& t = r.per_subtask[q.subtask];
    ++t.total;
    auto it = predictions.find(q.qa_id);
    if (it != predictions.end() && it->second == q.answer) ++t.correct;
  }
  return r;
}

/// Overall percentage across all items.
inline double overall_accuracy(const AccuracyResult& r) {
  Tally all;
  for (const auto& [_, t] : r.per_subtask) {
    all.correct += t.correct;
    all.total += t.total;
  }
  return all.percent();
}

/// Expected accuracy of uniform guessing: mean of 100 / |options|.
inline double chance_random(const std::vector<QAItem>& items) {
  if (items.empty()) throw Error(Errc::schema_violation, "chance level of an empty item set");
  double s = 0.0;
  for (const auto& q : items) s += 100.0 / static_cast<double>(q.options.size());
  return s / static_cast<double>(items.size());
}

/// Per subtask: accuracy of always answering the modal gold label (ties go
/// to the earlier label).
inline std::map<std::string, double> chance_frequency(const std::vector<QAItem>& items) {
  std::map<std::string, std::array<int, 4>> counts;
  std::map<std::string, int> totals;
  for (const auto& q : items) {
    ++counts[q.subtask][static_cast<std::size_t>(q.answer - 'A')];
    ++totals[q.subtask];
  }
  std::map<std::string, double> out;
  for (const auto& [s, c] : counts) out[s] = 100.0 * *std::max_element(c.begin(), c.end()) / totals[s];
  return out;
}

/// Chance-random per subtask, for side-by-side comparison with chance_frequency.
inline std::map<std::string, double> chance_random_by_subtask(const std::vector<QAItem>& items) {
  std::map<std::string, std::vector<QAItem>> groups;
  for (const auto& q : items) groups[q.subtask].push_back(q);
  std::map<std::string, double> out;
  for (const auto& [s, g] : groups) out[s] = chance_random(g);
  return out;
}

// Segmentation metrics ------------------------------------------------------------

/// Intersection over union; 1 when both masks are empty.
inline double region_similarity_J(const BinaryMask& pred, const BinaryMask& gold) {
  if (!pred.same_shape(gold)) throw Error(Errc::dimension_mismatch, "masks differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    inter += pred.bits[i] & gold.bits[i];
    uni += pred.bits[i] | gold.bits[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Foreground pixels with at least one background 8-neighbour; pixels
/// outside the image count as background.
inline BinaryMask boundary_of(const BinaryMask& m) {
  BinaryMask b(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.get(x, y)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height || !m.get(nx, ny)) edge = true;
        }
      if (edge) b.set(x, y);
    }
  }
  return b;
}

/// ceil(0.8% of the image diagonal), at least 1 px.
inline int default_boundary_tolerance(int width, int height) {
  return std::max(1, static_cast<int>(std::ceil(0.008 * std::hypot(width, height))));
}

namespace detail {

/// Marks every pixel within Chebyshev distance `r` of a set pixel.
inline BinaryMask dilate_square(const BinaryMask& m, int r) {
  if (r <= 0) return m;
  // Separable max filter: rows, then columns.
  BinaryMask rows(m.width, m.height), out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    int last = -1 - r;  // last set x seen so far
    std::vector<int> next(static_cast<std::size_t>(m.width) + 1, m.width + r + 1);
    for (int x = m.width - 1; x >= 0; --x) next[static_cast<std::size_t>(x)] = m.get(x, y) ? x : next[static_cast<std::size_t>(x) + 1];
    for (int x = 0; x < m.width; ++x) {
      if (m.get(x, y)) last = x;
      if (x - last <= r || next[static_cast<std::size_t>(x)] - x <= r) rows.set(x, y);
    }
  }
  for (int x = 0; x < m.width; ++x) {
    int last = -1 - r;
    std::vector<int> next(static_cast<std::size_t>(m.height) + 1, m.height + r + 1);
    for (int y = m.height - 1; y >= 0; --y)
      next[static_cast<std::size_t>(y)] = rows.get(x, y) ? y : next[static_cast<std::size_t>(y) + 1];
    for (int y = 0; y < m.height; ++y) {
      if (rows.get(x, y)) last = y;
      if (y - last <= r || next[static_cast<std::size_t>(y)] - y <= r) out.set(x, y);
    }
  }
  return out;
}

}  // namespace detail

/// Boundary F-measure: a boundary pixel matches when a boundary pixel of the
/// other mask lies within `tolerance_px` (Chebyshev distance).
inline double boundary_accuracy_F(const BinaryMask& pred, const BinaryMask& gold, int tolerance_px) {
  if (!pred.same_shape(gold)) throw Error(Errc::dimension_mismatch, "masks differ in size");
  if (tolerance_px < 0) throw Error(Errc::schema_violation, "tolerance must be >= 0");
  const BinaryMask bp = boundary_of(pred), bg = boundary_of(gold);
  const std::size_t np = bp.count(), ng = bg.count();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const BinaryMask gp = detail::dilate_square(bg, tolerance_px), pp = detail::dilate_square(bp, tolerance_px);
  std::size_t hit_p = 0, hit_g = 0;
  for (std::size_t i = 0; i < bp.bits.size(); ++i) {
    hit_p += bp.bits[i] & gp.bits[i];
    hit_g += bg.bits[i] & pp.bits[i];
  }
  const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
  const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

struct JF {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

/// Averages J and F over the frames where the gold masklet has a mask; a
/// missing prediction on such a frame counts as an empty mask.
inline JF jf_masklet(const Masklet& pred, const Masklet& gold, std::optional<int> tolerance_px = std::nullopt) {
  const int tol = tolerance_px ? *tolerance_px : default_boundary_tolerance(gold.width, gold.height);
  double js = 0.0, fs = 0.0;
  int n = 0;
  for (const auto& [t, g] : gold.frames) {
    if (g.empty()) continue;
    const BinaryMask* p = pred.at(t);
    const BinaryMask empty(g.width, g.height);
    const BinaryMask& pm = p ? *p : empty;
    js += region_similarity_J(pm, g);
    fs += boundary_accuracy_F(pm, g, tol);
    ++n;
  }
  if (n == 0) throw Error(Errc::no_overlapping_frames, "gold masklet has no frame to score");
  JF r{js / n, fs / n, 0.0};
  r.jf = 0.5 * (r.j + r.f);
  return r;
}

/// Mean of per-level J&F values, as in the grounding table's average column.
inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Report --------------------------------------------------------------------------

struct GroundingResult {
  std::string item_id;
  Level level = Level::inter_object;
  JF score;
};

struct LevelScores {
  double j = 0.0, f = 0.0, jf = 0.0;  // percentages
  int count = 0;
};

struct ScoreReport {
  std::map<std::string, Tally> subtask;        // QA accuracy per subtask
  std::map<Level, double> level_accuracy;      // mean of present subtasks
  double overall_accuracy = 0.0;               // mean of present levels
  int qa_count = 0;
  std::map<Level, LevelScores> grounding;      // mean per level, in percent
  LevelScores grounding_average;               // mean of present levels
  int grounding_count = 0;
};

inline ScoreReport build_report(const AccuracyResult& qa, const std::vector<GroundingResult>& grounding) {
  ScoreReport r;
  r.subtask = qa.per_subtask;
  std::map<Level, std::vector<double>> by_level;
  for (const auto& [name, t] : qa.per_subtask) {
    r.qa_count += t.total;
    if (t.total == 0) continue;
    const auto l = level_of_subtask(name);
    if (!l) throw Error(Errc::schema_violation, "unknown subtask '" + name + "'");
    by_level[*l].push_back(t.percent());
  }
  std::vector<double> levels;
  for (const auto& [l, v] : by_level) {
    r.level_accuracy[l] = mean_of(v);
    levels.push_back(r.level_accuracy[l]);
  }
  r.overall_accuracy = mean_of(levels);

  std::map<Level, std::vector<const GroundingResult*>> gl;
  for (const auto& g : grounding) gl[g.level].push_back(&g);
  std::vector<double> lj, lf, ljf;
  for (const auto& [l, items] : gl) {
    LevelScores s;
    for (const auto* g : items) {
      s.j += 100.0 * g->score.j;
      s.f += 100.0 * g->score.f;
      s.jf += 100.0 * g->score.jf;
    }
    s.count = static_cast<int>(items.size());
    s.j /= s.count;
    s.f /= s.count;
    s.jf /= s.count;
    r.grounding[l] = s;
    lj.push_back(s.j);
    lf.push_back(s.f);
    ljf.push_back(s.jf);
    r.grounding_count += s.count;
  }
  r.grounding_average = {mean_of(lj), mean_of(lf), mean_of(ljf), r.grounding_count};
  return r;
}

/// True when every stored aggregate equals the mean of its constituents.
inline bool report_is_consistent(const ScoreReport& r) {
  std::map<Level, std::vector<double>> by_level;
  for (const auto& [name, t] : r.subtask)
    if (t.total) by_level[*level_of_subtask(name)].push_back(t.percent());
  std::vector<double> levels;
  for (const auto& [l, v] : by_level) {
    auto it = r.level_accuracy.find(l);
    if (it == r.level_accuracy.end() || it->second != mean_of(v)) return false;
    levels.push_back(it->second);
  }
  if (r.level_accuracy.size() != by_level.size() || r.overall_accuracy != mean_of(levels)) return false;
  std::vector<double> lj, lf, ljf;
  for (const auto& [l, s] : r.grounding) {
    lj.push_back(s.j);
    lf.push_back(s.f);
    ljf.push_back(s.jf);
  }
  return r.grounding_average.j == mean_of(lj) && r.grounding_average.f == mean_of(lf) &&
         r.grounding_average.jf == mean_of(ljf);
}

inline json report_to_json(const ScoreReport& r) {
  json j;
  json st = json::array();
  for (const auto& [l, name] : subtasks()) {
    auto it = r.subtask.find(name);
    if (it == r.subtask.end()) continue;
    st.push_back({{"subtask", name},
                  {"level", to_string(l)},
                  {"correct", it->second.correct},
                  {"total", it->second.total},
                  {"accuracy", it->second.percent()}});
  }
  j["qa"] = {{"subtasks", st}, {"overall", r.overall_accuracy}, {"count", r.qa_count}};
  json levels = json::object();
  for (const auto& [l, v] : r.level_accuracy) levels[to_string(l)] = v;
  j["qa"]["levels"] = levels;
  json g = json::object();
  for (const auto& [l, s] : r.grounding) g[to_string(l)] = {{"J", s.j}, {"F", s.f}, {"J&F", s.jf}, {"count", s.count}};
  j["grounding"] = {{"levels", g},
                    {"average", {{"J", r.grounding_average.j}, {"F", r.grounding_average.f}, {"J&F", r.grounding_average.jf}}},
                    {"count", r.grounding_count}};
  return j;
}

/// Plain-text tables: accuracy per subtask grouped by level, then grounding.
inline std::string report_to_text(const ScoreReport& r) {
  std::string out = "VQA accuracy (%)\n";
  char line[160];
  for (Level l : kLevels) {
    bool any = false;
    for (const auto& [sl, name] : subtasks()) {
      if (sl != l) continue;
      auto it = r.subtask.find(name);
      if (it == r.subtask.end()) continue;
      if (!any) out += std::string("  ") + display_name(l) + "\n";
      any = true;
      std::snprintf(line, sizeof line, "    %-24s %6s  (%d/%d)\n", name.c_str(), fixed(it->second.percent(), 1).c_str(),
                    it->second.correct, it->second.total);
      out += line;
    }
    if (auto it = r.level_accuracy.find(l); it != r.level_accuracy.end()) {
      std::snprintf(line, sizeof line, "    %-24s %6s\n", "level average", fixed(it->second, 1).c_str());
      out += line;
    }
  }
  std::snprintf(line, sizeof line, "  %-26s %6s  (%d items)\n", "Overall", fixed(r.overall_accuracy, 1).c_str(), r.qa_count);
  out += line;
  out += "Grounding (%)        J      F    J&F\n";
  for (Level l : kLevels) {
    auto it = r.grounding.find(l);
    if (it == r.grounding.end()) continue;
    std::snprintf(line, sizeof line, "  %-16s %6s %6s %6s  (%d items)\n", display_name(l), fixed(it->second.j, 1).c_str(),
                  fixed(it->second.f, 1).c_str(), fixed(it->second.jf, 1).c_str(), it->second.count);
    out += line;
  }
  std::snprintf(line, sizeof line, "  %-16s %6s %6s %6s\n", "Average", fixed(r.grounding_average.j, 1).c_str(),
                fixed(r.grounding_average.f, 1).c_str(), fixed(r.grounding_average.jf, 1).c_str());
  out += line;
  return out;
}

// Ablation tables -----------------------------------------------------------------

/// One stored result row: a configuration name and its reported values with
/// one decimal place.
struct AblationRow {
  std::string name;
  std::vector<double> levels;
  double average = 0.0;
};

inline std::vector<AblationRow> load_ablation_rows(const json& j) {
  std::vector<AblationRow> rows;
  try {
    for (const auto& r : j.at("rows"))
      rows.push_back({r.at("name").get<std::string>(), r.at("levels").get<std::vector<double>>(),
                      r.at("average").get<double>()});
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("ablation fixture: ") + e.what());
  }
  return rows;
}

/// Difference of two one-decimal values, computed in tenths so the result is
/// exact (68.3 - 62.8 gives 5.5, not 5.499999...).
inline double tenths_delta(double a, double b) {
  const long long ta = std::llround(a * 10.0), tb = std::llround(b * 10.0);
  return static_cast<double>(ta - tb) / 10.0;
}

inline double ablation_delta(const std::vector<AblationRow>& rows, const std::string& with, const std::string& without) {
  const AblationRow* a = nullptr;
  const AblationRow* b = nullptr;
  for (const auto& r : rows) {
    if (r.name == with) a = &r;
    if (r.name == without) b = &r;
  }
  if (!a || !b) throw Error(Errc::schema_violation, "ablation rows '" + with + "' / '" + without + "' not found");
  return tenths_delta(a->average, b->average);
}

}  // namespace dyncog
