#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/kinematics.hpp"
#include "dyncog/relations.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

// Textual cognitive map. Every line carries a section tag:
//   [H] identity headers (always present)
//   [T] time stamps, elapsed time, appearance events
//   [M] speed, heading, acceleration, pair relations, camera motion
//   [S] positions, sizes, camera-relative direction and distance
// The document starts with "# tcm fps=.. T=.. M=.. S=.. video_id=..".

struct TcmConfig {
  bool include_temporal = true;
  bool include_motion = true;
  bool include_spatial = true;
  int decimals_m = 2;
  int decimals_speed = 2;
  double stationary_speed = 0.05;  // m/s; slower objects are "stationary"
  double turning_rate = 1.0;       // deg/s; camera counts as moving above this

  static TcmConfig all_off() { return {false, false, false}; }
};

enum class Section { H, T, M, S };

inline char tag_of(Section s) {
  switch (s) {
    case Section::H: return 'H';
    case Section::T: return 'T';
    case Section::M: return 'M';
    case Section::S: return 'S';
  }
  return 'H';
}

struct TcmLine {
  Section section = Section::H;
  std::string text;
  bool operator==(const TcmLine&) const = default;
};

struct FrameBlock {
  int t = 0;
  double time_s = 0.0;
  std::string objects;  // "A:car, B:person"
  std::vector<TcmLine> lines;  // excluding the [H] frame header
  bool operator==(const FrameBlock&) const = default;
};

struct CognitiveMap {
  std::string video_id;
  double fps = kProcessingFps;
  bool temporal = true, motion = true, spatial = true;
  std::vector<FrameBlock> frames;
  std::vector<TcmLine> narrative;
  bool operator==(const CognitiveMap&) const = default;
};

/// Fixed phrase bank keyed by (section, state). Templates use {NAME}
/// placeholders; a text asset of "key = template" lines can replace entries.
struct PhraseBank {
  std::map<std::string, std::string> templates = {
      {"frame_header", "frame {T}, objects: [{OBJECTS}]"},
      {"time", "time {TIME} s"},
      {"time_in_view", "{NAME} in view for {ELAPSED} s"},
      {"spatial_object",
       "object {NAME} ({CATEGORY}): position ({X}, {Y}, {Z}) m, {DIRECTION}, {DIST} m from camera"},
      {"spatial_size", "size {W} x {H} x {D} m"},
      {"spatial_pair", "{DIST} m from {OTHER}"},
      {"spatial_camera", "camera: position ({X}, {Y}, {Z}) m"},
      {"motion_unknown", "object {NAME}: motion unknown (first observation)"},
      {"motion_stationary", "object {NAME}: stationary ({SPEED} m/s)"},
      {"motion_moving", "object {NAME}: moving {SPEED} m/s, heading ({HX}, {HY}, {HZ})"},
      {"motion_acceleration", "acceleration {ACC} m/s^2"},
      {"motion_pair_approaching", "approaching {OTHER} (closing {CLOSING} m/s)"},
      {"motion_pair_receding", "receding from {OTHER} (closing {CLOSING} m/s)"},
      {"motion_pair_parallel", "parallel to {OTHER} (closing {CLOSING} m/s)"},
      {"motion_camera", "camera: moving {SPEED} m/s, turning {RATE} deg/s"},
      {"narrative_header", "narrative"},
      {"event_present", "{NAME} present throughout"},
      {"event_enter", "{NAME} enters the scene at {TIME} s"},
      {"event_leave", "{NAME} leaves the scene at {TIME} s"},
      {"event_lost", "{NAME} is lost from view at {TIME} s"},
      {"event_reappear", "{NAME} re-enters the scene at {TIME} s"},
      {"event_approach", "{A} approaches {B} (t≈{START}–{END} s)"},
      {"event_pass", "{A} passes {B} (t≈{START}–{END} s)"},
      {"event_recede", "{A} recedes from {B} (t≈{START}–{END} s)"},
      {"event_parallel", "{A} keeps its distance to {B} (t≈{START}–{END} s)"},
      {"event_camera_moves", "camera moves (t≈{START}–{END} s)"},
  };

  std::string operator()(const std::string& key, const std::map<std::string, std::string>& values) const {
    auto it = templates.find(key);
    if (it == templates.end()) throw Error(Errc::unresolved_placeholder, "phrase bank has no entry '" + key + "'");
    return substitute(it->second, values);
  }

  /// Overrides entries from "key = template" lines; '#' starts a comment line.
  void load(const std::filesystem::path& path) {
    for (const auto& raw : split_lines(read_text_file(path))) {
      const std::string line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(Errc::schema_violation, "phrase bank line without '=': " + line);
      const std::string key = trim(std::string_view(line).substr(0, eq));
      if (!templates.contains(key)) throw Error(Errc::schema_violation, "unknown phrase key '" + key + "'");
      templates[key] = trim(std::string_view(line).substr(eq + 1));
    }
  }
};

/// "A".."Z", "AA".. by rank.
inline std::string display_name(std::size_t rank) {
  std::string s;
  std::size_t n = rank + 1;
  while (n > 0) {
    --n;
    s.insert(s.begin(), static_cast<char>('A' + n % 26));
    n /= 26;
  }
  return s;
}

namespace detail {

struct TcmContext {
  const VideoManifest& manifest;
  const TrackSet& tracks;
  const RelationTimeline& timeline;
  const TcmConfig& config;
  const PhraseBank& phrases;
  std::map<int, std::string> names;  // object_id -> display name

  std::string m(double v) const { return fixed(v, config.decimals_m); }
  std::string v(double x) const { return fixed(x, config.decimals_speed); }
  std::string time(double s) const { return fixed(s, 2); }

  bool camera_moving(const CameraSample& c) const {
    return (c.speed && *c.speed >= config.stationary_speed) ||
           (c.angular_rate_deg_s && *c.angular_rate_deg_s >= config.turning_rate);
  }
};

inline std::map<int, std::string> assign_names(const TrackSet& tracks) {
  std::vector<int> ids;
  for (const auto& tr : tracks.tracks) ids.push_back(tr.object_id);
  std::sort(ids.begin(), ids.end());
  std::map<int, std::string> names;
  for (std::size_t i = 0; i < ids.size(); ++i) names[ids[i]] = display_name(i);
  return names;
}

inline std::string vec3_text(const TcmContext& c, const Vec3& p, bool metres) {
  return metres ? c.m(p.x()) + ", " + c.m(p.y()) + ", " + c.m(p.z())
                : c.v(p.x()) + ", " + c.v(p.y()) + ", " + c.v(p.z());
}

inline FrameBlock render_frame_block(const TcmContext& c, int t) {
  FrameBlock b;
  b.t = t;
  b.time_s = c.manifest.time_of(t);
  std::vector<std::pair<const ObjectTrack*, const TrajectorySample*>> present;
  for (const auto& tr : c.tracks.tracks) {
    const TrajectorySample* s = tr.at(t);
    if (s && s->observed) present.emplace_back(&tr, s);
  }
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (i) b.objects += ", ";
    b.objects += c.names.at(present[i].first->object_id) + ":" + present[i].first->category;
  }

  std::vector<const RelationSample*> pairs;
  for (const auto& r : c.timeline.relations)
    if (r.t == t) pairs.push_back(&r);
  const CameraSample* cam = nullptr;
  for (const auto& cs : c.timeline.camera)
    if (cs.t == t) cam = &cs;
  bool camera_ever_moves = false;
  for (const auto& cs : c.timeline.camera) camera_ever_moves = camera_ever_moves || c.camera_moving(cs);

  if (c.config.include_temporal) {
    std::string line = c.phrases("time", {{"TIME", c.time(b.time_s)}});
    for (std::size_t i = 0; i < present.size(); ++i) {
      const auto& [tr, s] = present[i];
      line += i == 0 ? "; " : ", ";
      line += c.phrases("time_in_view",
                        {{"NAME", c.names.at(tr->object_id)}, {"ELAPSED", c.time(s->time_s - tr->samples.front().time_s)}});
    }
    b.lines.push_back({Section::T, line});
  }

  if (c.config.include_spatial) {
    for (const auto& [tr, s] : present) {
      const std::string& name = c.names.at(tr->object_id);
      const Vec3& p = *s->position;
      std::string direction = "direction unknown", dist = "?";
      for (const auto& d : c.timeline.directions) {
        if (d.t != t || d.object_id != tr->object_id) continue;
        direction = to_string(d.direction.sector);
        if (d.direction.vertical != Vertical::level) direction += std::string(" ") + to_string(d.direction.vertical);
        dist = c.m(d.direction.distance_m);
      }
      std::string line = c.phrases("spatial_object", {{"NAME", name},
                                                       {"CATEGORY", tr->category},
                                                       {"X", c.m(p.x())},
                                                       {"Y", c.m(p.y())},
                                                       {"Z", c.m(p.z())},
                                                       {"DIRECTION", direction},
                                                       {"DIST", dist}});
      if (s->bbox_size) {
        const Vec3& z = *s->bbox_size;
        line += ", " + c.phrases("spatial_size", {{"W", c.m(z.x())}, {"H", c.m(z.y())}, {"D", c.m(z.z())}});
      }
      for (const auto* r : pairs) {
        if (r->object_a != tr->object_id) continue;
        line += ", " + c.phrases("spatial_pair", {{"DIST", c.m(r->distance_m)}, {"OTHER", c.names.at(r->object_b)}});
      }
      b.lines.push_back({Section::S, line});
    }
    if (camera_ever_moves && cam) {
      b.lines.push_back({Section::S, c.phrases("spatial_camera", {{"X", c.m(cam->center.x())},
                                                                  {"Y", c.m(cam->center.y())},
                                                                  {"Z", c.m(cam->center.z())}})});
    }
  }

  if (c.config.include_motion) {
    for (const auto& [tr, s] : present) {
      const std::string& name = c.names.at(tr->object_id);
      std::string line;
      if (!s->velocity) {
        line = c.phrases("motion_unknown", {{"NAME", name}});
      } else {
        const double speed = s->velocity->norm();
        if (speed < c.config.stationary_speed) {
          line = c.phrases("motion_stationary", {{"NAME", name}, {"SPEED", c.v(speed)}});
        } else {
          const Vec3 h = *heading_of(*s->velocity);
          line = c.phrases("motion_moving", {{"NAME", name},
                                             {"SPEED", c.v(speed)},
                                             {"HX", fixed(h.x(), 2)},
                                             {"HY", fixed(h.y(), 2)},
                                             {"HZ", fixed(h.z(), 2)}});
          if (s->acceleration)
            line += ", " + c.phrases("motion_acceleration", {{"ACC", c.v(s->acceleration->norm())}});
        }
      }
      for (const auto* r : pairs) {
        if (r->object_a != tr->object_id) continue;
        const char* key = r->relation == Relation::approaching ? "motion_pair_approaching"
                          : r->relation == Relation::receding  ? "motion_pair_receding"
                                                               : "motion_pair_parallel";
        line += "; " + c.phrases(key, {{"OTHER", c.names.at(r->object_b)}, {"CLOSING", c.v(r->closing_speed)}});
      }
      b.lines.push_back({Section::M, line});
    }
    if (cam && c.camera_moving(*cam)) {
      b.lines.push_back({Section::M, c.phrases("motion_camera", {{"SPEED", c.v(cam->speed.value_or(0.0))},
                                                                 {"RATE", fixed(cam->angular_rate_deg_s.value_or(0.0), 2)}})});
    }
  }
  return b;
}

struct Event {
  double time_s;
  int order;  // T before M at equal times, then emission order
  TcmLine line;
};

inline std::vector<Event> narrative_events(const TcmContext& c) {
  std::vector<Event> events;
  const int n = c.manifest.frame_count();
  auto at = [&](int t) { return c.time(c.manifest.time_of(t)); };

  for (const auto& tr : c.tracks.tracks) {
    const std::string& name = c.names.at(tr.object_id);
    std::vector<Event> own;
    if (tr.first_frame() > 0)
      own.push_back({c.manifest.time_of(tr.first_frame()), 0,
                     {Section::T, c.phrases("event_enter", {{"NAME", name}, {"TIME", at(tr.first_frame())}})}});
    for (std::size_t i = 1; i < tr.samples.size(); ++i) {
      const auto& prev = tr.samples[i - 1];
      const auto& cur = tr.samples[i];
      if (prev.observed && !cur.observed)
        own.push_back({cur.time_s, 0, {Section::T, c.phrases("event_lost", {{"NAME", name}, {"TIME", at(cur.t)}})}});
      if (!prev.observed && cur.observed)
        own.push_back(
            {cur.time_s, 0, {Section::T, c.phrases("event_reappear", {{"NAME", name}, {"TIME", at(cur.t)}})}});
    }
    if (tr.last_frame() < n - 1)
      own.push_back({c.manifest.time_of(tr.last_frame() + 1), 0,
                     {Section::T, c.phrases("event_leave", {{"NAME", name}, {"TIME", at(tr.last_frame() + 1)}})}});
    if (own.empty())
      own.push_back({c.manifest.time_of(0), 0, {Section::T, c.phrases("event_present", {{"NAME", name}})}});
    events.insert(events.end(), own.begin(), own.end());
  }

  // Relation segments from the debounced labels, per pair.
  std::map<std::pair<int, int>, std::vector<const RelationSample*>> by_pair;
  for (const auto& r : c.timeline.relations) by_pair[{r.object_a, r.object_b}].push_back(&r);
  for (const auto& [pair, series] : by_pair) {
    struct Segment {
      Relation label;
      int start, end;
    };
    std::vector<Segment> segs;
    for (const auto* r : series) {
      if (!segs.empty() && segs.back().label == r->stable && segs.back().end + 1 == r->t) segs.back().end = r->t;
      else segs.push_back({r->stable, r->t, r->t});
    }
    if (segs.size() == 1 && segs.front().label == Relation::parallel) continue;  // nothing happens
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const Segment& s = segs[i];
      const char* key = "event_parallel";
      if (s.label == Relation::approaching) key = "event_approach";
      else if (s.label == Relation::receding) key = "event_recede";
      else if (i > 0 && i + 1 < segs.size() && segs[i - 1].label == Relation::approaching &&
               segs[i + 1].label == Relation::receding)
        key = "event_pass";
      events.push_back({c.manifest.time_of(s.start), 1,
                        {Section::M, c.phrases(key, {{"A", c.names.at(pair.first)},
                                                     {"B", c.names.at(pair.second)},
                                                     {"START", at(s.start)},
                                                     {"END", at(s.end)}})}});
    }
  }

  // Camera motion segments.
  std::optional<int> start;
  for (int t = 0; t <= n; ++t) {
    const bool moving = t < n && t < static_cast<int>(c.timeline.camera.size()) &&
                        c.camera_moving(c.timeline.camera[static_cast<std::size_t>(t)]);
    if (moving && !start) start = t;
    if (!moving && start) {
      events.push_back({c.manifest.time_of(*start), 1,
                        {Section::M, c.phrases("event_camera_moves", {{"START", at(*start)}, {"END", at(t - 1)}})}});
      start.reset();
    }
  }

  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.time_s != b.time_s) return a.time_s < b.time_s;
    return a.order < b.order;
  });
  return events;
}

}  // namespace detail

/// Builds the full map. Sections switched off in `config` are simply not
/// emitted; the remaining lines are identical to the all-on output.
inline CognitiveMap build_tcm(const VideoManifest& manifest, const TrackSet& tracks, const RelationTimeline& timeline,
                              const TcmConfig& config = {}, const PhraseBank& phrases = {}) {
  detail::TcmContext c{manifest, tracks, timeline, config, phrases, detail::assign_names(tracks)};
  CognitiveMap map;
  map.video_id = manifest.video_id;
  map.fps = manifest.fps;
  map.temporal = config.include_temporal;
  map.motion = config.include_motion;
  map.spatial = config.include_spatial;
  for (int t = 0; t < manifest.frame_count(); ++t) map.frames.push_back(detail::render_frame_block(c, t));
  for (auto& e : detail::narrative_events(c)) {
    const bool keep = (e.line.section == Section::T && config.include_temporal) ||
                      (e.line.section == Section::M && config.include_motion) ||
                      (e.line.section == Section::S && config.include_spatial);
    if (keep) map.narrative.push_back(std::move(e.line));
  }
  return map;
}

inline FrameBlock render_frame(int t, const VideoManifest& manifest, const TrackSet& tracks,
                               const RelationTimeline& timeline, const TcmConfig& config = {},
                               const PhraseBank& phrases = {}) {
  if (t < 0 || t >= manifest.frame_count()) throw Error(Errc::schema_violation, "frame index out of range");
  detail::TcmContext c{manifest, tracks, timeline, config, phrases, detail::assign_names(tracks)};
  return detail::render_frame_block(c, t);
}

inline std::vector<TcmLine> aggregate_narrative(const VideoManifest& manifest, const TrackSet& tracks,
                                                const RelationTimeline& timeline, const TcmConfig& config = {},
                                                const PhraseBank& phrases = {}) {
  return build_tcm(manifest, tracks, timeline, config, phrases).narrative;
}

/// Drops the lines of switched-off sections from an existing map.
inline CognitiveMap filter_sections(const CognitiveMap& map, bool temporal, bool motion, bool spatial) {
  auto keep = [&](const TcmLine& l) {
    return l.section == Section::H || (l.section == Section::T && temporal) ||
           (l.section == Section::M && motion) || (l.section == Section::S && spatial);
  };
  CognitiveMap out = map;
  out.temporal = map.temporal && temporal;
  out.motion = map.motion && motion;
  out.spatial = map.spatial && spatial;
  for (auto& f : out.frames) std::erase_if(f.lines, [&](const TcmLine& l) { return !keep(l); });
  std::erase_if(out.narrative, [&](const TcmLine& l) { return !keep(l); });
  return out;
}

inline std::string serialize_tcm(const CognitiveMap& map, const PhraseBank& phrases = {}) {
  char fps[32];
  std::snprintf(fps, sizeof fps, "%.10g", map.fps);
  std::string out = std::string("# tcm fps=") + fps + " T=" + (map.temporal ? "1" : "0") +
                    " M=" + (map.motion ? "1" : "0") + " S=" + (map.spatial ? "1" : "0") +
                    " video_id=" + map.video_id + "\n";
  auto emit = [&](const TcmLine& l) {
    out += '[';
    out += tag_of(l.section);
    out += "] " + l.text + "\n";
  };
  for (const auto& f : map.frames) {
    emit({Section::H, phrases("frame_header", {{"T", std::to_string(f.t)}, {"OBJECTS", f.objects}})});
    for (const auto& l : f.lines) emit(l);
  }
  emit({Section::H, phrases("narrative_header", {})});
  for (const auto& l : map.narrative) emit(l);
  return out;
}

/// Inverse of serialize_tcm for documents written with the default phrases.
inline CognitiveMap parse_tcm(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || !lines.front().starts_with("# tcm "))
    throw Error(Errc::schema_violation, "missing tcm document header");
  CognitiveMap map;
  {
    const std::string& h = lines.front();
    const auto vid = h.find(" video_id=");
    if (vid == std::string::npos) throw Error(Errc::schema_violation, "tcm header lacks video_id");
    map.video_id = h.substr(vid + 10);
    std::istringstream in(h.substr(6, vid - 6));
    std::string tok;
    while (in >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw Error(Errc::schema_violation, "bad tcm header token " + tok);
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "fps") map.fps = std::stod(val);
      else if (key == "T") map.temporal = val == "1";
      else if (key == "M") map.motion = val == "1";
      else if (key == "S") map.spatial = val == "1";
    }
  }
  bool in_narrative = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& l = lines[i];
    if (l.empty()) continue;
    if (l.size() < 4 || l[0] != '[' || l[2] != ']' || l[3] != ' ')
      throw Error(Errc::schema_violation, "untagged tcm line: " + l);
    const std::string body = l.substr(4);
    Section sec;
    switch (l[1]) {
      case 'H': sec = Section::H; break;
      case 'T': sec = Section::T; break;
      case 'M': sec = Section::M; break;
      case 'S': sec = Section::S; break;
      default: throw Error(Errc::schema_violation, "unknown tcm tag in: " + l);
    }
    if (sec == Section::H) {
      if (body == "narrative") {
        in_narrative = true;
        continue;
      }
      int t = 0;
      const auto open = body.find('['), close = body.rfind(']');
      if (std::sscanf(body.c_str(), "frame %d,", &t) != 1 || open == std::string::npos || close < open)
        throw Error(Errc::schema_violation, "bad frame header: " + body);
      FrameBlock f;
      f.t = t;
      f.time_s = t / map.fps;
      f.objects = body.substr(open + 1, close - open - 1);
      map.frames.push_back(std::move(f));
      in_narrative = false;
      continue;
    }
    if (in_narrative) map.narrative.push_back({sec, body});
    else if (!map.frames.empty()) map.frames.back().lines.push_back({sec, body});
    else throw Error(Errc::schema_violation, "tcm line before first frame header: " + l);
  }
  return map;
}

}  // namespace dyncog
