#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/filter.hpp"
#include "dyncog/metrics.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

// Prompt templates ----------------------------------------------------------------

enum class TemplateKind {
  inter_object_vqa,
  object_scene_vqa,
  camera_object_vqa,
  inter_object_grounding,
  object_scene_grounding,
  camera_object_grounding,
};

inline constexpr std::array<TemplateKind, 6> kTemplateKinds = {
    TemplateKind::inter_object_vqa,       TemplateKind::object_scene_vqa,       TemplateKind::camera_object_vqa,
    TemplateKind::inter_object_grounding, TemplateKind::object_scene_grounding, TemplateKind::camera_object_grounding,
};

inline const char* to_string(TemplateKind k) {
  switch (k) {
    case TemplateKind::inter_object_vqa: return "inter_object_vqa";
    case TemplateKind::object_scene_vqa: return "object_scene_vqa";
    case TemplateKind::camera_object_vqa: return "camera_object_vqa";
    case TemplateKind::inter_object_grounding: return "inter_object_grounding";
    case TemplateKind::object_scene_grounding: return "object_scene_grounding";
    case TemplateKind::camera_object_grounding: return "camera_object_grounding";
  }
  return "inter_object_vqa";
}

inline TemplateKind parse_template_kind(const std::string& s) {
  for (auto k : kTemplateKinds)
    if (s == to_string(k)) return k;
  throw Error(Errc::usage, "unknown template kind '" + s + "'");
}

inline Level level_of(TemplateKind k) {
  switch (k) {
    case TemplateKind::inter_object_vqa:
    case TemplateKind::inter_object_grounding: return Level::inter_object;
    case TemplateKind::object_scene_vqa:
    case TemplateKind::object_scene_grounding: return Level::object_scene;
    case TemplateKind::camera_object_vqa:
    case TemplateKind::camera_object_grounding: return Level::camera_object;
  }
  return Level::inter_object;
}

inline bool is_grounding(TemplateKind k) {
  return k == TemplateKind::inter_object_grounding || k == TemplateKind::object_scene_grounding ||
         k == TemplateKind::camera_object_grounding;
}

struct PromptTemplate {
  TemplateKind kind = TemplateKind::inter_object_vqa;
  std::string body;
};

/// Reads <dir>/<kind>.txt.
inline PromptTemplate load_template(const std::filesystem::path& dir, TemplateKind kind) {
  return {kind, read_text_file(dir / (std::string(to_string(kind)) + ".txt"))};
}

/// Reads <dir>/level_rules_<level>.txt, the text substituted for {LEVEL_RULES}.
inline std::string load_level_rules(const std::filesystem::path& dir, Level level) {
  return read_text_file(dir / ("level_rules_" + std::string(to_string(level)) + ".txt"));
}

/// What goes over the wire: one text part followed by the frames in order.
struct RequestPayload {
  std::string kind;  // template kind, "diagnostic" or "vqa_answer"
  std::string text;
  std::vector<std::filesystem::path> frames;
  bool operator==(const RequestPayload&) const = default;
};

inline std::string frame_list(const std::vector<std::filesystem::path>& frames) {
  std::string s;
  for (std::size_t i = 0; i < frames.size(); ++i)
    s += (i ? "\n" : "") + ("image " + std::to_string(i + 1) + ": " + frames[i].filename().string());
  return s;
}

/// Substitutes {TCM}, {FRAMES} and {LEVEL_RULES}; any other placeholder is an error.
inline RequestPayload render_prompt(const PromptTemplate& tpl, const std::string& tcm_document,
                                    const std::vector<std::filesystem::path>& frames, Level level,
                                    const std::string& level_rules) {
  if (level_of(tpl.kind) != level)
    throw Error(Errc::kind_mismatch, std::string("template ") + to_string(tpl.kind) + " cannot serve level " +
                                         to_string(level));
  const std::map<std::string, std::string> values = {
      {"TCM", tcm_document}, {"FRAMES", frame_list(frames)}, {"LEVEL_RULES", level_rules}};
  return {to_string(tpl.kind), substitute(tpl.body, values), frames};
}

// Transports ----------------------------------------------------------------------

class Transport {
 public:
  virtual ~Transport() = default;
  /// Returns the model's text reply.
  virtual std::string complete(const RequestPayload& request, const std::string& video_id) = 0;
};

/// Canned replies keyed by (kind, video_id), consumed in order. When a key
/// runs out, its last reply repeats. A video_id of "*" matches any video.
class MockTransport : public Transport {
 public:
  explicit MockTransport(const json& fixture) {
    try {
      for (const auto& r : fixture.at("replies")) {
        const std::string kind = r.at("kind").get<std::string>();
        const std::string vid = r.value("video_id", "*");
        replies_[{kind, vid}].push_back(r.at("reply").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw Error(Errc::schema_violation, std::string("mock fixture: ") + e.what());
    }
  }

  static MockTransport from_file(const std::filesystem::path& path) {
    try {
      return MockTransport(json::parse(read_text_file(path)));
    } catch (const json::exception& e) {
      throw Error(Errc::schema_violation, "mock fixture " + path.string() + ": " + e.what());
    }
  }

  std::string complete(const RequestPayload& request, const std::string& video_id) override {
    requests_.push_back(request);
    for (const auto& key : {std::pair{request.kind, video_id}, std::pair{request.kind, std::string("*")}}) {
      auto it = replies_.find(key);
      if (it == replies_.end()) continue;
      std::size_t& pos = cursor_[key];
      const std::string& reply = it->second[std::min(pos, it->second.size() - 1)];
      ++pos;
      return reply;
    }
    throw Error(Errc::transport_error, "mock has no reply for kind '" + request.kind + "', video '" + video_id + "'");
  }

  const std::vector<RequestPayload>& requests() const { return requests_; }

 private:
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> replies_;
  std::map<std::pair<std::string, std::string>, std::size_t> cursor_;
  std::vector<RequestPayload> requests_;
};

// Generation ----------------------------------------------------------------------

/// Contents of the first ```json fenced block (or the first ``` block).
inline std::optional<std::string> extract_fenced_json(const std::string& reply) {
  auto open = reply.find("```json");
  std::size_t start;
  if (open != std::string::npos) {
    start = open + 7;
  } else {
    open = reply.find("```");
    if (open == std::string::npos) return std::nullopt;
    start = open + 3;
  }
  const auto close = reply.find("```", start);
  if (close == std::string::npos) return std::nullopt;
  return reply.substr(start, close - start);
}

class MalformedGenerationError : public Error {
 public:
  MalformedGenerationError(const std::string& what, std::vector<std::string> raw)
      : Error(Errc::malformed_generation, what), raw_replies(std::move(raw)) {}
  std::vector<std::string> raw_replies;
};

struct RejectedItem {
  std::string reason;  // e.g. UnknownObject
  json item;
};

struct GenerationResult {
  std::vector<QAItem> qa;
  std::vector<GroundingItem> grounding;
  std::vector<RejectedItem> rejected;
  std::vector<std::string> raw_replies;  // every reply received, for audit
};

struct GenerationOptions {
  int retries = 2;  // extra attempts after the first
};

namespace detail {

struct ParsedGeneration {
  std::vector<QAItem> qa;
  std::vector<GroundingItem> grounding;
  std::vector<RejectedItem> rejected;
};

/// Throws Error(schema_violation) with a reason when the reply is unusable.
inline ParsedGeneration parse_generation(const std::string& reply, TemplateKind kind, const VideoManifest& m,
                                         const std::map<int, Masklet>& masklets) {
  const auto block = extract_fenced_json(reply);
  if (!block) throw Error(Errc::schema_violation, "no fenced json block");
  json j;
  try {
    j = json::parse(*block);
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("fenced block is not json: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::schema_violation, "fenced block must hold an object");
  ParsedGeneration out;
  const Level level = level_of(kind);
  const std::string prefix = m.video_id + "-" + to_string(kind) + "-";
  try {
    if (j.contains("qa")) {
      int n = 0;
      for (const auto& q : j.at("qa")) {
        QAItem item;
        item.qa_id = prefix + "q" + std::to_string(n++);
        item.video_id = m.video_id;
        item.level = level;
        item.subtask = q.at("subtask").get<std::string>();
        item.question = q.at("question").get<std::string>();
        const auto& opts = q.at("options");
        if (opts.is_array()) {
          for (const auto& o : opts) item.options.push_back(o.get<std::string>());
        } else {
          for (char c : std::string("ABCD"))
            if (opts.contains(std::string(1, c))) item.options.push_back(opts.at(std::string(1, c)).get<std::string>());
          if (item.options.size() != opts.size())
            throw Error(Errc::schema_violation, "options must be labelled A to D");
        }
        if (item.options.size() != 4)
          throw Error(Errc::schema_violation,
                      "generated items need exactly 4 options, got " + std::to_string(item.options.size()));
        const auto ans = q.at("answer").get<std::string>();
        if (ans.size() != 1) throw Error(Errc::schema_violation, "answer must be a single label");
        item.answer = ans[0];
        item.validate();
        out.qa.push_back(std::move(item));
      }
    }
    if (j.contains("grounding")) {
      int n = 0;
      for (const auto& g : j.at("grounding")) {
        const int id = g.at("object_id").get<int>();
        auto it = masklets.find(id);
        if (it == masklets.end()) {
          out.rejected.push_back({"UnknownObject", g});
          continue;
        }
        GroundingItem item;
        item.item_id = prefix + "g" + std::to_string(n++);
        item.video_id = m.video_id;
        item.level = level;
        item.referring_text = g.at("referring_text").get<std::string>();
        item.gold = it->second;
        item.validate();
        out.grounding.push_back(std::move(item));
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, e.what());
  }
  if (out.qa.empty() && out.grounding.empty() && out.rejected.empty())
    throw Error(Errc::schema_violation, "reply carries no items");
  return out;
}

}  // namespace detail

/// Sends the rendered prompt and validates the reply; malformed replies are
/// retried (full re-send) up to `opts.retries` times.
inline GenerationResult generate_qa(Transport& transport, const VideoManifest& m, const RequestPayload& request,
                                    TemplateKind kind, const GenerationOptions& opts = {}) {
  const auto masklets = load_masklets(m);
  GenerationResult result;
  std::string last_reason;
  for (int attempt = 0; attempt <= opts.retries; ++attempt) {
    const std::string reply = transport.complete(request, m.video_id);
    result.raw_replies.push_back(reply);
    try {
      auto parsed = detail::parse_generation(reply, kind, m, masklets);
      result.qa = std::move(parsed.qa);
      result.grounding = std::move(parsed.grounding);
      result.rejected = std::move(parsed.rejected);
      return result;
    } catch (const Error& e) {
      if (e.code() != Errc::schema_violation) throw;
      last_reason = e.what();
    }
  }
  throw MalformedGenerationError("generation for " + m.video_id + " failed after " +
                                     std::to_string(opts.retries + 1) + " attempts: " + last_reason,
                                 result.raw_replies);
}

/// Asks one multiple-choice question; the reply is returned untouched.
inline std::string answer_vqa(Transport& transport, const QAItem& item, const std::vector<std::filesystem::path>& frames,
                              const std::string& answer_template) {
  std::string opts;
  for (std::size_t i = 0; i < item.options.size(); ++i)
    opts += (i ? "\n" : "") + (std::string(1, QAItem::label(i)) + ". " + item.options[i]);
  const std::map<std::string, std::string> values = {
      {"QUESTION", item.question}, {"OPTIONS", opts}, {"FRAMES", frame_list(frames)}};
  return transport.complete({"vqa_answer", substitute(answer_template, values), frames}, item.video_id);
}

// Diagnostic questions --------------------------------------------------------------

/// Question bank: one question per non-empty line, optionally numbered "1. ...".
inline std::vector<std::string> load_question_bank(const std::filesystem::path& path) {
  std::vector<std::string> qs;
  for (const auto& raw : split_lines(read_text_file(path))) {
    std::string l = trim(raw);
    if (l.empty() || l.front() == '#') continue;
    const auto dot = l.find(". ");
    if (dot != std::string::npos && dot > 0 && l.find_first_not_of("0123456789") == dot) l = l.substr(dot + 2);
    qs.push_back(l);
  }
  if (qs.size() != static_cast<std::size_t>(kDiagnosticCount))
    throw Error(Errc::schema_violation, "question bank needs 26 questions, found " + std::to_string(qs.size()));
  return qs;
}

struct DiagnosticReply {
  DiagnosticVector answers;
  std::optional<bool> verdict;  // semantic pass/fail, when the model gives one
};

/// Expects {"answers": [26 numbers in [0,1]], "verdict": "pass"|"fail"} in a
/// fenced json block (or as the whole reply).
inline DiagnosticReply parse_diagnostic_reply(const std::string& reply) {
  const std::string body = extract_fenced_json(reply).value_or(reply);
  try {
    const json j = json::parse(body);
    DiagnosticReply d;
    d.answers = DiagnosticVector::from(j.at("answers").get<std::vector<double>>());
    if (j.contains("verdict")) {
      const auto v = j.at("verdict").get<std::string>();
      if (v != "pass" && v != "fail") throw Error(Errc::malformed_generation, "verdict must be pass or fail");
      d.verdict = v == "pass";
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_generation, std::string("diagnostic reply: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::malformed_generation) throw;
    throw Error(Errc::malformed_generation, std::string("diagnostic reply: ") + e.what());
  }
}

inline DiagnosticReply ask_diagnostic(Transport& transport, const std::string& video_id,
                                      const std::vector<std::string>& questions,
                                      const std::vector<std::filesystem::path>& frames,
                                      const std::string& diagnostic_template) {
  std::string list;
  for (std::size_t i = 0; i < questions.size(); ++i)
    list += (i ? "\n" : "") + (std::to_string(i + 1) + ". " + questions[i]);
  const std::map<std::string, std::string> values = {{"QUESTIONS", list}, {"FRAMES", frame_list(frames)}};
  return parse_diagnostic_reply(
      transport.complete({"diagnostic", substitute(diagnostic_template, values), frames}, video_id));
}

/// Evenly spaced subset of at most `count` frame paths, first and last included.
inline std::vector<std::filesystem::path> sample_frames(const VideoManifest& m, int count) {
  std::vector<std::filesystem::path> out;
  const int n = m.frame_count();
  if (count <= 0 || n == 0) return out;
  if (count >= n) {
    for (const auto& f : m.frames) out.push_back(f.rgb_ref);
    return out;
  }
  for (int i = 0; i < count; ++i) {
    const int t = count == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(i) * (n - 1) / (count - 1)));
    out.push_back(m.frames[static_cast<std::size_t>(t)].rgb_ref);
  }
  return out;
}

}  // namespace dyncog
