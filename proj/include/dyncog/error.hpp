#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dyncog {

enum class Errc {
  // scene-model
  missing_asset,
  schema_violation,
  degenerate_video,
  unsupported_encoding,
  corrupt_asset,
  // geometry-kinematics
  no_valid_depth,
  non_positive_depth,
  alpha_out_of_range,
  // relation-inference
  coincident,
  at_camera_center,
  // dynamism-filter
  too_few_frames,
  layout_mismatch,
  empty_training_set,
  // mask-fusion / eval-metrics
  dimension_mismatch,
  unknown_qa_id,
  no_overlapping_frames,
  // mllm-gateway
  unresolved_placeholder,
  kind_mismatch,
  transport_error,
  timeout,
  malformed_generation,
  unknown_object,
  // cli
  usage,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::missing_asset: return "MissingAsset";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::degenerate_video: return "DegenerateVideo";
    case Errc::unsupported_encoding: return "UnsupportedEncoding";
    case Errc::corrupt_asset: return "CorruptAsset";
    case Errc::no_valid_depth: return "NoValidDepth";
    case Errc::non_positive_depth: return "NonPositiveDepth";
    case Errc::alpha_out_of_range: return "AlphaOutOfRange";
    case Errc::coincident: return "Coincident";
    case Errc::at_camera_center: return "AtCameraCenter";
    case Errc::too_few_frames: return "TooFewFrames";
    case Errc::layout_mismatch: return "LayoutMismatch";
    case Errc::empty_training_set: return "EmptyTrainingSet";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::unknown_qa_id: return "UnknownQaId";
    case Errc::no_overlapping_frames: return "NoOverlappingFrames";
    case Errc::unresolved_placeholder: return "UnresolvedPlaceholder";
    case Errc::kind_mismatch: return "KindMismatch";
    case Errc::transport_error: return "TransportError";
    case Errc::timeout: return "Timeout";
    case Errc::malformed_generation: return "MalformedGeneration";
    case Errc::unknown_object: return "UnknownObject";
    case Errc::usage: return "Usage";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (and the CLI exit-code contract) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// CLI exit codes: 0 success, 1 usage, 2 data error, 3 transport error.
constexpr int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::usage: return 1;
    case Errc::transport_error:
    case Errc::timeout: return 3;
    default: return 2;
  }
}

}  // namespace dyncog
