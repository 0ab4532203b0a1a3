#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>

#include "dyncog/kinematics.hpp"
#include "dyncog/relations.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/synth.hpp"

#ifndef DYNCOG_FIXTURE_DIR
#define DYNCOG_FIXTURE_DIR "tests/fixtures"
#endif

namespace testsupport {

namespace fs = std::filesystem;

/// Per-process scratch directory, removed at exit.
inline const fs::path& scratch_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / ("dyncog-test-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    std::atexit([] { std::error_code ec; fs::remove_all(fs::temp_directory_path() / ("dyncog-test-" + std::to_string(::getpid())), ec); });
    return p;
  }();
  return root;
}

inline fs::path scratch(const std::string& name) {
  const fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline fs::path fixture(const std::string& name) { return fs::path(DYNCOG_FIXTURE_DIR) / name; }

/// Writes a scene once per process and returns its manifest path.
inline fs::path written_scene(const std::string& key, const dyncog::synth::Scene& s) {
  static std::mutex mu;
  static std::map<std::string, fs::path> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const fs::path dir = scratch_root() / ("scene-" + key);
  fs::remove_all(dir);
  return cache[key] = dyncog::synth::write_scene(s, dir);
}

inline fs::path scripted_manifest() { return written_scene("scripted", dyncog::synth::scripted_two_object()); }
inline fs::path static_manifest() { return written_scene("static", dyncog::synth::scripted_static()); }

/// Small scene for tests that only need structure, not image detail.
inline dyncog::synth::Scene small_scene(const std::string& id) {
  dyncog::synth::Scene s = dyncog::synth::scripted_two_object();
  s.video_id = id;
  s.intrinsics = dyncog::Intrinsics{50.0, 50.0, 64.0, 24.0, 128, 48};  // A stays in view for all 30 frames
  return s;
}

inline dyncog::Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace testsupport
