// Scene model, kinematics, relations and cognitive-map rendering.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "dyncog/kinematics.hpp"
#include "dyncog/relations.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/synth.hpp"
#include "dyncog/tcm.hpp"
#include "support.hpp"

using namespace dyncog;
using testsupport::scratch;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::usage;
}

BinaryMask mask_from(int w, int h, std::initializer_list<std::pair<int, int>> px) {
  BinaryMask m(w, h);
  for (auto [x, y] : px) m.set(x, y);
  return m;
}

DepthMap uniform_depth(int w, int h, float v) {
  DepthMap d;
  d.width = w;
  d.height = h;
  d.values.assign(static_cast<std::size_t>(w) * h, v);
  d.valid.assign(static_cast<std::size_t>(w) * h, 1);
  return d;
}

// Independent pinhole arithmetic: K^-1 [u v 1]^T d, then x_w = R x_c + t.
Vec3 oracle_backproject(const Intrinsics& k, const Mat3& r_wc, const Vec3& t_wc, double u, double v, double d) {
  Eigen::Matrix3d K;
  K << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  const Vec3 xc = K.inverse() * Vec3(u, v, 1.0) * d;
  return r_wc * xc + t_wc;
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

}  // namespace

// Scene model -----------------------------------------------------------------

TEST(SceneModel, LoadsThirtyFrameManifest) {
  const auto& m = scripted().manifest;
  EXPECT_EQ(m.frame_count(), 30);
  EXPECT_DOUBLE_EQ(m.fps, 6.0);
  EXPECT_EQ(m.categories.at(1), "car");
}

TEST(SceneModel, MissingDepthFileIsMissingAsset) {
  const auto dir = scratch("missing-depth");
  const auto path = synth::write_scene(testsupport::small_scene("missing"), dir);
  std::filesystem::remove(dir / "depth" / "000004.png");
  EXPECT_EQ(code_of([&] { load_manifest(path); }), Errc::missing_asset);
}

TEST(SceneModel, SingleFrameIsDegenerate) {
  const auto dir = scratch("one-frame");
  const auto path = synth::write_scene(testsupport::small_scene("one"), dir);
  json j = json::parse(read_text_file(path));
  j["frames"] = json::array({j["frames"][0]});
  write_text_file(path, j.dump());
  EXPECT_EQ(code_of([&] { load_manifest(path); }), Errc::degenerate_video);
}

TEST(SceneModel, MalformedFieldsAreSchemaViolations) {
  const auto dir = scratch("malformed");
  const auto path = synth::write_scene(testsupport::small_scene("bad"), dir);
  json j = json::parse(read_text_file(path));
  j["fps"] = -6;
  write_text_file(path, j.dump());
  EXPECT_EQ(code_of([&] { load_manifest(path); }), Errc::schema_violation);
  j = json::parse(read_text_file(path));
  j["fps"] = 6;
  j["frames"][1]["pose"] = std::vector<double>{2, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  write_text_file(path, j.dump());
  EXPECT_EQ(code_of([&] { load_manifest(path); }), Errc::schema_violation);
}

TEST(SceneModel, EveryAcceptedFrameDecodes) {
  const auto& m = scripted().manifest;
  for (int t = 0; t < m.frame_count(); ++t) {
    EXPECT_NO_THROW(m.load_depth(t));
    EXPECT_NO_THROW(m.load_masks(t));
    EXPECT_NO_THROW(m.frames[static_cast<std::size_t>(t)].pose.validate());
  }
}

TEST(SceneModel, ResamplesToSixFps) {
  VideoManifest m;
  m.fps = 30.0;
  for (int i = 0; i < 60; ++i) m.frames.push_back(FrameEntry{{}, {}, {}, {}, {}, i});
  const auto r = resample_to_rate(m);
  EXPECT_DOUBLE_EQ(r.fps, 6.0);
  ASSERT_EQ(r.frame_count(), 12);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(r.frames[static_cast<std::size_t>(k)].source_index, 5 * k);
}

TEST(DepthDecoding, SixteenBitScale) {
  const auto bytes = encode_png(2, 1, 1, 16, {1000, 0});
  const DepthMap d = decode_depth_bytes(bytes, 0.001, "x");
  EXPECT_TRUE(d.is_valid(0, 0));
  EXPECT_NEAR(d.at(0, 0), 1.0, 1e-6);
  EXPECT_FALSE(d.is_valid(1, 0));
}

TEST(DepthDecoding, FloatNaNIsInvalidNotAnError) {
  const auto bytes = encode_depth_f32(3, 1, {1.5f, std::numeric_limits<float>::quiet_NaN(), 2.0f});
  const DepthMap d = decode_depth_bytes(bytes, 1.0, "x");
  EXPECT_TRUE(d.is_valid(0, 0));
  EXPECT_FALSE(d.is_valid(1, 0));
  EXPECT_TRUE(d.is_valid(2, 0));
  EXPECT_EQ(d.valid_count(), 2u);
  EXPECT_FLOAT_EQ(d.at(2, 0), 2.0f);
}

TEST(DepthDecoding, CorruptAndUnsupported) {
  auto bytes = encode_depth_f32(3, 1, {1.f, 1.f, 1.f});
  bytes.pop_back();
  EXPECT_EQ(code_of([&] { decode_depth_bytes(bytes, 1.0, "x"); }), Errc::corrupt_asset);
  const std::vector<std::uint8_t> junk = {'G', 'I', 'F', '8', '9', 'a'};
  EXPECT_EQ(code_of([&] { decode_depth_bytes(junk, 1.0, "x"); }), Errc::unsupported_encoding);
  const auto rgb = encode_png(1, 1, 3, 8, {1, 2, 3});
  EXPECT_EQ(code_of([&] { decode_depth_bytes(rgb, 1.0, "x"); }), Errc::unsupported_encoding);
}

TEST(DepthDecoding, LinearInStoredValue) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> v(1, 6000), k(2, 10);
  for (int i = 0; i < 200; ++i) {
    const int a = v(rng), f = k(rng);
    const auto one = decode_depth_bytes(encode_png(1, 1, 1, 16, {static_cast<std::uint16_t>(a)}), 0.001, "x");
    const auto many = decode_depth_bytes(encode_png(1, 1, 1, 16, {static_cast<std::uint16_t>(a * f)}), 0.001, "x");
    EXPECT_NEAR(many.at(0, 0), f * one.at(0, 0), 1e-5 * f * one.at(0, 0));
  }
}

TEST(MaskRuns, EmptyCheckerboardFull) {
  const BinaryMask empty(4, 4);
  EXPECT_TRUE(encode_runs(empty).runs.empty());
  EXPECT_EQ(decode_runs(encode_runs(empty)), empty);

  BinaryMask checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.set(x, y, (x + y) % 2 == 0);
  const BinaryMask back = decode_runs(encode_runs(checker));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(back.get(x, y), (x + y) % 2 == 0) << x << "," << y;

  BinaryMask full(5, 3);
  std::fill(full.bits.begin(), full.bits.end(), 1);
  const auto runs = encode_runs(full);
  ASSERT_EQ(runs.runs.size(), 1u);
  EXPECT_EQ(runs.runs[0].first, 0u);
  EXPECT_EQ(runs.runs[0].second, 15u);
}

TEST(MaskRuns, RoundTripIsBijective) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const int w = 1 + static_cast<int>(rng() % 17), h = 1 + static_cast<int>(rng() % 13);
    BinaryMask m(w, h);
    const double p = static_cast<double>(rng() % 100) / 100.0;
    for (auto& b : m.bits) b = (rng() % 1000) < p * 1000 ? 1 : 0;
    EXPECT_EQ(decode_runs(encode_runs(m)), m);
    EXPECT_EQ(runs_from_json(runs_to_json(encode_runs(m))), encode_runs(m));
  }
  Masklet ml;
  ml.object_id = 3;
  ml.width = 4;
  ml.height = 4;
  ml.frames[0] = mask_from(4, 4, {{0, 0}, {3, 3}});
  ml.frames[5] = mask_from(4, 4, {{1, 2}});
  EXPECT_EQ(masklet_roundtrip(ml), ml);
}

// Kinematics ------------------------------------------------------------------

TEST(Centroid, SymmetricBlock) {
  const auto m = mask_from(16, 16, {{10, 10}, {10, 11}, {11, 10}, {11, 11}});
  const Centroid c = extract_centroid(m, uniform_depth(16, 16, 3.0f));
  EXPECT_DOUBLE_EQ(c.pixel.x(), 10.5);
  EXPECT_DOUBLE_EQ(c.pixel.y(), 10.5);
  EXPECT_DOUBLE_EQ(c.depth_m, 3.0);
}

TEST(Centroid, MedianRejectsOutlier) {
  const auto m = mask_from(4, 4, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  DepthMap d = uniform_depth(4, 4, 1.0f);
  d.values[3] = 100.0f;
  // Sorted {1, 1, 1, 100}: the two middle values are both 1.
  EXPECT_DOUBLE_EQ(extract_centroid(m, d).depth_m, 1.0);
}

TEST(Centroid, AllInvalidDepth) {
  const auto m = mask_from(4, 4, {{1, 1}, {2, 2}});
  DepthMap d = uniform_depth(4, 4, 1.0f);
  std::fill(d.valid.begin(), d.valid.end(), 0);
  EXPECT_EQ(code_of([&] { extract_centroid(m, d); }), Errc::no_valid_depth);
}

TEST(Centroid, MedianRobustToMinorityPerturbation) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 40);
    BinaryMask m(n, 1);
    DepthMap d = uniform_depth(n, 1, 2.5f);
    for (int x = 0; x < n; ++x) m.set(x, 0);
    const int k = (n - 1) / 2;  // strictly fewer than half
    for (int i = 0; i < k; ++i) d.values[static_cast<std::size_t>(rng() % n)] = static_cast<float>(rng() % 1000) / 7.0f;
    EXPECT_DOUBLE_EQ(extract_centroid(m, d).depth_m, 2.5) << n;
  }
}

TEST(Backproject, IdentityCase) {
  const Intrinsics k{1, 1, 0, 0, 4, 4};
  const Vec3 p = backproject(k, CameraPose::identity(), Vec2(0, 0), 2.0);
  EXPECT_EQ(p, Vec3(0, 0, 2));
}

TEST(Backproject, MatchesMatrixOracle) {
  const Intrinsics k{500, 500, 320, 240, 640, 480};
  const Vec3 want = oracle_backproject(k, Mat3::Identity(), Vec3::Zero(), 420, 240, 5.0);
  const Vec3 got = backproject(k, CameraPose::identity(), Vec2(420, 240), 5.0);
  EXPECT_NEAR((got - want).norm(), 0.0, 1e-12);
  EXPECT_NEAR((got - Vec3(1.0, 0.0, 5.0)).norm(), 0.0, 1e-12);

  CameraPose shifted;
  shifted.translation = Vec3(0, 0, -5);
  const Vec3 want2 = oracle_backproject(k, Mat3::Identity(), Vec3(0, 0, -5), 420, 240, 5.0);
  const Vec3 got2 = backproject(k, shifted, Vec2(420, 240), 5.0);
  EXPECT_NEAR((got2 - want2).norm(), 0.0, 1e-12);
  EXPECT_NEAR((got2 - Vec3(1.0, 0.0, 0.0)).norm(), 0.0, 1e-12);
}

TEST(Backproject, NonPositiveDepth) {
  const Intrinsics k{1, 1, 0, 0, 4, 4};
  EXPECT_EQ(code_of([&] { backproject(k, CameraPose::identity(), Vec2(0, 0), 0.0); }), Errc::non_positive_depth);
  EXPECT_EQ(code_of([&] { backproject(k, CameraPose::identity(), Vec2(0, 0), -1.0); }), Errc::non_positive_depth);
}

TEST(Backproject, ProjectionRoundTripBothConventions) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Intrinsics k{100 + 900 * u(rng), 100 + 900 * u(rng), 10 + 600 * u(rng), 10 + 400 * u(rng), 640, 480};
    CameraPose pose;
    pose.rotation = testsupport::random_rotation(rng);
    pose.translation = Vec3(20 * u(rng) - 10, 20 * u(rng) - 10, 20 * u(rng) - 10);
    pose.convention = i % 2 ? PoseConvention::camera_from_world : PoseConvention::world_from_camera;
    const Vec2 px(640 * u(rng), 480 * u(rng));
    const double d = 0.1 + 50 * u(rng);
    const Vec3 w = backproject(k, pose, px, d);
    const Projection pr = project(k, pose, w);
    EXPECT_NEAR(pr.pixel.x(), px.x(), 1e-9 * std::max(1.0, std::abs(px.x())));
    EXPECT_NEAR(pr.pixel.y(), px.y(), 1e-9 * std::max(1.0, std::abs(px.y())));
    EXPECT_NEAR(pr.depth_m, d, 1e-9 * d);

    // camera_from_world stores the inverse transform.
    const Mat3 r_wc = pose.convention == PoseConvention::world_from_camera ? pose.rotation : Mat3(pose.rotation.transpose());
    const Vec3 t_wc = pose.convention == PoseConvention::world_from_camera
                          ? pose.translation
                          : Vec3(-(pose.rotation.transpose() * pose.translation));
    const Vec3 o = oracle_backproject(k, r_wc, t_wc, px.x(), px.y(), d);
    EXPECT_LE((w - o).norm(), 1e-9 * std::max(1.0, o.norm()));
  }
}

TEST(Backproject, RigidEquivariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const Intrinsics k{300, 310, 160, 120, 320, 240};
  for (int i = 0; i < 200; ++i) {
    CameraPose pose;
    pose.rotation = testsupport::random_rotation(rng);
    pose.translation = Vec3(u(rng), u(rng), u(rng));
    const Mat3 gr = testsupport::random_rotation(rng);
    const Vec3 gt(u(rng), u(rng), u(rng));
    CameraPose moved = pose;
    moved.rotation = gr * pose.rotation;
    moved.translation = gr * pose.translation + gt;
    const Vec2 px(std::abs(u(rng)) * 30, std::abs(u(rng)) * 20);
    const double d = 1.0 + std::abs(u(rng));
    const Vec3 a = gr * backproject(k, pose, px, d) + gt;
    const Vec3 b = backproject(k, moved, px, d);
    EXPECT_LE((a - b).norm(), 1e-9 * std::max(1.0, a.norm()));
  }
}

TEST(Differentiate, StaticPositions) {
  std::vector<TimedPoint> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({i / 6.0, Vec3(1, 2, 3)});
  const auto d = differentiate(pts);
  EXPECT_FALSE(d.velocity[0]);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(*d.velocity[static_cast<std::size_t>(i)], Vec3::Zero());
}

TEST(Differentiate, ForcedByDifferenceFormula) {
  const std::vector<TimedPoint> pts = {{0.0, Vec3(0, 0, 0)}, {1 / 6.0, Vec3(0.5, 0, 0)}, {2 / 6.0, Vec3(1.0, 0, 0)}};
  const auto d = differentiate(pts);
  EXPECT_FALSE(d.velocity[0]);
  EXPECT_FALSE(d.acceleration[1]);
  EXPECT_NEAR((*d.velocity[1] - Vec3(3, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((*d.velocity[2] - Vec3(3, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(d.acceleration[2]->norm(), 0.0, 1e-9);
}

TEST(Differentiate, GapUsesElapsedTime) {
  const std::vector<TimedPoint> pts = {{0.0, Vec3(0, 0, 0)}, {3 / 6.0, Vec3(1.5, 0, 0)}};
  const auto d = differentiate(pts);
  // (1.5 - 0) / 0.5 = 3
  EXPECT_NEAR((*d.velocity[1] - Vec3(3, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(Differentiate, AffinePathIsExact) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 p0(u(rng), u(rng), u(rng)), v(u(rng), u(rng), u(rng));
    std::vector<TimedPoint> pts;
    for (int i = 0; i < 30; ++i) pts.push_back({i * 0.125, p0 + v * (i * 0.125)});
    const auto d = differentiate(pts);
    for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LE((*d.velocity[i] - v).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t i = 2; i < pts.size(); ++i) EXPECT_LE(d.acceleration[i]->cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Ema, Examples) {
  const std::vector<Vec3> x = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 0, 0)};
  const auto s = ema_smooth(x, 0.5);
  EXPECT_DOUBLE_EQ(s[0].x(), 0.0);
  EXPECT_DOUBLE_EQ(s[1].x(), 0.5);
  EXPECT_DOUBLE_EQ(s[2].x(), 0.75);
  EXPECT_EQ(ema_smooth(x, 1.0), x);
  const std::vector<Vec3> c(6, Vec3(2, -1, 4));
  EXPECT_EQ(ema_smooth(c, 0.3), c);
  EXPECT_EQ(code_of([&] { ema_smooth(x, 0.0); }), Errc::alpha_out_of_range);
  EXPECT_EQ(code_of([&] { ema_smooth(x, 1.5); }), Errc::alpha_out_of_range);
}

TEST(Ema, StaysInsideCoordinateHull) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10.0, 10.0), a(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> x;
    for (int i = 0; i < 20; ++i) x.push_back(Vec3(u(rng), u(rng), u(rng)));
    const auto s = ema_smooth(x, a(rng));
    for (int c = 0; c < 3; ++c) {
      double lo = 1e9, hi = -1e9;
      for (const auto& p : x) lo = std::min(lo, p(c)), hi = std::max(hi, p(c));
      for (const auto& p : s) {
        EXPECT_GE(p(c), lo - 1e-12);
        EXPECT_LE(p(c), hi + 1e-12);
      }
    }
  }
}

TEST(BuildTracks, ScriptedSceneVelocities) {
  const auto& tracks = scripted().tracks;
  const ObjectTrack* a = tracks.find(1);
  const ObjectTrack* b = tracks.find(2);
  ASSERT_TRUE(a && b);
  for (const auto& s : a->samples) {
    if (s.t < 5) continue;
    ASSERT_TRUE(s.velocity);
    EXPECT_LE((*s.velocity - Vec3(1, 0, 0)).norm(), 0.05) << "t=" << s.t;
  }
  for (const auto& s : b->samples)
    if (s.velocity) EXPECT_LT(s.velocity->norm(), 0.05) << "t=" << s.t;
}

TEST(BuildTracks, GapFramesStayUnobserved) {
  auto s = testsupport::small_scene("gap");
  s.objects[0].hidden_frames = {10, 11, 12};
  const auto m = load_manifest(synth::write_scene(s, scratch("gap")));
  const auto tracks = build_tracks(m);
  const ObjectTrack* a = tracks.find(1);
  ASSERT_TRUE(a);
  ASSERT_EQ(a->samples.size(), 30u);
  for (int t = 0; t < 30; ++t) EXPECT_EQ(a->at(t)->observed, t < 10 || t > 12) << t;
  ASSERT_TRUE(a->at(13)->velocity);
  // Velocity across the gap spans 4 frames of elapsed time.
  const Vec3 expect = (*a->at(13)->position - *a->at(9)->position) / (4 / 6.0);
  EXPECT_LE((*a->at(13)->velocity - expect).norm(), 1e-12);
}

TEST(BuildTracks, SingleFrameObject) {
  auto s = testsupport::small_scene("single");
  s.objects[1].vanish_frame = 1;
  const auto tracks = build_tracks(load_manifest(synth::write_scene(s, scratch("single"))));
  const ObjectTrack* b = tracks.find(2);
  ASSERT_TRUE(b);
  ASSERT_EQ(b->samples.size(), 1u);
  EXPECT_FALSE(b->samples[0].velocity);
  EXPECT_FALSE(b->samples[0].acceleration);
}

// Relations ---------------------------------------------------------------------

TEST(ClosingSpeed, Examples) {
  EXPECT_DOUBLE_EQ(closing_speed(Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(1, 0, 0), Vec3::Zero()), 1.0);
  EXPECT_DOUBLE_EQ(closing_speed(Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3::Zero(), Vec3::Zero()), 0.0);
  const double tangential = closing_speed(Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 1, 0), Vec3::Zero());
  // Finite-difference oracle: distance change over a tiny symmetric step.
  const double h = 1e-6;
  const double fd = -((Vec3(10, 0, 0) - Vec3(0, h, 0)).norm() - (Vec3(10, 0, 0) - Vec3(0, -h, 0)).norm()) / (2 * h);
  EXPECT_NEAR(tangential, fd, 1e-9);
  EXPECT_NEAR(tangential, 0.0, 1e-12);
  EXPECT_EQ(code_of([] { closing_speed(Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3::Zero(), Vec3::Zero()); }), Errc::coincident);
}

TEST(ClosingSpeed, SymmetricAndMatchesFiniteDifference) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 pa(u(rng), u(rng), u(rng)), pb(u(rng), u(rng), u(rng));
    const Vec3 va(u(rng), u(rng), u(rng)), vb(u(rng), u(rng), u(rng));
    if ((pa - pb).norm() < 0.5) continue;
    const double c = closing_speed(pa, pb, va, vb);
    EXPECT_NEAR(c, closing_speed(pb, pa, vb, va), 1e-12);
    const double h = 1e-6;
    const double fd =
        -((pb + vb * h - pa - va * h).norm() - (pb - vb * h - pa + va * h).norm()) / (2 * h);
    EXPECT_NEAR(c, fd, 1e-6);
  }
}

TEST(ClassifyRelation, Thresholds) {
  EXPECT_EQ(classify_relation(1.0, 0.05), Relation::approaching);
  EXPECT_EQ(classify_relation(-0.2, 0.05), Relation::receding);
  EXPECT_EQ(classify_relation(0.03, 0.05), Relation::parallel);
  EXPECT_EQ(classify_relation(0.05, 0.05), Relation::parallel);
  EXPECT_EQ(classify_relation(-0.05, 0.05), Relation::parallel);
}

TEST(CameraDirection, Examples) {
  const auto axis = direction_in_camera(Vec3(0, 0, 5));
  EXPECT_DOUBLE_EQ(axis.azimuth_deg, 0.0);
  EXPECT_DOUBLE_EQ(axis.elevation_deg, 0.0);
  EXPECT_EQ(axis.sector, Sector::front);

  const auto right = direction_in_camera(Vec3(5, 0, 0));
  EXPECT_DOUBLE_EQ(right.azimuth_deg, 90.0);
  EXPECT_EQ(right.sector, Sector::right);

  const auto diag = direction_in_camera(Vec3(1, -1, 1));
  EXPECT_NEAR(diag.azimuth_deg, 45.0, 1e-12);
  // atan(1 / sqrt 2) in degrees
  EXPECT_NEAR(diag.elevation_deg, std::atan(1.0 / std::sqrt(2.0)) * 180.0 / std::numbers::pi, 1e-12);
  EXPECT_NEAR(diag.elevation_deg, 35.264, 1e-3);
  EXPECT_EQ(diag.vertical, Vertical::above);

  EXPECT_EQ(code_of([] { camera_direction(CameraPose::identity(), Vec3::Zero()); }), Errc::at_camera_center);
}

TEST(CameraDirection, SectorTableIsTotalAndHalfOpen) {
  EXPECT_EQ(sector_of(-45.0), Sector::front);
  EXPECT_EQ(sector_of(45.0), Sector::right);
  EXPECT_EQ(sector_of(135.0), Sector::back);
  EXPECT_EQ(sector_of(180.0), Sector::back);
  EXPECT_EQ(sector_of(-135.0), Sector::left);
  EXPECT_EQ(sector_of(-135.0001), Sector::back);
  EXPECT_EQ(sector_of(-45.0001), Sector::left);
  EXPECT_EQ(vertical_of(30.0), Vertical::above);
  EXPECT_EQ(vertical_of(-30.0), Vertical::below);
  EXPECT_EQ(vertical_of(29.999), Vertical::level);
  // Independent quadrant table, sampled densely.
  for (int i = -1799999; i <= 1800000; i += 7) {
    const double a = i / 10000.0;
    Sector want;
    if (a >= -45 && a < 45) want = Sector::front;
    else if (a >= 45 && a < 135) want = Sector::right;
    else if (a >= -135 && a < -45) want = Sector::left;
    else want = Sector::back;
    ASSERT_EQ(sector_of(a), want) << a;
  }
}

TEST(CameraDirection, RigidInvariance) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 300; ++i) {
    CameraPose pose;
    pose.rotation = testsupport::random_rotation(rng);
    pose.translation = Vec3(u(rng), u(rng), u(rng));
    const Vec3 p(u(rng), u(rng), u(rng));
    if ((p - pose.center()).norm() < 0.1) continue;
    const Mat3 gr = testsupport::random_rotation(rng);
    const Vec3 gt(u(rng), u(rng), u(rng));
    CameraPose moved = pose;
    moved.rotation = gr * pose.rotation;
    moved.translation = gr * pose.translation + gt;
    const auto a = camera_direction(pose, p);
    const auto b = camera_direction(moved, gr * p + gt);
    if (std::abs(std::abs(a.azimuth_deg) - 180.0) > 1e-6) EXPECT_NEAR(a.azimuth_deg, b.azimuth_deg, 1e-9);
    EXPECT_NEAR(a.elevation_deg, b.elevation_deg, 1e-9);
    const Vec3 q(u(rng), u(rng), u(rng)), va(u(rng), u(rng), u(rng)), vb(u(rng), u(rng), u(rng));
    if ((q - p).norm() < 0.1) continue;
    EXPECT_NEAR(closing_speed(p, q, va, vb), closing_speed(gr * p + gt, gr * q + gt, gr * va, gr * vb), 1e-9);
  }
}

TEST(Debounce, ShortRunsInheritStableLabel) {
  using R = Relation;
  const std::vector<R> raw = {R::approaching, R::approaching, R::receding, R::approaching, R::parallel, R::parallel,
                              R::receding,    R::receding};
  const std::vector<R> want = {R::approaching, R::approaching, R::approaching, R::approaching, R::parallel,
                               R::parallel,    R::receding,    R::receding};
  EXPECT_EQ(debounce_labels(raw, 2), want);
  EXPECT_EQ(debounce_labels(raw, 1), raw);
}

TEST(InferTimeline, OvertakeSequence) {
  const auto series = scripted().timeline.pair_series(1, 2);
  ASSERT_EQ(series.size(), 30u);
  std::vector<Relation> seq;
  for (const auto& r : series)
    if (seq.empty() || seq.back() != r.stable) seq.push_back(r.stable);
  EXPECT_EQ(seq, (std::vector<Relation>{Relation::approaching, Relation::parallel, Relation::receding}));

  // Oracle: the scripted distance series is shrinking then growing with the
  // turning point where A draws level with B (x = 2.25 m, t = 2.25 s).
  for (const auto& r : series) {
    const double time = r.t / 6.0;
    if (time < 1.5) EXPECT_EQ(r.stable, Relation::approaching) << r.t;
    if (time > 3.0) EXPECT_EQ(r.stable, Relation::receding) << r.t;
  }
}

TEST(InferTimeline, SignConsistencyWithDistanceSeries) {
  const auto& s = scripted();
  const double eps = s.timeline.options.eps_rel;
  const auto series = s.timeline.pair_series(1, 2);
  const ObjectTrack* a = s.tracks.find(1);
  const ObjectTrack* b = s.tracks.find(2);
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    const auto& r = series[i];
    if (std::abs(r.closing_speed) <= 2 * eps) continue;
    const int t = r.t, n = series[i + 1].t;
    const double d0 = (*b->at(t)->position - *a->at(t)->position).norm();
    const double d1 = (*b->at(n)->position - *a->at(n)->position).norm();
    EXPECT_EQ(r.closing_speed > 0, d1 - d0 < 0) << "t=" << t;
  }
}

TEST(InferTimeline, SingleObjectAndDisjointObjects) {
  auto s = testsupport::small_scene("solo");
  s.objects.pop_back();
  auto m = load_manifest(synth::write_scene(s, scratch("solo")));
  auto tl = infer_timeline(build_tracks(m), m);
  EXPECT_TRUE(tl.relations.empty());
  EXPECT_EQ(tl.directions.size(), 30u);

  auto d = testsupport::small_scene("disjoint");
  d.objects[0].vanish_frame = 10;
  d.objects[1].appear_frame = 15;
  m = load_manifest(synth::write_scene(d, scratch("disjoint")));
  tl = infer_timeline(build_tracks(m), m);
  EXPECT_TRUE(tl.relations.empty());
  EXPECT_EQ(tl.directions.size(), 10u + 15u);
}

// Cognitive map -------------------------------------------------------------------

namespace {

CognitiveMap scripted_map(const TcmConfig& cfg) {
  const auto& s = scripted();
  return build_tcm(s.manifest, s.tracks, s.timeline, cfg);
}

TcmConfig config(bool t, bool m, bool s) {
  TcmConfig c;
  c.include_temporal = t;
  c.include_motion = m;
  c.include_spatial = s;
  return c;
}

std::multiset<std::string> line_set(const std::string& doc) {
  auto lines = split_lines(doc);
  return {lines.begin() + 1, lines.end()};  // header line carries the flags
}

}  // namespace

TEST(Tcm, AllOffYieldsHeadersOnly) {
  const auto doc = serialize_tcm(scripted_map(TcmConfig::all_off()));
  const auto lines = split_lines(doc);
  EXPECT_EQ(lines.front(), "# tcm fps=6 T=0 M=0 S=0 video_id=scripted");
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_TRUE(lines[i].starts_with("[H] ")) << lines[i];
  EXPECT_EQ(lines[1], "[H] frame 0, objects: [A:car, B:person]");
  EXPECT_EQ(lines.size(), 1u + 30u + 1u);
}

TEST(Tcm, SpatialOnlyFirstFrame) {
  const auto& s = scripted();
  const FrameBlock b = render_frame(0, s.manifest, s.tracks, s.timeline, config(false, false, true));
  ASSERT_FALSE(b.lines.empty());
  EXPECT_TRUE(b.lines[0].text.starts_with("object A (car): position (0.00, 0.00, 5.00) m, front, 5.00 m from camera"))
      << b.lines[0].text;
  for (const auto& l : b.lines) {
    EXPECT_EQ(l.section, Section::S);
    EXPECT_EQ(l.text.find("m/s"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { render_frame(30, s.manifest, s.tracks, s.timeline); }), Errc::schema_violation);
}

TEST(Tcm, MotionOnlyStaticObject) {
  const auto& s = scripted();
  const FrameBlock b = render_frame(10, s.manifest, s.tracks, s.timeline, config(false, true, false));
  bool found = false;
  for (const auto& l : b.lines) found = found || l.text == "object B: stationary (0.00 m/s)";
  EXPECT_TRUE(found);
}

TEST(Tcm, OvertakeNarrative) {
  const auto narrative = scripted_map({}).narrative;
  std::vector<std::string> text;
  for (const auto& l : narrative) text.push_back(l.text);
  ASSERT_EQ(text.size(), 5u);
  EXPECT_EQ(text[0], "A present throughout");
  EXPECT_EQ(text[1], "B present throughout");
  EXPECT_TRUE(text[2].starts_with("A approaches B (t≈0.00–")) << text[2];
  EXPECT_TRUE(text[3].starts_with("A passes B")) << text[3];
  EXPECT_TRUE(text[4].starts_with("A recedes from B")) << text[4];
}

TEST(Tcm, EnterEventTime) {
  auto s = testsupport::small_scene("enter");
  s.objects[1].appear_frame = 10;
  const auto m = load_manifest(synth::write_scene(s, scratch("enter")));
  const auto tracks = build_tracks(m);
  const auto narrative = aggregate_narrative(m, tracks, infer_timeline(tracks, m));
  const std::string want = "B enters the scene at " + fixed(10.0 / 6.0, 2) + " s";
  EXPECT_EQ(want, "B enters the scene at 1.67 s");
  bool found = false;
  for (const auto& l : narrative) found = found || (l.text == want && l.section == Section::T);
  EXPECT_TRUE(found);
}

TEST(Tcm, RoundTripAndDeterminism) {
  const auto map = scripted_map({});
  const auto doc = serialize_tcm(map);
  EXPECT_EQ(parse_tcm(doc), map);
  EXPECT_EQ(serialize_tcm(scripted_map({})), doc);
  EXPECT_LE(split_lines(doc).size(), 200u);
}

TEST(Tcm, ToggleMonotonicity) {
  std::vector<std::multiset<std::string>> sets(8);
  for (int mask = 0; mask < 8; ++mask)
    sets[static_cast<std::size_t>(mask)] = line_set(serialize_tcm(scripted_map(config(mask & 1, mask & 2, mask & 4))));
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      if ((a & b) == a)
        EXPECT_TRUE(std::includes(sets[static_cast<std::size_t>(b)].begin(), sets[static_cast<std::size_t>(b)].end(),
                                  sets[static_cast<std::size_t>(a)].begin(), sets[static_cast<std::size_t>(a)].end()))
            << a << " within " << b;
  // Line filtering an all-on map gives the same document as rendering with fewer sections.
  const auto full = scripted_map({});
  for (int mask = 0; mask < 8; ++mask)
    EXPECT_EQ(serialize_tcm(filter_sections(full, mask & 1, mask & 2, mask & 4)),
              serialize_tcm(scripted_map(config(mask & 1, mask & 2, mask & 4))));
}

TEST(Tcm, NumericFidelityOfPositions) {
  const auto& s = scripted();
  const auto map = scripted_map(config(false, false, true));
  const std::regex re(R"(^object ([A-Z]+) \([a-z]+\): position \((-?[0-9.]+), (-?[0-9.]+), (-?[0-9.]+)\) m)");
  int checked = 0;
  for (const auto& f : map.frames) {
    for (const auto& l : f.lines) {
      std::smatch m;
      if (!std::regex_search(l.text, m, re)) continue;
      const int id = m[1] == "A" ? 1 : 2;
      const Vec3& p = *s.tracks.find(id)->at(f.t)->position;
      for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(std::stod(m[2 + c]) - p(c)), 0.005 + 1e-12);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 60);
}

TEST(Tcm, IdentityStability) {
  const auto doc = serialize_tcm(scripted_map({}));
  // Every object header in every frame uses the same name for the same category.
  for (const auto& l : split_lines(doc)) {
    if (!l.starts_with("[H] frame")) continue;
    EXPECT_NE(l.find("A:car"), std::string::npos);
    EXPECT_NE(l.find("B:person"), std::string::npos);
  }
  EXPECT_EQ(display_name(0), "A");
  EXPECT_EQ(display_name(25), "Z");
  EXPECT_EQ(display_name(26), "AA");
}

TEST(Tcm, PhraseBankAsset) {
  const auto dir = scratch("phrases");
  write_text_file(dir / "p.txt", "# replace one entry\nevent_present = {NAME} is visible the whole time\n");
  PhraseBank bank;
  bank.load(dir / "p.txt");
  const auto& s = scripted();
  const auto narrative = aggregate_narrative(s.manifest, s.tracks, s.timeline, {}, bank);
  EXPECT_EQ(narrative.front().text, "A is visible the whole time");
  write_text_file(dir / "q.txt", "no_such_key = x\n");
  EXPECT_EQ(code_of([&] { bank.load(dir / "q.txt"); }), Errc::schema_violation);
}
