#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mobipipe/events.hpp"
#include "mobipipe/rng.hpp"

using namespace mobipipe;

namespace {

Eigen::VectorXd grid(Eigen::Index n, double t0, double dt) {
  Eigen::VectorXd ts(n);
  for (Eigen::Index i = 0; i < n; ++i) ts[i] = t0 + dt * i;
  return ts;
}

}  // namespace

TEST_CASE("acceleration magnitude", "[events]") {
  Eigen::VectorXd ax(3), ay(3), az(3);
  ax << 0.0, 3.0, 1.0;
  ay << 0.0, 4.0, 1.0;
  az << 0.0, 0.0, 1.0;
  const auto m = acceleration_magnitude(ax, ay, az);
  CHECK(m[0] == 0.0);
  CHECK(m[1] == 5.0);
  CHECK(m[2] == Catch::Approx(std::sqrt(3.0)).margin(1e-12));

  Eigen::VectorXd bad(2);
  CHECK_THROWS_AS(acceleration_magnitude(ax, ay, bad), ParamError);
}

TEST_CASE("no crossing gives an empty set-point list", "[events]") {
  const auto ts = grid(100, 0.0, 0.01);
  const Eigen::VectorXd eye = Eigen::VectorXd::Constant(100, 0.3);
  const Eigen::VectorXd wrist = Eigen::VectorXd::Constant(100, 0.9);
  CHECK(detect_set_points(eye, wrist, ts).empty());
}

TEST_CASE("a linear ramp crosses where the algebra says", "[events]") {
  // eye fixed at 0.3; wrist falls 0.6 -> 0.1 over [0,1]; in image
  // coordinates the wrist passes above the eye at t = 0.6
  const Eigen::Index n = 251;
  const auto ts = grid(n, 0.0, 1.0 / 250.0);
  const Eigen::VectorXd eye = Eigen::VectorXd::Constant(n, 0.3);
  Eigen::VectorXd wrist(n);
  for (Eigen::Index i = 0; i < n; ++i) wrist[i] = 0.6 - 0.5 * ts[i];
  const auto sp = detect_set_points(eye, wrist, ts);
  REQUIRE(sp.size() == 1);
  CHECK(std::abs(sp[0] - 0.6) <= 1.0 / 250.0 + 1e-12);
}

TEST_CASE("refractory keeps only the first of two close crossings", "[events]") {
  const Eigen::Index n = 500;
  const auto ts = grid(n, 0.0, 0.01);
  const Eigen::VectorXd eye = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd wrist(n);
  // dips below zero at t ~ 1.0 and again at t ~ 1.5
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = ts[i];
    wrist[i] = 1.0;
    if (t >= 1.0 && t < 1.2) wrist[i] = -1.0;
    if (t >= 1.5 && t < 1.7) wrist[i] = -1.0;
  }
  const auto sp2 = detect_set_points(eye, wrist, ts, 2.0);
  REQUIRE(sp2.size() == 1);
  CHECK(sp2[0] == Catch::Approx(1.0).margin(0.011));
  const auto sp0 = detect_set_points(eye, wrist, ts, 0.2);
  CHECK(sp0.size() == 2);
}

TEST_CASE("set-points ignore a common offset and respect polarity", "[events]") {
  Rng rng(31337);
  const Eigen::Index n = 2000;
  const auto ts = grid(n, 0.0, 0.004);
  Eigen::VectorXd eye(n), wrist(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    eye[i] = 0.3 + 0.01 * rng.gaussian();
    wrist[i] = 0.5 + 0.3 * std::sin(2.0 * 3.14159265 * 0.2 * ts[i]);
  }
  const auto base = detect_set_points(eye, wrist, ts);
  const Eigen::VectorXd eye_off = eye.array() + 5.0;
  const Eigen::VectorXd wrist_off = wrist.array() + 5.0;
  const auto shifted = detect_set_points(eye_off, wrist_off, ts);
  CHECK(base == shifted);

  // flipping both the data and the polarity must agree as well
  const Eigen::VectorXd eye_neg = -eye;
  const Eigen::VectorXd wrist_neg = -wrist;
  const auto flipped = detect_set_points(
      eye_neg, wrist_neg, ts, 2.0, CrossPolarity::WristAboveMeansLargerY);
  CHECK(base == flipped);
}

TEST_CASE("missing samples cannot produce crossings", "[events]") {
  const auto ts = grid(12, 0.0, 0.1);
  Eigen::VectorXd eye = Eigen::VectorXd::Zero(12);
  Eigen::VectorXd wrist = Eigen::VectorXd::Constant(12, 1.0);
  wrist[4] = std::numeric_limits<double>::quiet_NaN();
  wrist[5] = -1.0;  // crossing hidden behind the NaN is not reported
  wrist[6] = 1.0;
  wrist[9] = -1.0;  // clean crossing with finite neighbours is
  const auto sp = detect_set_points(eye, wrist, ts, 0.1);
  REQUIRE(sp.size() == 1);
  CHECK(sp[0] == Catch::Approx(0.9));
}

TEST_CASE("onset lands on a step edge", "[events]") {
  Rng rng(2024);
  const double fs = 60.0;
  const Eigen::Index n = 241;  // 4 s
  const auto ts = grid(n, 0.0, 1.0 / fs);
  Eigen::VectorXd mag(n);
  for (Eigen::Index i = 0; i < n; ++i)
    mag[i] = ts[i] <= 0.5 ? 1.0 + 0.1 * rng.gaussian() : 5.0;
  // wide config so the baseline fits this short recording
  OnsetConfig cfg;
  cfg.baseline_start = -1.0;
  cfg.baseline_end = -0.6;
  const double onset = detect_movement_onset(mag, ts, 1.0, cfg);
  CHECK(std::abs(onset - 0.5) <= 1.0 / fs + 1e-12);
}

TEST_CASE("set-point already below threshold returns the set-point",
          "[events]") {
  const auto ts = grid(400, 0.0, 0.01);
  Eigen::VectorXd mag(400);
  for (Eigen::Index i = 0; i < 400; ++i)
    mag[i] = 1.0 + (i % 2 ? 0.01 : -0.01);
  const double sp = 3.125;  // falls between samples; its sample reads 0.99
  REQUIRE(mag[312] < 1.0);
  const double onset = detect_movement_onset(mag, ts, sp);
  CHECK(onset == sp);
}

TEST_CASE("monotone ramp onset is the last pre-crossing sample", "[events]") {
  const double fs = 100.0;
  const Eigen::Index n = 501;
  const auto ts = grid(n, 0.0, 1.0 / fs);
  Eigen::VectorXd mag(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // baseline alternates (nonzero SD), then ramps from t = 3.0
    mag[i] = 1.0 + (i % 2 ? 0.01 : -0.01);
    if (ts[i] > 3.0) mag[i] = 1.0 + 10.0 * (ts[i] - 3.0);
  }
  OnsetConfig cfg;
  cfg.baseline_start = -2.5;
  cfg.baseline_end = -2.0;
  double threshold = 0.0;
  const double onset = detect_movement_onset(mag, ts, 5.0, cfg, &threshold);
  // last index with value strictly below threshold, found independently
  Eigen::Index want = -1;
  for (Eigen::Index i = 0; i < n; ++i)
    if (ts[i] <= 5.0 && mag[i] < threshold) want = i;
  REQUIRE(want >= 0);
  CHECK(onset == ts[want]);
}

TEST_CASE("onset is invariant under positive rescaling", "[events]") {
  Rng rng(555);
  const auto ts = grid(1000, 0.0, 0.01);
  Eigen::VectorXd mag(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) {
    mag[i] = 1.0 + 0.1 * rng.gaussian();
    if (ts[i] > 6.0) mag[i] += 4.0;
  }
  const double a = detect_movement_onset(mag, ts, 7.0);
  const Eigen::VectorXd scaled = 7.3 * mag;
  const double b = detect_movement_onset(scaled, ts, 7.0);
  CHECK(a == b);
}

TEST_CASE("onset error cases", "[events]") {
  const auto ts = grid(200, 0.0, 0.01);
  const Eigen::VectorXd mag = Eigen::VectorXd::Constant(200, 1.0);

  // baseline would start before the recording does
  CHECK_THROWS_AS(detect_movement_onset(mag, ts, 1.0), WindowError);
  // set-point outside the recording
  CHECK_THROWS_AS(detect_movement_onset(mag, ts, 99.0), WindowError);

  // a flat baseline pins the threshold at its own level, so nothing is
  // ever strictly below it once the signal steps up
  const auto ts2 = grid(1000, 0.0, 0.01);
  Eigen::VectorXd allhigh = Eigen::VectorXd::Constant(1000, 5.0);
  for (Eigen::Index i = 0; i < 1000; ++i)
    if (ts2[i] >= 2.0 && ts2[i] <= 2.5) allhigh[i] = 1.0;
  OnsetConfig cfg;
  cfg.baseline_start = -2.5;
  cfg.baseline_end = -2.0;
  CHECK_THROWS_AS(detect_movement_onset(allhigh, ts2, 4.5, cfg),
                  DetectionError);

  OnsetConfig bad;
  bad.baseline_start = -1.0;
  bad.baseline_end = -1.5;
  CHECK_THROWS_AS(detect_movement_onset(mag, ts, 1.9, bad), ParamError);
}

TEST_CASE("shot events join set-points, onsets and outcomes", "[events]") {
  Rng rng(99);
  const Eigen::Index n = 250 * 30;
  const auto ts = grid(n, 0.0, 1.0 / 250.0);

  RecordingSet set;
  set.outcomes = {{0, true}, {1, false}, {2, true}};

  TimedStream pose;
  pose.info = {1, "pose", StreamKind::Pose, 250.0,
               {"right_eye_y", "right_wrist_y"}, ChannelFormat::Double64};
  pose.timestamps = ts;
  pose.samples.resize(n, 2);
  TimedStream imu;
  imu.info = {2, "imu", StreamKind::IMU, 250.0, {"mag"},
              ChannelFormat::Double64};
  imu.timestamps = ts;
  imu.samples.resize(n, 1);

  // three shots at 8, 16, 24 s: wrist dips below the eye there, and the
  // accelerometer steps up 300 ms earlier
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = ts[i];
    pose.samples(i, 0) = 0.3;
    pose.samples(i, 1) = 0.8;
    imu.samples(i, 0) = 1.0 + (i % 2 ? 0.001 : -0.001);
    for (double shot : {8.0, 16.0, 24.0}) {
      if (t >= shot && t < shot + 0.5) pose.samples(i, 1) = 0.1;
      if (t >= shot - 0.3 && t < shot + 0.5) imu.samples(i, 0) = 4.0;
    }
  }
  // EEG stream only so the recording passes kind lookups elsewhere
  TimedStream eeg;
  eeg.info = {3, "eeg", StreamKind::EEG, 250.0, {"Cz"},
              ChannelFormat::Double64};
  eeg.timestamps = ts;
  eeg.samples = Eigen::MatrixXd::Zero(n, 1);

  set.streams = {eeg, pose, imu};

  const auto events = detect_shot_events(set);
  REQUIRE(events.size() == 3);
  const double dt = 1.0 / 250.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double shot = 8.0 * (k + 1);
    CHECK(events[k].trial_index == static_cast<int>(k));
    CHECK(std::abs(events[k].set_point_time - shot) <= dt + 1e-12);
    CHECK(std::abs(events[k].onset_time - (shot - 0.3)) <= 2 * dt + 1e-12);
    CHECK(events[k].onset_time <= events[k].set_point_time);
  }
  CHECK(events[0].outcome == Outcome::Hit);
  CHECK(events[1].outcome == Outcome::Miss);
  CHECK(events[2].outcome == Outcome::Hit);

  const std::string csv = shot_events_csv(events);
  CHECK(csv.rfind("trial,set_point_s,onset_s,outcome", 0) == 0);
  CHECK(csv.find("hit") != std::string::npos);
  CHECK(csv.find("miss") != std::string::npos);
}

TEST_CASE("failed onsets drop the trial with a log line", "[events]") {
  const Eigen::Index n = 250 * 10;
  const auto ts = grid(n, 0.0, 1.0 / 250.0);
  RecordingSet set;

  TimedStream pose;
  pose.info = {1, "pose", StreamKind::Pose, 250.0,
               {"right_eye_y", "right_wrist_y"}, ChannelFormat::Double64};
  pose.timestamps = ts;
  pose.samples.resize(n, 2);
  TimedStream imu;
  imu.info = {2, "imu", StreamKind::IMU, 250.0, {"mag"},
              ChannelFormat::Double64};
  imu.timestamps = ts;
  imu.samples = Eigen::MatrixXd::Constant(n, 1, 5.0);  // never quiet

  for (Eigen::Index i = 0; i < n; ++i) {
    pose.samples(i, 0) = 0.3;
    // crossing at t = 1.0: baseline window would start at -1.5
    pose.samples(i, 1) = ts[i] >= 1.0 && ts[i] < 1.5 ? 0.1 : 0.8;
  }
  set.streams = {pose, imu};

  Log log;
  const auto events = detect_shot_events(set, {},
      CrossPolarity::WristAboveMeansSmallerY, "right_eye_y", "right_wrist_y",
      &log);
  CHECK(events.empty());
  REQUIRE_FALSE(log.lines.empty());
  CHECK(log.lines[0].find("dropped") != std::string::npos);
}
