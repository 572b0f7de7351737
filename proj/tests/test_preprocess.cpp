#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mobipipe/preprocess.hpp"
#include "mobipipe/rng.hpp"

using namespace mobipipe;
using Catch::Matchers::ContainsSubstring;

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.gaussian(0.0, sd);
  return m;
}

Epochs make_epochs(const std::vector<Eigen::MatrixXd>& data, double fs,
                   double t_start,
                   const std::vector<std::string>& channel_labels) {
  Epochs e;
  e.data = data;
  e.fs = fs;
  e.channel_labels = channel_labels;
  const Eigen::Index ns = data.at(0).cols();
  for (Eigen::Index k = 0; k < ns; ++k)
    e.times.push_back(t_start + static_cast<double>(k) / fs);
  for (std::size_t i = 0; i < data.size(); ++i) {
    e.event_times.push_back(10.0 + static_cast<double>(i));
    e.labels.push_back(static_cast<int>(i % 2));
  }
  return e;
}

}  // namespace

TEST_CASE("RMS channel flagging") {
  SECTION("identical channels are never flagged") {
    Eigen::MatrixXd data = Eigen::MatrixXd::Ones(5, 100) * 3.0;
    REQUIRE(flag_bad_channels_rms(data).empty());
  }

  SECTION("one loud channel among 32 is exactly the flagged one") {
    Eigen::MatrixXd data = gaussian_matrix(32, 4000, 501);
    data.row(17) *= 10.0;
    const auto bad = flag_bad_channels_rms(data);
    REQUIRE(bad == std::vector<int>{17});

    // independent recomputation of the rule
    Eigen::VectorXd rms(32);
    for (int i = 0; i < 32; ++i)
      rms[i] = std::sqrt(data.row(i).array().square().mean());
    const double mean = rms.mean();
    const double sd =
        std::sqrt((rms.array() - mean).square().sum() / 31.0);
    for (int i = 0; i < 32; ++i) {
      const bool flagged =
          std::find(bad.begin(), bad.end(), i) != bad.end();
      REQUIRE(flagged == (rms[i] > mean + sd));
    }
  }

  SECTION("a silent channel is not flagged by the one-sided rule") {
    Eigen::MatrixXd data = gaussian_matrix(8, 2000, 502);
    data.row(3).setZero();
    const auto bad = flag_bad_channels_rms(data);
    REQUIRE(std::find(bad.begin(), bad.end(), 3) == bad.end());
  }

  SECTION("fewer than 3 channels is an error") {
    REQUIRE_THROWS_AS(flag_bad_channels_rms(Eigen::MatrixXd::Ones(2, 50)),
                      ParamError);
  }
}

TEST_CASE("epoch extraction") {
  const double fs = 250.0;

  SECTION("window (-2.5, 0) at 250 Hz gives 625 samples") {
    ContinuousEeg eeg{gaussian_matrix(2, 2000, 503), 0.0, fs, {"a", "b"}};
    const Epochs e = extract_epochs(eeg, {5.0}, -2.5, 0.0);
    REQUIRE(e.n_epochs() == 1);
    REQUIRE(e.n_samples() == 625);
    REQUIRE(e.times.front() == Catch::Approx(-2.5));
    REQUIRE(e.times.back() == Catch::Approx(-1.0 / fs));
    for (std::size_t k = 1; k < e.times.size(); ++k)
      REQUIRE(e.times[k] - e.times[k - 1] ==
              Catch::Approx(1.0 / fs).epsilon(1e-12));
  }

  SECTION("the t=0 sample is the one nearest the event") {
    Eigen::MatrixXd ramp(1, 2000);
    for (Eigen::Index i = 0; i < 2000; ++i) ramp(0, i) = static_cast<double>(i);
    ContinuousEeg eeg{ramp, 100.0, fs, {"a"}};
    const double event = 100.0 + 1000.35 / fs;  // nearest grid sample: 1000
    const Epochs e = extract_epochs(eeg, {event}, -2.5, 1.0);
    REQUIRE(e.n_samples() == 875);
    const auto it = std::find(e.times.begin(), e.times.end(), 0.0);
    REQUIRE(it != e.times.end());
    const auto k0 = static_cast<Eigen::Index>(it - e.times.begin());
    REQUIRE(e.data[0](0, k0) == 1000.0);
  }

  SECTION("events whose window leaves the recording are dropped and logged") {
    ContinuousEeg eeg{gaussian_matrix(1, 1500, 504), 0.0, fs, {"a"}};
    Log log;
    const Epochs e = extract_epochs(eeg, {0.5, 4.0, 5.99}, -2.5, 1.0,
                                    {1, 0, 1}, &log);
    REQUIRE(e.n_epochs() == 1);
    REQUIRE(e.event_times == std::vector<double>{4.0});
    REQUIRE(e.labels == std::vector<int>{0});
    REQUIRE(log.lines.size() == 2);
    REQUIRE_THAT(log.lines[0], ContainsSubstring("dropped"));
  }

  SECTION("no valid event is an error") {
    ContinuousEeg eeg{gaussian_matrix(1, 300, 505), 0.0, fs, {"a"}};
    REQUIRE_THROWS_AS(extract_epochs(eeg, {0.1}, -2.5, 1.0), ParamError);
  }

  SECTION("constant channel gives constant epochs") {
    Eigen::MatrixXd data = Eigen::MatrixXd::Constant(1, 2000, 4.25);
    ContinuousEeg eeg{data, 0.0, fs, {"a"}};
    const Epochs e = extract_epochs(eeg, {4.0, 6.0}, -2.5, 0.0);
    for (const auto& ep : e.data) {
      REQUIRE(ep.minCoeff() == 4.25);
      REQUIRE(ep.maxCoeff() == 4.25);
    }
  }
}

TEST_CASE("baseline correction") {
  const double fs = 250.0;

  SECTION("constant epochs go to zero") {
    std::vector<Eigen::MatrixXd> data = {
        Eigen::MatrixXd::Constant(2, 875, 7.0)};
    Epochs e = make_epochs(data, fs, -2.5, {"a", "b"});
    const Epochs out = baseline_correct(e, -2.5, -2.0);
    REQUIRE(out.data[0].cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("linear ramp loses its baseline-window mean") {
    Eigen::MatrixXd ramp(1, 875);
    for (Eigen::Index k = 0; k < 875; ++k) ramp(0, k) = static_cast<double>(k);
    Epochs e = make_epochs({ramp}, fs, -2.5, {"a"});
    const Epochs out = baseline_correct(e, -2.5, -2.0);
    // window samples: times in [-2.5, -2.0] are the first 126 (inclusive end)
    double mean = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < e.times.size(); ++k)
      if (e.times[k] >= -2.5 && e.times[k] <= -2.0) {
        mean += ramp(0, static_cast<Eigen::Index>(k));
        ++count;
      }
    mean /= count;
    REQUIRE(count == 126);
    for (Eigen::Index k = 0; k < 875; ++k)
      REQUIRE(out.data[0](0, k) ==
              Catch::Approx(ramp(0, k) - mean).margin(1e-10));
  }

  SECTION("baseline window mean is zero afterwards") {
    Epochs e = make_epochs({gaussian_matrix(3, 875, 506, 20.0)}, fs, -2.5,
                           {"a", "b", "c"});
    const Epochs out = baseline_correct(e, -2.5, -2.0);
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
      double mean = 0.0;
      int count = 0;
      for (std::size_t k = 0; k < out.times.size(); ++k)
        if (out.times[k] >= -2.5 && out.times[k] <= -2.0) {
          mean += out.data[0](ch, static_cast<Eigen::Index>(k));
          ++count;
        }
      REQUIRE(std::abs(mean / count) < 1e-9);
    }

    // already-corrected epochs pass through unchanged
    const Epochs again = baseline_correct(out, -2.5, -2.0);
    REQUIRE((again.data[0] - out.data[0]).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("window outside the epoch is an error") {
    Epochs e = make_epochs({gaussian_matrix(1, 875, 507)}, fs, -2.5, {"a"});
    REQUIRE_THROWS_AS(baseline_correct(e, -3.5, -3.0), WindowError);
    REQUIRE_THROWS_AS(baseline_correct(e, 0.5, 2.0), WindowError);
  }
}

TEST_CASE("joint-probability rejection") {
  const double fs = 250.0;

  SECTION("identical epochs are all kept") {
    std::vector<Eigen::MatrixXd> data(12, Eigen::MatrixXd::Ones(2, 100));
    Epochs e = make_epochs(data, fs, -2.5, {"a", "b"});
    const JointProbResult r = joint_probability_rejection(e, 3.0);
    REQUIRE(r.kept.size() == 12);
    REQUIRE(r.rejected.empty());
  }

  SECTION("a spike epoch among Gaussian epochs is rejected at SD=3") {
    Rng rng(508);
    std::vector<Eigen::MatrixXd> data;
    for (int e = 0; e < 100; ++e) {
      Eigen::MatrixXd m(4, 200);
      for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 200; ++j)
          m(i, j) = rng.gaussian(0.0, 5.0);
      data.push_back(m);
    }
    data[57].row(2).segment(80, 40).array() += 50.0;
    Epochs e = make_epochs(data, fs, -2.5, {"a", "b", "c", "d"});
    const JointProbResult r = joint_probability_rejection(e, 3.0);
    REQUIRE(std::find(r.kept.begin(), r.kept.end(), 57) == r.kept.end());
    bool found = false;
    for (const auto& row : r.rejected)
      if (row.epoch == 57) {
        found = true;
        REQUIRE(row.z > 3.0);
      }
    REQUIRE(found);
  }

  SECTION("infinite threshold keeps everything") {
    Epochs e = make_epochs(
        std::vector<Eigen::MatrixXd>(15, Eigen::MatrixXd::Zero(2, 50)), fs,
        -2.5, {"a", "b"});
    for (std::size_t i = 0; i < e.data.size(); ++i)
      e.data[i] = gaussian_matrix(2, 50, 509 + i, 5.0);
    const JointProbResult r = joint_probability_rejection(
        e, std::numeric_limits<double>::infinity());
    REQUIRE(r.kept.size() == 15);
  }

  SECTION("fewer than 10 epochs is an error") {
    Epochs e = make_epochs(
        std::vector<Eigen::MatrixXd>(9, Eigen::MatrixXd::Zero(1, 50)), fs,
        -2.5, {"a"});
    REQUIRE_THROWS_AS(joint_probability_rejection(e, 3.0), ParamError);
  }

  SECTION("rejecting every epoch is an error") {
    Epochs e = make_epochs(
        std::vector<Eigen::MatrixXd>(12, Eigen::MatrixXd::Zero(1, 50)), fs,
        -2.5, {"a"});
    for (std::size_t i = 0; i < e.data.size(); ++i)
      e.data[i] = gaussian_matrix(1, 50, 520 + i);
    REQUIRE_THROWS_AS(joint_probability_rejection(e, -10.0), ValidationError);
  }

  SECTION("rejection rows serialize with the fixed header") {
    const std::string csv = rejection_csv(
        {{3, "jointprob_single_channel", 4.5, 3.2}});
    REQUIRE_THAT(csv, ContainsSubstring("epoch,reason,measure,z\n"));
    REQUIRE_THAT(csv, ContainsSubstring("3,jointprob_single_channel,4.5,3.2"));
  }
}

TEST_CASE("spherical-spline interpolation") {
  const auto labels = standard_montage_labels();
  const auto& montage = standard_montage_32();
  const int n = static_cast<int>(labels.size());

  SECTION("a spatially constant field is reproduced") {
    Eigen::MatrixXd data(n, 5);
    for (Eigen::Index s = 0; s < 5; ++s)
      data.col(s).setConstant(3.7 + static_cast<double>(s));
    const int cz = static_cast<int>(
        std::find(labels.begin(), labels.end(), "Cz") - labels.begin());
    Eigen::MatrixXd corrupted = data;
    corrupted.row(cz).setZero();
    const Eigen::MatrixXd out =
        spherical_interpolate(corrupted, {cz}, labels);
    for (Eigen::Index s = 0; s < 5; ++s)
      REQUIRE(out(cz, s) ==
              Catch::Approx(data(cz, s)).epsilon(1e-6));
  }

  SECTION("an all-zero field stays zero") {
    const Eigen::MatrixXd out = spherical_interpolate(
        Eigen::MatrixXd::Zero(n, 3), {0, 5}, labels);
    REQUIRE(out.cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("leave-one-out at Cz on a smooth field") {
    // potential of a unit source outside the head
    const double sx = 0.3, sy = 0.2, sz = 1.6;
    Eigen::MatrixXd data(n, 1);
    int cz = -1;
    for (int i = 0; i < n; ++i) {
      const auto& p = montage[static_cast<std::size_t>(i)];
      data(i, 0) = 1.0 / std::sqrt((p.x - sx) * (p.x - sx) +
                                   (p.y - sy) * (p.y - sy) +
                                   (p.z - sz) * (p.z - sz));
      if (p.label == "Cz") cz = i;
    }
    REQUIRE(cz >= 0);
    const double truth = data(cz, 0);
    Eigen::MatrixXd corrupted = data;
    corrupted(cz, 0) = 0.0;
    const Eigen::MatrixXd out =
        spherical_interpolate(corrupted, {cz}, labels);
    REQUIRE(std::abs(out(cz, 0) - truth) / std::abs(truth) < 0.10);
  }

  SECTION("a bad channel without a montage position is an error") {
    std::vector<std::string> odd_labels = labels;
    odd_labels[4] = "EXT1";
    REQUIRE_THROWS_AS(
        spherical_interpolate(Eigen::MatrixXd::Zero(n, 2), {4}, odd_labels),
        SchemaError);
  }

  SECTION("good channels outside the montage are excluded but preserved") {
    std::vector<std::string> odd_labels = labels;
    odd_labels[6] = "AUX";
    Eigen::MatrixXd data = Eigen::MatrixXd::Constant(n, 2, 1.5);
    data.row(6).setConstant(99.0);
    Log log;
    const Eigen::MatrixXd out =
        spherical_interpolate(data, {0}, odd_labels, 1e-5, &log);
    REQUIRE(out(6, 0) == 99.0);
    REQUIRE(out(0, 0) == Catch::Approx(1.5).epsilon(1e-6));
    REQUIRE_FALSE(log.lines.empty());
  }

  SECTION("fewer than 4 good channels is an error") {
    std::vector<MontagePosition> pos = {montage[0], montage[1], montage[2],
                                        montage[3], montage[4]};
    REQUIRE_THROWS_AS(
        spherical_interpolate(Eigen::MatrixXd::Zero(5, 2), {0, 1}, pos),
        ParamError);
  }

  SECTION("positions off the unit sphere are rejected") {
    std::vector<MontagePosition> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = montage[static_cast<std::size_t>(i)];
    pos[3].x *= 2.0;
    REQUIRE_THROWS_AS(
        spherical_interpolate(Eigen::MatrixXd::Zero(n, 2), {0}, pos),
        InvariantError);
  }
}

TEST_CASE("average re-referencing") {
  const std::vector<std::string> labels = {"Cz", "C3", "TP9", "TP10"};

  SECTION("zero reference channels leave data unchanged") {
    Eigen::MatrixXd data = gaussian_matrix(4, 50, 510);
    data.row(2).setZero();
    data.row(3).setZero();
    const Eigen::MatrixXd out = rereference_average_of(data, labels);
    REQUIRE((out - data).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("equal channels become zero") {
    Eigen::MatrixXd data = Eigen::MatrixXd::Constant(4, 30, 2.5);
    const Eigen::MatrixXd out = rereference_average_of(data, labels);
    REQUIRE(out.cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("re-referencing is idempotent") {
    const Eigen::MatrixXd data = gaussian_matrix(4, 200, 511, 10.0);
    const Eigen::MatrixXd once = rereference_average_of(data, labels);
    const Eigen::MatrixXd twice = rereference_average_of(once, labels);
    REQUIRE((twice - once).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("missing reference channel is an error") {
    REQUIRE_THROWS_AS(
        rereference_average_of(Eigen::MatrixXd::Zero(2, 10), {"Cz", "C3"}),
        SchemaError);
  }
}

TEST_CASE("re-referencing commutes with epoching and baseline correction") {
  const double fs = 250.0;
  const std::vector<std::string> labels = {"Cz", "C3", "C4", "Fz", "TP9",
                                           "TP10"};
  const Eigen::MatrixXd raw = gaussian_matrix(6, 5000, 512, 15.0);
  const std::vector<double> events = {6.0, 9.5, 13.0};

  ContinuousEeg plain{raw, 0.0, fs, labels};
  ContinuousEeg reref_first{rereference_average_of(raw, labels), 0.0, fs,
                            labels};

  const Epochs a = baseline_correct(
      rereference_average_of(
          extract_epochs(plain, events, -2.5, 1.0)),
      -2.5, -2.0);
  const Epochs b = baseline_correct(
      extract_epochs(reref_first, events, -2.5, 1.0), -2.5, -2.0);
  const Epochs c = rereference_average_of(
      baseline_correct(extract_epochs(plain, events, -2.5, 1.0), -2.5, -2.0));

  REQUIRE(a.n_epochs() == 3);
  for (int e = 0; e < 3; ++e) {
    REQUIRE((a.data[static_cast<std::size_t>(e)] -
             b.data[static_cast<std::size_t>(e)])
                .cwiseAbs()
                .maxCoeff() < 1e-9);
    REQUIRE((a.data[static_cast<std::size_t>(e)] -
             c.data[static_cast<std::size_t>(e)])
                .cwiseAbs()
                .maxCoeff() < 1e-9);
  }
}

TEST_CASE("component back-projection") {
  SECTION("empty rejection set reproduces the data") {
    UnmixingModel m;
    m.sphere.resize(2, 2);
    m.sphere << 2.0, 0.1, 0.1, 2.0;
    m.weights.resize(2, 2);
    m.weights << 0.9, -0.2, 0.3, 1.1;
    m.kurtosis_signs = {KurtosisSign::Super, KurtosisSign::Super};
    const Eigen::MatrixXd x = gaussian_matrix(2, 300, 513, 5.0);
    const Eigen::MatrixXd out = backproject_excluding(x, m, {});
    REQUIRE((out - x).norm() / x.norm() < 1e-6);

    SECTION("rejecting every component zeroes the data") {
      const Eigen::MatrixXd zero = backproject_excluding(x, m, {0, 1});
      REQUIRE(zero.cwiseAbs().maxCoeff() < 1e-9);
    }

    SECTION("bad component index is an error") {
      REQUIRE_THROWS_AS(backproject_excluding(x, m, {2}), ParamError);
      REQUIRE_THROWS_AS(backproject_excluding(x, m, {-1}), ParamError);
    }

    SECTION("channel count mismatch is an error") {
      REQUIRE_THROWS_AS(
          backproject_excluding(Eigen::MatrixXd::Zero(3, 10), m, {}),
          ParamError);
    }
  }

  SECTION("removing one source of a known two-source mixture") {
    Rng rng(514);
    const int n = 8000;
    Eigen::MatrixXd s(2, n);
    for (Eigen::Index i = 0; i < 2; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        double u = rng.uniform();
        u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
        const double v = u - 0.5;
        s(i, j) = -(v < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(v));
      }
    Eigen::MatrixXd a(2, 2);
    a << 1.0, 0.4, -0.3, 0.9;
    const Eigen::MatrixXd x = a * s;

    const UnmixingModel model = fit_extended_infomax(x, 77);
    const Eigen::MatrixXd u = model.unmixing() * x;

    // find the component carrying source 1 by correlation
    int comp = 0;
    double best = -1.0;
    for (int i = 0; i < 2; ++i) {
      const Eigen::VectorXd ui =
          u.row(i).transpose().array() - u.row(i).mean();
      const Eigen::VectorXd s1 =
          s.row(1).transpose().array() - s.row(1).mean();
      const double corr =
          std::abs(ui.dot(s1) / std::sqrt(ui.squaredNorm() *
                                          s1.squaredNorm()));
      if (corr > best) {
        best = corr;
        comp = i;
      }
    }
    REQUIRE(best > 0.9);

    const Eigen::MatrixXd cleaned = backproject_excluding(x, model, {comp});
    const Eigen::MatrixXd target = a.col(0) * s.row(0);
    REQUIRE((cleaned - target).norm() / target.norm() < 0.05);
  }
}

TEST_CASE("epoch tensor export round trip") {
  const double fs = 250.0;
  Epochs e = make_epochs({gaussian_matrix(3, 120, 515, 8.0),
                          gaussian_matrix(3, 120, 516, 8.0)},
                         fs, -1.0, {"Cz", "C3", "C4"});
  e.labels = {1, 0};

  const std::string bin = "epochs_tmp.bin";
  const std::string side = "epochs_tmp.json";
  save_epochs(e, bin, side);
  const Epochs back = load_epochs(bin, side);

  REQUIRE(back.n_epochs() == 2);
  REQUIRE(back.fs == e.fs);
  REQUIRE(back.times == e.times);
  REQUIRE(back.event_times == e.event_times);
  REQUIRE(back.labels == e.labels);
  REQUIRE(back.channel_labels == e.channel_labels);
  for (int i = 0; i < 2; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    REQUIRE(back.data[idx].rows() == 3);
    for (Eigen::Index ch = 0; ch < 3; ++ch)
      for (Eigen::Index k = 0; k < 120; ++k)
        REQUIRE(back.data[idx](ch, k) == e.data[idx](ch, k));
  }

  SECTION("truncated data file is detected") {
    std::ofstream f(bin, std::ios::binary | std::ios::trunc);
    f << "short";
    f.close();
    REQUIRE_THROWS_AS(load_epochs(bin, side), TruncationError);
  }

  SECTION("corrupt sidecar is detected") {
    std::ofstream f(side, std::ios::binary | std::ios::trunc);
    f << "{\"n_epochs\": 2}";
    f.close();
    REQUIRE_THROWS_AS(load_epochs(bin, side), SchemaError);
  }

  std::remove(bin.c_str());
  std::remove(side.c_str());
}

TEST_CASE("two-pass preprocessing driver") {
  const double fs = 250.0;
  const int n = 55000;  // 220 s
  const std::vector<std::string> labels = {"Cz",  "C3",  "C4",  "Fz",
                                           "FC1", "FC2", "TP9", "TP10"};
  Rng rng(600);

  // two shared oscillations plus channel noise; channel 3 made loud
  Eigen::MatrixXd raw(8, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double t = static_cast<double>(j) / fs;
    const double slow = 12.0 * std::sin(2.0 * std::numbers::pi * 1.3 * t);
    const double alpha = 6.0 * std::sin(2.0 * std::numbers::pi * 9.0 * t);
    for (Eigen::Index i = 0; i < 8; ++i)
      raw(i, j) = 0.5 * slow + 0.3 * alpha + rng.gaussian(0.0, 8.0);
  }
  raw.row(3) *= 12.0;

  std::vector<double> events;
  std::vector<int> outcomes;
  for (int i = 0; i < 45; ++i) {
    events.push_back(5.0 + 4.8 * i);
    outcomes.push_back(i % 2);
  }

  // inject spikes into two trials so the final jointprob pass has work
  for (int trial : {10, 30}) {
    const auto at = static_cast<Eigen::Index>(
        std::lround((events[static_cast<std::size_t>(trial)] - 0.5) * fs));
    raw.block(0, at, 3, 50).array() += 150.0;
  }

  PreprocessConfig cfg;
  cfg.ica.max_steps = 40;
  cfg.ica_seed = 11;

  // 7 good channels expected; flag component 0 as heart
  ComponentLabelTable table;
  table.probs.resize(7, 7);
  table.probs.setZero();
  table.probs(0, 3) = 0.95;
  table.probs(0, 0) = 0.05;
  for (int i = 1; i < 7; ++i) table.probs(i, 0) = 1.0;

  Log log;
  const PreprocessOutput out =
      preprocess_session({raw, 0.0, fs, labels}, events, outcomes, cfg,
                         &table, &log);

  REQUIRE(out.bad_channels == std::vector<int>{3});
  REQUIRE(out.good_labels.size() == 7);
  REQUIRE(std::find(out.good_labels.begin(), out.good_labels.end(), "Fz") ==
          out.good_labels.end());
  REQUIRE(out.model.sphere.rows() == 7);
  REQUIRE(out.rejected_components == std::vector<int>{0});
  REQUIRE(out.n_epochs_pass2 == 45);
  REQUIRE(out.kept_pass2.size() >= 30);

  // Without component rejection the injected spikes reach the final
  // jointprob pass untouched and must be removed there.
  const PreprocessOutput plain =
      preprocess_session({raw, 0.0, fs, labels}, events, outcomes, cfg,
                         nullptr, &log);
  REQUIRE(plain.rejected_components.empty());
  for (int trial : {10, 30})
    REQUIRE(std::find(plain.kept_pass2.begin(), plain.kept_pass2.end(),
                      trial) == plain.kept_pass2.end());
  bool pass2_row = false;
  for (const auto& row : plain.rejections)
    if (row.reason.rfind("pass2_", 0) == 0) pass2_row = true;
  REQUIRE(pass2_row);

  REQUIRE(out.epochs.n_epochs() ==
          static_cast<int>(out.kept_pass2.size()));
  REQUIRE(out.epochs.n_channels() == 8);
  REQUIRE(out.epochs.n_samples() == 875);
  REQUIRE(out.epochs.channel_labels == labels);
  REQUIRE(out.epochs.times.front() == Catch::Approx(-2.5));

  // trial average is the plain mean of the cleaned epochs
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(8, 875);
  for (const auto& ep : out.epochs.data) mean += ep;
  mean /= static_cast<double>(out.epochs.n_epochs());
  REQUIRE((mean - out.trial_average).cwiseAbs().maxCoeff() < 1e-12);

  // the baseline window stays centered after the linear cleanup steps
  for (const auto& ep : out.epochs.data)
    for (Eigen::Index ch = 0; ch < 8; ++ch) {
      double m = 0.0;
      int count = 0;
      for (std::size_t k = 0; k < out.epochs.times.size(); ++k)
        if (out.epochs.times[k] >= -2.5 && out.epochs.times[k] <= -2.0) {
          m += ep(ch, static_cast<Eigen::Index>(k));
          ++count;
        }
      REQUIRE(std::abs(m / count) < 1e-6);
    }

  // outcome labels follow the kept epochs
  for (std::size_t i = 0; i < out.kept_pass2.size(); ++i)
    REQUIRE(out.epochs.labels[i] ==
            outcomes[static_cast<std::size_t>(out.kept_pass2[i])]);
}
