#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "mobipipe/ica.hpp"
#include "mobipipe/rng.hpp"

using namespace mobipipe;
using Catch::Matchers::ContainsSubstring;

namespace {

// Unit-variance Laplacian via inverse CDF.
double laplacian_sample(Rng& rng) {
  double u = rng.uniform();
  u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
  const double v = u - 0.5;
  const double sgn = v < 0 ? -1.0 : 1.0;
  return -sgn * std::log(1.0 - 2.0 * std::abs(v)) / std::sqrt(2.0);
}

Eigen::MatrixXd laplacian_sources(int c, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd s(c, n);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = laplacian_sample(rng);
  return s;
}

Eigen::MatrixXd uniform_sources(int c, int n, std::uint64_t seed) {
  Rng rng(seed);
  const double a = std::sqrt(3.0);
  Eigen::MatrixXd s(c, n);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = rng.uniform(-a, a);
  return s;
}

Eigen::MatrixXd mixing4() {
  Eigen::MatrixXd a(4, 4);
  a << 1.0, 0.5, -0.3, 0.2,
      -0.4, 1.2, 0.6, -0.1,
       0.3, -0.7, 1.1, 0.4,
       0.2, 0.1, -0.5, 0.9;
  return a;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != b(i, j)) return false;
  return true;
}

}  // namespace

TEST_CASE("sphering whitens within the 2x scale convention") {
  SECTION("already-white data keeps a near-2I sphere") {
    Rng rng(101);
    Eigen::MatrixXd x(3, 6000);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.gaussian();
    const SphereResult r = sphere_data(x);
    const Eigen::MatrixXd two_eye = 2.0 * Eigen::MatrixXd::Identity(3, 3);
    REQUIRE((r.sphere - two_eye).cwiseAbs().maxCoeff() < 0.1);
    const Eigen::MatrixXd cov =
        r.data * r.data.transpose() / static_cast<double>(x.cols() - 1);
    const Eigen::MatrixXd four_eye = 4.0 * Eigen::MatrixXd::Identity(3, 3);
    REQUIRE((cov - four_eye).cwiseAbs().maxCoeff() < 0.2);
  }

  SECTION("diag(4,1) covariance has closed-form sphere diag(1,2)") {
    // Orthogonal zero-mean patterns give an exactly diagonal sample
    // covariance; sphere = 2*Cov^(-1/2) maps diag(4,1) to diag(1,2) and
    // the sphered covariance to 4I.
    const double c0 = std::sqrt(4.0 * 7.0 / 8.0);
    const double c1 = std::sqrt(7.0 / 8.0);
    Eigen::MatrixXd x(2, 8);
    x.row(0) << c0, -c0, c0, -c0, c0, -c0, c0, -c0;
    x.row(1) << c1, c1, -c1, -c1, c1, c1, -c1, -c1;
    const SphereResult r = sphere_data(x);
    Eigen::MatrixXd want(2, 2);
    want << 1.0, 0.0, 0.0, 2.0;
    REQUIRE((r.sphere - want).cwiseAbs().maxCoeff() < 1e-9);
    const Eigen::MatrixXd cov =
        r.data * r.data.transpose() / static_cast<double>(x.cols() - 1);
    const Eigen::MatrixXd four_eye = 4.0 * Eigen::MatrixXd::Identity(2, 2);
    REQUIRE((cov - four_eye).cwiseAbs().maxCoeff() < 1e-6);
  }

  SECTION("duplicated channel names the deficient dimension") {
    Rng rng(102);
    Eigen::MatrixXd x(3, 500);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      x(0, j) = rng.gaussian();
      x(1, j) = x(0, j);
      x(2, j) = rng.gaussian();
    }
    REQUIRE_THROWS_AS(sphere_data(x), InvariantError);
    REQUIRE_THROWS_WITH(sphere_data(x), ContainsSubstring("dimension"));
  }

  SECTION("degenerate shapes are rejected") {
    REQUIRE_THROWS_AS(sphere_data(Eigen::MatrixXd::Random(1, 100)),
                      ParamError);
    REQUIRE_THROWS_AS(sphere_data(Eigen::MatrixXd::Random(3, 4)), ParamError);
  }
}

TEST_CASE("Amari index") {
  SECTION("identity scores zero") {
    REQUIRE(amari_index(Eigen::MatrixXd::Identity(5, 5)) == 0.0);
  }

  SECTION("permutation times diagonal scaling scores zero") {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
    p(0, 2) = 3.0;
    p(1, 0) = -0.5;
    p(2, 3) = 7.0;
    p(3, 1) = 0.01;
    REQUIRE(amari_index(p) == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("2x2 all-ones matrix scores one") {
    REQUIRE(amari_index(Eigen::MatrixXd::Ones(2, 2)) ==
            Catch::Approx(1.0).margin(1e-15));
  }

  SECTION("zero row or column is an error") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Identity(3, 3);
    z.row(1).setZero();
    REQUIRE_THROWS_AS(amari_index(z), ParamError);
    REQUIRE_THROWS_AS(amari_index(Eigen::MatrixXd::Ones(2, 3)), ParamError);
  }
}

TEST_CASE("extended infomax separates super-Gaussian mixtures") {
  const int n = 20000;
  const Eigen::MatrixXd s = laplacian_sources(4, n, 7001);
  const Eigen::MatrixXd a = mixing4();
  const Eigen::MatrixXd x = a * s;

  const UnmixingModel model = fit_extended_infomax(x, 42);
  const Eigen::MatrixXd g = model.unmixing() * a;
  INFO("Amari index " << amari_index(g) << " after "
                      << model.training_meta.steps << " steps");
  REQUIRE(amari_index(g) < 0.05);

  for (auto sign : model.kurtosis_signs)
    REQUIRE(sign == KurtosisSign::Super);

  // Pseudo-inverse of the unmixing reconstructs the input.
  const Eigen::MatrixXd x_rec = model.mixing() * (model.unmixing() * x);
  REQUIRE((x_rec - x).norm() / x.norm() < 1e-6);
}

TEST_CASE("extended infomax flips to the sub-Gaussian rule for uniforms") {
  const int n = 20000;
  const Eigen::MatrixXd s = uniform_sources(2, n, 7002);
  Eigen::MatrixXd a(2, 2);
  a << 0.8, 0.6, -0.5, 1.0;
  const Eigen::MatrixXd x = a * s;

  const UnmixingModel model = fit_extended_infomax(x, 43);
  const Eigen::MatrixXd g = model.unmixing() * a;
  INFO("Amari index " << amari_index(g));
  REQUIRE(amari_index(g) < 0.1);
  REQUIRE(model.kurtosis_signs.size() == 2);
  for (auto sign : model.kurtosis_signs) REQUIRE(sign == KurtosisSign::Sub);
}

TEST_CASE("single channel model is a pure scaling") {
  Rng rng(103);
  Eigen::MatrixXd x(1, 400);
  for (Eigen::Index j = 0; j < x.cols(); ++j) x(0, j) = 2.0 * rng.gaussian();
  const UnmixingModel model = fit_extended_infomax(x, 7);
  REQUIRE(model.sphere.rows() == 1);
  REQUIRE(model.weights(0, 0) == 1.0);
  REQUIRE(model.sphere(0, 0) == Catch::Approx(1.0).epsilon(0.1));
  REQUIRE(model.kurtosis_signs.size() == 1);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  const Eigen::MatrixXd s = laplacian_sources(3, 4000, 7003);
  Eigen::MatrixXd a(3, 3);
  a << 1.0, 0.3, -0.2, 0.1, 0.9, 0.4, -0.3, 0.2, 1.1;
  const Eigen::MatrixXd x = a * s;

  InfomaxOptions opt;
  opt.max_steps = 20;
  const UnmixingModel m1 = fit_extended_infomax(x, 99, {}, opt);
  const UnmixingModel m2 = fit_extended_infomax(x, 99, {}, opt);
  REQUIRE(bitwise_equal(m1.weights, m2.weights));
  REQUIRE(bitwise_equal(m1.sphere, m2.sphere));
  REQUIRE(m1.training_meta.steps == m2.training_meta.steps);
  REQUIRE(m1.training_meta.final_weight_change ==
          m2.training_meta.final_weight_change);
  REQUIRE(m1.kurtosis_signs == m2.kurtosis_signs);

  const UnmixingModel m3 = fit_extended_infomax(x, 100, {}, opt);
  REQUIRE_FALSE(bitwise_equal(m1.weights, m3.weights));
}

TEST_CASE("channel permutation permutes the solution") {
  const int n = 20000;
  const Eigen::MatrixXd s = laplacian_sources(4, n, 7004);
  const Eigen::MatrixXd a = mixing4();
  const Eigen::MatrixXd x = a * s;

  const std::vector<int> perm = {2, 0, 3, 1};
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  Eigen::MatrixXd xp(4, n);
  for (int i = 0; i < 4; ++i) {
    p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  }

  const Eigen::MatrixXd w1 = fit_extended_infomax(x, 42).unmixing();
  const Eigen::MatrixXd w2 = fit_extended_infomax(xp, 42).unmixing();
  const Eigen::MatrixXd g = w2 * p * w1.inverse();
  INFO("cross-solution Amari index " << amari_index(g));
  REQUIRE(amari_index(g) < 0.05);
}

TEST_CASE("fit input validation") {
  REQUIRE_THROWS_AS(fit_extended_infomax(Eigen::MatrixXd::Random(2, 79), 1),
                    ParamError);
  REQUIRE_THROWS_AS(
      fit_extended_infomax(Eigen::MatrixXd::Random(4, 1000), 1, {"a", "b"}),
      ParamError);
}

TEST_CASE("component flagging thresholds") {
  // columns: brain, muscle, eye, heart, line_noise, channel_noise, other
  ComponentLabelTable t;
  t.probs.resize(6, 7);
  t.probs.setZero();
  t.probs.row(0) << 0.05, 0, 0, 0.95, 0, 0, 0;   // heart above 0.9
  t.probs.row(1) << 0.71, 0, 0.29, 0, 0, 0, 0;   // eye just under 0.3
  t.probs.row(2) << 0.70, 0, 0.30, 0, 0, 0, 0;   // eye exactly 0.3
  t.probs.row(3) << 0.10, 0, 0, 0, 0.90, 0, 0;   // line noise exactly 0.9
  t.probs.row(4) << 1.00, 0, 0, 0, 0, 0, 0;      // clean
  t.probs.row(5) << 0.69, 0.31, 0, 0, 0, 0, 0;   // muscle above 0.3

  const std::vector<int> rejected = flag_components_by_threshold(t);
  REQUIRE(rejected == std::vector<int>{0, 2, 3, 5});

  SECTION("bad rows are rejected up front") {
    ComponentLabelTable bad;
    bad.probs.resize(1, 7);
    bad.probs.row(0) << 0.5, 0.5, 0.5, 0, 0, 0, 0;  // sums to 1.5
    REQUIRE_THROWS_AS(flag_components_by_threshold(bad), ValidationError);

    bad.probs.row(0) << 1.2, -0.2, 0, 0, 0, 0, 0;  // outside [0,1]
    REQUIRE_THROWS_AS(flag_components_by_threshold(bad), ValidationError);
  }
}

TEST_CASE("component label CSV round trip and validation") {
  SECTION("well-formed table for a 30-component model") {
    Rng rng(104);
    ComponentLabelTable t;
    t.probs.resize(30, 7);
    for (Eigen::Index i = 0; i < 30; ++i) {
      double sum = 0;
      for (Eigen::Index j = 0; j < 7; ++j) {
        t.probs(i, j) = rng.uniform(0.01, 1.0);
        sum += t.probs(i, j);
      }
      t.probs.row(i) /= sum;
    }
    const std::string csv = component_labels_csv(t);
    const ComponentLabelTable back = load_component_labels(csv, 30);
    REQUIRE(back.probs.rows() == 30);
    REQUIRE((back.probs - t.probs).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("count mismatch against the fitted model") {
    const std::string csv =
        "component,brain,muscle,eye,heart,line_noise,channel_noise,other\n"
        "0,1,0,0,0,0,0,0\n";
    REQUIRE_THROWS_AS(load_component_labels(csv, 2), ValidationError);
  }

  SECTION("row summing far from one") {
    const std::string csv =
        "component,brain,muscle,eye,heart,line_noise,channel_noise,other\n"
        "0,0.5,0.5,0.5,0,0,0,0\n";
    REQUIRE_THROWS_AS(load_component_labels(csv), ValidationError);
  }

  SECTION("missing column") {
    const std::string csv =
        "component,brain,muscle,eye,heart,line_noise,channel_noise\n"
        "0,1,0,0,0,0,0\n";
    REQUIRE_THROWS_AS(load_component_labels(csv), SchemaError);
  }

  SECTION("out-of-order component index") {
    const std::string csv =
        "component,brain,muscle,eye,heart,line_noise,channel_noise,other\n"
        "1,1,0,0,0,0,0,0\n";
    REQUIRE_THROWS_AS(load_component_labels(csv), ValidationError);
  }

  SECTION("non-numeric probability") {
    const std::string csv =
        "component,brain,muscle,eye,heart,line_noise,channel_noise,other\n"
        "0,x,0,0,0,0,0,0\n";
    REQUIRE_THROWS_AS(load_component_labels(csv), ValidationError);
  }
}

TEST_CASE("model JSON round trip is exact") {
  UnmixingModel m;
  m.sphere.resize(2, 2);
  m.sphere << 1.25, -0.5, -0.5, 3.75;
  m.weights.resize(2, 2);
  m.weights << 0.1, 2.0 / 3.0, -1.0, 0.3;
  m.kurtosis_signs = {KurtosisSign::Super, KurtosisSign::Sub};
  m.channel_labels = {"C3", "C4"};
  m.training_meta.steps = 17;
  m.training_meta.final_weight_change = 3.5e-7;
  m.training_meta.seed = 123456789ull;

  const nlohmann::json j = nlohmann::json::parse(to_json(m).dump());
  const UnmixingModel back = model_from_json(j);
  REQUIRE(bitwise_equal(back.sphere, m.sphere));
  REQUIRE(bitwise_equal(back.weights, m.weights));
  REQUIRE(back.kurtosis_signs == m.kurtosis_signs);
  REQUIRE(back.channel_labels == m.channel_labels);
  REQUIRE(back.training_meta.steps == 17);
  REQUIRE(back.training_meta.final_weight_change == 3.5e-7);
  REQUIRE(back.training_meta.seed == 123456789ull);

  SECTION("malformed documents are rejected") {
    nlohmann::json bad = to_json(m);
    bad["sphere"] = std::vector<double>{1.0, 2.0, 3.0};
    REQUIRE_THROWS_AS(model_from_json(bad), SchemaError);

    nlohmann::json bad_sign = to_json(m);
    bad_sign["kurtosis_signs"][0] = "weird";
    REQUIRE_THROWS_AS(model_from_json(bad_sign), SchemaError);
  }
}
