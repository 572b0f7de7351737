#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/rng.hpp"

namespace mobipipe {

enum class KurtosisSign { Super, Sub };

struct TrainingMeta {
  int steps = 0;
  double final_weight_change = 0.0;
  std::uint64_t seed = 0;
};

struct UnmixingModel {
  Eigen::MatrixXd sphere;   // [C x C]
  Eigen::MatrixXd weights;  // [C x C]
  std::vector<KurtosisSign> kurtosis_signs;
  std::vector<std::string> channel_labels;
  TrainingMeta training_meta;

  Eigen::MatrixXd unmixing() const { return weights * sphere; }

  Eigen::MatrixXd mixing() const {  // pseudo-inverse of weights*sphere
    const Eigen::MatrixXd w = unmixing();
    return w.completeOrthogonalDecomposition().pseudoInverse();
  }
};

// ---------------------------------------------------------------------------
// sphering
// ---------------------------------------------------------------------------

struct SphereResult {
  Eigen::MatrixXd data;    // [C x N]
  Eigen::MatrixXd sphere;  // 2 * Cov^(-1/2)
};

inline SphereResult sphere_data(const Eigen::MatrixXd& data) {
  const Eigen::Index c = data.rows(), n = data.cols();
  if (c < 2) throw ParamError("sphering needs at least 2 channels");
  if (n < 2 * c) throw ParamError("sphering needs more samples than that");

  Eigen::MatrixXd centered = data;
  for (Eigen::Index i = 0; i < c; ++i)
    centered.row(i).array() -= centered.row(i).mean();
  const Eigen::MatrixXd cov =
      centered * centered.transpose() / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double emax = ev.maxCoeff();
  for (Eigen::Index i = 0; i < c; ++i) {
    if (ev[i] <= emax * 1e-12 || ev[i] <= 0.0) {
      std::ostringstream msg;
      msg << "covariance is rank deficient along dimension " << i
          << " (eigenvalue " << ev[i] << ")";
      throw InvariantError(msg.str());
    }
  }
  const Eigen::MatrixXd inv_sqrt =
      eig.eigenvectors() * ev.array().rsqrt().matrix().asDiagonal() *
      eig.eigenvectors().transpose();

  SphereResult r;
  r.sphere = 2.0 * inv_sqrt;
  r.data = r.sphere * centered;
  return r;
}

// ---------------------------------------------------------------------------
// Amari index
// ---------------------------------------------------------------------------

inline double amari_index(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols() || p.rows() == 0)
    throw ParamError("Amari index needs a square matrix");
  const Eigen::Index n = p.rows();
  const Eigen::MatrixXd a = p.cwiseAbs();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rmax = a.row(i).maxCoeff();
    if (rmax == 0.0) throw ParamError("zero row in Amari argument");
    total += a.row(i).sum() / rmax - 1.0;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double cmax = a.col(j).maxCoeff();
    if (cmax == 0.0) throw ParamError("zero column in Amari argument");
    total += a.col(j).sum() / cmax - 1.0;
  }
  if (n == 1) return 0.0;
  return total / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
}

// ---------------------------------------------------------------------------
// extended infomax
// ---------------------------------------------------------------------------

struct InfomaxOptions {
  int max_steps = 512;
  double tol = 1e-6;
  double anneal = 0.9;          // lr factor when weight change grows
  int sign_every_blocks = 1;    // kurtosis re-estimation cadence
  int sign_subset = 6000;       // moving-window size for the estimate
  int sign_hysteresis = 2;      // estimates a flip must persist
};

namespace ica_detail {

inline std::vector<KurtosisSign> estimate_signs(const Eigen::MatrixXd& u) {
  std::vector<KurtosisSign> signs(static_cast<std::size_t>(u.rows()));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const auto row = u.row(i).array();
    const double m2 = row.square().mean();
    const double m4 = row.square().square().mean();
    const double k = m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    signs[static_cast<std::size_t>(i)] =
        k >= 0.0 ? KurtosisSign::Super : KurtosisSign::Sub;
  }
  return signs;
}

}  // namespace ica_detail

inline UnmixingModel fit_extended_infomax(
    const Eigen::MatrixXd& data, std::uint64_t seed,
    const std::vector<std::string>& channel_labels = {},
    const InfomaxOptions& opt = {}) {
  const Eigen::Index c = data.rows();
  const Eigen::Index n = data.cols();
  if (c < 1) throw ParamError("no channels");
  if (!channel_labels.empty() &&
      channel_labels.size() != static_cast<std::size_t>(c))
    throw ParamError("channel label count mismatch");

  UnmixingModel model;
  model.channel_labels = channel_labels;
  model.training_meta.seed = seed;

  if (n < 20 * c * c)
    throw ParamError("need at least 20*C^2 samples to fit");

  if (c == 1) {
    double mean = data.row(0).mean();
    double var = (data.row(0).array() - mean).square().mean();
    if (var <= 0) throw InvariantError("constant single channel");
    model.sphere = Eigen::MatrixXd::Constant(1, 1, 2.0 / std::sqrt(var));
    model.weights = Eigen::MatrixXd::Identity(1, 1);
    Eigen::MatrixXd u = model.sphere * data;
    u.array() -= u.mean();
    model.kurtosis_signs = ica_detail::estimate_signs(u);
    return model;
  }

  SphereResult sph = sphere_data(data);
  model.sphere = sph.sphere;
  const Eigen::MatrixXd& x = sph.data;

  const int block = static_cast<int>(
      std::ceil(std::sqrt(static_cast<double>(n) / 3.0)));
  double lr = 0.00065 / std::log(static_cast<double>(c));

  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(c, c);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(c, c);

  std::vector<KurtosisSign> signs(static_cast<std::size_t>(c),
                                  KurtosisSign::Super);
  std::vector<KurtosisSign> pending = signs;
  std::vector<int> pending_count(static_cast<std::size_t>(c), 0);
  Eigen::VectorXd ksign(c);
  for (Eigen::Index i = 0; i < c; ++i) ksign[i] = 1.0;

  Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const int subset = std::min<int>(opt.sign_subset, static_cast<int>(n));
  Eigen::Index subset_at = 0;

  double prev_change = std::numeric_limits<double>::infinity();
  double change = prev_change;
  int anneal_count = 0;
  int step = 0;
  const int n_blocks = static_cast<int>(n) / block;
  if (n_blocks < 1) throw ParamError("fewer samples than one block");

  Eigen::MatrixXd xb(c, block), u(c, block), delta(c, c);
  Eigen::MatrixXd sub(c, subset);

  for (step = 1; step <= opt.max_steps; ++step) {
    rng.shuffle(order);
    const Eigen::MatrixXd w_before = w;
    bool blew_up = false;

    for (int b = 0; b < n_blocks; ++b) {
      for (int k = 0; k < block; ++k)
        xb.col(k) = x.col(order[static_cast<std::size_t>(b * block + k)]);
      u.noalias() = w * xb;
      const Eigen::MatrixXd y = u.array().tanh().matrix();
      delta.noalias() = (ksign.asDiagonal() * y) * u.transpose();
      delta.noalias() += u * u.transpose();
      w += lr * (static_cast<double>(block) * eye - delta) * w;

      if (!w.allFinite() || w.cwiseAbs().maxCoeff() > 1e8) {
        blew_up = true;
        break;
      }

      if (opt.sign_every_blocks > 0 && b % opt.sign_every_blocks == 0) {
        Eigen::MatrixXd us;
        if (subset_at + subset <= n) {
          us = w * x.middleCols(subset_at, subset);
        } else {
          for (int k = 0; k < subset; ++k)
            sub.col(k) = x.col((subset_at + k) % n);
          us = w * sub;
        }
        subset_at = (subset_at + subset) % n;
        const auto est = ica_detail::estimate_signs(us);
        for (Eigen::Index i = 0; i < c; ++i) {
          const auto idx = static_cast<std::size_t>(i);
          if (est[idx] == signs[idx]) {
            pending_count[idx] = 0;
            continue;
          }
          if (est[idx] == pending[idx]) {
            if (++pending_count[idx] >= opt.sign_hysteresis) {
              signs[idx] = est[idx];
              ksign[i] = signs[idx] == KurtosisSign::Super ? 1.0 : -1.0;
              pending_count[idx] = 0;
            }
          } else {
            pending[idx] = est[idx];
            pending_count[idx] = 1;
          }
        }
      }
    }

    if (blew_up) {
      lr *= 0.5;
      ++anneal_count;
      w = Eigen::MatrixXd::Identity(c, c);
      prev_change = std::numeric_limits<double>::infinity();
      if (lr < 1e-10) {
        std::ostringstream msg;
        msg << "infomax diverged: learning rate exhausted at step " << step
            << " after " << anneal_count << " anneals";
        throw ConvergenceError(msg.str());
      }
      continue;
    }

    change = (w - w_before).norm();
    if (change < opt.tol) break;
    if (change > prev_change) {
      lr *= opt.anneal;
      ++anneal_count;
      if (lr < 1e-10) {
        std::ostringstream msg;
        msg << "infomax stalled: learning rate underflow at step " << step
            << " (weight change " << change << ")";
        throw ConvergenceError(msg.str());
      }
    }
    prev_change = change;
  }

  model.weights = w;
  model.kurtosis_signs = signs;
  model.training_meta.steps = std::min(step, opt.max_steps);
  model.training_meta.final_weight_change = change;

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(model.unmixing());
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw InvariantError("unmixing matrix is numerically singular");
  return model;
}

// ---------------------------------------------------------------------------
// component flagging
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& component_classes() {
  static const std::vector<std::string> classes = {
      "brain", "muscle", "eye", "heart", "line_noise", "channel_noise",
      "other"};
  return classes;
}

struct ComponentLabelTable {
  Eigen::MatrixXd probs;  // [n_components x 7] in component_classes() order
};

struct FlagThresholds {
  double heart = 0.9;
  double line_noise = 0.9;
  double muscle = 0.3;
  double eye = 0.3;
  double channel_noise = 0.3;
  double other = 0.3;
};

inline void validate(const ComponentLabelTable& table) {
  if (table.probs.cols() != 7)
    throw SchemaError("component table must have 7 class columns");
  for (Eigen::Index i = 0; i < table.probs.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < 7; ++j) {
      const double v = table.probs(i, j);
      if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError("component " + std::to_string(i) +
                              " has a probability outside [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-3)
      throw ValidationError("component " + std::to_string(i) +
                            " probabilities sum to " + fmt_double(sum));
  }
}

// Rejection is inclusive at the thresholds.
inline std::vector<int> flag_components_by_threshold(
    const ComponentLabelTable& table, const FlagThresholds& thr = {}) {
  validate(table);
  std::vector<int> rejected;
  for (Eigen::Index i = 0; i < table.probs.rows(); ++i) {
    const double muscle = table.probs(i, 1), eye = table.probs(i, 2),
                 heart = table.probs(i, 3), line = table.probs(i, 4),
                 chan = table.probs(i, 5), other = table.probs(i, 6);
    const bool reject = heart >= thr.heart || line >= thr.line_noise ||
                        muscle >= thr.muscle || eye >= thr.eye ||
                        chan >= thr.channel_noise || other >= thr.other;
    if (reject) rejected.push_back(static_cast<int>(i));
  }
  return rejected;
}

inline ComponentLabelTable load_component_labels(const std::string& csv_text,
                                                 int expected_components = -1) {
  std::istringstream in(csv_text);
  const CsvTable t = read_csv(in);
  std::vector<std::string> want = {"component"};
  for (const auto& c : component_classes()) want.push_back(c);
  if (t.header != want)
    throw SchemaError(
        "component CSV header must be "
        "component,brain,muscle,eye,heart,line_noise,channel_noise,other");
  ComponentLabelTable table;
  table.probs.resize(static_cast<Eigen::Index>(t.rows.size()), 7);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    int idx = 0;
    try {
      idx = std::stoi(t.rows[r][0]);
    } catch (const std::exception&) {
      throw SchemaError("bad component index '" + t.rows[r][0] + "'");
    }
    if (idx != static_cast<int>(r))
      throw ValidationError("component rows must be 0..n-1 in order");
    for (int j = 0; j < 7; ++j) {
      try {
        table.probs(static_cast<Eigen::Index>(r), j) =
            std::stod(t.rows[r][static_cast<std::size_t>(j + 1)]);
      } catch (const std::exception&) {
        throw ValidationError("non-numeric probability in row " +
                              std::to_string(r));
      }
    }
  }
  if (expected_components >= 0 && table.probs.rows() != expected_components)
    throw ValidationError("component count mismatch: file has " +
                          std::to_string(table.probs.rows()) + ", model has " +
                          std::to_string(expected_components));
  validate(table);
  return table;
}

inline ComponentLabelTable load_component_labels_file(
    const std::string& path, int expected_components = -1) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return load_component_labels(buf.str(), expected_components);
}

inline std::string component_labels_csv(const ComponentLabelTable& table) {
  std::vector<std::string> header = {"component"};
  for (const auto& c : component_classes()) header.push_back(c);
  CsvWriter csv(header);
  for (Eigen::Index i = 0; i < table.probs.rows(); ++i) {
    csv.cell(static_cast<int>(i));
    for (Eigen::Index j = 0; j < 7; ++j) csv.cell(table.probs(i, j));
    csv.end_row();
  }
  return csv.str();
}

// ---------------------------------------------------------------------------
// model (de)serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const UnmixingModel& m) {
  auto mat = [](const Eigen::MatrixXd& x) {
    std::vector<double> flat(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        flat[static_cast<std::size_t>(i * x.cols() + j)] = x(i, j);
    return flat;
  };
  nlohmann::json j;
  j["n_channels"] = m.sphere.rows();
  j["sphere"] = mat(m.sphere);
  j["weights"] = mat(m.weights);
  std::vector<std::string> signs;
  for (auto s : m.kurtosis_signs)
    signs.push_back(s == KurtosisSign::Super ? "super" : "sub");
  j["kurtosis_signs"] = signs;
  j["channel_labels"] = m.channel_labels;
  j["training_meta"] = {{"steps", m.training_meta.steps},
                        {"final_weight_change",
                         m.training_meta.final_weight_change},
                        {"seed", m.training_meta.seed}};
  return j;
}

inline UnmixingModel model_from_json(const nlohmann::json& j) {
  UnmixingModel m;
  const auto c = j.at("n_channels").get<Eigen::Index>();
  auto mat = [c](const nlohmann::json& arr) {
    if (arr.size() != static_cast<std::size_t>(c * c))
      throw SchemaError("matrix size mismatch in model JSON");
    Eigen::MatrixXd x(c, c);
    for (Eigen::Index i = 0; i < c; ++i)
      for (Eigen::Index jx = 0; jx < c; ++jx)
        x(i, jx) = arr[static_cast<std::size_t>(i * c + jx)].get<double>();
    return x;
  };
  m.sphere = mat(j.at("sphere"));
  m.weights = mat(j.at("weights"));
  for (const auto& s : j.at("kurtosis_signs")) {
    const std::string v = s.get<std::string>();
    if (v != "super" && v != "sub")
      throw SchemaError("kurtosis sign must be 'super' or 'sub'");
    m.kurtosis_signs.push_back(v == "super" ? KurtosisSign::Super
                                            : KurtosisSign::Sub);
  }
  m.channel_labels =
      j.at("channel_labels").get<std::vector<std::string>>();
  const auto& tm = j.at("training_meta");
  m.training_meta.steps = tm.at("steps").get<int>();
  m.training_meta.final_weight_change =
      tm.at("final_weight_change").get<double>();
  m.training_meta.seed = tm.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace mobipipe
