#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "paraug/csv.hpp"
#include "paraug/dataset.hpp"
#include "paraug/matrix.hpp"

namespace paraug {

inline constexpr double kProbEpsilon = 1e-7;

inline double label_weight(Label y, double weight_augmented) {
  if (y == -1) return 0.0;
  if (y == 3) return weight_augmented;
  return 1.0;
}

struct WeightedTargets {
  Matrix<Label> targets;
  double weight_augmented = 0.5;

  Matrix<double> weights() const {
    Matrix<double> w(targets.rows(), targets.cols());
    for (std::size_t k = 0; k < w.data().size(); ++k) w.data()[k] = label_weight(targets.data()[k], weight_augmented);
    return w;
  }
};

struct LossValue {
  std::vector<double> per_image;
  double mean = 0;
};

namespace detail {
inline void check_loss_inputs(const WeightedTargets& t, const Matrix<double>& p) {
  require_same_shape(t.targets, p, "bce_augmented");
  for (double v : p.data())
    if (!std::isfinite(v)) throw ValidationError("bce_augmented: non-finite probability");
  for (Label y : t.targets.data())
    if (!in_alphabet(y)) throw ValidationError("bce_augmented: label outside alphabet");
}
inline double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }
}  // namespace detail

inline LossValue bce_augmented(const WeightedTargets& t, const Matrix<double>& p) {
  detail::check_loss_inputs(t, p);
  const std::size_t N = p.rows(), M = p.cols();
  LossValue out;
  out.per_image.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0;
    for (std::size_t m = 0; m < M; ++m) {
      const Label y = t.targets(i, m);
      const double w = label_weight(y, t.weight_augmented);
      if (w == 0) continue;
      const double q = detail::clamp_prob(p(i, m));
      s += w * (y != 0 ? std::log(q) : std::log(1.0 - q));
    }
    out.per_image[i] = M ? -s / double(M) : 0.0;
  }
  for (double v : out.per_image) out.mean += v;
  if (N) out.mean /= double(N);
  return out;
}

// dL_i/dp_{i,m}; inside the clamp region the derivative of the clamp is zero.
inline Matrix<double> bce_augmented_grad(const WeightedTargets& t, const Matrix<double>& p) {
  detail::check_loss_inputs(t, p);
  const std::size_t N = p.rows(), M = p.cols();
  Matrix<double> g(N, M, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t m = 0; m < M; ++m) {
      const Label y = t.targets(i, m);
      const double w = label_weight(y, t.weight_augmented);
      const double raw = p(i, m);
      if (w == 0 || raw < kProbEpsilon || raw > 1.0 - kProbEpsilon) continue;
      g(i, m) = y != 0 ? -w / (double(M) * raw) : w / (double(M) * (1.0 - raw));
    }
  return g;
}

inline int export_target(Label y) { return y >= 1 ? 1 : 0; }

struct WeightRow {
  std::string id;
  std::vector<int> targets;
  std::vector<double> weights;
};

inline std::vector<WeightRow> weight_rows(const DatasetManifest& m, double weight_augmented) {
  if (!(weight_augmented >= 0 && weight_augmented <= 1)) throw ValidationError("weight_augmented must be in [0,1]");
  std::vector<WeightRow> rows;
  for (const auto& r : m.records) {
    if (r.split != Split::train) continue;
    WeightRow w{r.id, {}, {}};
    for (Label y : r.labels) {
      w.targets.push_back(export_target(y));
      w.weights.push_back(label_weight(y, weight_augmented));
    }
    rows.push_back(std::move(w));
  }
  return rows;
}

inline std::string format_weight_matrix(const AttributeSchema& schema, const std::vector<WeightRow>& rows) {
  std::vector<std::string> head{"id"};
  for (const auto& n : schema.names) head.push_back("t:" + n);
  for (const auto& n : schema.names) head.push_back("w:" + n);
  std::string out = csv::join(head) + "\n";
  for (const auto& r : rows) {
    out += csv::escape(r.id);
    for (int v : r.targets) out += "," + std::to_string(v);
    for (double v : r.weights) out += "," + csv::shortest(v);
    out += "\n";
  }
  return out;
}

inline void emit_weight_matrix(const DatasetManifest& m, double weight_augmented, const std::filesystem::path& path) {
  csv::write_atomic(path, format_weight_matrix(m.schema, weight_rows(m, weight_augmented)));
}

}  // namespace paraug
