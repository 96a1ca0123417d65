#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paraug/csv.hpp"
#include "paraug/matrix.hpp"

namespace paraug {

using BinaryMatrix = Matrix<std::uint8_t>;

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct AttributeMetrics {
  double precision = 0, recall = 0, f1 = 0, label_accuracy = 0;
  // tp / (tp + fp + fn), the per-attribute Acc column of PAR reports.
  double accuracy = 0;
};

struct ExampleMetrics {
  double acc = 0, prec = 0, rec = 0, f1 = 0;
  std::size_t evaluated = 0;  // images with non-empty union
};

namespace detail {
inline double pct(double num, double den) { return den > 0 ? 100.0 * num / den : 0.0; }
inline double harmonic(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

template <typename T>
void require_binary(const Matrix<T>& m, const char* what) {
  for (auto v : m.data())
    if (v != 0 && v != 1) throw ValidationError(std::string(what) + ": entries must be 0 or 1");
}
}  // namespace detail

inline std::vector<ConfusionCounts> confusion(const BinaryMatrix& preds, const BinaryMatrix& truth) {
  require_same_shape(preds, truth, "confusion");
  detail::require_binary(preds, "confusion preds");
  detail::require_binary(truth, "confusion truth");
  std::vector<ConfusionCounts> out(truth.cols());
  for (std::size_t i = 0; i < truth.rows(); ++i) {
    for (std::size_t m = 0; m < truth.cols(); ++m) {
      const bool p = preds(i, m), t = truth(i, m);
      auto& c = out[m];
      if (p && t) ++c.tp;
      else if (p) ++c.fp;
      else if (t) ++c.fn;
      else ++c.tn;
    }
  }
  return out;
}

inline AttributeMetrics attribute_metrics(const ConfusionCounts& c) {
  AttributeMetrics a;
  const double tp = double(c.tp), fp = double(c.fp), fn = double(c.fn), tn = double(c.tn);
  a.precision = detail::pct(tp, tp + fp);
  a.recall = detail::pct(tp, tp + fn);
  a.f1 = detail::harmonic(a.precision, a.recall);
  a.label_accuracy = 0.5 * (detail::pct(tp, tp + fn) + detail::pct(tn, tn + fp));
  a.accuracy = detail::pct(tp, tp + fp + fn);
  return a;
}

inline std::vector<AttributeMetrics> attribute_metrics(const std::vector<ConfusionCounts>& cs) {
  std::vector<AttributeMetrics> out;
  out.reserve(cs.size());
  for (const auto& c : cs) out.push_back(attribute_metrics(c));
  return out;
}

inline double mean_label_accuracy(const std::vector<AttributeMetrics>& ms) {
  if (ms.empty()) return 0.0;
  double s = 0;
  for (const auto& m : ms) s += m.label_accuracy;
  return s / double(ms.size());
}

inline ExampleMetrics example_metrics(const BinaryMatrix& preds, const BinaryMatrix& truth) {
  require_same_shape(preds, truth, "example_metrics");
  detail::require_binary(preds, "example_metrics preds");
  detail::require_binary(truth, "example_metrics truth");
  ExampleMetrics e;
  for (std::size_t i = 0; i < truth.rows(); ++i) {
    std::size_t inter = 0, uni = 0, np = 0, ng = 0;
    for (std::size_t m = 0; m < truth.cols(); ++m) {
      const bool p = preds(i, m), g = truth(i, m);
      inter += p && g;
      uni += p || g;
      np += p;
      ng += g;
    }
    if (uni == 0) continue;
    const double prec = detail::pct(double(inter), double(np));
    const double rec = detail::pct(double(inter), double(ng));
    e.acc += detail::pct(double(inter), double(uni));
    e.prec += prec;
    e.rec += rec;
    e.f1 += detail::harmonic(prec, rec);
    ++e.evaluated;
  }
  if (e.evaluated) {
    const double n = double(e.evaluated);
    e.acc /= n;
    e.prec /= n;
    e.rec /= n;
    e.f1 /= n;
  }
  return e;
}

inline BinaryMatrix binarize(const Matrix<double>& probs, double threshold = 0.5) {
  BinaryMatrix out(probs.rows(), probs.cols());
  for (std::size_t k = 0; k < probs.data().size(); ++k) out.data()[k] = probs.data()[k] >= threshold ? 1 : 0;
  return out;
}

// One row of a metrics report, percent scale.
struct MetricsRow {
  std::string attribute;
  double ma = 0, acc = 0, prec = 0, rec = 0, f1 = 0;
  std::size_t num_images = 0;
};

inline std::vector<MetricsRow> metrics_report(const std::vector<std::string>& names, const std::vector<ConfusionCounts>& cs) {
  if (names.size() != cs.size()) throw ValidationError("metrics_report: names/counts length mismatch");
  std::vector<MetricsRow> rows;
  rows.reserve(cs.size());
  for (std::size_t m = 0; m < cs.size(); ++m) {
    const auto a = attribute_metrics(cs[m]);
    rows.push_back({names[m], a.label_accuracy, a.accuracy, a.precision, a.recall, a.f1, cs[m].tp + cs[m].fn});
  }
  return rows;
}

inline std::string format_metrics_report(const std::vector<MetricsRow>& rows) {
  std::string out = "attribute,ma,acc,prec,rec,f1,num_images\n";
  for (const auto& r : rows) {
    out += csv::escape(r.attribute);
    for (double v : {r.ma, r.acc, r.prec, r.rec, r.f1}) out += "," + csv::fixed2(v);
    out += "," + std::to_string(r.num_images) + "\n";
  }
  return out;
}

inline void save_metrics_report(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  csv::write_atomic(path, format_metrics_report(rows));
}

inline std::vector<MetricsRow> load_metrics_report(const std::filesystem::path& path) {
  auto lines = csv::read_lines(path);
  if (lines.empty()) throw ParseError("empty metrics report " + path.string());
  csv::Header h(csv::split(lines[0]));
  const auto ia = h.index("attribute"), ima = h.index("ma"), iacc = h.index("acc"), ip = h.index("prec"),
             ir = h.index("rec"), if1 = h.index("f1"), in = h.index("num_images");
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv::split(lines[i]);
    if (f.size() != h.size()) throw ParseError("metrics report line " + std::to_string(i + 1) + ": wrong field count");
    MetricsRow r;
    r.attribute = f[ia];
    r.ma = csv::parse_double(f[ima], "ma");
    r.acc = csv::parse_double(f[iacc], "acc");
    r.prec = csv::parse_double(f[ip], "prec");
    r.rec = csv::parse_double(f[ir], "rec");
    r.f1 = csv::parse_double(f[if1], "f1");
    r.num_images = static_cast<std::size_t>(csv::parse_count(f[in], "num_images"));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace paraug
