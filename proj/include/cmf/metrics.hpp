#pragma once

#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmf/error.hpp"

namespace cmf {

struct EvaluationReport {
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::size_t> support;
  std::vector<double> precision, recall, f1;
  double weighted_f1 = 0.0;
  std::size_t n_samples = 0;
  std::vector<std::string> label_names;

  nlohmann::json to_json() const {
    return nlohmann::json{{"confusion", confusion},
                          {"support", support},
                          {"precision", precision},
                          {"recall", recall},
                          {"f1", f1},
                          {"weighted_f1", weighted_f1},
                          {"n_samples", n_samples},
                          {"labels", label_names}};
  }

  // Aligned text table: one column per class plus the weighted average.
  std::string to_table() const {
    const std::size_t c_count = f1.size();
    std::vector<std::string> cols;
    for (std::size_t c = 0; c < c_count; ++c)
      cols.push_back(c < label_names.size() ? label_names[c]
                                            : "class" + std::to_string(c));
    cols.push_back("w-average F1");

    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c)
      width[c] = std::max<std::size_t>(cols[c].size(), 9);

    auto fmt = [](double v) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(4) << v;
      return os.str();
    };

    std::ostringstream out;
    out << std::left << std::setw(11) << "";
    for (std::size_t c = 0; c < cols.size(); ++c)
      out << std::right << std::setw(static_cast<int>(width[c]) + 2) << cols[c];
    out << "\n";

    auto row = [&](const std::string& name, auto value_of, bool with_avg,
                   const std::string& avg) {
      out << std::left << std::setw(11) << name;
      for (std::size_t c = 0; c < c_count; ++c)
        out << std::right << std::setw(static_cast<int>(width[c]) + 2)
            << value_of(c);
      out << std::right << std::setw(static_cast<int>(width.back()) + 2)
          << (with_avg ? avg : "-");
      out << "\n";
    };

    row("support", [&](std::size_t c) { return std::to_string(support[c]); },
        true, std::to_string(n_samples));
    row("precision", [&](std::size_t c) { return fmt(precision[c]); }, false, "");
    row("recall", [&](std::size_t c) { return fmt(recall[c]); }, false, "");
    row("F1", [&](std::size_t c) { return fmt(f1[c]); }, true, fmt(weighted_f1));
    return out.str();
  }
};

// Per-class F1 with support-weighted average. Classes with no true and no
// predicted instances score precision = recall = F1 = 0.
inline EvaluationReport weighted_f1_report(
    const std::vector<int>& predictions, const std::vector<int>& labels,
    std::size_t n_classes, std::vector<std::string> label_names = {}) {
  if (predictions.size() != labels.size())
    throw ShapeError("weighted_f1: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(labels.size()) +
                     " labels");
  if (n_classes < 2) throw ConfigError("weighted_f1: n_classes must be >= 2");

  EvaluationReport rep;
  rep.label_names = std::move(label_names);
  rep.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  rep.n_samples = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
      throw DataError("weighted_f1: label " + std::to_string(y) +
                      " outside [0, " + std::to_string(n_classes) +
                      ") at position " + std::to_string(i));
    if (p < 0 || static_cast<std::size_t>(p) >= n_classes)
      throw DataError("weighted_f1: prediction " + std::to_string(p) +
                      " outside [0, " + std::to_string(n_classes) +
                      ") at position " + std::to_string(i));
    rep.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)]++;
  }

  rep.support.assign(n_classes, 0);
  rep.precision.assign(n_classes, 0.0);
  rep.recall.assign(n_classes, 0.0);
  rep.f1.assign(n_classes, 0.0);
  double weighted_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = rep.confusion[c][c], pred_c = 0, true_c = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      pred_c += rep.confusion[k][c];
      true_c += rep.confusion[c][k];
    }
    rep.support[c] = true_c;
    rep.precision[c] = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    rep.recall[c] = true_c ? static_cast<double>(tp) / static_cast<double>(true_c) : 0.0;
    const double pr = rep.precision[c] + rep.recall[c];
    rep.f1[c] = pr > 0.0 ? 2.0 * rep.precision[c] * rep.recall[c] / pr : 0.0;
    weighted_sum += static_cast<double>(true_c) * rep.f1[c];
  }
  rep.weighted_f1 =
      rep.n_samples ? weighted_sum / static_cast<double>(rep.n_samples) : 0.0;
  return rep;
}

inline double weighted_f1(const std::vector<int>& predictions,
                          const std::vector<int>& labels,
                          std::size_t n_classes) {
  return weighted_f1_report(predictions, labels, n_classes).weighted_f1;
}

}  // namespace cmf
