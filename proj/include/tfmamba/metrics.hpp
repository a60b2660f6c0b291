// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "tfmamba/errors.hpp"

namespace tfmamba {

/// K x K counts; rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {}

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw ShapeMismatch("confusion matrix must be square");
      for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j];
    }
    return m;
  }

  std::size_t classes() const noexcept { return k_; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_.at(truth * k_ + pred); }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }

  void add(std::size_t truth, std::size_t pred) { ++at(truth, pred); }

  std::uint64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct MetricsReport {
  ConfusionMatrix confusion;
  double wa = 0.0;   ///< overall accuracy
  double ua = 0.0;   ///< mean per-class recall over classes with support
  double wf1 = 0.0;  ///< support-weighted F1

  bool operator==(const MetricsReport&) const = default;
};

inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  const std::uint64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("compute_metrics: confusion matrix is all zero");
  MetricsReport r{cm, 0.0, 0.0, 0.0};
  std::uint64_t correct = 0;
  double recall_sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < k; ++j) {
      support += cm.at(c, j);
      predicted += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    correct += tp;
    if (support == 0) continue;
    const double recall = static_cast<double>(tp) / static_cast<double>(support);
    const double precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    recall_sum += recall;
    ++supported;
    const double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    r.wf1 += static_cast<double>(support) / static_cast<double>(total) * f1;
  }
  r.wa = static_cast<double>(correct) / static_cast<double>(total);
  r.ua = recall_sum / static_cast<double>(supported);
  return r;
}

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  ///< population standard deviation
};

inline MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.stddev += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(xs.size()));
  return s;
}

}  // namespace tfmamba
