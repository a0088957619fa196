#pragma once

// Change-class F1 / IoU and overall accuracy from confusion counts. Dataset
// scores are micro-averaged: counts are summed first, ratios taken once.

#include <cstdint>
#include <string>

#include "gradformer/mask.hpp"

namespace gradformer {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Throws DimensionError on shape mismatch, ContractError on non-binary values.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// Each returns 0 when its denominator is 0.
double f1(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
// Percentage in [0, 100].
double oa(const ConfusionCounts& c);

struct MetricsReport {
  double f1 = 0.0;
  double iou = 0.0;
  double oa = 0.0;
  ConfusionCounts counts;

  static MetricsReport from_counts(const ConfusionCounts& c);
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// "f1=...\niou=...\noa=...\ntp=...\nfp=...\nfn=...\ntn=...\n"; reals are
// written with round-trip precision.
std::string format_report(const MetricsReport& report);
// Throws FormatError on missing, duplicate or malformed keys.
MetricsReport parse_report(const std::string& text);

}  // namespace gradformer
