#pragma once

#include "orthoseg/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace orthoseg {

/// Pixel-level confusion tallies. Additive, so partial counts from tiles or
/// threads merge with plain +.
struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) {
        return a += b;
    }
};

/// Compares two binary grids over the valid pixels only.
ConfusionCounts confusion(const Grid& pred, const Grid& truth, const BoolGrid& valid);

/// 2tp / (2tp + fp + fn); 0 when the denominator vanishes.
double f1(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

/// One line of a results table: a grouping key (band selection), a method
/// name, and one score per fold.
struct ReportRow {
    std::string group;
    std::string method;
    std::vector<std::string> fold_names;
    std::vector<double> scores;
};

struct ReportTable {
    std::string csv;
    std::string markdown;
};

/// Renders rows as CSV and Markdown with per-fold scores plus mean and
/// population standard deviation, all to two decimals.
ReportTable make_report(const std::vector<ReportRow>& rows);

}  // namespace orthoseg
