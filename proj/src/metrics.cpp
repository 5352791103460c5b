#include "orthoseg/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace orthoseg {

ConfusionCounts confusion(const Grid& pred, const Grid& truth, const BoolGrid& valid) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols() ||
        pred.rows() != valid.rows() || pred.cols() != valid.cols())
        throw Error("confusion requires identically shaped grids");
    ConfusionCounts c;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        for (Eigen::Index j = 0; j < pred.cols(); ++j) {
            if (!valid(i, j)) continue;
            const bool p = pred(i, j) > 0.5f;
            const bool t = truth(i, j) > 0.5f;
            if (p && t)
                ++c.tp;
            else if (p && !t)
                ++c.fp;
            else if (!p && t)
                ++c.fn;
            else
                ++c.tn;
        }
    return c;
}

double f1(const ConfusionCounts& c) {
    const double den = 2.0 * c.tp + c.fp + c.fn;
    return den == 0.0 ? 0.0 : 2.0 * c.tp / den;
}

double precision(const ConfusionCounts& c) {
    const double den = double(c.tp) + double(c.fp);
    return den == 0.0 ? 0.0 : c.tp / den;
}

double recall(const ConfusionCounts& c) {
    const double den = double(c.tp) + double(c.fn);
    return den == 0.0 ? 0.0 : c.tp / den;
}

namespace {

std::string two_dp(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

ReportTable make_report(const std::vector<ReportRow>& rows) {
    if (rows.empty()) throw Error("cannot build a report from zero rows");
    const auto& folds = rows.front().fold_names;
    for (const auto& r : rows) {
        if (r.fold_names != folds)
            throw Error("report rows disagree on fold columns");
        if (r.scores.size() != folds.size())
            throw Error("report row '" + r.group + "/" + r.method +
                        "' has the wrong number of scores");
    }

    ReportTable out;
    out.csv = "bands,method";
    out.markdown = "| Bands | Method |";
    for (const auto& f : folds) {
        out.csv += "," + f;
        out.markdown += " " + f + " |";
    }
    out.csv += ",mean,std\n";
    out.markdown += " Mean | Std |\n|---|---|";
    for (std::size_t i = 0; i < folds.size() + 2; ++i) out.markdown += "---|";
    out.markdown += "\n";

    for (const auto& r : rows) {
        double mean = 0.0;
        for (double s : r.scores) mean += s;
        mean /= static_cast<double>(r.scores.size());
        double var = 0.0;
        for (double s : r.scores) var += (s - mean) * (s - mean);
        var /= static_cast<double>(r.scores.size());  // population convention
        const double sd = std::sqrt(var);

        out.csv += r.group + "," + r.method;
        out.markdown += "| " + r.group + " | " + r.method + " |";
        for (double s : r.scores) {
            out.csv += "," + two_dp(s);
            out.markdown += " " + two_dp(s) + " |";
        }
        out.csv += "," + two_dp(mean) + "," + two_dp(sd) + "\n";
        out.markdown += " " + two_dp(mean) + " | " + two_dp(sd) + " |\n";
    }
    return out;
}

}  // namespace orthoseg
