#include "mfuse/metrics.hpp"

#include "mfuse/errors.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace mfuse {

MetricsReport evaluate(const DisparityMap& pred, const DisparityMap& gt, const std::vector<double>& thresholds,
                       InvalidPolicy policy) {
    if (pred.width() != gt.width() || pred.height() != gt.height())
        throw InputError("prediction and ground truth differ in size");
    MetricsReport r;
    std::vector<std::size_t> over(thresholds.size(), 0);
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t joint = 0;
    const auto p = pred.data();
    const auto g = gt.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!DisparityMap::is_valid(g[i])) continue;
        double e;
        if (DisparityMap::is_valid(p[i])) {
            e = std::fabs(static_cast<double>(p[i]) - g[i]);
            ++joint;
        } else {
            if (policy == InvalidPolicy::MaskOut) continue;
            e = std::numeric_limits<double>::infinity();
            ++r.invalid;
        }
        ++r.pixels;
        sum += e;
        sum_sq += e * e;
        for (std::size_t k = 0; k < thresholds.size(); ++k)
            if (e > thresholds[k]) ++over[k];
    }
    if (joint == 0) throw InputError("no pixel is valid in both prediction and ground truth");
    const double n = static_cast<double>(r.pixels);
    r.avg_err = sum / n;
    r.rms = std::sqrt(sum_sq / n);
    for (std::size_t k = 0; k < thresholds.size(); ++k) r.bad[thresholds[k]] = 100.0 * over[k] / n;
    return r;
}

DatasetReport evaluate_dataset(const std::vector<ScenePair>& pairs, const std::vector<double>& thresholds,
                               InvalidPolicy policy) {
    if (pairs.empty()) throw InputError("evaluate_dataset: no scenes");
    DatasetReport out;
    for (const auto& sp : pairs) {
        if (!sp.pred || !sp.gt) throw InputError("scene " + sp.scene + ": missing prediction or ground truth");
        try {
            out.scenes.push_back({sp.scene, evaluate(*sp.pred, *sp.gt, thresholds, policy)});
        } catch (const Error& e) {
            throw InputError("scene " + sp.scene + ": " + e.what());
        }
    }
    const double n = static_cast<double>(out.scenes.size());
    for (const auto& s : out.scenes) {
        out.mean.rms += s.report.rms / n;
        out.mean.avg_err += s.report.avg_err / n;
        out.mean.pixels += s.report.pixels;
        out.mean.invalid += s.report.invalid;
        for (const auto& [t, v] : s.report.bad) out.mean.bad[t] += v / n;
    }
    return out;
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string threshold_label(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "Bad%g", t);
    return buf;
}

void append_row(std::string& out, const std::string& name, const MetricsReport& r) {
    out += name + "\t" + num(r.rms) + "\t" + num(r.avg_err);
    for (const auto& [t, v] : r.bad) out += "\t" + num(v);
    out += "\n";
}

} // namespace

std::string format_table(const DatasetReport& report) {
    std::string out = "scene\tRMS\tAvgErr";
    for (const auto& [t, v] : report.mean.bad) out += "\t" + threshold_label(t);
    out += "\n";
    for (const auto& s : report.scenes) append_row(out, s.scene, s.report);
    append_row(out, "mean", report.mean);
    return out;
}

} // namespace mfuse
