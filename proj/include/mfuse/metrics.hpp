#pragma once

#include "mfuse/imagery.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace mfuse {

enum class InvalidPolicy {
    /// Pixels valid in the ground truth but invalid in the prediction count
    /// with infinite error.
    Penalize,
    /// Such pixels are excluded from every statistic.
    MaskOut,
};

struct MetricsReport {
    double rms = 0.0;
    double avg_err = 0.0;
    std::map<double, double> bad;  // threshold -> percentage with error > threshold
    std::size_t pixels = 0;        // pixels evaluated
    std::size_t invalid = 0;       // of which the prediction was invalid
};

inline const std::vector<double> kDefaultThresholds = {0.5, 1.0, 2.0};

/// Throws InputError on size mismatch or when no pixel can be evaluated.
MetricsReport evaluate(const DisparityMap& pred, const DisparityMap& gt,
                       const std::vector<double>& thresholds = kDefaultThresholds,
                       InvalidPolicy policy = InvalidPolicy::Penalize);

struct SceneResult {
    std::string scene;
    MetricsReport report;
};

struct DatasetReport {
    std::vector<SceneResult> scenes;
    MetricsReport mean;  // unweighted mean over scenes
};

struct ScenePair {
    std::string scene;
    const DisparityMap* pred;
    const DisparityMap* gt;
};

/// Errors from a scene are rethrown prefixed with the scene id.
DatasetReport evaluate_dataset(const std::vector<ScenePair>& pairs,
                               const std::vector<double>& thresholds = kDefaultThresholds,
                               InvalidPolicy policy = InvalidPolicy::Penalize);

/// Tab-separated: scene, RMS, AvgErr, Bad<t>... then a "mean" row.
std::string format_table(const DatasetReport& report);

} // namespace mfuse
