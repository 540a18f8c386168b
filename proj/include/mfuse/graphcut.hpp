#pragma once

#include "mfuse/costvol.hpp"
#include "mfuse/imagery.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mfuse {

inline constexpr int kOccluded = -1;

struct GcParams {
    double k_occlusion = 10.0;
    double lambda1 = 9.0;  // weight for similar-intensity neighbors
    double lambda2 = 3.0;
    double theta = 8.0;    // intensity similarity threshold
    int d_cutoff = 5;
    int upscale = 2;
    int max_sweeps = 8;
    std::uint64_t rng_seed = 0;
    /// Re-derive neighbor weights between sweeps from all views at the
    /// current correspondences. Energy changes between sweeps, so monotonicity
    /// is only guaranteed within a sweep.
    bool multiview_smoothness = false;

    void validate() const;
};

/// One label per pixel: a disparity in the volume's range or kOccluded.
class Labeling {
public:
    Labeling() = default;
    Labeling(int width, int height, int fill = kOccluded)
        : width_(width), height_(height), labels_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return labels_.size(); }

    int& at(int x, int y) noexcept { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
    int at(int x, int y) const noexcept { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
    int& operator[](std::size_t i) noexcept { return labels_[i]; }
    int operator[](std::size_t i) const noexcept { return labels_[i]; }

    friend bool operator==(const Labeling&, const Labeling&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<int> labels_;
};

/// Smoothness weight per 4-neighbor edge: right[i] couples pixel i with its
/// right neighbor, down[i] with the pixel below.
struct PairWeights {
    int width = 0;
    int height = 0;
    std::vector<double> right;
    std::vector<double> down;
};

/// lambda1 where |center(p1) - center(p2)| < theta, else lambda2.
PairWeights center_pair_weights(const Image& center, const GcParams& p);

/// Full multi-image color test at the correspondences implied by `lab`:
/// the max of the center difference and each view's difference between the
/// two shifted pixels (views where either pixel is occluded or out of bounds
/// are skipped).
PairWeights multiview_pair_weights(const MultiscopicSet& set, const Labeling& lab, const GcParams& p);

struct EnergyTerms {
    double data = 0.0;
    double occlusion = 0.0;
    double smooth = 0.0;
    double total() const noexcept { return data + occlusion + smooth; }
};

EnergyTerms gc_energy_terms(const Labeling& lab, const CostVolume& c_gc, const PairWeights& w, const GcParams& p);
/// data + K * #occluded + truncated-linear smoothness; the uniqueness term is
/// zero because each center pixel carries exactly one label.
double gc_energy(const Labeling& lab, const CostVolume& c_gc, const PairWeights& w, const GcParams& p);
double gc_energy(const Labeling& lab, const CostVolume& c_gc, const Image& center, const GcParams& p);

/// Optimal keep-or-switch-to-alpha move, solved by one min cut. Ties keep
/// the current label. Never returns a labeling of higher energy.
Labeling expansion_move(const Labeling& lab, int alpha, const CostVolume& c_gc, const PairWeights& w,
                        const GcParams& p);
Labeling expansion_move(const Labeling& lab, int alpha, const CostVolume& c_gc, const Image& center,
                        const GcParams& p);

/// Scan-order greedy pass switching a pixel to kOccluded when that strictly
/// lowers the energy. Returns true if any pixel changed.
bool occlusion_pass(Labeling& lab, const CostVolume& c_gc, const PairWeights& w, const GcParams& p);

/// Labeling from integer WTA; all-sentinel pixels start occluded.
Labeling wta_labeling(const CostVolume& c_gc);

enum class GcStep { Expansion, Occlusion };

struct GcTrace {
    double initial_energy = 0.0;
    std::vector<GcStep> steps;
    std::vector<double> energies;  // energy after each step
    int sweeps = 0;
    bool converged = false;
};

struct GcSolution {
    Labeling labeling;
    double energy = 0.0;
    GcTrace trace;
};

/// Called between sweeps to refresh neighbor weights (multiview mode).
using WeightUpdate = std::function<PairWeights(const Labeling&)>;

/// Alpha-expansion sweeps in seeded shuffled label order, each followed by
/// an occlusion pass, until a sweep changes nothing or max_sweeps is reached.
GcSolution solve_gc(const CostVolume& c_gc, const PairWeights& weights, const GcParams& p,
                    const WeightUpdate& update = {});

struct GcRun {
    DisparityMap disparity;
    GcSolution solution;  // in the upscaled domain
};

/// Full pipeline: upscale, per-view volumes, heuristic fusion, WTA init,
/// expansion sweeps, decimation back to the input grid. Occluded -> invalid.
GcRun multiscopic_gc_run(const MultiscopicSet& set, const GcParams& p, Matcher matcher, const BlockMatchParams& bm);
DisparityMap multiscopic_gc(const MultiscopicSet& set, const GcParams& p, Matcher matcher,
                            const BlockMatchParams& bm);

} // namespace mfuse
