#include "mfuse/graphcut.hpp"

#include "mfuse/errors.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>

namespace mfuse {

void GcParams::validate() const {
    if (!(lambda1 >= lambda2) || !(lambda2 >= 0.0)) throw InputError("graph cuts needs lambda1 >= lambda2 >= 0");
    if (!(theta > 0.0)) throw InputError("graph cuts needs theta > 0");
    if (d_cutoff < 1) throw InputError("graph cuts needs d_cutoff >= 1");
    if (upscale != 1 && upscale != 2 && upscale != 4) throw InputError("upscale must be 1, 2 or 4");
    if (max_sweeps < 1) throw InputError("max_sweeps must be >= 1");
    if (!std::isfinite(k_occlusion)) throw InputError("occlusion penalty must be finite");
}

namespace {

double weight_for(double diff, const GcParams& p) { return diff < p.theta ? p.lambda1 : p.lambda2; }

void check_shapes(const Labeling& lab, const CostVolume& c_gc, const PairWeights& w) {
    if (lab.width() != c_gc.width() || lab.height() != c_gc.height() || w.width != c_gc.width() ||
        w.height != c_gc.height())
        throw InputError("labeling, cost volume and pair weights differ in size");
}

struct Model {
    const CostVolume& c;
    const PairWeights& w;
    const GcParams& p;

    // Unary cost of label l at pixel i = (x, y).
    double unary(int l, int x, int y) const { return l == kOccluded ? p.k_occlusion : c.at(l, y, x); }

    double pairwise(double weight, int a, int b) const {
        if (a == kOccluded || b == kOccluded || a == b) return 0.0;
        return weight * std::min(std::abs(a - b), p.d_cutoff);
    }
};

} // namespace

PairWeights center_pair_weights(const Image& center, const GcParams& p) {
    const int w = center.width();
    const int h = center.height();
    PairWeights out{w, h, std::vector<double>(center.size(), 0.0), std::vector<double>(center.size(), 0.0)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (x + 1 < w) out.right[i] = weight_for(std::fabs(center.at(x, y) - center.at(x + 1, y)), p);
            if (y + 1 < h) out.down[i] = weight_for(std::fabs(center.at(x, y) - center.at(x, y + 1)), p);
        }
    }
    return out;
}

PairWeights multiview_pair_weights(const MultiscopicSet& set, const Labeling& lab, const GcParams& p) {
    const Image& center = set.center();
    const int w = center.width();
    const int h = center.height();
    if (lab.width() != w || lab.height() != h) throw InputError("labeling does not match the image set");
    PairWeights out{w, h, std::vector<double>(center.size(), 0.0), std::vector<double>(center.size(), 0.0)};
    auto edge = [&](int x1, int y1, int x2, int y2) {
        double diff = std::fabs(center.at(x1, y1) - center.at(x2, y2));
        const int d1 = lab.at(x1, y1);
        const int d2 = lab.at(x2, y2);
        if (d1 != kOccluded && d2 != kOccluded) {
            for (const auto& view : set.surround()) {
                const int dx = direction_dx(view.direction);
                const int dy = direction_dy(view.direction);
                const int qx1 = x1 + dx * d1, qy1 = y1 + dy * d1;
                const int qx2 = x2 + dx * d2, qy2 = y2 + dy * d2;
                if (view.image.contains(qx1, qy1) && view.image.contains(qx2, qy2))
                    diff = std::max(diff, static_cast<double>(std::fabs(view.image.at(qx1, qy1) - view.image.at(qx2, qy2))));
            }
        }
        return weight_for(diff, p);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (x + 1 < w) out.right[i] = edge(x, y, x + 1, y);
            if (y + 1 < h) out.down[i] = edge(x, y, x, y + 1);
        }
    }
    return out;
}

EnergyTerms gc_energy_terms(const Labeling& lab, const CostVolume& c_gc, const PairWeights& w, const GcParams& p) {
    check_shapes(lab, c_gc, w);
    const Model m{c_gc, w, p};
    EnergyTerms e;
    const int width = lab.width();
    const int height = lab.height();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const int l = lab[i];
            if (l == kOccluded) {
                e.occlusion += p.k_occlusion;
            } else {
                if (l < c_gc.d_min() || l > c_gc.d_max()) throw InputError("label outside the cost volume range");
                e.data += c_gc.at(l, y, x);
            }
            if (x + 1 < width) e.smooth += m.pairwise(w.right[i], l, lab[i + 1]);
            if (y + 1 < height) e.smooth += m.pairwise(w.down[i], l, lab[i + width]);
        }
    }
    return e;
}

double gc_energy(const Labeling& lab, const CostVolume& c_gc, const PairWeights& w, const GcParams& p) {
    return gc_energy_terms(lab, c_gc, w, p).total();
}

double gc_energy(const Labeling& lab, const CostVolume& c_gc, const Image& center, const GcParams& p) {
    return gc_energy(lab, c_gc, center_pair_weights(center, p), p);
}

Labeling expansion_move(const Labeling& lab, int alpha, const CostVolume& c_gc, const PairWeights& w,
                        const GcParams& p) {
    check_shapes(lab, c_gc, w);
    if (alpha < c_gc.d_min() || alpha > c_gc.d_max()) throw InputError("alpha outside the cost volume range");
    const Model m{c_gc, w, p};
    const int width = lab.width();
    const int height = lab.height();
    const std::size_t n = lab.size();

    // Binary variable x_i = 1 means "switch to alpha"; pixels already at alpha
    // have no variable. x_i = 1 <=> node i on the source side of the cut.
    std::vector<int> var(n, -1);
    int nvars = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (lab[i] != alpha) var[i] = nvars++;
    if (nvars == 0) return lab;

    std::vector<double> cost0(nvars, 0.0);  // paid when x = 0 (keep)
    std::vector<double> cost1(nvars, 0.0);  // paid when x = 1 (switch)
    for (std::size_t i = 0; i < n; ++i) {
        if (var[i] < 0) continue;
        const int x = static_cast<int>(i % width);
        const int y = static_cast<int>(i / width);
        cost0[var[i]] += m.unary(lab[i], x, y);
        cost1[var[i]] += m.unary(alpha, x, y);
    }

    FlowGraph g(nvars);
    g.reserve(static_cast<std::size_t>(nvars), static_cast<std::size_t>(nvars) * 8);
    auto add_linear = [&](int v, double coef) {
        if (coef > 0) cost1[v] += coef;
        else cost0[v] -= coef;
    };
    auto pair = [&](std::size_t i, std::size_t j, double weight) {
        const int li = lab[i];
        const int lj = lab[j];
        const int vi = var[i];
        const int vj = var[j];
        if (vi < 0 && vj < 0) return;
        if (vi >= 0 && vj < 0) {  // j fixed at alpha
            cost0[vi] += m.pairwise(weight, li, alpha);
            return;
        }
        if (vi < 0) {
            cost0[vj] += m.pairwise(weight, alpha, lj);
            return;
        }
        const double a = m.pairwise(weight, li, lj);     // keep, keep
        const double b = m.pairwise(weight, li, alpha);  // keep, switch
        const double c = m.pairwise(weight, alpha, lj);  // switch, keep
        // E = a + (c - a) x_i + (0 - c) x_j + (b + c - a) (1 - x_i) x_j
        add_linear(vi, c - a);
        add_linear(vj, -c);
        const double coupling = b + c - a;  // >= 0: truncated L1 is a metric
        if (coupling > 0) g.add_edge(FlowGraph::node(vj), FlowGraph::node(vi), coupling);
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            if (x + 1 < width) pair(i, i + 1, w.right[i]);
            if (y + 1 < height) pair(i, i + width, w.down[i]);
        }
    }
    for (int v = 0; v < nvars; ++v) {
        const double lo = std::min(cost0[v], cost1[v]);
        g.add_terminal(FlowGraph::node(v), cost0[v] - lo, cost1[v] - lo);
    }

    const MaxFlowResult cut = max_flow(g);
    Labeling out = lab;
    for (std::size_t i = 0; i < n; ++i)
        if (var[i] >= 0 && cut.source_side[FlowGraph::node(var[i])]) out[i] = alpha;

    // Floating-point rounding in the cut could in principle pick a labeling
    // that is worse by an ulp; never accept that.
    if (out != lab && gc_energy(out, c_gc, w, p) > gc_energy(lab, c_gc, w, p)) return lab;
    return out;
}

Labeling expansion_move(const Labeling& lab, int alpha, const CostVolume& c_gc, const Image& center,
                        const GcParams& p) {
    return expansion_move(lab, alpha, c_gc, center_pair_weights(center, p), p);
}

bool occlusion_pass(Labeling& lab, const CostVolume& c_gc, const PairWeights& w, const GcParams& p) {
    check_shapes(lab, c_gc, w);
    const Model m{c_gc, w, p};
    const int width = lab.width();
    const int height = lab.height();
    const Labeling before = lab;
    const double e_before = gc_energy(lab, c_gc, w, p);
    bool changed = false;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const int l = lab[i];
            if (l == kOccluded) continue;
            double delta = p.k_occlusion - m.unary(l, x, y);
            if (x > 0) delta -= m.pairwise(w.right[i - 1], lab[i - 1], l);
            if (x + 1 < width) delta -= m.pairwise(w.right[i], l, lab[i + 1]);
            if (y > 0) delta -= m.pairwise(w.down[i - width], lab[i - width], l);
            if (y + 1 < height) delta -= m.pairwise(w.down[i], l, lab[i + width]);
            if (delta < 0) {
                lab[i] = kOccluded;
                changed = true;
            }
        }
    }
    if (changed && gc_energy(lab, c_gc, w, p) > e_before) {
        lab = before;
        return false;
    }
    return changed;
}

Labeling wta_labeling(const CostVolume& c_gc) {
    const DisparityMap init = wta_disparity(c_gc, false);
    Labeling lab(c_gc.width(), c_gc.height());
    for (int y = 0; y < c_gc.height(); ++y)
        for (int x = 0; x < c_gc.width(); ++x)
            lab.at(x, y) = init.valid(x, y) ? static_cast<int>(init.at(x, y)) : kOccluded;
    return lab;
}

GcSolution solve_gc(const CostVolume& c_gc, const PairWeights& weights, const GcParams& p, const WeightUpdate& update) {
    p.validate();
    GcSolution sol;
    sol.labeling = wta_labeling(c_gc);
    PairWeights w = weights;
    double energy = gc_energy(sol.labeling, c_gc, w, p);
    sol.trace.initial_energy = energy;

    std::vector<int> order(static_cast<std::size_t>(c_gc.depth()));
    std::iota(order.begin(), order.end(), c_gc.d_min());
    std::mt19937_64 rng(p.rng_seed);

    for (int sweep = 0; sweep < p.max_sweeps; ++sweep) {
        if (sweep > 0 && update) {
            w = update(sol.labeling);
            energy = gc_energy(sol.labeling, c_gc, w, p);
        }
        std::shuffle(order.begin(), order.end(), rng);
        bool changed = false;
        for (int alpha : order) {
            Labeling next = expansion_move(sol.labeling, alpha, c_gc, w, p);
            if (next != sol.labeling) {
                changed = true;
                sol.labeling = std::move(next);
                energy = gc_energy(sol.labeling, c_gc, w, p);
            }
            sol.trace.steps.push_back(GcStep::Expansion);
            sol.trace.energies.push_back(energy);
        }
        if (occlusion_pass(sol.labeling, c_gc, w, p)) {
            changed = true;
            energy = gc_energy(sol.labeling, c_gc, w, p);
        }
        sol.trace.steps.push_back(GcStep::Occlusion);
        sol.trace.energies.push_back(energy);
        sol.trace.sweeps = sweep + 1;
        if (!changed) {
            sol.trace.converged = true;
            break;
        }
    }
    sol.energy = energy;
    return sol;
}

GcRun multiscopic_gc_run(const MultiscopicSet& set, const GcParams& p, Matcher matcher, const BlockMatchParams& bm) {
    p.validate();
    bm.validate();
    const int f = p.upscale;

    std::vector<SurroundView> views;
    for (const auto& v : set.surround()) views.push_back({v.direction, upscale_bilinear(v.image, f)});
    const MultiscopicSet big(upscale_bilinear(set.center(), f), std::move(views), set.baseline());

    BlockMatchParams bm_big = bm;
    bm_big.d_min = bm.d_min * f;
    bm_big.d_max = bm.d_max * f;
    bm_big.rho = bm.rho * f;

    const auto volumes = multiscopic_volumes(big, matcher, bm_big);
    const CostVolume c_gc = fuse(volumes, FusionStrategy::Heuristic);

    WeightUpdate update;
    if (p.multiview_smoothness)
        update = [&big, &p](const Labeling& lab) { return multiview_pair_weights(big, lab, p); };

    GcRun run;
    run.solution = solve_gc(c_gc, center_pair_weights(big.center(), p), p, update);

    run.disparity = DisparityMap(set.width(), set.height());
    for (int y = 0; y < set.height(); ++y) {
        for (int x = 0; x < set.width(); ++x) {
            const int l = run.solution.labeling.at(x * f, y * f);
            if (l != kOccluded) run.disparity.at(x, y) = static_cast<float>(l) / static_cast<float>(f);
        }
    }
    return run;
}

DisparityMap multiscopic_gc(const MultiscopicSet& set, const GcParams& p, Matcher matcher, const BlockMatchParams& bm) {
    return multiscopic_gc_run(set, p, matcher, bm).disparity;
}

} // namespace mfuse
