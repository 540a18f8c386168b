#include "mfuse/maxflow.hpp"

#include "mfuse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfuse {

FlowGraph::FlowGraph(int nodes) {
    if (nodes < 0) throw InputError("negative node count");
    first_.assign(static_cast<std::size_t>(nodes) + 2, -1);
}

int FlowGraph::add_node() {
    first_.push_back(-1);
    return static_cast<int>(first_.size()) - 1;
}

void FlowGraph::reserve(std::size_t nodes, std::size_t arcs) {
    first_.reserve(nodes + 2);
    next_.reserve(arcs);
    to_.reserve(arcs);
    cap_.reserve(arcs);
}

void FlowGraph::add_edge(int from, int to, double cap, double rev_cap) {
    const int n = node_count();
    if (from < 0 || to < 0 || from >= n || to >= n) throw InputError("flow arc endpoint out of range");
    if (!(cap >= 0.0) || !(rev_cap >= 0.0) || !std::isfinite(cap) || !std::isfinite(rev_cap))
        throw InputError("flow capacities must be finite and non-negative");
    const int e = static_cast<int>(to_.size());
    to_.push_back(to);
    cap_.push_back(cap);
    next_.push_back(first_[from]);
    first_[from] = e;
    to_.push_back(from);
    cap_.push_back(rev_cap);
    next_.push_back(first_[to]);
    first_[to] = e + 1;
}

void FlowGraph::add_terminal(int n, double cap_source, double cap_sink) {
    if (cap_source > 0.0) add_edge(source(), n, cap_source);
    if (cap_sink > 0.0) add_edge(n, sink(), cap_sink);
}

struct MaxFlowSolver {
    const FlowGraph& g;
    std::vector<double> res;
    std::vector<int> level;
    std::vector<int> current;
    std::vector<int> queue;
    std::vector<int> path;

    explicit MaxFlowSolver(const FlowGraph& graph) : g(graph), res(graph.cap_) {
        const auto n = static_cast<std::size_t>(g.node_count());
        level.resize(n);
        current.resize(n);
        queue.reserve(n);
    }

    bool build_levels() {
        std::fill(level.begin(), level.end(), -1);
        queue.clear();
        level[g.source()] = 0;
        queue.push_back(g.source());
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int u = queue[head];
            for (int e = g.first_[u]; e >= 0; e = g.next_[e]) {
                const int v = g.to_[e];
                if (res[e] > 0.0 && level[v] < 0) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        return level[g.sink()] >= 0;
    }

    // One augmenting path along the level graph; 0 when the phase is blocked.
    double augment() {
        path.clear();
        int u = g.source();
        for (;;) {
            if (u == g.sink()) {
                double bottleneck = std::numeric_limits<double>::infinity();
                for (int e : path) bottleneck = std::min(bottleneck, res[e]);
                for (int e : path) {
                    res[e] -= bottleneck;
                    res[e ^ 1] += bottleneck;
                }
                return bottleneck;
            }
            int& e = current[u];
            while (e >= 0 && !(res[e] > 0.0 && level[g.to_[e]] == level[u] + 1)) e = g.next_[e];
            if (e >= 0) {
                path.push_back(e);
                u = g.to_[e];
                continue;
            }
            // Dead end: prune u from this phase and retreat.
            level[u] = -1;
            if (path.empty()) return 0.0;
            const int back = path.back();
            path.pop_back();
            u = g.to_[back ^ 1];
            current[u] = g.next_[current[u]];
        }
    }

    MaxFlowResult run() {
        MaxFlowResult out;
        while (build_levels()) {
            std::copy(g.first_.begin(), g.first_.end(), current.begin());
            for (double f = augment(); f > 0.0; f = augment()) out.flow += f;
        }
        // build_levels() left the residual-reachable set marked.
        out.source_side.resize(level.size());
        for (std::size_t i = 0; i < level.size(); ++i) out.source_side[i] = level[i] >= 0;
        return out;
    }
};

MaxFlowResult max_flow(const FlowGraph& graph) { return MaxFlowSolver(graph).run(); }

} // namespace mfuse
