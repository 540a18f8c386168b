#pragma once

#include <cstddef>
#include <vector>

namespace mfuse {

/// Directed capacity graph for s-t max-flow. Every arc is stored with a
/// reverse twin; add_edge sets both capacities at once.
class FlowGraph {
public:
    /// Creates `nodes` nodes plus the source and the sink.
    explicit FlowGraph(int nodes = 0);

    int add_node();
    int node_count() const noexcept { return static_cast<int>(first_.size()); }
    std::size_t arc_count() const noexcept { return to_.size(); }

    int source() const noexcept { return 0; }
    int sink() const noexcept { return 1; }
    /// Index of the i-th non-terminal node.
    static constexpr int node(int i) noexcept { return i + 2; }

    /// Arc from -> to with capacity cap and its twin to -> from with rev_cap.
    /// Capacities must be finite and non-negative.
    void add_edge(int from, int to, double cap, double rev_cap = 0.0);

    /// Convenience for unary terms: source -> n with cap_source, n -> sink with cap_sink.
    void add_terminal(int n, double cap_source, double cap_sink);

    void reserve(std::size_t nodes, std::size_t arcs);

private:
    friend struct MaxFlowSolver;

    std::vector<int> first_;  // head of each node's arc list
    std::vector<int> next_;
    std::vector<int> to_;
    std::vector<double> cap_;
};

struct MaxFlowResult {
    double flow = 0.0;
    /// Nodes reachable from the source in the final residual graph; this is
    /// the inclusion-minimal source side among all minimum cuts.
    std::vector<bool> source_side;
};

/// Dinic's algorithm (BFS level graph + blocking flow by shortest augmenting
/// paths). The graph itself is not modified.
MaxFlowResult max_flow(const FlowGraph& graph);

} // namespace mfuse
