#pragma once

// Exact minimization of the lattice energy by minimum s-t cut.
//
// Pixels on the source side of the cut take label +1, pixels on the sink
// side take -1. Each pixel's two unary costs are shifted by their minimum so
// that all terminal capacities are nonnegative; the accumulated shift is kept
// in FlowNetwork::constant so that cut value + constant equals the energy of
// the labeling the cut encodes.

#include <deque>
#include <optional>
#include <vector>

#include "massseg/core.hpp"

namespace massseg {

struct FlowNetwork {
  Lattice lattice;
  std::vector<Edge> edges;
  std::vector<double> source_cap;  // s -> i, paid when i ends up labelled -1
  std::vector<double> sink_cap;    // i -> t, paid when i ends up labelled +1
  std::vector<double> edge_cap;    // a -> b and b -> a, paid when the labels differ
  double constant = 0.0;

  void validate() const;
};

/// Network whose cut values are E(y) - constant, or E(y) - Hamming(ref, y) -
/// constant when a loss reference is given. Throws on negative pairwise
/// weights.
FlowNetwork build_flow_network(const PotentialStack& stack, const ModelWeights& w,
                               const std::optional<LabelMask>& loss_reference = std::nullopt);

struct MinCut {
  LabelMask labeling;
  double cut_value = 0.0;   // capacity of the returned cut
  double flow_value = 0.0;  // value of the maximum flow found
};

MinCut min_cut(const FlowNetwork& net);

/// Capacity of the cut induced by `labeling` (+1 = source side).
double cut_capacity(const FlowNetwork& net, const LabelMask& labeling);

/// argmin_y E(y)
LabelMask infer(const PotentialStack& stack, const ModelWeights& w);

/// argmin_y E(y) - Hamming(gt, y)
LabelMask infer_loss_augmented(const PotentialStack& stack, const ModelWeights& w,
                               const LabelMask& gt);

/// Generic max-flow graph with the search-tree reuse scheme of Boykov and
/// Kolmogorov. Nodes are 0..n-1; terminal capacities are set per node.
class MaxFlowGraph {
 public:
  explicit MaxFlowGraph(std::size_t node_count);

  void add_terminal(std::size_t node, double source_cap, double sink_cap);
  /// Arc pair i -> j with capacity cap_ij and j -> i with capacity cap_ji.
  void add_edge(std::size_t i, std::size_t j, double cap_ij, double cap_ji);

  double solve();
  /// True when `node` is reachable from the source in the final residual graph.
  bool on_source_side(std::size_t node) const;

 private:
  static constexpr int kNone = -1;
  static constexpr int kTerminal = -2;
  static constexpr int kOrphan = -3;

  struct Arc {
    int head;
    int next;
    double r_cap;
  };
  struct Node {
    int first = kNone;
    int parent = kNone;
    long ts = 0;
    int dist = 0;
    bool sink = false;
    bool active = false;
    double tr_cap = 0.0;
  };

  static int sister(int a) { return a ^ 1; }
  void set_active(int i);
  int next_active();
  void augment(int middle);
  void adopt_source_orphan(int i);
  void adopt_sink_orphan(int i);

  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
  std::deque<int> active_;
  std::deque<int> orphans_;
  long time_ = 0;
  double flow_ = 0.0;
};

}  // namespace massseg
