#include "massseg/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace massseg {

// ---------------------------------------------------------------------------
// MaxFlowGraph

MaxFlowGraph::MaxFlowGraph(std::size_t node_count) : nodes_(node_count) {}

void MaxFlowGraph::add_terminal(std::size_t node, double source_cap, double sink_cap) {
  if (!(source_cap >= 0.0) || !(sink_cap >= 0.0)) {
    throw std::invalid_argument("MaxFlowGraph: negative terminal capacity");
  }
  // Flow that can go straight s -> i -> t is pushed immediately.
  const double through = std::min(source_cap, sink_cap);
  flow_ += through;
  nodes_.at(node).tr_cap += (source_cap - through) - (sink_cap - through);
}

void MaxFlowGraph::add_edge(std::size_t i, std::size_t j, double cap_ij, double cap_ji) {
  if (!(cap_ij >= 0.0) || !(cap_ji >= 0.0)) {
    throw std::invalid_argument("MaxFlowGraph: negative edge capacity");
  }
  if (i == j || i >= nodes_.size() || j >= nodes_.size()) {
    throw std::invalid_argument("MaxFlowGraph: bad edge endpoints");
  }
  const int a = static_cast<int>(arcs_.size());
  arcs_.push_back({static_cast<int>(j), nodes_[i].first, cap_ij});
  arcs_.push_back({static_cast<int>(i), nodes_[j].first, cap_ji});
  nodes_[i].first = a;
  nodes_[j].first = a + 1;
}

void MaxFlowGraph::set_active(int i) {
  if (!nodes_[i].active) {
    nodes_[i].active = true;
    active_.push_back(i);
  }
}

int MaxFlowGraph::next_active() {
  while (!active_.empty()) {
    const int i = active_.front();
    active_.pop_front();
    nodes_[i].active = false;
    if (nodes_[i].parent != kNone) return i;
  }
  return kNone;
}

void MaxFlowGraph::augment(int middle) {
  // Bottleneck along source tree -> middle arc -> sink tree.
  double bottleneck = arcs_[middle].r_cap;
  int i = arcs_[sister(middle)].head;
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) break;
    bottleneck = std::min(bottleneck, arcs_[sister(a)].r_cap);
    i = arcs_[a].head;
  }
  bottleneck = std::min(bottleneck, nodes_[i].tr_cap);
  i = arcs_[middle].head;
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) break;
    bottleneck = std::min(bottleneck, arcs_[a].r_cap);
    i = arcs_[a].head;
  }
  bottleneck = std::min(bottleneck, -nodes_[i].tr_cap);

  arcs_[sister(middle)].r_cap += bottleneck;
  arcs_[middle].r_cap -= bottleneck;

  i = arcs_[sister(middle)].head;
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) break;
    arcs_[a].r_cap += bottleneck;
    arcs_[sister(a)].r_cap -= bottleneck;
    if (arcs_[sister(a)].r_cap == 0.0) {
      nodes_[i].parent = kOrphan;
      orphans_.push_front(i);
    }
    i = arcs_[a].head;
  }
  nodes_[i].tr_cap -= bottleneck;
  if (nodes_[i].tr_cap == 0.0) {
    nodes_[i].parent = kOrphan;
    orphans_.push_front(i);
  }

  i = arcs_[middle].head;
  for (;;) {
    const int a = nodes_[i].parent;
    if (a == kTerminal) break;
    arcs_[sister(a)].r_cap += bottleneck;
    arcs_[a].r_cap -= bottleneck;
    if (arcs_[a].r_cap == 0.0) {
      nodes_[i].parent = kOrphan;
      orphans_.push_front(i);
    }
    i = arcs_[a].head;
  }
  nodes_[i].tr_cap += bottleneck;
  if (nodes_[i].tr_cap == 0.0) {
    nodes_[i].parent = kOrphan;
    orphans_.push_front(i);
  }

  flow_ += bottleneck;
}

namespace {
constexpr int kInfiniteDist = std::numeric_limits<int>::max();
}

void MaxFlowGraph::adopt_source_orphan(int i) {
  int best_arc = kNone;
  int best_dist = kInfiniteDist;
  for (int a0 = nodes_[i].first; a0 != kNone; a0 = arcs_[a0].next) {
    if (arcs_[sister(a0)].r_cap == 0.0) continue;
    int j = arcs_[a0].head;
    if (nodes_[j].sink || nodes_[j].parent == kNone) continue;
    // Distance from j to the source, or infinity if j hangs off an orphan.
    int d = 0;
    for (;;) {
      if (nodes_[j].ts == time_) {
        d += nodes_[j].dist;
        break;
      }
      const int a = nodes_[j].parent;
      ++d;
      if (a == kTerminal) {
        nodes_[j].ts = time_;
        nodes_[j].dist = 1;
        break;
      }
      if (a == kOrphan) {
        d = kInfiniteDist;
        break;
      }
      j = arcs_[a].head;
    }
    if (d == kInfiniteDist) continue;
    if (d < best_dist) {
      best_arc = a0;
      best_dist = d;
    }
    for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
      nodes_[j].ts = time_;
      nodes_[j].dist = d--;
    }
  }

  nodes_[i].parent = best_arc;
  if (best_arc != kNone) {
    nodes_[i].ts = time_;
    nodes_[i].dist = best_dist + 1;
    return;
  }
  // No valid parent: i becomes free and its children become orphans.
  nodes_[i].parent = kNone;
  for (int a0 = nodes_[i].first; a0 != kNone; a0 = arcs_[a0].next) {
    const int j = arcs_[a0].head;
    const int a = nodes_[j].parent;
    if (nodes_[j].sink || a == kNone) continue;
    if (arcs_[sister(a0)].r_cap != 0.0) set_active(j);
    if (a != kTerminal && a != kOrphan && arcs_[a].head == i) {
      nodes_[j].parent = kOrphan;
      orphans_.push_back(j);
    }
  }
}

void MaxFlowGraph::adopt_sink_orphan(int i) {
  int best_arc = kNone;
  int best_dist = kInfiniteDist;
  for (int a0 = nodes_[i].first; a0 != kNone; a0 = arcs_[a0].next) {
    if (arcs_[a0].r_cap == 0.0) continue;
    int j = arcs_[a0].head;
    if (!nodes_[j].sink || nodes_[j].parent == kNone) continue;
    int d = 0;
    for (;;) {
      if (nodes_[j].ts == time_) {
        d += nodes_[j].dist;
        break;
      }
      const int a = nodes_[j].parent;
      ++d;
      if (a == kTerminal) {
        nodes_[j].ts = time_;
        nodes_[j].dist = 1;
        break;
      }
      if (a == kOrphan) {
        d = kInfiniteDist;
        break;
      }
      j = arcs_[a].head;
    }
    if (d == kInfiniteDist) continue;
    if (d < best_dist) {
      best_arc = a0;
      best_dist = d;
    }
    for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
      nodes_[j].ts = time_;
      nodes_[j].dist = d--;
    }
  }

  nodes_[i].parent = best_arc;
  if (best_arc != kNone) {
    nodes_[i].ts = time_;
    nodes_[i].dist = best_dist + 1;
    return;
  }
  nodes_[i].parent = kNone;
  for (int a0 = nodes_[i].first; a0 != kNone; a0 = arcs_[a0].next) {
    const int j = arcs_[a0].head;
    const int a = nodes_[j].parent;
    if (!nodes_[j].sink || a == kNone) continue;
    if (arcs_[a0].r_cap != 0.0) set_active(j);
    if (a != kTerminal && a != kOrphan && arcs_[a].head == i) {
      nodes_[j].parent = kOrphan;
      orphans_.push_back(j);
    }
  }
}

double MaxFlowGraph::solve() {
  const int n = static_cast<int>(nodes_.size());
  active_.clear();
  orphans_.clear();
  time_ = 0;
  for (int i = 0; i < n; ++i) {
    auto& node = nodes_[i];
    node.active = false;
    node.ts = 0;
    if (node.tr_cap > 0.0) {
      node.sink = false;
      node.parent = kTerminal;
      node.dist = 1;
      set_active(i);
    } else if (node.tr_cap < 0.0) {
      node.sink = true;
      node.parent = kTerminal;
      node.dist = 1;
      set_active(i);
    } else {
      node.parent = kNone;
    }
  }

  int current = kNone;
  for (;;) {
    int i = current;
    if (i != kNone) {
      nodes_[i].active = false;
      if (nodes_[i].parent == kNone) i = kNone;
    }
    if (i == kNone) {
      i = next_active();
      if (i == kNone) break;
    }

    // Grow the tree of i until it touches the other tree.
    int middle = kNone;
    if (!nodes_[i].sink) {
      for (int a = nodes_[i].first; a != kNone; a = arcs_[a].next) {
        if (arcs_[a].r_cap == 0.0) continue;
        const int j = arcs_[a].head;
        if (nodes_[j].parent == kNone) {
          nodes_[j].sink = false;
          nodes_[j].parent = sister(a);
          nodes_[j].ts = nodes_[i].ts;
          nodes_[j].dist = nodes_[i].dist + 1;
          set_active(j);
        } else if (nodes_[j].sink) {
          middle = a;
          break;
        } else if (nodes_[j].ts <= nodes_[i].ts && nodes_[j].dist > nodes_[i].dist) {
          nodes_[j].parent = sister(a);
          nodes_[j].ts = nodes_[i].ts;
          nodes_[j].dist = nodes_[i].dist + 1;
        }
      }
    } else {
      for (int a = nodes_[i].first; a != kNone; a = arcs_[a].next) {
        if (arcs_[sister(a)].r_cap == 0.0) continue;
        const int j = arcs_[a].head;
        if (nodes_[j].parent == kNone) {
          nodes_[j].sink = true;
          nodes_[j].parent = sister(a);
          nodes_[j].ts = nodes_[i].ts;
          nodes_[j].dist = nodes_[i].dist + 1;
          set_active(j);
        } else if (!nodes_[j].sink) {
          middle = sister(a);
          break;
        } else if (nodes_[j].ts <= nodes_[i].ts && nodes_[j].dist > nodes_[i].dist) {
          nodes_[j].parent = sister(a);
          nodes_[j].ts = nodes_[i].ts;
          nodes_[j].dist = nodes_[i].dist + 1;
        }
      }
    }

    ++time_;
    if (middle == kNone) {
      current = kNone;
      continue;
    }
    // Keep i as the current node; marking it active keeps it out of the queue.
    nodes_[i].active = true;
    current = i;
    augment(middle);
    while (!orphans_.empty()) {
      const int o = orphans_.front();
      orphans_.pop_front();
      if (nodes_[o].sink) {
        adopt_sink_orphan(o);
      } else {
        adopt_source_orphan(o);
      }
    }
  }
  return flow_;
}

bool MaxFlowGraph::on_source_side(std::size_t node) const {
  const auto& n = nodes_.at(node);
  return n.parent != kNone && !n.sink;
}

// ---------------------------------------------------------------------------
// Lattice energies

void FlowNetwork::validate() const {
  const auto n = lattice.size();
  if (source_cap.size() != n || sink_cap.size() != n || edge_cap.size() != edges.size()) {
    throw std::invalid_argument("FlowNetwork: capacity array size mismatch");
  }
  auto ok = [](double c) { return c >= 0.0 && std::isfinite(c); };
  if (!std::all_of(source_cap.begin(), source_cap.end(), ok) ||
      !std::all_of(sink_cap.begin(), sink_cap.end(), ok) ||
      !std::all_of(edge_cap.begin(), edge_cap.end(), ok)) {
    throw std::invalid_argument("FlowNetwork: capacities must be finite and >= 0");
  }
}

FlowNetwork build_flow_network(const PotentialStack& stack, const ModelWeights& w,
                               const std::optional<LabelMask>& loss_reference) {
  if (w.unary.size() != stack.unary_count() || w.pairwise.size() != stack.pairwise_count()) {
    throw std::invalid_argument("build_flow_network: weight count does not match potential count");
  }
  if (!w.submodular()) {
    throw std::invalid_argument("build_flow_network: negative pairwise weight (not submodular)");
  }
  if (loss_reference && !(loss_reference->lattice() == stack.lattice)) {
    throw std::invalid_argument("build_flow_network: loss reference lattice mismatch");
  }
  FlowNetwork net;
  net.lattice = stack.lattice;
  net.edges = stack.edges;
  const auto n = stack.lattice.size();
  net.source_cap.resize(n);
  net.sink_cap.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double cost_pos = 0.0, cost_neg = 0.0;
    for (std::size_t k = 0; k < stack.unary.size(); ++k) {
      cost_pos += w.unary[k] * stack.unary[k].cost_mass[i];
      cost_neg += w.unary[k] * stack.unary[k].cost_background[i];
    }
    if (loss_reference) {
      // -Hamming: each label that disagrees with the reference earns 1.
      if ((*loss_reference)[i] == kMass) {
        cost_neg -= 1.0;
      } else {
        cost_pos -= 1.0;
      }
    }
    const double shift = std::min(cost_pos, cost_neg);
    net.constant += shift;
    net.sink_cap[i] = cost_pos - shift;
    net.source_cap[i] = cost_neg - shift;
  }
  net.edge_cap.resize(net.edges.size());
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    double c = 0.0;
    for (std::size_t l = 0; l < stack.pairwise.size(); ++l) c += w.pairwise[l] * stack.pairwise[l][e];
    net.edge_cap[e] = c;
  }
  net.validate();
  return net;
}

double cut_capacity(const FlowNetwork& net, const LabelMask& labeling) {
  double c = 0.0;
  for (std::size_t i = 0; i < labeling.size(); ++i) {
    c += labeling[i] == kMass ? net.sink_cap[i] : net.source_cap[i];
  }
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (labeling[net.edges[e].a] != labeling[net.edges[e].b]) c += net.edge_cap[e];
  }
  return c;
}

MinCut min_cut(const FlowNetwork& net) {
  net.validate();
  const auto n = net.lattice.size();
  MaxFlowGraph g(n);
  for (std::size_t i = 0; i < n; ++i) g.add_terminal(i, net.source_cap[i], net.sink_cap[i]);
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (net.edge_cap[e] > 0.0) {
      g.add_edge(net.edges[e].a, net.edges[e].b, net.edge_cap[e], net.edge_cap[e]);
    }
  }
  MinCut out;
  out.flow_value = g.solve();
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = g.on_source_side(i) ? kMass : kBackground;
  out.labeling = LabelMask(net.lattice, std::move(labels));
  out.cut_value = cut_capacity(net, out.labeling);
  return out;
}

LabelMask infer(const PotentialStack& stack, const ModelWeights& w) {
  return min_cut(build_flow_network(stack, w)).labeling;
}

LabelMask infer_loss_augmented(const PotentialStack& stack, const ModelWeights& w,
                               const LabelMask& gt) {
  return min_cut(build_flow_network(stack, w, gt)).labeling;
}

}  // namespace massseg
