#pragma once

// Bipartite user-item interaction graph and graph-guided sample transfer:
// seed nodes shared with the target domain are expanded through one-hop
// (click/pay) and two-hop (co-click) links, and every source record whose
// user and item both land in the expanded node set is admitted.

#include <cstdint>
#include <span>
#include <vector>

#include "ecat/datagen.hpp"

namespace ecat {

enum class NodeKind : std::uint8_t { user = 0, item = 1 };

/// Users order before items; ids ascend within a kind.
struct NodeKey {
  NodeKind kind = NodeKind::user;
  std::uint32_t id = 0;

  static NodeKey user(std::uint32_t id) { return {NodeKind::user, id}; }
  static NodeKey item(std::uint32_t id) { return {NodeKind::item, id}; }
  friend auto operator<=>(const NodeKey&, const NodeKey&) = default;
};

/// Sorted, duplicate-free.
using NodeSet = std::vector<NodeKey>;

NodeSet make_node_set(std::vector<NodeKey> nodes);
NodeSet set_union(const NodeSet& a, const NodeSet& b);
NodeSet set_intersection(const NodeSet& a, const NodeSet& b);
NodeSet set_difference(const NodeSet& a, const NodeSet& b);
bool contains(const NodeSet& s, NodeKey k);

inline constexpr std::uint8_t kClickBit = 1;
inline constexpr std::uint8_t kPayBit = 2;
inline std::uint8_t kind_bit(EventKind k) { return k == EventKind::pay ? kPayBit : kClickBit; }

class InteractionGraph {
 public:
  struct Neighbor {
    std::uint32_t id;
    std::uint8_t kinds;  // bitmask of kClickBit / kPayBit
  };

  InteractionGraph(std::size_t num_users, std::size_t num_items);

  void add_edge(std::uint32_t user, std::uint32_t item, EventKind kind);
  /// Sorts adjacency lists; called by build_graph.
  void finalize();

  std::size_t num_users() const { return user_adj_.size(); }
  std::size_t num_items() const { return item_adj_.size(); }
  /// Edges counted per distinct (user, item, kind).
  std::size_t edge_count() const;
  /// Every node with at least one edge.
  NodeSet nodes() const;
  bool has_node(NodeKey k) const;
  std::span<const Neighbor> neighbors(NodeKey k) const;
  /// Distinct neighbours, any kind.
  std::size_t degree(NodeKey k) const { return neighbors(k).size(); }
  bool has_edge(std::uint32_t user, std::uint32_t item, EventKind kind) const;

 private:
  std::vector<std::vector<Neighbor>> user_adj_;
  std::vector<std::vector<Neighbor>> item_adj_;

  friend InteractionGraph build_graph(std::span<const InteractionEvent>, std::size_t, std::size_t);
};

/// One edge per distinct (user, item, kind). Throws DataError on an empty
/// event list or an id outside [0, num_users) / [0, num_items).
InteractionGraph build_graph(std::span<const InteractionEvent> events, std::size_t num_users, std::size_t num_items);

struct GstConfig {
  bool one_hop_click = true;
  bool one_hop_pay = true;
  bool enable_two_hop_coclick = true;
  /// Cap on |V_generalized| (one-hop plus two-hop nodes).
  std::size_t max_expanded_nodes = 1'000'000;
  /// Cap on expansion candidates contributed per seed and hop.
  std::size_t per_hop_fanout = 1'000'000;
  /// Keep a source record when both its user and item are selected (true)
  /// or when either one is (false).
  bool require_both_endpoints = true;

  std::uint8_t one_hop_kinds() const {
    return static_cast<std::uint8_t>((one_hop_click ? kClickBit : 0) | (one_hop_pay ? kPayBit : 0));
  }
  void validate() const;
};

/// V_t ∩ nodes(G_s).
NodeSet seed_nodes(const InteractionGraph& source_graph, const NodeSet& target_vocab);

/// Neighbours of `seeds` over edges carrying any kind in `kinds`, minus the
/// seeds. Each seed contributes at most `fanout` neighbours chosen by highest
/// degree, then ascending key. Throws DataError on a seed not in the graph.
NodeSet expand_one_hop(const InteractionGraph& graph, const NodeSet& seeds, std::uint8_t kinds,
                       std::size_t fanout = SIZE_MAX);

/// Co-click expansion: items reachable by item-user-item click paths from
/// seed items, users reachable by user-item-user click paths from seed users,
/// minus `seeds` and `exclude`. Same per-seed fan-out rule as one hop.
NodeSet expand_two_hop(const InteractionGraph& graph, const NodeSet& seeds, const NodeSet& exclude,
                       std::size_t fanout = SIZE_MAX);

struct GstSelection {
  NodeSet seeds;
  NodeSet one_hop;
  NodeSet two_hop;
  /// seeds ∪ V_generalized after the max_expanded_nodes cap.
  NodeSet selected;
  /// Indices into the source records, ordered by (window, user, item, index).
  std::vector<std::size_t> record_indices;
};

/// Keeps the source records whose endpoints are selected (both or either,
/// per require_both_endpoints). The
/// expansion cap keeps one-hop nodes before two-hop nodes, each group by
/// highest degree then ascending key.
GstSelection gst_select(const InteractionGraph& source_graph, const NodeSet& seeds, const GstConfig& config,
                        std::span<const SampleRecord> source_records);

/// Node set touched by a list of records (target vocabulary helper).
NodeSet vocabulary_of(std::span<const SampleRecord> records);

}  // namespace ecat
