#include "ecat/graph.hpp"

#include <algorithm>
#include <iterator>

namespace ecat {

NodeSet make_node_set(std::vector<NodeKey> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

NodeSet set_union(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet set_intersection(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet set_difference(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool contains(const NodeSet& s, NodeKey k) { return std::binary_search(s.begin(), s.end(), k); }

InteractionGraph::InteractionGraph(std::size_t num_users, std::size_t num_items)
    : user_adj_(num_users), item_adj_(num_items) {}

namespace {
void add_neighbor(std::vector<InteractionGraph::Neighbor>& adj, std::uint32_t id, std::uint8_t bit) {
  for (auto& n : adj) {
    if (n.id == id) {
      n.kinds |= bit;
      return;
    }
  }
  adj.push_back({id, bit});
}
}  // namespace

void InteractionGraph::add_edge(std::uint32_t user, std::uint32_t item, EventKind kind) {
  if (user >= user_adj_.size() || item >= item_adj_.size()) {
    throw DataError("edge (" + std::to_string(user) + ", " + std::to_string(item) + ") outside vocabulary of " +
                    std::to_string(user_adj_.size()) + " users and " + std::to_string(item_adj_.size()) + " items");
  }
  const auto bit = kind_bit(kind);
  add_neighbor(user_adj_[user], item, bit);
  add_neighbor(item_adj_[item], user, bit);
}

void InteractionGraph::finalize() {
  auto by_id = [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; };
  for (auto& adj : user_adj_) std::sort(adj.begin(), adj.end(), by_id);
  for (auto& adj : item_adj_) std::sort(adj.begin(), adj.end(), by_id);
}

std::size_t InteractionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& adj : user_adj_) {
    for (const auto& nb : adj) n += static_cast<std::size_t>((nb.kinds & kClickBit) != 0) + ((nb.kinds & kPayBit) != 0);
  }
  return n;
}

NodeSet InteractionGraph::nodes() const {
  NodeSet out;
  for (std::uint32_t u = 0; u < user_adj_.size(); ++u) {
    if (!user_adj_[u].empty()) out.push_back(NodeKey::user(u));
  }
  for (std::uint32_t i = 0; i < item_adj_.size(); ++i) {
    if (!item_adj_[i].empty()) out.push_back(NodeKey::item(i));
  }
  return out;
}

bool InteractionGraph::has_node(NodeKey k) const {
  const auto& adj = k.kind == NodeKind::user ? user_adj_ : item_adj_;
  return k.id < adj.size() && !adj[k.id].empty();
}

std::span<const InteractionGraph::Neighbor> InteractionGraph::neighbors(NodeKey k) const {
  const auto& adj = k.kind == NodeKind::user ? user_adj_ : item_adj_;
  if (k.id >= adj.size()) return {};
  return adj[k.id];
}

bool InteractionGraph::has_edge(std::uint32_t user, std::uint32_t item, EventKind kind) const {
  if (user >= user_adj_.size()) return false;
  for (const auto& n : user_adj_[user]) {
    if (n.id == item) return (n.kinds & kind_bit(kind)) != 0;
  }
  return false;
}

InteractionGraph build_graph(std::span<const InteractionEvent> events, std::size_t num_users,
                             std::size_t num_items) {
  if (events.empty()) throw DataError("build_graph: no events");
  struct Edge {
    std::uint32_t user, item;
    std::uint8_t bit;
  };
  std::vector<Edge> edges;
  edges.reserve(events.size());
  for (const auto& e : events) {
    if (e.user_id >= num_users || e.item_id >= num_items) {
      throw DataError("event (" + std::to_string(e.user_id) + ", " + std::to_string(e.item_id) +
                      ") outside vocabulary of " + std::to_string(num_users) + " users and " +
                      std::to_string(num_items) + " items");
    }
    edges.push_back({e.user_id, e.item_id, kind_bit(e.kind)});
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.user != b.user ? a.user < b.user : a.item < b.item; });
  InteractionGraph g(num_users, num_items);
  for (std::size_t i = 0; i < edges.size();) {
    std::uint8_t kinds = 0;
    std::size_t j = i;
    for (; j < edges.size() && edges[j].user == edges[i].user && edges[j].item == edges[i].item; ++j) {
      kinds |= edges[j].bit;
    }
    // Sorted by (user, item): both sides receive ids in ascending order.
    g.user_adj_[edges[i].user].push_back({edges[i].item, kinds});
    g.item_adj_[edges[i].item].push_back({edges[i].user, kinds});
    i = j;
  }
  return g;
}

void GstConfig::validate() const {
  if (max_expanded_nodes == 0 || per_hop_fanout == 0) throw ConfigError("gst: caps must be > 0");
}

NodeSet seed_nodes(const InteractionGraph& source_graph, const NodeSet& target_vocab) {
  NodeSet out;
  for (const auto& k : target_vocab) {
    if (source_graph.has_node(k)) out.push_back(k);
  }
  return out;
}

namespace {

NodeKey other_side(NodeKey from, std::uint32_t id) {
  return from.kind == NodeKind::user ? NodeKey::item(id) : NodeKey::user(id);
}

// Highest degree first, then ascending key; keeps the first `limit`.
void rank_and_truncate(const InteractionGraph& g, std::vector<NodeKey>& nodes, std::size_t limit) {
  if (nodes.size() <= limit) return;
  std::sort(nodes.begin(), nodes.end(), [&](NodeKey a, NodeKey b) {
    const auto da = g.degree(a), db = g.degree(b);
    return da != db ? da > db : a < b;
  });
  nodes.resize(limit);
}

void require_seeds_in_graph(const InteractionGraph& g, const NodeSet& seeds) {
  for (const auto& s : seeds) {
    if (!g.has_node(s)) {
      throw DataError(std::string("seed ") + (s.kind == NodeKind::user ? "user " : "item ") + std::to_string(s.id) +
                      " is not in the graph");
    }
  }
}

}  // namespace

NodeSet expand_one_hop(const InteractionGraph& graph, const NodeSet& seeds, std::uint8_t kinds, std::size_t fanout) {
  require_seeds_in_graph(graph, seeds);
  std::vector<NodeKey> out;
  std::vector<NodeKey> candidates;
  for (const auto& s : seeds) {
    candidates.clear();
    for (const auto& nb : graph.neighbors(s)) {
      if (!(nb.kinds & kinds)) continue;
      NodeKey k = other_side(s, nb.id);
      if (!contains(seeds, k)) candidates.push_back(k);
    }
    rank_and_truncate(graph, candidates, fanout);
    out.insert(out.end(), candidates.begin(), candidates.end());
  }
  return make_node_set(std::move(out));
}

NodeSet expand_two_hop(const InteractionGraph& graph, const NodeSet& seeds, const NodeSet& exclude,
                       std::size_t fanout) {
  require_seeds_in_graph(graph, seeds);
  std::vector<NodeKey> out;
  std::vector<NodeKey> candidates;
  for (const auto& s : seeds) {
    candidates.clear();
    for (const auto& mid : graph.neighbors(s)) {
      if (!(mid.kinds & kClickBit)) continue;
      const NodeKey m = other_side(s, mid.id);
      for (const auto& far : graph.neighbors(m)) {
        if (!(far.kinds & kClickBit)) continue;
        const NodeKey k = other_side(m, far.id);
        if (k == s || contains(seeds, k) || contains(exclude, k)) continue;
        candidates.push_back(k);
      }
    }
    candidates = make_node_set(std::move(candidates));
    rank_and_truncate(graph, candidates, fanout);
    out.insert(out.end(), candidates.begin(), candidates.end());
  }
  return make_node_set(std::move(out));
}

GstSelection gst_select(const InteractionGraph& source_graph, const NodeSet& seeds, const GstConfig& config,
                        std::span<const SampleRecord> source_records) {
  config.validate();
  GstSelection sel;
  sel.seeds = seeds;
  sel.one_hop = expand_one_hop(source_graph, seeds, config.one_hop_kinds(), config.per_hop_fanout);
  if (config.enable_two_hop_coclick) {
    sel.two_hop = expand_two_hop(source_graph, seeds, sel.one_hop, config.per_hop_fanout);
  }

  std::vector<NodeKey> one(sel.one_hop.begin(), sel.one_hop.end());
  rank_and_truncate(source_graph, one, config.max_expanded_nodes);
  std::vector<NodeKey> two(sel.two_hop.begin(), sel.two_hop.end());
  rank_and_truncate(source_graph, two, config.max_expanded_nodes - one.size());
  sel.one_hop = make_node_set(std::move(one));
  sel.two_hop = make_node_set(std::move(two));
  sel.selected = set_union(seeds, set_union(sel.one_hop, sel.two_hop));

  std::vector<std::uint8_t> user_in, item_in;
  for (const auto& k : sel.selected) {
    auto& flags = k.kind == NodeKind::user ? user_in : item_in;
    if (flags.size() <= k.id) flags.resize(k.id + 1, 0);
    flags[k.id] = 1;
  }
  auto in = [](const std::vector<std::uint8_t>& flags, std::uint32_t id) { return id < flags.size() && flags[id]; };
  for (std::size_t i = 0; i < source_records.size(); ++i) {
    const auto& r = source_records[i];
    const bool u = in(user_in, r.user_id), it = in(item_in, r.item_id);
    if (config.require_both_endpoints ? u && it : u || it) sel.record_indices.push_back(i);
  }
  std::stable_sort(sel.record_indices.begin(), sel.record_indices.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = source_records[a];
    const auto& rb = source_records[b];
    if (ra.window != rb.window) return ra.window < rb.window;
    if (ra.user_id != rb.user_id) return ra.user_id < rb.user_id;
    return ra.item_id < rb.item_id;
  });
  return sel;
}

NodeSet vocabulary_of(std::span<const SampleRecord> records) {
  std::vector<NodeKey> nodes;
  nodes.reserve(2 * records.size());
  for (const auto& r : records) {
    nodes.push_back(NodeKey::user(r.user_id));
    nodes.push_back(NodeKey::item(r.item_id));
  }
  return make_node_set(std::move(nodes));
}

}  // namespace ecat
