#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. They work from raw event lists and record vectors and
// never call into the library code they are checked against.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "ecat/datagen.hpp"
#include "ecat/graph.hpp"

namespace ecat::oracle {

/// P(s+ > s-) + 0.5 P(tie) over every positive/negative pair.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0.0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// (user, item, kind bit) triples, deduplicated.
using EdgeSet = std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint8_t>>;

inline EdgeSet edges_of(const std::vector<InteractionEvent>& events) {
  EdgeSet e;
  for (const auto& ev : events) e.insert({ev.user_id, ev.item_id, ev.kind == EventKind::pay ? kPayBit : kClickBit});
  return e;
}

// Walks one edge out of `from`; calls f(other_end, kind_bit) per edge.
template <class F>
void each_edge_from(const EdgeSet& edges, NodeKey from, F&& f) {
  for (const auto& [u, i, k] : edges) {
    if (from.kind == NodeKind::user && u == from.id) f(NodeKey::item(i), k);
    if (from.kind == NodeKind::item && i == from.id) f(NodeKey::user(u), k);
  }
}

inline std::size_t degree(const EdgeSet& edges, NodeKey n) {
  std::set<NodeKey> nb;
  each_edge_from(edges, n, [&](NodeKey o, std::uint8_t) { nb.insert(o); });
  return nb.size();
}

// Highest degree first, then ascending key; keeps the first `cap`.
inline std::vector<NodeKey> top_by_degree(const EdgeSet& edges, std::set<NodeKey> nodes, std::size_t cap) {
  std::vector<NodeKey> v(nodes.begin(), nodes.end());
  std::sort(v.begin(), v.end(), [&](NodeKey a, NodeKey b) {
    const auto da = degree(edges, a), db = degree(edges, b);
    return da != db ? da > db : a < b;
  });
  if (v.size() > cap) v.resize(cap);
  return v;
}

inline std::set<NodeKey> one_hop(const EdgeSet& edges, const std::set<NodeKey>& seeds, std::uint8_t kinds,
                                 std::size_t fanout) {
  std::set<NodeKey> out;
  for (NodeKey s : seeds) {
    std::set<NodeKey> cand;
    each_edge_from(edges, s, [&](NodeKey o, std::uint8_t k) {
      if ((k & kinds) && !seeds.count(o)) cand.insert(o);
    });
    for (NodeKey k : top_by_degree(edges, cand, fanout)) out.insert(k);
  }
  return out;
}

// Every length-2 click path s - m - k.
inline std::set<NodeKey> two_hop(const EdgeSet& edges, const std::set<NodeKey>& seeds,
                                 const std::set<NodeKey>& exclude, std::size_t fanout) {
  std::set<NodeKey> out;
  for (NodeKey s : seeds) {
    std::set<NodeKey> cand;
    each_edge_from(edges, s, [&](NodeKey m, std::uint8_t k1) {
      if (!(k1 & kClickBit)) return;
      each_edge_from(edges, m, [&](NodeKey far, std::uint8_t k2) {
        if ((k2 & kClickBit) && far != s && !seeds.count(far) && !exclude.count(far)) cand.insert(far);
      });
    });
    for (NodeKey k : top_by_degree(edges, cand, fanout)) out.insert(k);
  }
  return out;
}

struct GstResult {
  std::set<NodeKey> one, two, selected;
  std::vector<std::size_t> records;
};

inline GstResult gst(const EdgeSet& edges, const std::set<NodeKey>& seeds, const GstConfig& cfg,
                     const std::vector<SampleRecord>& records) {
  GstResult r;
  const std::uint8_t kinds = (cfg.one_hop_click ? kClickBit : 0) | (cfg.one_hop_pay ? kPayBit : 0);
  auto one = one_hop(edges, seeds, kinds, cfg.per_hop_fanout);
  std::set<NodeKey> two;
  if (cfg.enable_two_hop_coclick) two = two_hop(edges, seeds, one, cfg.per_hop_fanout);
  auto one_kept = top_by_degree(edges, one, cfg.max_expanded_nodes);
  auto two_kept = top_by_degree(edges, two, cfg.max_expanded_nodes - one_kept.size());
  r.one.insert(one_kept.begin(), one_kept.end());
  r.two.insert(two_kept.begin(), two_kept.end());
  r.selected = seeds;
  r.selected.insert(r.one.begin(), r.one.end());
  r.selected.insert(r.two.begin(), r.two.end());
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::size_t>> keyed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& x = records[i];
    const bool u = r.selected.count(NodeKey::user(x.user_id)) > 0;
    const bool it = r.selected.count(NodeKey::item(x.item_id)) > 0;
    if (cfg.require_both_endpoints ? u && it : u || it) {
      keyed.push_back({x.window, x.user_id, x.item_id, i});
    }
  }
  std::sort(keyed.begin(), keyed.end());
  for (const auto& k : keyed) r.records.push_back(std::get<3>(k));
  return r;
}

/// Random bipartite event list over at most `max_nodes` nodes.
struct RandomGraphCase {
  std::size_t users = 0, items = 0;
  std::vector<InteractionEvent> events;
  std::vector<SampleRecord> records;
  std::set<NodeKey> seeds;
};

inline RandomGraphCase random_graph_case(std::mt19937_64& rng, std::size_t max_nodes = 100) {
  RandomGraphCase c;
  std::uniform_int_distribution<std::size_t> half(3, max_nodes / 2);
  c.users = half(rng);
  c.items = half(rng);
  std::uniform_int_distribution<std::uint32_t> u(0, static_cast<std::uint32_t>(c.users - 1));
  std::uniform_int_distribution<std::uint32_t> it(0, static_cast<std::uint32_t>(c.items - 1));
  std::bernoulli_distribution pay(0.3);
  const std::size_t n_events = std::uniform_int_distribution<std::size_t>(1, 3 * (c.users + c.items))(rng);
  for (std::size_t k = 0; k < n_events; ++k) {
    const auto uu = u(rng), ii = it(rng);
    c.events.push_back({uu, ii, EventKind::click, Domain::source, 0});
    if (pay(rng)) c.events.push_back({uu, ii, EventKind::pay, Domain::source, 0});
  }
  const std::size_t n_records = std::uniform_int_distribution<std::size_t>(0, 80)(rng);
  for (std::size_t k = 0; k < n_records; ++k) {
    SampleRecord r;
    r.user_id = u(rng);
    r.item_id = it(rng);
    r.window = std::uniform_int_distribution<std::uint32_t>(0, 2)(rng);
    c.records.push_back(r);
  }
  // Seeds: random nodes that carry at least one edge.
  std::bernoulli_distribution pick(0.15);
  for (const auto& e : c.events) {
    if (pick(rng)) c.seeds.insert(NodeKey::user(e.user_id));
    if (pick(rng)) c.seeds.insert(NodeKey::item(e.item_id));
  }
  return c;
}

inline NodeSet to_node_set(const std::set<NodeKey>& s) { return NodeSet(s.begin(), s.end()); }

}  // namespace ecat::oracle
