#include <doctest.h>

#include <random>

#include "ecat/graph.hpp"
#include "oracles.hpp"

using namespace ecat;

namespace {
InteractionEvent click(std::uint32_t u, std::uint32_t i) { return {u, i, EventKind::click, Domain::source, 0}; }
InteractionEvent pay(std::uint32_t u, std::uint32_t i) { return {u, i, EventKind::pay, Domain::source, 0}; }
NodeSet nodes(std::initializer_list<NodeKey> k) { return make_node_set(k); }
}  // namespace

TEST_CASE("build_graph basics") {
  std::vector<InteractionEvent> one = {click(0, 0)};
  auto g = build_graph(one, 5, 5);
  CHECK(g.nodes().size() == 2);
  CHECK(g.edge_count() == 1);

  std::vector<InteractionEvent> dup = {click(1, 2), click(1, 2), click(1, 2)};
  CHECK(build_graph(dup, 5, 5).edge_count() == 1);

  std::vector<InteractionEvent> co = {click(0, 4), click(1, 4), click(2, 4), pay(2, 4)};
  auto h = build_graph(co, 5, 5);
  CHECK(h.degree(NodeKey::item(4)) == 3);
  CHECK(h.edge_count() == 4);
  CHECK(h.has_edge(2, 4, EventKind::pay));
  CHECK_FALSE(h.has_edge(1, 4, EventKind::pay));

  std::vector<InteractionEvent> none;
  CHECK_THROWS_AS(build_graph(none, 5, 5), DataError);
  std::vector<InteractionEvent> oob = {click(7, 0)};
  CHECK_THROWS_AS(build_graph(oob, 5, 5), DataError);
}

TEST_CASE("adjacency is symmetric") {
  std::mt19937_64 rng(4);
  auto c = oracle::random_graph_case(rng);
  auto g = build_graph(c.events, c.users, c.items);
  for (const auto& n : g.nodes()) {
    for (const auto& nb : g.neighbors(n)) {
      const NodeKey other = n.kind == NodeKind::user ? NodeKey::item(nb.id) : NodeKey::user(nb.id);
      CHECK(other.kind != n.kind);
      bool back = false;
      for (const auto& b : g.neighbors(other)) back |= (b.id == n.id && b.kinds == nb.kinds);
      CHECK(back);
    }
  }
}

TEST_CASE("seed nodes are the vocabulary intersection") {
  // users 0..2, items 0..2; item 2 and user 2 carry no edges.
  std::vector<InteractionEvent> ev = {click(0, 0), click(1, 0), click(1, 1)};
  auto g = build_graph(ev, 3, 3);
  CHECK(seed_nodes(g, nodes({NodeKey::user(2), NodeKey::item(2)})).empty());
  auto s = seed_nodes(g, nodes({NodeKey::user(1), NodeKey::user(2), NodeKey::item(0), NodeKey::item(2)}));
  CHECK(s == nodes({NodeKey::user(1), NodeKey::item(0)}));
}

TEST_CASE("one-hop examples") {
  std::vector<InteractionEvent> star;
  for (std::uint32_t i = 0; i < 5; ++i) star.push_back(click(0, i));
  auto g = build_graph(star, 1, 5);
  auto one = expand_one_hop(g, nodes({NodeKey::user(0)}), kClickBit | kPayBit);
  CHECK(one.size() == 5);
  CHECK(expand_one_hop(g, nodes({NodeKey::user(0)}), kPayBit).empty());
  CHECK_THROWS_AS(expand_one_hop(g, nodes({NodeKey::user(3)}), kClickBit), DataError);
}

TEST_CASE("two-hop examples") {
  std::vector<InteractionEvent> path = {click(1, 1), click(2, 1)};
  auto g = build_graph(path, 3, 2);
  auto two = expand_two_hop(g, nodes({NodeKey::user(1)}), {});
  CHECK(contains(two, NodeKey::user(2)));
  std::vector<InteractionEvent> apart = {click(0, 0), click(1, 1)};
  auto h = build_graph(apart, 2, 2);
  CHECK(expand_two_hop(h, nodes({NodeKey::user(0), NodeKey::item(1)}), {}).empty());
}

TEST_CASE("gst_select saturation and empty seeds") {
  std::mt19937_64 rng(8);
  auto c = oracle::random_graph_case(rng);
  auto g = build_graph(c.events, c.users, c.items);
  GstConfig cfg;
  std::vector<NodeKey> all;
  for (std::uint32_t u = 0; u < c.users; ++u) all.push_back(NodeKey::user(u));
  for (std::uint32_t i = 0; i < c.items; ++i) all.push_back(NodeKey::item(i));
  auto every = gst_select(g, seed_nodes(g, make_node_set(all)), cfg, c.records);
  // Records whose endpoints never appear in an event cannot be admitted.
  std::size_t reachable = 0;
  for (const auto& r : c.records) {
    reachable += g.has_node(NodeKey::user(r.user_id)) && g.has_node(NodeKey::item(r.item_id));
  }
  CHECK(every.record_indices.size() == reachable);
  CHECK(gst_select(g, {}, cfg, c.records).record_indices.empty());
}

TEST_CASE("20-record toy corpus against the filter oracle") {
  std::vector<InteractionEvent> ev = {click(0, 0), click(1, 0), pay(1, 0), click(1, 1), click(2, 2), click(3, 2)};
  auto g = build_graph(ev, 4, 3);
  std::vector<SampleRecord> recs;
  for (std::uint32_t k = 0; k < 20; ++k) {
    SampleRecord r;
    r.user_id = k % 4;
    r.item_id = (k * 7) % 3;
    r.window = k % 2;
    recs.push_back(r);
  }
  GstConfig cfg;
  std::set<NodeKey> seeds = {NodeKey::user(0)};
  auto got = gst_select(g, oracle::to_node_set(seeds), cfg, recs);
  auto want = oracle::gst(oracle::edges_of(ev), seeds, cfg, recs);
  CHECK(got.record_indices == want.records);
  // user0 -> item0 (one hop) -> user1 (two hop); selection {u0, u1, i0}.
  CHECK(got.selected == nodes({NodeKey::user(0), NodeKey::user(1), NodeKey::item(0)}));

  // Either endpoint: every record of u0, u1 or i0 qualifies.
  cfg.require_both_endpoints = false;
  auto loose = gst_select(g, oracle::to_node_set(seeds), cfg, recs);
  CHECK(loose.record_indices == oracle::gst(oracle::edges_of(ev), seeds, cfg, recs).records);
  std::size_t expected = 0;
  for (const auto& r : recs) expected += r.user_id <= 1 || r.item_id == 0;
  CHECK(loose.record_indices.size() == expected);
  CHECK(loose.record_indices.size() > got.record_indices.size());
}

TEST_CASE("expansions match brute-force path enumeration on random graphs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = oracle::random_graph_case(rng);
    auto g = build_graph(c.events, c.users, c.items);
    const auto edges = oracle::edges_of(c.events);
    GstConfig cfg;
    cfg.one_hop_pay = trial % 3 != 0;
    cfg.one_hop_click = trial % 5 != 0;
    cfg.enable_two_hop_coclick = trial % 4 != 0;
    cfg.require_both_endpoints = trial % 6 != 1;
    if (trial % 2) {
      cfg.per_hop_fanout = 1 + trial % 4;
      cfg.max_expanded_nodes = 2 + trial % 7;
    }
    const auto seeds = oracle::to_node_set(c.seeds);
    const std::uint8_t kinds = cfg.one_hop_kinds();
    if (kinds) {
      CHECK(expand_one_hop(g, seeds, kinds, cfg.per_hop_fanout) ==
            oracle::to_node_set(oracle::one_hop(edges, c.seeds, kinds, cfg.per_hop_fanout)));
    }
    const auto one = oracle::one_hop(edges, c.seeds, kinds, cfg.per_hop_fanout);
    CHECK(expand_two_hop(g, seeds, oracle::to_node_set(one), cfg.per_hop_fanout) ==
          oracle::to_node_set(oracle::two_hop(edges, c.seeds, one, cfg.per_hop_fanout)));
    if (!kinds) continue;
    auto got = gst_select(g, seeds, cfg, c.records);
    auto want = oracle::gst(edges, c.seeds, cfg, c.records);
    CHECK(got.one_hop == oracle::to_node_set(want.one));
    CHECK(got.two_hop == oracle::to_node_set(want.two));
    CHECK(got.selected == oracle::to_node_set(want.selected));
    CHECK(got.record_indices == want.records);
    // Disjointness and the cap.
    CHECK(set_intersection(got.one_hop, seeds).empty());
    CHECK(set_intersection(got.two_hop, set_union(seeds, got.one_hop)).empty());
    CHECK(got.one_hop.size() + got.two_hop.size() <= cfg.max_expanded_nodes);
  }
}

TEST_CASE("enlarging seeds never shrinks the uncapped selection") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    auto c = oracle::random_graph_case(rng);
    auto g = build_graph(c.events, c.users, c.items);
    GstConfig cfg;
    auto small = gst_select(g, oracle::to_node_set(c.seeds), cfg, c.records);
    auto bigger_seeds = c.seeds;
    bigger_seeds.insert(NodeKey::user(c.events.front().user_id));
    bigger_seeds.insert(NodeKey::item(c.events.back().item_id));
    auto big = gst_select(g, oracle::to_node_set(bigger_seeds), cfg, c.records);
    std::set<std::size_t> b(big.record_indices.begin(), big.record_indices.end());
    for (auto i : small.record_indices) CHECK(b.count(i) == 1);
  }
}

TEST_CASE("gst_select is deterministic") {
  std::mt19937_64 rng(5);
  auto c = oracle::random_graph_case(rng);
  auto g = build_graph(c.events, c.users, c.items);
  GstConfig cfg;
  cfg.max_expanded_nodes = 4;
  auto a = gst_select(g, oracle::to_node_set(c.seeds), cfg, c.records);
  auto b = gst_select(g, oracle::to_node_set(c.seeds), cfg, c.records);
  CHECK(a.selected == b.selected);
  CHECK(a.record_indices == b.record_indices);
}
