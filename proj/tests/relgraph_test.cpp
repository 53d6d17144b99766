#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "eurnet/ops.hpp"
#include "eurnet/relgraph.hpp"
#include "eurnet_verify/gradcheck.hpp"
#include "eurnet_verify/oracles.hpp"

using namespace eurnet;

TEST_CASE("from_edges: empty, cycle, duplicates, ranges") {
  auto empty = RelGraph::from_edges(1, 1, {});
  CHECK(empty.num_edges() == 0);
  CHECK_FALSE(empty.has_norm_weight(0, 0));
  CHECK(degree_profile(empty).overall == 0.0);

  std::vector<Edge> cycle{{0, 1, 0}, {1, 0, 0}};
  auto g = RelGraph::from_edges(2, 1, cycle);
  CHECK(degree_profile(g).overall == 1.0);
  CHECK(g.norm_weight(0, 0) == 1.0);
  CHECK(g.norm_weight(1, 0) == 1.0);

  std::vector<Edge> dup{{0, 1, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(RelGraph::from_edges(2, 1, dup), DuplicateEdgeError);
  CHECK(RelGraph::from_edges(2, 1, dup, true).num_edges() == 1);

  std::vector<Edge> bad{{0, 2, 0}};
  CHECK_THROWS_AS(RelGraph::from_edges(2, 1, bad), std::out_of_range);
  std::vector<Edge> bad_rel{{0, 1, 1}};
  CHECK_THROWS_AS(RelGraph::from_edges(2, 1, bad_rel), std::out_of_range);
}

TEST_CASE("norm weights invert neighborhood size") {
  std::mt19937_64 rng(1);
  auto g = verify::random_graph(rng, 16, 3, 0.4);
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    for (std::size_t r = 0; r < g.num_relations(); ++r) {
      const auto deg = g.in_degree(v, r);
      if (deg == 0) continue;
      CHECK(g.norm_weight(v, r) == 1.0 / static_cast<double>(deg));
      CHECK(std::abs(g.norm_weight(v, r) * static_cast<double>(deg) - 1.0) <= 1e-15);
    }
}

TEST_CASE("canonical edge order and lookup") {
  std::vector<Edge> edges{{2, 0, 1}, {1, 0, 1}, {0, 1, 0}, {2, 0, 0}};
  auto g = RelGraph::from_edges(3, 2, edges);
  auto listed = g.edges();
  std::vector<Edge> expected{{2, 0, 0}, {1, 0, 1}, {2, 0, 1}, {0, 1, 0}};
  CHECK(listed == expected);
  for (std::size_t i = 0; i < listed.size(); ++i) {
    CHECK(g.edge(i) == listed[i]);
    CHECK(g.find_edge(listed[i].src, listed[i].dst, listed[i].rel) == i);
  }
  CHECK(g.find_edge(0, 0, 0) == RelGraph::npos);
}

TEST_CASE("degree profile hand count") {
  std::vector<Edge> edges{{0, 1, 0}, {1, 2, 0}, {2, 3, 0}, {3, 0, 0}, {0, 2, 1}, {1, 3, 1}};
  auto p = degree_profile(RelGraph::from_edges(4, 2, edges));
  CHECK(p.per_relation[0] == 1.0);
  CHECK(p.per_relation[1] == 0.5);
  CHECK(p.overall == 0.75);
}

TEST_CASE("rel_aggregate: empty graph, cycle, counter") {
  auto empty = RelGraph::from_edges(3, 2, {});
  auto out = rel_aggregate(empty, Tensor<double>::ones({3, 4}));
  CHECK(out.shape() == Shape{6, 4});
  for (double v : out.values()) CHECK(v == 0.0);

  std::vector<Edge> cycle{{0, 1, 0}, {1, 0, 0}};
  auto g = RelGraph::from_edges(2, 1, cycle);
  OpCounter counter;
  Tensor<double> slots;
  {
    CounterScope scope(counter);
    slots = rel_aggregate(g, Tensor<double>::matrix({{1}, {3}}));
  }
  CHECK(slots.values() == std::vector<double>{3, 1});
  CHECK(counter.total() == 2 * 2 * 1);

  CHECK_THROWS_AS(rel_aggregate(g, Tensor<double>::ones({3, 1})), DimensionError);
}

TEST_CASE("rel_aggregate matches dense adjacency oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 2 + seed % 15;
    auto g = verify::random_graph(rng, n, 1 + seed % 4, 0.3);
    auto z = verify::random_tensor<double>(rng, {n, 5});
    auto expected = verify::dense_rel_aggregate(g, z);
    CHECK(verify::max_abs_diff(rel_aggregate(g, z).values(), expected) <= 1e-12);
  }
}

TEST_CASE("rel_aggregate is permutation equivariant") {
  std::mt19937_64 rng(42);
  const std::size_t n = 12, nrel = 3, c = 4;
  auto g = verify::random_graph(rng, n, nrel, 0.3);
  auto z = verify::random_tensor<double>(rng, {n, c});
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> inverse(n);
  for (std::size_t i = 0; i < n; ++i) inverse[perm[i]] = i;
  std::vector<double> zp(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) zp[perm[i] * c + j] = z.at(i, j);

  auto base = rel_aggregate(g, z);
  auto moved = rel_aggregate(g.relabel(perm), Tensor<double>::from({n, c}, zp));
  // Summation order follows ascending source ids, which the relabeling changes,
  // so compare to rounding level.
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t r = 0; r < nrel; ++r)
      for (std::size_t j = 0; j < c; ++j)
        CHECK(std::abs(base.at(v * nrel + r, j) - moved.at(perm[v] * nrel + r, j)) <= 1e-14);
}

TEST_CASE("rel_aggregate gradient") {
  std::mt19937_64 rng(9);
  auto g = verify::random_graph(rng, 7, 2, 0.4);
  auto z = verify::random_tensor<double>(rng, {7, 3});
  auto w = verify::random_tensor<double>(rng, {14, 3});
  auto r = verify::gradcheck([&] { return sum(hadamard(rel_aggregate(g, z), w)); }, {z});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("angle bins") {
  std::array<double, 3> a{0, 0, 0}, b{1, 0, 0}, c{1, 1, 0}, back{0, 0, 0}, ahead{2, 0, 0};
  CHECK(angle_bin(a, b, c, 8) == 4);
  CHECK(angle_bin(a, b, back, 8) == 7);
  CHECK(angle_bin(a, b, ahead, 8) == 0);
  CHECK(angle_bin(a, a, c, 8) == 0);
  CHECK(angle_bin(a, b, c, 1) == 0);
}

TEST_CASE("line graph: single edge, right angle, sizes") {
  auto coords = Tensor<double>::from({3, 3}, {0, 0, 0, 1, 0, 0, 1, 1, 0});
  std::vector<Edge> one{{0, 1, 0}};
  auto single = build_line_graph(RelGraph::from_edges(3, 1, one), coords);
  CHECK(single.num_nodes() == 1);
  CHECK(single.num_edges() == 0);

  std::vector<Edge> chain{{0, 1, 0}, {1, 2, 0}};
  auto g = RelGraph::from_edges(3, 1, chain);
  auto line = build_line_graph(g, coords);
  REQUIRE(line.num_edges() == 1);
  const Edge e = line.edge(0);
  CHECK(g.edge(e.src) == Edge{0, 1, 0});
  CHECK(g.edge(e.dst) == Edge{1, 2, 0});
  CHECK(e.rel == 4);
  CHECK(line.num_relations() == 8);

  CHECK_THROWS_AS(build_line_graph(g, Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST_CASE("line graph reverse pairs follow the switch") {
  auto coords = Tensor<double>::from({2, 3}, {0, 0, 0, 1, 0, 0});
  std::vector<Edge> both{{0, 1, 0}, {1, 0, 0}};
  auto g = RelGraph::from_edges(2, 1, both);
  auto with = build_line_graph(g, coords);
  CHECK(with.num_edges() == 2);
  for (const Edge& e : with.edges()) CHECK(e.rel == 7);
  auto without = build_line_graph(g, coords, {.num_bins = 8, .include_reverse = false});
  CHECK(without.num_edges() == 0);
}

TEST_CASE("line graph equals brute force pair enumeration") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto g = verify::random_graph(rng, 6, 2, 0.35, true);
    auto coords = verify::random_tensor<double>(rng, {6, 3}, 5.0);
    auto line = build_line_graph(g, coords);
    CHECK(line.num_nodes() == g.num_edges());
    auto got = line.edges();
    std::set<Edge> got_set(got.begin(), got.end());
    CHECK(got_set == verify::brute_force_line_edges(g, coords, 8, true));
  }
}

TEST_CASE("edge list text round trip and parse errors") {
  std::vector<Edge> edges{{0, 1, 2}, {3, 4, 0}};
  std::ostringstream os;
  write_edge_list(os, edges);
  std::istringstream is("# header\n" + os.str());
  CHECK(read_edge_list(is) == edges);

  std::istringstream bad("0\t1\t0\n0\tx\t1\n");
  try {
    read_edge_list(bad);
    FAIL("expected parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}
