#include <gtest/gtest.h>

#include <sstream>

#include "loom/harness.hpp"
#include "loom/layout.hpp"
#include "loom/programs.hpp"

using namespace loom;

namespace {

Graph make_graph(int n, std::vector<Edge> edges, bool directed = false, bool weighted = false) {
    Graph g;
    g.n = n;
    g.directed = directed;
    g.weighted = weighted;
    g.edges = std::move(edges);
    return g;
}

}  // namespace

TEST(Schema, RangesDisjointAndCovering) {
    auto prog = build_scc(SimConfig{});
    const auto& s = *prog.schema;
    std::vector<int> owner(s.width(), 0);
    for (const auto& g : s.groups())
        for (int i = 0; i < g.width; ++i) ++owner[g.col(i)];
    for (int c : owner) EXPECT_EQ(c, 1);
}

TEST(Schema, DuplicateAndUnknownNamesThrow) {
    ColumnSchema s;
    s.add("a", 1, Scope::global);
    EXPECT_THROW(s.add("a", 1, Scope::global), SchemaError);
    EXPECT_THROW(s.group("b"), SchemaError);
    EXPECT_THROW(s.add("c", 0, Scope::node), SchemaError);
}

TEST(Schema, RepeatedPaddingKeepsNamesUnique) {
    ColumnSchema s;
    s.add("a", 1, Scope::global);
    s.pad_to(3);
    s.pad_to(5);
    EXPECT_EQ(s.width(), 5);
}

TEST(PadAdjacency, SingleNode) {
    auto a = pad_adjacency(make_graph(1, {}), 2, false);
    EXPECT_TRUE(a.data.is_zero());
    EXPECT_EQ(a.data.rows(), 2u);
}

TEST(PadAdjacency, ShiftedByOne) {
    auto a = pad_adjacency(make_graph(2, {{1, 2, 1.0}}, true), 3, false);
    EXPECT_EQ(a.data(1, 2), 1.0);
    EXPECT_EQ(a.data(2, 1), 0.0);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(a.data(0, i), 0.0);
        EXPECT_EQ(a.data(i, 0), 0.0);
    }
}

TEST(PadAdjacency, ExtraPaddingIsZero) {
    auto a = pad_adjacency(make_graph(2, {{1, 2, 1.0}}), 5, false);
    for (int i = 0; i < 5; ++i)
        for (int j = 3; j < 5; ++j) {
            EXPECT_EQ(a.data(i, j), 0.0);
            EXPECT_EQ(a.data(j, i), 0.0);
        }
}

TEST(PadAdjacency, TooSmallThrows) { EXPECT_THROW(pad_adjacency(make_graph(3, {}), 3, false), SizeError); }

TEST(PadAdjacency, TransposeCommutes) {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        Graph g = random_graph(GraphKind::er_directed, 7, rng);
        auto a = pad_adjacency(g, 9, false), b = pad_adjacency(g, 9, true);
        EXPECT_EQ(a.data.transposed(), b.data);
    }
}

TEST(Encode, Initialisation) {
    SimConfig cfg;
    auto prog = build_dijkstra(cfg);
    Graph g = make_graph(4, {{1, 2, 0.5}, {2, 3, 2.0}, {3, 4, 1.0}}, false, true);
    auto [X, A] = encode(g, AlgorithmId::dijkstra, 2, cfg, prog.schema);
    for (int i = 1; i <= 4; ++i) {
        EXPECT_EQ(X.get("dists", i), i == 2 ? 0.0 : cfg.omega_hat());
        EXPECT_EQ(X.get("prev", i), i);
        EXPECT_EQ(X.get("B_local", i), 1.0);
        EXPECT_EQ(X.get("B_global", i), 0.0);
    }
    EXPECT_EQ(X.get("B_global", 0), 1.0);
    EXPECT_EQ(X.get("B_local", 0), 0.0);
    EXPECT_EQ(X.weight_scale, 0.5);
    EXPECT_EQ(A.data(2, 3), 4.0);
    EXPECT_EQ(A.data(1, 2), 1.0);
}

TEST(Encode, DecodeRoundTrip) {
    SimConfig cfg;
    auto prog = build_dijkstra(cfg);
    Graph g = make_graph(3, {{1, 2, 1.0}}, false, true);
    auto [X, A] = encode(g, AlgorithmId::dijkstra, 1, cfg, prog.schema);
    EXPECT_THROW(decode(X, AlgorithmId::dijkstra), NotTerminated);
    auto d = decode(X, AlgorithmId::dijkstra, false);
    EXPECT_EQ(d.prev, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(d.dists, (std::vector<double>{0.0, cfg.omega_hat(), cfg.omega_hat()}));
}

TEST(Encode, BoundsAndCapacity) {
    SimConfig cfg;
    cfg.omega = 10.0;
    auto prog = build_bfs(cfg);
    Rng rng(1);
    EXPECT_THROW(encode(random_graph(GraphKind::er_connected, 16, rng), AlgorithmId::bfs, 1, cfg, prog.schema),
                 BoundsError);
    SimConfig big;
    big.omega = 1e7;
    auto p2 = build_bfs(big);
    EXPECT_THROW(encode(make_graph(700, {}), AlgorithmId::bfs, 1, big, p2.schema), CapacityExceeded);
}

TEST(Encode, StartOutOfRange) {
    SimConfig cfg;
    auto prog = build_bfs(cfg);
    EXPECT_THROW(encode(make_graph(3, {}), AlgorithmId::bfs, 4, cfg, prog.schema), BoundsError);
}

TEST(Decode, OutputsPerAlgorithm) {
    SimConfig cfg;
    for (auto algo : {AlgorithmId::dfs, AlgorithmId::scc}) {
        auto prog = build_program(algo, cfg);
        auto [X, A] = encode(make_graph(2, {{1, 2, 1.0}}, algo == AlgorithmId::scc), algo, 1, cfg, prog.schema);
        X.set("term", 0, 1.0);
        auto d = decode(X, algo);
        if (algo == AlgorithmId::scc) {
            EXPECT_EQ(d.sccs, (std::vector<int>{1, 2}));
            EXPECT_TRUE(d.prev.empty());
        } else {
            EXPECT_EQ(d.prev, (std::vector<int>{1, 2}));
            EXPECT_TRUE(d.sccs.empty());
        }
    }
}

TEST(GraphFile, ParseAndEchoVerbatim) {
    std::string text = "3 2 undirected weighted\n1 2 0.250\n2 3  1.5\n";
    std::istringstream in(text);
    Graph g = parse_graph(in);
    EXPECT_EQ(g.n, 3);
    EXPECT_EQ(g.edges[0].weight, 0.25);
    EXPECT_EQ(format_graph(g), text);
}

TEST(GraphFile, Malformed) {
    for (std::string bad : {"", "3 1 sideways weighted\n1 2 1\n", "3 2 directed unweighted\n1 2\n",
                            "2 1 directed weighted\n1 2\n", "2 1 directed unweighted\n1 5\n",
                            "2 1 directed weighted\n1 2 -1\n"}) {
        std::istringstream in(bad);
        EXPECT_THROW(parse_graph(in), ParseError) << bad;
    }
}

TEST(Width, IndependentOfN) {
    SimConfig cfg;
    for (auto algo : {AlgorithmId::dijkstra, AlgorithmId::bfs, AlgorithmId::dfs, AlgorithmId::scc,
                      AlgorithmId::multitask}) {
        auto prog = build_program(algo, cfg);
        Rng rng(2);
        for (int n : {4, 64}) {
            Graph g = random_graph(default_kind(algo), n, rng);
            auto [X, A] = encode(g, algo, 1, cfg, prog.schema);
            EXPECT_EQ(X.d(), static_cast<std::size_t>(prog.schema->width()));
            EXPECT_EQ(X.K(), static_cast<std::size_t>(n + 1));
        }
    }
}
