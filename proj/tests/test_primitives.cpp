#include <gtest/gtest.h>

#include "support.hpp"

using namespace loom;
using loom::testing::Bench;

namespace {

Graph make_graph(int n, std::vector<Edge> edges, bool directed = false) {
    Graph g;
    g.n = n;
    g.directed = directed;
    g.weighted = true;
    g.edges = std::move(edges);
    return g;
}

void expect_frame(const InputMatrix& X, const InputMatrix& Y, const TransformerLayer& L) {
    EXPECT_EQ(loom::testing::frame_violation(X, Y, L), "");
}

}  // namespace

TEST(LessThan, Examples) {
    Bench b(2);
    b.add("c", 1, Scope::global).add("d", 1, Scope::global).add("e", 1, Scope::global, ValueKind::boolean);
    auto L = build_less_than(b.ctx, "c", "d", "e");
    auto run = [&](double c, double d) {
        InputMatrix X = b.input();
        X.set("c", 0, c);
        X.set("d", 0, d);
        InputMatrix Y = b.apply(L, X);
        expect_frame(X, Y, L);
        return Y.get("e");
    };
    EXPECT_EQ(run(1.0, 3.0), 1.0);
    EXPECT_EQ(run(3.0, 1.0), 0.0);
    EXPECT_EQ(run(2.0, 2.0), 0.0);
    EXPECT_EQ(run(-4.0, -3.0), 1.0);
    EXPECT_EQ(run(0.0, b.cfg.epsilon / 2), 0.5);
}

TEST(LessThan, ThousandRandomCases) {
    auto r = loom::testing::less_than_property(1000, 11);
    EXPECT_TRUE(r.ok()) << r.passed << "/" << r.total << " " << r.first_failure;
}

TEST(CondSelect, Examples) {
    Bench b(2);
    b.add("gamma", 1, Scope::global, ValueKind::boolean).add("v1", 1, Scope::global).add("v0", 1, Scope::global);
    b.add("out", 1, Scope::global);
    auto L = build_cond_select(b.ctx, {{"v1", "v0", "out"}}, "gamma");
    auto run = [&](double g, double v1, double v0) {
        InputMatrix X = b.input();
        X.set("gamma", 0, g);
        X.set("v1", 0, v1);
        X.set("v0", 0, v0);
        X.set("out", 0, 123.0);
        return b.apply(L, X).get("out");
    };
    EXPECT_EQ(run(0.0, 5.0, 2.0), 2.0);
    EXPECT_EQ(run(1.0, 5.0, 2.0), 5.0);
    EXPECT_EQ(run(1.0, -7.5, 2.0), -7.5);
    // A clause beyond the bound leaks into the other branch.
    EXPECT_EQ(run(0.0, b.cfg.omega + 1.0, 2.0), 3.0);
}

TEST(CondSelect, ThousandRandomCases) {
    auto r = loom::testing::cond_select_property(1000, 12);
    EXPECT_TRUE(r.ok()) << r.passed << "/" << r.total << " " << r.first_failure;
}

TEST(CondSelect, ScopeMismatchRejected) {
    Bench b(2);
    b.add("gamma", 1, Scope::global, ValueKind::boolean).add("v", 1, Scope::node).add("w", 1, Scope::node);
    EXPECT_THROW(build_cond_select(b.ctx, {{"v", "v", "w"}}, "gamma"), SchemaError);
}

TEST(Reinit, ResetsScanWhenMinimumTerminated) {
    Bench b(4);
    add_min_block_columns(*b.schema);
    auto L = build_reinit(b.ctx);
    auto t = b.table();
    InputMatrix X = b.input();
    X.set_pos("idx_cur", 0, t[3]);
    X.set("val_best", 0, 7.0);
    X.set("term_min", 0, 1.0);
    InputMatrix Y = b.apply(L, X);
    EXPECT_EQ(Y.pos("idx_cur"), t[0]);
    EXPECT_EQ(Y.get("val_best"), b.cfg.mask_value());
    EXPECT_EQ(Y.get("term_min"), 0.0);
    expect_frame(X, Y, L);

    X.set("term_min", 0, 0.0);
    Y = b.apply(L, X);
    EXPECT_EQ(Y.pos("idx_cur"), t[3]);
    EXPECT_EQ(Y.get("val_best"), 7.0);
}

TEST(Increment, StepsThroughTable) {
    Bench b(20);
    b.add("p", 2, Scope::global, ValueKind::position).add("q", 2, Scope::global, ValueKind::position);
    auto L = build_increment(b.ctx, "p", "p");
    auto copy = build_increment(b.ctx, "p", "q");
    auto t = b.table();
    InputMatrix X = b.input();
    X.set_pos("p", 0, t[0]);
    InputMatrix Y = b.apply(copy, X);
    EXPECT_EQ(Y.pos("q"), t[1]);
    EXPECT_EQ(Y.pos("p"), t[0]);
    for (int i = 1; i <= 20; ++i) {
        X = b.apply(L, X);
        EXPECT_EQ(X.pos("p"), t[i]) << i;
        EXPECT_NEAR(std::hypot(X.pos("p")[0], X.pos("p")[1]), 1.0, 1e-15);
    }
}

TEST(Increment, LinearOnNegatedInput) {
    Bench b(4);
    b.add("p", 2, Scope::global, ValueKind::position);
    auto L = build_increment(b.ctx, "p", "p");
    auto t = b.table();
    InputMatrix X = b.input();
    X.set_pos("p", 0, {-t[2][0], -t[2][1]});
    InputMatrix Y = b.apply(L, X);
    EXPECT_EQ(Y.pos("p"), (Pos{-t[3][0], -t[3][1]}));
}

TEST(ReadX, SelectsRow) {
    Bench b(3);
    b.add("c", 2, Scope::global, ValueKind::position).add("d", 1, Scope::node).add("e", 1, Scope::global);
    auto L = build_read_X(b.ctx, "c", "d", "e");
    auto t = b.table();
    InputMatrix X = b.input();
    X.set_pos("c", 0, t[2]);
    for (int r = 1; r <= 3; ++r) X.set("d", r, 10.0 * r);
    InputMatrix Y = b.apply(L, X);
    EXPECT_EQ(Y.get("e"), 20.0);
    expect_frame(X, Y, L);
    for (int r = 1; r <= 3; ++r) EXPECT_EQ(Y.get("e", r), 0.0);
    for (int r = 1; r <= 3; ++r) X.set("d", r, 0.0);
    EXPECT_EQ(b.apply(L, X).get("e"), 0.0);
}

TEST(ReadA, RowAndColumn) {
    Bench b(2);
    b.add("c", 2, Scope::global, ValueKind::position).add("r", 1, Scope::node).add("k", 1, Scope::node);
    auto row = build_read_A(b.ctx, "c", "r", Orientation::row);
    auto col = build_read_A(b.ctx, "c", "k", Orientation::column);
    auto t = b.table();
    Graph g = make_graph(2, {{1, 2, 4.0}}, true);
    InputMatrix X = b.input();
    X.set_pos("c", 0, t[1]);
    EXPECT_EQ(b.apply(row, X, &g).node_column("r"), (std::vector<double>{0.0, 4.0}));
    X.set_pos("c", 0, t[2]);
    EXPECT_EQ(b.apply(col, X, &g).node_column("k"), (std::vector<double>{4.0, 0.0}));
    EXPECT_EQ(b.apply(row, X, &g).node_column("r"), (std::vector<double>{0.0, 0.0}));
    Graph empty = make_graph(2, {});
    EXPECT_EQ(b.apply(row, X, &empty).node_column("r"), (std::vector<double>{0.0, 0.0}));
}

TEST(ReadA, TwentyRandomGraphs) {
    Rng rng(13);
    for (int k = 0; k < 20; ++k) {
        const int n = 2 + static_cast<int>(rng.below(9));
        Bench b(n);
        b.add("c", 2, Scope::global, ValueKind::position).add("r", 1, Scope::node).add("k", 1, Scope::node);
        auto row = build_read_A(b.ctx, "c", "r", Orientation::row);
        auto col = build_read_A(b.ctx, "c", "k", Orientation::column);
        auto t = b.table();
        Graph g = random_graph(k % 2 ? GraphKind::weighted_er : GraphKind::er_directed, n, rng);
        auto dense = g.dense();
        for (int i = 1; i <= n; ++i) {
            InputMatrix X = b.input();
            X.set_pos("c", 0, t[i]);
            auto r = b.apply(row, X, &g).node_column("r");
            auto c = b.apply(col, X, &g).node_column("k");
            for (int j = 1; j <= n; ++j) {
                ASSERT_EQ(r[j - 1], dense[i - 1][j - 1]) << k << " row " << i << " " << j;
                ASSERT_EQ(c[j - 1], dense[j - 1][i - 1]) << k << " column " << i << " " << j;
            }
        }
    }
}

TEST(WriteRow, AddsAtSelectedRow) {
    Bench b(3);
    b.add("c", 2, Scope::global, ValueKind::position).add("d", 1, Scope::global).add("e", 1, Scope::node);
    auto L = build_write_row(b.ctx, "c", "d", "e");
    auto t = b.table();
    InputMatrix X = b.input();
    X.set_pos("c", 0, t[2]);
    X.set("d", 0, 1.0);
    X.set("e", 2, 0.5);
    InputMatrix Y = b.apply(L, X);
    EXPECT_EQ(Y.node_column("e"), (std::vector<double>{0.0, 1.5, 0.0}));
    X.set("d", 0, 0.0);
    EXPECT_EQ(b.apply(L, X).node_column("e"), (std::vector<double>{0.0, 0.5, 0.0}));
}

TEST(AllOne, Examples) {
    for (int n : {1, 3}) {
        Bench b(n);
        b.add("c", 1, Scope::node, ValueKind::boolean).add("e", 1, Scope::global, ValueKind::boolean);
        auto L = build_all_one(b.ctx, "c", "e");
        InputMatrix X = b.input();
        for (int r = 1; r <= n; ++r) X.set("c", r, 1.0);
        EXPECT_EQ(b.apply(L, X).get("e"), 1.0);
        if (n > 1) {
            X.set("c", 2, 0.0);
            EXPECT_EQ(b.apply(L, X).get("e"), 0.0);
        }
    }
}

TEST(RepeatN, BroadcastsAndPreserves) {
    Bench b(3);
    b.add("c", 1, Scope::global).add("d", 1, Scope::node);
    auto L = build_repeat_n(b.ctx, "c", "d");
    auto P = build_repeat_n(b.ctx, "c", "d", true);
    InputMatrix X = b.input();
    X.set("c", 0, 7.0);
    for (int r = 1; r <= 3; ++r) X.set("d", r, r);
    EXPECT_EQ(b.apply(L, X).node_column("d"), (std::vector<double>{7.0, 7.0, 7.0}));
    EXPECT_EQ(b.apply(P, X).node_column("d"), (std::vector<double>{8.0, 9.0, 10.0}));
    X.set("c", 0, 0.0);
    EXPECT_EQ(b.apply(L, X).node_column("d"), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(MaskVisited, Examples) {
    Bench b(2);
    b.add("v0", 1, Scope::node).add("c", 1, Scope::node, ValueKind::boolean).add("e", 1, Scope::node);
    auto L = build_mask_visited(b.ctx, "v0", "c", "e");
    const double m = b.cfg.mask_value();
    auto run = [&](std::vector<double> visit) {
        InputMatrix X = b.input();
        for (int r = 1; r <= 2; ++r) {
            X.set("v0", r, 2.0 * r + 1.0);
            X.set("c", r, visit[r - 1]);
        }
        return b.apply(L, X).node_column("e");
    };
    EXPECT_EQ(run({1.0, 0.0}), (std::vector<double>{m, 5.0}));
    EXPECT_EQ(run({0.0, 0.0}), (std::vector<double>{3.0, 5.0}));
    EXPECT_EQ(run({1.0, 1.0}), (std::vector<double>{m, m}));
}

TEST(LogicAffine, RectifiedForms) {
    Bench b(1);
    b.add("a", 1, Scope::global, ValueKind::boolean).add("t", 1, Scope::global, ValueKind::boolean);
    b.add("x", 1, Scope::global, ValueKind::boolean).add("out", 1, Scope::global, ValueKind::boolean);
    b.add("ma", 1, Scope::global).add("mb", 1, Scope::global).add("diff", 1, Scope::global);
    // out <- relu(a + t - x - 1)
    auto conj = build_logic_affine(b.ctx, {{{"a", 1.0}, {"t", 1.0}, {"x", -1.0}}, -1.0}, "out");
    // diff <- mb - ma, unrectified
    auto diff = build_logic_affine(b.ctx, {{{"mb", 1.0}, {"ma", -1.0}}, 0.0}, "diff", std::nullopt, false);
    // out <- relu(relu(x - t) + t + a - 1)
    auto nest = build_logic_affine(b.ctx, {{{"t", 1.0}, {"a", 1.0}}, -1.0}, "out",
                                   std::make_pair(Affine{{{"x", 1.0}, {"t", -1.0}}, 0.0}, 1.0));
    for (int bits = 0; bits < 8; ++bits) {
        double a = bits & 1, t = (bits >> 1) & 1, x = (bits >> 2) & 1;
        InputMatrix X = b.input();
        X.set("a", 0, a);
        X.set("t", 0, t);
        X.set("x", 0, x);
        EXPECT_EQ(b.apply(conj, X).get("out"), std::max(0.0, a + t - x - 1.0)) << bits;
        EXPECT_EQ(b.apply(nest, X).get("out"), std::max(0.0, std::max(0.0, x - t) + t + a - 1.0)) << bits;
    }
    InputMatrix X = b.input();
    X.set("ma", 0, 3.0);
    X.set("mb", 0, 1.5);
    EXPECT_EQ(b.apply(diff, X).get("diff"), -1.5);
}

TEST(LessEqual, Examples) {
    Bench b(1);
    b.add("c", 1, Scope::global).add("e", 1, Scope::global, ValueKind::boolean);
    auto L = build_less_equal(b.ctx, "c", "e");
    auto run = [&](double c) {
        InputMatrix X = b.input();
        X.set("c", 0, c);
        return b.apply(L, X).get("e");
    };
    EXPECT_EQ(run(0.0), 1.0);
    EXPECT_EQ(run(1.0), 0.0);
    EXPECT_EQ(run(-2.0), 1.0);
    EXPECT_EQ(run(b.cfg.epsilon), 0.0);
}

TEST(RoundBinary, Examples) {
    Bench b(2);
    b.add("g", 1, Scope::global, ValueKind::boolean).add("v", 1, Scope::node, ValueKind::boolean);
    auto L = build_round_binary(b.ctx, {"g", "v"});
    auto run = [&](double x) {
        InputMatrix X = b.input();
        X.set("g", 0, x);
        X.set("v", 1, x);
        InputMatrix Y = b.apply(L, X);
        EXPECT_EQ(Y.get("v", 1), Y.get("g"));
        return Y.get("g");
    };
    EXPECT_EQ(run(0.9), 1.0);
    EXPECT_EQ(run(0.1), 0.0);
    EXPECT_EQ(run(1.0), 1.0);
    EXPECT_EQ(run(0.0), 0.0);
    EXPECT_EQ(run(0.5 + b.cfg.eta / 2), 0.5);
}

TEST(RoundPosenc, SnapsNoisyPositions) {
    for (bool soft : {false, true}) {
        SimConfig cfg = soft ? SimConfig::softmax_defaults() : SimConfig{};
        Bench b(12, cfg);
        b.add("p", 2, Scope::global, ValueKind::position);
        auto [A, B] = build_round_posenc(b.ctx, "p");
        auto t = b.table();
        Rng rng(14);
        // Rounding snaps to the node positions p1..pn.
        for (int i = 1; i <= 12; ++i) {
            InputMatrix X = b.input();
            Pos noisy{t[i][0] + (rng.unit() - 0.5) * 2e-3, t[i][1] + (rng.unit() - 0.5) * 2e-3};
            X.set_pos("p", 0, noisy);
            InputMatrix Y = b.apply(B, b.apply(A, X));
            EXPECT_EQ(Y.pos("p"), t[i]) << soft << " " << i;
            EXPECT_EQ(Y.get("S_pos", 0, 0), 0.0);
            EXPECT_EQ(Y.get("S_pos", 0, 1), 0.0);
        }
        InputMatrix X = b.input();
        X.set_pos("p", 0, t[5]);
        EXPECT_EQ(b.apply(B, b.apply(A, X)).pos("p"), t[5]);
    }
}

TEST(Frame, EveryBuilderKeepsUndeclaredColumnsAndClearsScratch) {
    auto r = loom::testing::frame_property(20, 15);
    EXPECT_TRUE(r.ok()) << r.passed << "/" << r.total << " " << r.first_failure;
}

TEST(Frame, ViolationIsReported) {
    Bench b(2);
    b.add("c", 1, Scope::global).add("d", 1, Scope::global);
    LayerBuilder B(b.ctx, "sneaky");
    B.assign(B.col("d"), B.c("c"));
    auto L = finish_layer(B);
    InputMatrix X = b.input();
    X.set("c", 0, 1.0);
    EXPECT_NE(loom::testing::frame_violation(X, b.apply(L, X), L), "");
}
