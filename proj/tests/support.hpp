#pragma once

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "loom/builders.hpp"
#include "loom/harness.hpp"

namespace loom::testing {

// A schema, a build context on it and helpers to make inputs once every
// layer has been built.
struct Bench {
    std::shared_ptr<ColumnSchema> schema = base_schema();
    SimConfig cfg;
    BuildContext ctx;
    int n;

    explicit Bench(int nodes, const SimConfig& c = {}) : cfg(c), ctx(primitive_context(c, schema)), n(nodes) {}

    Bench& add(const std::string& name, int width, Scope scope, ValueKind kind = ValueKind::real) {
        schema->add(name, width, scope, kind);
        return *this;
    }

    PositionTable table() const { return enumerate_positions(n, ctx.spec); }

    InputMatrix input() const { return blank_input(schema, n + 1, n, table(), n); }

    PaddedAdjacency adjacency(const Graph* g = nullptr) const {
        if (g) return pad_adjacency(*g, n + 1, false);
        return {Matrix(n + 1, n + 1), n};
    }

    InputMatrix apply(const TransformerLayer& L, const InputMatrix& X, const Graph* g = nullptr) const {
        return apply_layer(X, adjacency(g), L, cfg);
    }
};

struct PropertyResult {
    std::size_t passed = 0;
    std::size_t total = 0;
    std::string first_failure;

    bool ok() const { return total > 0 && passed == total; }
    void record(bool good, const std::string& what) {
        ++total;
        if (good) ++passed;
        else if (first_failure.empty()) first_failure = what;
    }
    void merge(const PropertyResult& o) {
        passed += o.passed;
        total += o.total;
        if (first_failure.empty()) first_failure = o.first_failure;
    }
};

// Columns outside the layer's declared writes must be bit-identical and
// undeclared scratch columns zero after the layer. Returns an empty string when both hold.
inline std::string frame_violation(const InputMatrix& X, const InputMatrix& Y, const TransformerLayer& L) {
    const auto& s = *X.schema;
    for (int c = 0; c < s.width(); ++c) {
        const auto& g = s.group_of(c);
        bool declared = std::find(L.info.writes.begin(), L.info.writes.end(), g.name) != L.info.writes.end();
        for (std::size_t r = 0; r < X.K(); ++r) {
            if (declared) continue;
            if (g.scratch) {
                if (Y.data(r, c) != 0.0) return L.info.name + ": scratch " + s.column_name(c) + " left nonzero";
                continue;
            }
            if (std::bit_cast<std::uint64_t>(X.data(r, c)) != std::bit_cast<std::uint64_t>(Y.data(r, c)))
                return L.info.name + ": undeclared column " + s.column_name(c) + " changed at row " + std::to_string(r);
        }
    }
    return {};
}

inline std::string fmt_pair(double a, double b) { return "(" + fmt(a) + ", " + fmt(b) + ")"; }

// less-than and less-equal against exact comparison when |c - d| >= epsilon.
inline PropertyResult less_than_property(int cases, std::uint64_t seed) {
    PropertyResult res;
    Bench b(2);
    b.add("c", 1, Scope::global).add("d", 1, Scope::global).add("e", 1, Scope::global, ValueKind::boolean);
    b.add("f", 1, Scope::global, ValueKind::boolean);
    auto lt = build_less_than(b.ctx, "c", "d", "e");
    auto le = build_less_equal(b.ctx, "c", "f");
    Rng rng(seed);
    const double eps = b.cfg.epsilon;
    for (int i = 0; i < cases; ++i) {
        const double scale = i % 3 == 0 ? 10.0 : i % 3 == 1 ? 1000.0 : 0.1 * b.cfg.omega;
        double c = std::round((rng.unit() * 2.0 - 1.0) * scale * 4.0) / 4.0;
        double d = std::round((rng.unit() * 2.0 - 1.0) * scale * 4.0) / 4.0;
        if (std::fabs(c - d) < eps) d = c + (rng.chance(0.5) ? eps : -eps);
        InputMatrix X = b.input();
        X.set("c", 0, c);
        X.set("d", 0, d);
        X.set("e", 0, rng.unit());
        X.set("f", 0, rng.unit());
        InputMatrix Y = b.apply(lt, X);
        res.record(Y.get("e") == (c < d ? 1.0 : 0.0) && frame_violation(X, Y, lt).empty(),
                   "less-than " + fmt_pair(c, d) + " gave " + fmt(Y.get("e")));
        X.set("c", 0, c - d);
        Y = b.apply(le, X);
        bool want = c - d <= 0.0;
        res.record(Y.get("f") == (want ? 1.0 : 0.0), "less-equal " + fmt(c - d) + " gave " + fmt(Y.get("f")));
    }
    return res;
}

// cond-select against exact branch selection for clause magnitudes <= omega - 1.
inline PropertyResult cond_select_property(int cases, std::uint64_t seed) {
    PropertyResult res;
    Bench b(3);
    b.add("gamma", 1, Scope::global, ValueKind::boolean).add("v1", 1, Scope::global).add("v0", 1, Scope::global);
    b.add("out", 1, Scope::global).add("g_n", 1, Scope::node, ValueKind::boolean);
    b.add("w1", 1, Scope::node).add("w0", 1, Scope::node).add("o_n", 1, Scope::node);
    auto glob = build_cond_select(b.ctx, {{"v1", "v0", "out"}}, "gamma");
    auto node = build_cond_select(b.ctx, {{"w1", "w0", "o_n"}}, "g_n");
    Rng rng(seed);
    const double lim = b.cfg.omega - 1.0;
    auto draw = [&](int i) {
        double mag = i % 4 == 0 ? lim : i % 4 == 1 ? 10.0 : i % 4 == 2 ? 1e3 : 1.0;
        return std::round((rng.unit() * 2.0 - 1.0) * mag * 8.0) / 8.0;
    };
    for (int i = 0; i < cases; ++i) {
        double v1 = std::clamp(draw(i), -lim, lim), v0 = std::clamp(draw(i + 1), -lim, lim);
        double g = rng.chance(0.5) ? 1.0 : 0.0;
        InputMatrix X = b.input();
        X.set("gamma", 0, g);
        X.set("v1", 0, v1);
        X.set("v0", 0, v0);
        X.set("out", 0, draw(i + 2));
        InputMatrix Y = b.apply(glob, X);
        res.record(Y.get("out") == (g == 1.0 ? v1 : v0) && frame_violation(X, Y, glob).empty(),
                   "cond-select g=" + fmt(g) + " " + fmt_pair(v1, v0) + " gave " + fmt(Y.get("out")));
        InputMatrix Z = b.input();
        std::vector<double> want;
        for (int r = 1; r <= 3; ++r) {
            double gn = rng.chance(0.5) ? 1.0 : 0.0, a = std::clamp(draw(i + r), -lim, lim),
                   c = std::clamp(draw(i + r + 1), -lim, lim);
            Z.set("g_n", r, gn);
            Z.set("w1", r, a);
            Z.set("w0", r, c);
            want.push_back(gn == 1.0 ? a : c);
        }
        InputMatrix W = b.apply(node, Z);
        res.record(W.node_column("o_n") == want && frame_violation(Z, W, node).empty(), "node cond-select");
    }
    return res;
}

// Frame property and scratch hygiene of every builder on randomised inputs.
inline PropertyResult frame_property(int rounds, std::uint64_t seed) {
    PropertyResult res;
    Rng rng(seed);
    for (int round = 0; round < rounds; ++round) {
        const int n = 3 + static_cast<int>(rng.below(6));
        using Build = std::function<TransformerLayer(BuildContext&)>;
        std::vector<Build> builders = {
            [](BuildContext& c) { return build_less_than(c, "g1", "g2", "gb"); },
            [](BuildContext& c) { return build_cond_select(c, {{"n1", "n2", "n2"}}, "nb"); },
            [](BuildContext& c) { return build_reinit(c); },
            [](BuildContext& c) { return build_increment(c, "pos", "pos2"); },
            [](BuildContext& c) { return build_increment(c, "pos", "pos"); },
            [](BuildContext& c) { return build_read_X(c, "pos", "n1", "g1"); },
            [](BuildContext& c) { return build_read_A(c, "pos", "n1", Orientation::row); },
            [](BuildContext& c) { return build_read_A(c, "pos", "n2", Orientation::column); },
            [](BuildContext& c) { return build_write_row(c, "pos", "gb", "nb"); },
            [](BuildContext& c) { return build_all_one(c, "nb", "gb"); },
            [](BuildContext& c) { return build_repeat_n(c, "g1", "n1"); },
            [](BuildContext& c) { return build_repeat_n(c, "g1", "n2", true); },
            [](BuildContext& c) { return build_mask_visited(c, "n1", "nb", "n2"); },
            [](BuildContext& c) { return build_logic_affine(c, {{{"n1", 1.0}, {"nb", 1.0}}, -1.0}, "nb2"); },
            [](BuildContext& c) { return build_less_equal(c, "g1", "gb"); },
            [](BuildContext& c) { return build_round_binary(c, {"nb", "gb"}); },
            [](BuildContext& c) { return build_round_posenc(c, "pos").first; },
            [](BuildContext& c) { return build_round_posenc(c, "pos").second; },
        };
        Graph g = random_graph(GraphKind::er_directed, n, rng);
        for (const auto& build : builders) {
            Bench b(n);
            b.add("pos", 2, Scope::global, ValueKind::position).add("pos2", 2, Scope::global, ValueKind::position);
            b.add("g1", 1, Scope::global).add("g2", 1, Scope::global).add("gb", 1, Scope::global, ValueKind::boolean);
            b.add("n1", 1, Scope::node).add("n2", 1, Scope::node).add("nb", 1, Scope::node, ValueKind::boolean);
            b.add("nb2", 1, Scope::node, ValueKind::boolean);
            add_min_block_columns(*b.schema);
            TransformerLayer L = build(b.ctx);
            auto table = b.table();
            InputMatrix X = b.input();
            X.set_pos("pos", 0, table[1 + rng.below(n)]);
            X.set_pos("pos2", 0, table[rng.below(n + 1)]);
            X.set_pos("idx_cur", 0, table[rng.below(n + 1)]);
            X.set("g1", 0, static_cast<double>(rng.range(-50, 50)));
            X.set("g2", 0, static_cast<double>(rng.range(-50, 50)));
            X.set("gb", 0, static_cast<double>(rng.below(2)));
            X.set("term_min", 0, static_cast<double>(rng.below(2)));
            X.set("val_best", 0, static_cast<double>(rng.range(-50, 50)));
            for (int r = 1; r <= n; ++r) {
                X.set("n1", r, static_cast<double>(rng.range(-50, 50)));
                X.set("n2", r, static_cast<double>(rng.range(-50, 50)));
                X.set("nb", r, static_cast<double>(rng.below(2)));
                X.set("nb2", r, static_cast<double>(rng.below(2)));
                X.set("visit_min", r, static_cast<double>(rng.below(2)));
                X.set("masked", r, static_cast<double>(rng.range(-50, 50)));
            }
            InputMatrix Y = b.apply(L, X, &g);
            std::string v = frame_violation(X, Y, L);
            res.record(v.empty(), v);
        }
    }
    return res;
}

// Every pair among the positions that fit in one turn is separated.
inline PropertyResult posenc_separation(double delta, std::size_t count) {
    PropertyResult res;
    RotationSpec spec = quantize_angle(delta);
    auto t = enumerate_positions(count - 1, spec);
    std::size_t bad = 0, total = 0;
    std::string first;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            ++total;
            if (!(dot(t[i], t[j]) < dot(t[i], t[i]) && dot(t[i], t[j]) <= spec.cos_hat)) {
                ++bad;
                if (first.empty()) first = "p" + std::to_string(i) + " vs p" + std::to_string(j);
            }
        }
    res.total = total;
    res.passed = total - bad;
    res.first_failure = first;
    return res;
}

// Decoded outputs stay bit-identical for `extra` iterations after
// termination, and so does the flag when write-prevention latches it.
inline PropertyResult post_termination(AlgorithmId algo, const SimConfig& cfg, int n, int count, std::size_t extra,
                                       std::uint64_t seed) {
    PropertyResult res;
    auto prog = suite_program(algo, cfg, false);
    for (const auto& g : generate_graphs(default_kind(algo), n, count, seed)) {
        RunSpec spec;
        auto [X, A] = encode(g, algo, spec.start, cfg, prog.schema, encode_options(spec));
        InputMatrix Y = run_loop(prog, X, A, cfg).X;
        const Matrix done = Y.data;
        Decoded first = decode(Y, algo);
        Runner runner(prog, A);
        bool ok = true;
        for (std::size_t i = 0; i < extra && ok; ++i) {
            runner.step(Y, cfg.activation);
            Decoded d = decode(Y, algo, false);
            // Without write-prevention the termination flag is recomputed each
            // iteration; only the latched form keeps it set.
            bool latched = !cfg.write_prevention_enabled || Y.data(0, prog.term_column) == done(0, prog.term_column);
            ok = latched && d.prev == first.prev && d.sccs == first.sccs && d.dists.size() == first.dists.size();
            for (std::size_t k = 0; ok && k < d.dists.size(); ++k)
                ok = std::bit_cast<std::uint64_t>(d.dists[k]) == std::bit_cast<std::uint64_t>(first.dists[k]);
        }
        res.record(ok, to_string(algo) + " output changed after termination");
    }
    return res;
}

}  // namespace loom::testing
