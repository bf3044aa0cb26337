#pragma once

#include <cstdio>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "loom/config.hpp"
#include "loom/layout.hpp"
#include "loom/oracles.hpp"
#include "loom/primitives.hpp"
#include "loom/transformer.hpp"

namespace loom {

struct ProgramOptions {
    bool clrs_order = false;
    bool rounding = false;
    bool write_prevention = false;
};

struct ArchitectureCounts {
    std::size_t layers;
    std::size_t heads;
};

inline ArchitectureCounts expected_counts(AlgorithmId a) {
    switch (a) {
        case AlgorithmId::dijkstra: return {17, 3};
        case AlgorithmId::bfs: return {17, 3};
        case AlgorithmId::dfs: return {15, 3};
        case AlgorithmId::scc: return {22, 4};
        case AlgorithmId::multitask: return {19, 3};
        case AlgorithmId::graph_subleq: return {11, 3};
    }
    return {0, 0};
}

// Collects layer builders, inserts instrumentation and fixes the common width.
class Assembler {
public:
    Assembler(AlgorithmId algo, const SimConfig& cfg, const ProgramOptions& opt, std::vector<HeadKind> slots)
        : schema(base_schema()), ctx(schema, cfg, std::move(slots)), algo_(algo), opt_(opt) {
        cfg.validate();
    }

    std::shared_ptr<ColumnSchema> schema;
    BuildContext ctx;

    const ProgramOptions& options() const { return opt_; }

    // Boolean that gates every write after the minimum block.
    std::string gate() const { return opt_.write_prevention ? "write" : "term_min"; }

    LayerBuilder& layer(const std::string& name) {
        ++core_;
        entries_.push_back({std::make_unique<LayerBuilder>(ctx, name, "step " + std::to_string(core_)), false});
        return *entries_.back().builder;
    }

    LayerBuilder& extra(const std::string& name) {
        entries_.push_back(
            {std::make_unique<LayerBuilder>(ctx, name, "step " + std::to_string(core_) + "+"), true});
        entries_.back().builder->info().instrumentation = true;
        return *entries_.back().builder;
    }

    void add_columns(const std::vector<std::tuple<std::string, int, Scope, ValueKind>>& cols) {
        for (const auto& [name, w, scope, kind] : cols) schema->add(name, w, scope, kind);
    }

    // Instrumentation columns; present only when the option is on.
    void instrumentation_columns() {
        if (opt_.write_prevention) {
            schema->add("write", 1, Scope::global, ValueKind::boolean);
            schema->add("s_term", 1, Scope::global, ValueKind::boolean);
        }
        if (opt_.rounding) schema->add("S_pos", 2, Scope::global, ValueKind::position, true);
    }

    // Copies term at the start of an iteration so that it can never be lowered.
    void latch_start() {
        if (!opt_.write_prevention) return;
        auto& L = extra("latch term");
        int h = L.self_head();
        L.attn_assign(h, L.col("term"), L.col("s_term"));
        L.writes("s_term");
    }

    void latch_end() {
        if (!opt_.write_prevention) return;
        auto& L = extra("latch term");
        Lin b = L.c("B_global");
        // s_term is left as is; the next latch_start overwrites it. Clearing it
        // here would happen in attention, before the MLP reads it.
        op_logic(L, "term", b - L.relu(b - L.c("term") - L.c("s_term")));
    }

    // write = term_min and not term.
    void write_flag() {
        if (!opt_.write_prevention) return;
        auto& L = extra("write flag");
        op_logic(L, "write", L.relu(L.c("term_min") - L.c("term")));
    }

    LoopedProgram finish(const std::string& term_column) {
        std::vector<std::unique_ptr<LayerBuilder>> seq;
        for (auto& e : entries_) {
            LayerInfo info = e.builder->info();
            seq.push_back(std::move(e.builder));
            if (!opt_.rounding) continue;
            if (!info.bool_outputs.empty()) {
                auto L = std::make_unique<LayerBuilder>(ctx, "round-binary", info.step + "+");
                L->info().instrumentation = true;
                op_round_binary(*L, info.bool_outputs);
                seq.push_back(std::move(L));
            }
            for (const auto& g : info.pos_outputs) {
                auto A = std::make_unique<LayerBuilder>(ctx, "round-posenc soft", info.step + "+");
                A->info().instrumentation = true;
                op_round_pos_a(*A, g, A->col("S_pos", 0), A->col("S_pos", 1));
                A->writes("S_pos");
                seq.push_back(std::move(A));
                auto B = std::make_unique<LayerBuilder>(ctx, "round-posenc sharp", info.step + "+");
                B->info().instrumentation = true;
                op_round_pos_b(*B, g, "S_pos");
                seq.push_back(std::move(B));
            }
        }
        std::size_t d = schema->width();
        for (auto& L : seq) d = std::max(d, L->hidden_units());
        schema->pad_to(static_cast<int>(d));

        LoopedProgram prog;
        prog.schema = schema;
        prog.head_slots = ctx.slots;
        for (auto& L : seq) prog.layers.push_back(L->finalize(d));
        prog.term_column = schema->col(term_column);
        auto& m = prog.metadata;
        m.algorithm = algo_;
        m.layer_count = core_;
        m.core_layer_count = core_;
        m.distinct_head_count = ctx.slots.size();
        m.width = d;
        m.attention_width = kAttentionWidth;
        m.scratch_columns = schema->scratch_count();
        m.clrs_order = opt_.clrs_order;
        m.rounding = opt_.rounding;
        m.write_prevention = opt_.write_prevention;
        m.activation = ctx.cfg.activation;
        return prog;
    }

private:
    struct Entry {
        std::unique_ptr<LayerBuilder> builder;
        bool extra;
    };
    AlgorithmId algo_;
    ProgramOptions opt_;
    std::vector<Entry> entries_;
    std::size_t core_ = 0;
};

inline std::vector<SelectClause> operator+(std::vector<SelectClause> a, const std::vector<SelectClause>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

using Col = std::tuple<std::string, int, Scope, ValueKind>;
constexpr Scope kG = Scope::global;
constexpr Scope kN = Scope::node;
constexpr ValueKind kReal = ValueKind::real;
constexpr ValueKind kBool = ValueKind::boolean;
constexpr ValueKind kInt = ValueKind::integer;
constexpr ValueKind kPos = ValueKind::position;

inline void min_block_columns(Assembler& a, bool scc) {
    a.add_columns({Col{"idx_cur", 2, kG, kPos}, Col{"idx_cur_int", 1, kG, kInt}, Col{"idx_best", 2, kG, kPos},
                   Col{"idx_best_int", 1, kG, kInt}, Col{"val_cur", 1, kG, kReal}, Col{"val_best", 1, kG, kReal},
                   Col{"cond_min", 1, kG, kBool}, Col{"term_min", 1, kG, kBool}, Col{"visit_min", 1, kN, kBool},
                   Col{"masked", 1, kN, kReal}});
    if (scc)
        a.add_columns({Col{"scc_cur", 2, kG, kPos}, Col{"scc_cur_int", 1, kG, kInt}, Col{"scc_best", 2, kG, kPos},
                       Col{"scc_best_int", 1, kG, kInt}});
}

// Seven layers scanning one node per iteration over the masked column. After a
// full scan term_min is raised and idx_best/val_best hold the arg-minimum, the
// lowest index winning ties.
inline void build_minimum_block(Assembler& a, bool scc) {
    {
        auto& L = a.layer("reinit");
        op_reinit(L, scc);
    }
    {
        auto& L = a.layer("increment");
        op_increment(L, "idx_cur", "idx_cur");
        L.attn(L.self_head(), L.col("B_global"), L.col("idx_cur_int"));
        L.writes("idx_cur_int");
    }
    {
        auto& L = a.layer("read-x");
        op_read_x(L, "idx_cur", "masked", "val_cur");
        if (scc) {
            op_read_x(L, "idx_cur", "sccs_pos", "scc_cur", 0, 0);
            op_read_x(L, "idx_cur", "sccs_pos", "scc_cur", 1, 1);
            op_read_x(L, "idx_cur", "sccs", "scc_cur_int");
        }
    }
    {
        auto& L = a.layer("less-than");
        op_less_than(L, L.c("val_cur"), L.c("val_best"), "cond_min");
    }
    {
        auto& L = a.layer("cond-select");
        auto cl = std::vector<SelectClause>{keep_or("val_best", L.c("val_cur"))} + keep_or_pos(L, "idx_best", "idx_cur") +
                  std::vector<SelectClause>{keep_or("idx_best_int", L.c("idx_cur_int"))};
        if (scc) cl = cl + keep_or_pos(L, "scc_best", "scc_cur") +
                      std::vector<SelectClause>{keep_or("scc_best_int", L.c("scc_cur_int"))};
        op_cond_select(L, L.c("cond_min"), kG, cl);
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "idx_cur", L.c("B_global"), "visit_min");
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "visit_min", "term_min");
    }
}

// Broadcasts of global values into node columns, as one layer.
inline void repeat_all(LayerBuilder& L, const std::vector<std::pair<std::string, std::string>>& pairs) {
    for (const auto& [src, dst] : pairs) {
        const auto& g = L.schema().group(src);
        for (int i = 0; i < g.width; ++i) op_repeat_n(L, src, dst, false, i, i);
    }
}

inline LoopedProgram build_dijkstra(const SimConfig& cfg, const ProgramOptions& opt = {}) {
    Assembler a(AlgorithmId::dijkstra, cfg, opt, {HeadKind::identity, HeadKind::identity, HeadKind::adj_transpose});
    min_block_columns(a, false);
    a.add_columns({Col{"term", 1, kG, kBool}, Col{"node", 2, kG, kPos}, Col{"node_int", 1, kG, kInt},
                   Col{"dist", 1, kG, kReal}, Col{"visit", 1, kN, kBool}, Col{"dists", 1, kN, kReal},
                   Col{"prev", 1, kN, kInt}, Col{"a_row", 1, kN, kReal}, Col{"is_zero", 1, kN, kBool},
                   Col{"tm_n", 1, kN, kBool}, Col{"nint_n", 1, kN, kInt}, Col{"changes", 1, kN, kBool}});
    a.instrumentation_columns();
    const std::string gate = a.gate();
    a.latch_start();
    {
        auto& L = a.layer("mask");
        op_mask(L, "dists", "visit", "masked");
    }
    build_minimum_block(a, false);
    a.write_flag();
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c(gate), kG,
                       keep_or_pos(L, "node", "idx_best") +
                           std::vector<SelectClause>{keep_or("dist", L.c("val_best")),
                                                     keep_or("node_int", L.c("idx_best_int"))});
    }
    {
        auto& L = a.layer("read-a");
        op_read_a(L, "node", "a_row", Orientation::row);
    }
    {
        auto& L = a.layer("is-zero");
        Lin b = L.c("B_local");
        op_logic(L, "is_zero", L.relu(b - L.c("a_row") * (1.0 / L.cfg().epsilon)));
    }
    {
        auto& L = a.layer("repeat-n");
        op_repeat_n(L, "dist", "a_row", true);
        repeat_all(L, {{gate, "tm_n"}, {"node_int", "nint_n"}});
    }
    {
        auto& L = a.layer("less-than");
        op_less_than(L, L.c("a_row"), L.c("dists"), "changes");
    }
    {
        auto& L = a.layer("changes");
        Lin b = L.c("B_local");
        op_logic(L, "changes", L.relu(L.c("changes") + L.c("tm_n") - L.c("is_zero") - b));
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes"), kN, {keep_or("prev", L.c("nint_n")), keep_or("dists", L.c("a_row"))});
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "node", L.c(gate), "visit");
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "visit", "term");
    }
    a.latch_end();
    return a.finish("term");
}

inline LoopedProgram build_bfs(const SimConfig& cfg, bool clrs_order_variant = false, ProgramOptions opt = {}) {
    opt.clrs_order = clrs_order_variant;
    Assembler a(AlgorithmId::bfs, cfg, opt, {HeadKind::identity, HeadKind::identity, HeadKind::adj_transpose});
    min_block_columns(a, false);
    a.add_columns({Col{"term", 1, kG, kBool}, Col{"interrupt", 1, kG, kBool}, Col{"node", 2, kG, kPos},
                   Col{"node_int", 1, kG, kInt}, Col{"order", 1, kG, kReal}, Col{"visit", 1, kN, kBool},
                   Col{"disc", 1, kN, kBool}, Col{"orders", 1, kN, kReal}, Col{"prev", 1, kN, kInt},
                   Col{"a_row", 1, kN, kReal}, Col{"order_n", 1, kN, kReal}, Col{"tm_n", 1, kN, kBool},
                   Col{"nint_n", 1, kN, kInt}, Col{"changes", 1, kN, kBool}, Col{"equal", 1, kN, kBool}});
    a.instrumentation_columns();
    const std::string gate = a.gate();
    a.latch_start();
    {
        auto& L = a.layer("mask");
        op_mask(L, "orders", "visit", "masked");
    }
    build_minimum_block(a, false);
    a.write_flag();
    {
        auto& L = a.layer("cond-select");
        Lin b = L.c("B_global");
        Lin next = opt.clrs_order ? L.c("val_best") + b : L.c("order") + b;
        op_cond_select(L, L.c(gate), kG,
                       keep_or_pos(L, "node", "idx_best") +
                           std::vector<SelectClause>{keep_or("node_int", L.c("idx_best_int")), keep_or("order", next)});
    }
    {
        auto& L = a.layer("read-a");
        op_read_a(L, "node", "a_row", Orientation::row);
    }
    {
        auto& L = a.layer("repeat-n");
        repeat_all(L, {{"order", "order_n"}, {gate, "tm_n"}, {"node_int", "nint_n"}});
    }
    {
        auto& L = a.layer("changes");
        Lin b = L.c("B_local");
        op_logic(L, "changes", L.relu(L.c("a_row") + L.c("tm_n") - L.c("disc") - b));
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes"), kN, {keep_or("prev", L.c("nint_n")), keep_or("orders", L.c("order_n"))});
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "node", L.c(gate), "visit");
        Lin b = L.c("B_local");
        op_logic(L, "disc", b - L.relu(b - L.c("disc") - L.c("changes")));
    }
    {
        auto& L = a.layer("equal");
        Lin b = L.c("B_local");
        op_logic(L, "equal", L.relu(b - L.c("disc") + L.c("visit")));
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "visit", "term");
        op_all_one(L, "equal", "interrupt");
    }
    {
        auto& L = a.layer("terminate");
        Lin b = L.c("B_global");
        Lin t = L.c("term");
        op_logic(L, "term", L.relu(L.relu(L.c("interrupt") - t) + t + L.c(gate) - b));
    }
    a.latch_end();
    return a.finish("term");
}

inline LoopedProgram build_dfs(const SimConfig& cfg, const ProgramOptions& opt = {}) {
    Assembler a(AlgorithmId::dfs, cfg, opt, {HeadKind::identity, HeadKind::identity, HeadKind::adj_transpose});
    min_block_columns(a, false);
    a.add_columns({Col{"term", 1, kG, kBool}, Col{"node", 2, kG, kPos}, Col{"node_int", 1, kG, kInt},
                   Col{"order", 1, kG, kReal}, Col{"visit", 1, kN, kBool}, Col{"orders", 1, kN, kReal},
                   Col{"prev", 1, kN, kInt}, Col{"a_row", 1, kN, kReal}, Col{"order_n", 1, kN, kReal},
                   Col{"tm_n", 1, kN, kBool}, Col{"nint_n", 1, kN, kInt}, Col{"changes", 1, kN, kBool}});
    a.instrumentation_columns();
    const std::string gate = a.gate();
    a.latch_start();
    {
        auto& L = a.layer("mask");
        op_mask(L, "orders", "visit", "masked");
    }
    build_minimum_block(a, false);
    a.write_flag();
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c(gate), kG,
                       keep_or_pos(L, "node", "idx_best") +
                           std::vector<SelectClause>{keep_or("node_int", L.c("idx_best_int")),
                                                     keep_or("order", L.c("order") - L.c("B_global"))});
    }
    {
        auto& L = a.layer("read-a");
        op_read_a(L, "node", "a_row", Orientation::row);
    }
    {
        auto& L = a.layer("repeat-n");
        repeat_all(L, {{"order", "order_n"}, {gate, "tm_n"}, {"node_int", "nint_n"}});
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "node", L.c(gate), "visit");
    }
    {
        auto& L = a.layer("changes");
        Lin b = L.c("B_local");
        op_logic(L, "changes", L.relu(L.c("a_row") + L.c("tm_n") - L.c("visit") - b));
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes"), kN, {keep_or("prev", L.c("nint_n")), keep_or("orders", L.c("order_n"))});
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "visit", "term");
    }
    a.latch_end();
    return a.finish("term");
}

// Two-phase Kosaraju. Phase one (part = 0) runs a priority-driven depth-first
// search recording finish priorities in orders2; phase two (part = 1) visits
// nodes in reverse finish order over the transposed graph and labels components.
inline LoopedProgram build_scc(const SimConfig& cfg, const ProgramOptions& opt = {}) {
    Assembler a(AlgorithmId::scc, cfg, opt,
                {HeadKind::identity, HeadKind::identity, HeadKind::adj, HeadKind::adj_transpose});
    min_block_columns(a, true);
    a.add_columns({Col{"term", 1, kG, kBool},        Col{"part", 1, kG, kBool},        Col{"order", 1, kG, kReal},
                   Col{"node", 2, kG, kPos},         Col{"scc", 2, kG, kPos},          Col{"scc_int", 1, kG, kInt},
                   Col{"node_ref", 2, kG, kPos},     Col{"node_ref_int", 1, kG, kInt}, Col{"write1", 1, kG, kBool},
                   Col{"write2", 1, kG, kBool},      Col{"nva", 1, kG, kBool},         Col{"visit_scc", 1, kG, kBool},
                   Col{"orders", 1, kN, kReal},      Col{"visit", 1, kN, kBool},       Col{"orders1", 1, kN, kReal},
                   Col{"orders2", 1, kN, kReal},     Col{"visit1", 1, kN, kBool},      Col{"visit2", 1, kN, kBool},
                   Col{"visit3", 1, kN, kBool},      Col{"a_row", 1, kN, kReal},       Col{"a_col", 1, kN, kReal},
                   Col{"cur_i", 1, kN, kBool},       Col{"w1_n", 1, kN, kBool},        Col{"w2_n", 1, kN, kBool},
                   Col{"nvisit", 1, kN, kBool},      Col{"nva_n", 1, kN, kBool},       Col{"order_n", 1, kN, kReal},
                   Col{"nref_n", 2, kN, kPos},       Col{"nref_int_n", 1, kN, kInt},   Col{"changes1", 1, kN, kBool},
                   Col{"changes2", 1, kN, kBool},    Col{"changes3", 1, kN, kBool},    Col{"sccs", 1, kN, kInt},
                   Col{"sccs_pos", 2, kN, kPos}});
    a.instrumentation_columns();
    const std::string gate = a.gate();
    a.latch_start();
    {
        auto& L = a.layer("phase select");
        int h = L.broadcast_head();
        int s = L.scratch();
        L.attn(h, L.col("part"), s);
        Lin p = L.c(s);
        Lin b = L.c("B_local");
        double bound = clause_bound(L);
        L.assign(L.col("orders"), select_expr(L, L.c("orders2"), L.c("orders1"), p, b, bound));
        L.assign(L.col("visit"), select_expr(L, L.c("visit3"), L.c("visit2"), p, b, bound));
        L.writes("orders");
        L.writes("visit");
        L.emit(s, -p);
    }
    {
        auto& L = a.layer("mask");
        op_mask(L, "orders", "visit", "masked");
    }
    build_minimum_block(a, true);
    a.write_flag();
    {
        auto& L = a.layer("phase write");
        Lin b = L.c("B_global");
        op_logic(L, "write1", L.relu(L.c(gate) - L.c("part")));
        op_logic(L, "write2", L.relu(L.c(gate) + L.c("part") - b));
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c(gate), kG,
                       keep_or_pos(L, "node", "idx_best") + keep_or_pos(L, "scc", "scc_best") +
                           std::vector<SelectClause>{keep_or("scc_int", L.c("scc_best_int")),
                                                     keep_or("order", L.c("order") - L.c("B_global"))});
    }
    {
        auto& L = a.layer("read-a");
        op_read_a(L, "node", "a_row", Orientation::row);
        op_read_a(L, "node", "a_col", Orientation::column);
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "node", L.c("write1"), "visit1");
        op_write_row(L, "node", L.c("write2"), "visit3");
        int h = L.write_head("node");
        L.attn_assign(h, L.col("write1"), L.col("cur_i"));
        L.writes("cur_i");
        Lin b = L.c("B_local");
        op_logic(L, "visit1", b - L.relu(b - L.c("visit1")));
        op_logic(L, "visit3", b - L.relu(b - L.c("visit3")));
    }
    {
        auto& L = a.layer("neighbours visited");
        repeat_all(L, {{"write1", "w1_n"}, {"write2", "w2_n"}});
        op_logic(L, "nvisit", L.relu(L.c("w1_n") - L.relu(L.c("a_row") - L.c("visit1"))));
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "nvisit", "nva");
    }
    {
        auto& L = a.layer("read-x");
        op_read_x(L, "scc", "visit3", "visit_scc");
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("visit_scc"), kG,
                       keep_or_pos(L, "node_ref", "scc") +
                           std::vector<SelectClause>{keep_or("node_ref_int", L.c("scc_int"))});
    }
    {
        auto& L = a.layer("changes");
        repeat_all(L, {{"nva", "nva_n"}, {"order", "order_n"}, {"node_ref", "nref_n"}, {"node_ref_int", "nref_int_n"}});
        Lin b = L.c("B_local");
        op_logic(L, "changes1", L.relu(L.c("a_row") + L.c("w1_n") - L.c("visit1") - b));
        op_logic(L, "changes3", L.relu(L.c("a_col") + L.c("w2_n") - L.c("visit3") - b));
        op_logic(L, "changes2", L.relu(L.c("cur_i") + L.c("w1_n") + L.c("nva_n") - b * 2.0));
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes1"), kN, {keep_or("orders1", L.c("order_n"))});
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes2"), kN, {keep_or("orders2", L.c("order_n")), keep_or("visit2", L.c("visit1"))});
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes3"), kN,
                       std::vector<SelectClause>{keep_or("orders2", L.c("order_n")), keep_or("sccs", L.c("nref_int_n"))} +
                           keep_or_pos(L, "sccs_pos", "nref_n"));
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "visit3", "term");
        op_all_one(L, "visit2", "part");
    }
    a.latch_end();
    return a.finish("term");
}

// One network for the three traversals: gamma = 1 runs depth-first, gamma = 0
// runs shortest paths (breadth-first on unit weights).
inline LoopedProgram build_multitask(const SimConfig& cfg, const ProgramOptions& opt = {}) {
    Assembler a(AlgorithmId::multitask, cfg, opt, {HeadKind::identity, HeadKind::identity, HeadKind::adj_transpose});
    min_block_columns(a, false);
    a.add_columns({Col{"term", 1, kG, kBool},    Col{"gamma", 1, kG, kBool},   Col{"node", 2, kG, kPos},
                   Col{"node_int", 1, kG, kInt}, Col{"dist", 1, kG, kReal},    Col{"order", 1, kG, kReal},
                   Col{"visit", 1, kN, kBool},   Col{"dists", 1, kN, kReal},   Col{"prev", 1, kN, kInt},
                   Col{"a_row", 1, kN, kReal},   Col{"is_zero", 1, kN, kBool}, Col{"cand1", 1, kN, kReal},
                   Col{"cand2", 1, kN, kReal},   Col{"cand", 1, kN, kReal},    Col{"gamma_n", 1, kN, kBool},
                   Col{"tm_n", 1, kN, kBool},    Col{"nint_n", 1, kN, kInt},   Col{"changes1", 1, kN, kBool},
                   Col{"changes2", 1, kN, kBool}, Col{"changes", 1, kN, kBool}});
    a.instrumentation_columns();
    const std::string gate = a.gate();
    a.latch_start();
    {
        auto& L = a.layer("mask");
        op_mask(L, "dists", "visit", "masked");
    }
    build_minimum_block(a, false);
    a.write_flag();
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c(gate), kG,
                       keep_or_pos(L, "node", "idx_best") +
                           std::vector<SelectClause>{keep_or("node_int", L.c("idx_best_int")),
                                                     keep_or("dist", L.c("val_best"))});
    }
    {
        auto& L = a.layer("read-a");
        op_read_a(L, "node", "a_row", Orientation::row);
    }
    {
        auto& L = a.layer("is-zero");
        Lin b = L.c("B_local");
        op_logic(L, "is_zero", L.relu(b - L.c("a_row") * (1.0 / L.cfg().epsilon)));
    }
    {
        auto& L = a.layer("order");
        Lin b = L.c("B_global");
        op_logic(L, "order", L.c("order") - L.relu(L.c(gate) + L.c("gamma") - b), false);
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "node", L.c(gate), "visit");
    }
    {
        auto& L = a.layer("candidates");
        int self = L.self_head();
        L.attn_assign(self, L.col("a_row"), L.col("cand1"));
        op_repeat_n(L, "dist", "cand1", true);
        repeat_all(L, {{"order", "cand2"}, {gate, "tm_n"}, {"node_int", "nint_n"}, {"gamma", "gamma_n"}});
    }
    {
        auto& L = a.layer("less-than");
        op_less_than(L, L.c("cand1"), L.c("dists"), "changes1");
    }
    {
        auto& L = a.layer("changes");
        Lin b = L.c("B_local");
        op_logic(L, "changes2", L.relu(L.c("tm_n") + L.c("a_row") - L.c("visit") - b));
        op_logic(L, "changes1", L.relu(L.c("changes1") + L.c("tm_n") - L.c("is_zero") - b));
    }
    {
        auto& L = a.layer("mode select");
        Lin g = L.c("gamma_n");
        Lin b = L.c("B_local");
        double bound = clause_bound(L);
        L.assign(L.col("cand"), select_expr(L, L.c("cand2"), L.c("cand1"), g, b, bound));
        L.assign(L.col("changes"), select_expr(L, L.c("changes2"), L.c("changes1"), g, b, bound));
        L.writes("cand");
        L.writes("changes");
    }
    {
        auto& L = a.layer("cond-select");
        op_cond_select(L, L.c("changes"), kN, {keep_or("prev", L.c("nint_n")), keep_or("dists", L.c("cand"))});
    }
    {
        auto& L = a.layer("all-one");
        op_all_one(L, "visit", "term");
    }
    a.latch_end();
    return a.finish("term");
}

// Graph-SUBLEQ. Memory cell a lives in row a + 1, instruction k in row k + 1;
// the read-only graph block sits in the adjacency.
inline LoopedProgram build_graph_subleq(const SimConfig& cfg, const ProgramOptions& opt = {}) {
    // The machine has no termination flag, so write prevention does not apply.
    ProgramOptions o = opt;
    o.write_prevention = false;
    Assembler a(AlgorithmId::graph_subleq, cfg, o,
                {HeadKind::identity, HeadKind::identity, HeadKind::adj_transpose});
    a.add_columns({Col{"halt", 1, kG, kBool},    Col{"k", 2, kG, kPos},       Col{"k_next", 2, kG, kPos},
                   Col{"z_a1", 2, kG, kPos},     Col{"z_a2", 2, kG, kPos},    Col{"z_b", 2, kG, kPos},
                   Col{"z_c", 2, kG, kPos},      Col{"z_g", 1, kG, kBool},    Col{"m_aG", 1, kG, kReal},
                   Col{"m_aX", 1, kG, kReal},    Col{"m_a", 1, kG, kReal},    Col{"m_b", 1, kG, kReal},
                   Col{"diff", 1, kG, kReal},    Col{"cond_k", 1, kG, kBool}, Col{"M", 1, kN, kReal},
                   Col{"m_G", 1, kN, kReal},     Col{"I_a1", 2, kN, kPos},    Col{"I_a2", 2, kN, kPos},
                   Col{"I_b", 2, kN, kPos},      Col{"I_c", 2, kN, kPos},     Col{"I_g", 1, kN, kBool}});
    {
        auto& L = a.layer("fetch");
        for (const auto& f : {"a1", "a2", "b", "c"}) {
            std::string src = std::string("I_") + f, dst = std::string("z_") + f;
            op_read_x(L, "k", src, dst, 0, 0);
            op_read_x(L, "k", src, dst, 1, 1);
        }
        op_read_x(L, "k", "I_g", "z_g");
    }
    {
        auto& L = a.layer("read-a");
        op_read_a(L, "z_a1", "m_G", Orientation::row);
    }
    {
        auto& L = a.layer("read-x");
        op_read_x(L, "z_a2", "m_G", "m_aG");
    }
    {
        auto& L = a.layer("read-x");
        op_read_x(L, "z_a1", "M", "m_aX");
    }
    {
        auto& L = a.layer("cond-select");
        L.assign(L.col("m_a"), select_expr(L, L.c("m_aG"), L.c("m_aX"), L.c("z_g"), L.c("B_global"), clause_bound(L)));
        L.writes("m_a");
    }
    {
        auto& L = a.layer("read-x");
        op_read_x(L, "z_b", "M", "m_b");
    }
    {
        auto& L = a.layer("subtract");
        Lin d = L.c("m_b") - L.c("m_a");
        op_logic(L, "diff", L.relu(d) - L.relu(-d), false);
    }
    {
        auto& L = a.layer("write-row");
        op_write_row(L, "z_b", L.c("diff") - L.c("m_b"), "M");
    }
    {
        auto& L = a.layer("increment");
        op_increment(L, "k", "k_next");
    }
    {
        auto& L = a.layer("less-equal");
        op_less_equal(L, L.c("diff"), "cond_k");
    }
    {
        auto& L = a.layer("branch");
        Lin b = L.c("B_global");
        double bound = clause_bound(L);
        for (int i = 0; i < 2; ++i)
            L.assign(L.col("k", i), select_expr(L, L.c("z_c", i), L.c("k_next", i), L.c("cond_k"), b, bound));
        L.writes("k");
    }
    return a.finish("halt");
}

inline LoopedProgram build_program(AlgorithmId algo, const SimConfig& cfg, const ProgramOptions& opt = {}) {
    switch (algo) {
        case AlgorithmId::dijkstra: return build_dijkstra(cfg, opt);
        case AlgorithmId::bfs: return build_bfs(cfg, opt.clrs_order, opt);
        case AlgorithmId::dfs: return build_dfs(cfg, opt);
        case AlgorithmId::scc: return build_scc(cfg, opt);
        case AlgorithmId::multitask: return build_multitask(cfg, opt);
        case AlgorithmId::graph_subleq: return build_graph_subleq(cfg, opt);
    }
    throw SchemaError("unknown algorithm");
}

// Rebuilds the program with the rounding and write-prevention layers the
// config asks for. Core layer counts in the metadata are unchanged.
inline LoopedProgram instrument(const LoopedProgram& prog, const SimConfig& cfg) {
    ProgramOptions opt;
    opt.clrs_order = prog.metadata.clrs_order;
    opt.rounding = cfg.rounding_enabled;
    opt.write_prevention = cfg.write_prevention_enabled && prog.metadata.algorithm != AlgorithmId::graph_subleq;
    if (!opt.rounding && !opt.write_prevention && cfg.activation == prog.metadata.activation) return prog;
    return build_program(prog.metadata.algorithm, cfg, opt);
}

inline std::string listing(const LoopedProgram& prog) {
    std::ostringstream os;
    const auto& m = prog.metadata;
    os << "# " << to_string(m.algorithm) << ": " << m.layer_count << " layers, " << m.distinct_head_count
       << " heads, width " << m.width << ", attention width " << m.attention_width << ", scratch "
       << m.scratch_columns << "\n";
    if (prog.layers.size() != m.layer_count)
        os << "# instrumented: " << prog.layers.size() << " layers in total\n";
    os << "# head slots:";
    for (auto k : prog.head_slots) os << " " << to_string(k);
    os << "\n";
    for (std::size_t i = 0; i < prog.layers.size(); ++i) {
        const auto& l = prog.layers[i];
        char buf[16];
        std::snprintf(buf, sizeof buf, "L%02zu", i + 1);
        os << buf << "  " << l.info.step << " " << l.info.name;
        os << "  heads[";
        bool first = true;
        for (const auto& h : l.heads) {
            if (h.pattern.empty()) continue;
            os << (first ? "" : ", ") << to_string(h.kind) << ":" << h.pattern;
            first = false;
        }
        os << "]  writes[";
        for (std::size_t j = 0; j < l.info.writes.size(); ++j) os << (j ? " " : "") << l.info.writes[j];
        os << "]\n";
    }
    return os.str();
}

inline std::vector<std::string> default_trace_groups(AlgorithmId a) {
    switch (a) {
        case AlgorithmId::dijkstra: return {"term", "term_min", "node_int", "visit", "dists", "prev"};
        case AlgorithmId::bfs: return {"term", "term_min", "node_int", "visit", "orders", "prev"};
        case AlgorithmId::dfs: return {"term", "term_min", "node_int", "visit", "orders", "prev"};
        case AlgorithmId::scc: return {"term", "part", "term_min", "visit1", "visit2", "visit3", "sccs"};
        case AlgorithmId::multitask: return {"term", "term_min", "node_int", "visit", "dists", "prev"};
        case AlgorithmId::graph_subleq: return {"k", "M"};
    }
    return {};
}

// Graph-SUBLEQ state as a transformer input.
struct SubleqEncoding {
    InputMatrix X;
    PaddedAdjacency A;
    PositionTable table;
};

inline SubleqEncoding encode_subleq(const oracle::SubleqState& s, const SimConfig& cfg,
                                    std::shared_ptr<const ColumnSchema> schema) {
    const std::size_t n = s.M_G.size();
    // One spare zero cell past M backs the absorbing halt instruction.
    const std::size_t rows = std::max({s.M.size() + 1, n, s.I.size() + 1});
    const std::size_t K = rows + 1;
    RotationSpec spec = quantize_angle(cfg.delta);
    PositionTable table = enumerate_positions(K - 1, spec);
    InputMatrix x = blank_input(schema, K, static_cast<int>(K - 1), table, K - 1);
    auto pos_of = [&](std::int64_t idx, const char* what) {
        if (idx < 0 || static_cast<std::size_t>(idx) + 1 >= K)
            throw BoundsError(std::string("encode_subleq: ") + what + " address out of range");
        return table[idx + 1];
    };
    for (std::size_t i = 0; i < s.M.size(); ++i) x.set("M", i + 1, s.M[i]);
    for (std::size_t i = 0; i < s.I.size(); ++i) {
        const auto& ins = s.I[i];
        x.set_pos("I_a1", i + 1, pos_of(ins.a1, "a1"));
        x.set_pos("I_a2", i + 1, pos_of(ins.a2, "a2"));
        x.set_pos("I_b", i + 1, pos_of(ins.b, "b"));
        // Any branch target outside the program halts.
        const bool leaves = ins.c < 0 || ins.c >= static_cast<std::int64_t>(s.I.size());
        x.set_pos("I_c", i + 1, pos_of(leaves ? static_cast<std::int64_t>(s.I.size()) : ins.c, "c"));
        x.set("I_g", i + 1, ins.g ? 1.0 : 0.0);
    }
    // Row |I| + 1 holds "subtract the zero cell from itself, branch to |I|",
    // so a halted machine stays put and leaves memory alone.
    const auto halt = static_cast<std::int64_t>(s.I.size());
    const auto zero = static_cast<std::int64_t>(s.M.size());
    x.set_pos("I_a1", halt + 1, pos_of(zero, "a1"));
    x.set_pos("I_a2", halt + 1, pos_of(0, "a2"));
    x.set_pos("I_b", halt + 1, pos_of(zero, "b"));
    x.set_pos("I_c", halt + 1, pos_of(halt, "c"));
    x.set_pos("k", 0, pos_of(s.halted() ? halt : s.k, "k"));
    PaddedAdjacency A{Matrix(K, K), static_cast<int>(n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) A.data(i + 1, j + 1) = s.M_G[i][j];
    return {std::move(x), std::move(A), std::move(table)};
}

// Index of the table position nearest to a stored encoding.
inline std::size_t nearest_position(const Pos& p, const PositionTable& table) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i)
        if (dot(p, table[i]) > dot(p, table[best])) best = i;
    return best;
}

inline std::int64_t decode_pointer(const InputMatrix& X, const PositionTable& table) {
    return static_cast<std::int64_t>(nearest_position(X.pos("k"), table)) - 1;
}

inline std::vector<double> decode_memory(const InputMatrix& X, std::size_t cells) {
    std::vector<double> out(cells);
    for (std::size_t i = 0; i < cells; ++i) out[i] = X.get("M", i + 1);
    return out;
}

}  // namespace loom
