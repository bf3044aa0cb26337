#pragma once

#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "loom/primitives.hpp"

namespace loom {

// Standalone single-layer builds of the named subroutines. Each returns a layer
// sized to the context schema, padding the schema when the MLP needs more
// hidden units than there are columns. Build every layer of one schema before
// creating inputs for it.

inline BuildContext primitive_context(const SimConfig& cfg, std::shared_ptr<ColumnSchema> schema = base_schema()) {
    cfg.validate();
    return BuildContext(std::move(schema), cfg,
                        {HeadKind::identity, HeadKind::identity, HeadKind::adj_transpose, HeadKind::adj});
}

inline TransformerLayer finish_layer(LayerBuilder& L) {
    auto& schema = *L.context().schema;
    std::size_t d = std::max<std::size_t>(schema.width(), L.hidden_units());
    schema.pad_to(static_cast<int>(d));
    return L.finalize(schema.width());
}

inline TransformerLayer build_less_than(BuildContext& ctx, const std::string& C, const std::string& D,
                                        const std::string& E) {
    LayerBuilder L(ctx, "less-than");
    op_less_than(L, L.c(C), L.c(D), E);
    return finish_layer(L);
}

struct SelectPair {
    std::string v1, v0, target;
};

// target <- C ? v1 : v0 for every pair. All targets share the scope of C.
inline TransformerLayer build_cond_select(BuildContext& ctx, const std::vector<SelectPair>& pairs,
                                          const std::string& C) {
    LayerBuilder L(ctx, "cond-select");
    Scope scope = L.schema().group(C).scope;
    std::vector<SelectClause> clauses;
    for (const auto& p : pairs) {
        if (L.schema().group(p.target).scope != scope) throw SchemaError("cond-select: scope mismatch");
        clauses.push_back({p.target, 0, L.c(p.v1), L.c(p.v0), false});
    }
    op_cond_select(L, L.c(C), scope, clauses);
    return finish_layer(L);
}

inline void add_min_block_columns(ColumnSchema& s, bool scc = false) {
    s.add("idx_cur", 2, Scope::global, ValueKind::position);
    s.add("idx_cur_int", 1, Scope::global, ValueKind::integer);
    s.add("idx_best", 2, Scope::global, ValueKind::position);
    s.add("idx_best_int", 1, Scope::global, ValueKind::integer);
    s.add("val_cur", 1, Scope::global);
    s.add("val_best", 1, Scope::global);
    s.add("cond_min", 1, Scope::global, ValueKind::boolean);
    s.add("term_min", 1, Scope::global, ValueKind::boolean);
    s.add("visit_min", 1, Scope::node, ValueKind::boolean);
    s.add("masked", 1, Scope::node);
    if (scc) {
        s.add("scc_cur", 2, Scope::global, ValueKind::position);
        s.add("scc_cur_int", 1, Scope::global, ValueKind::integer);
        s.add("scc_best", 2, Scope::global, ValueKind::position);
        s.add("scc_best_int", 1, Scope::global, ValueKind::integer);
    }
}

inline TransformerLayer build_reinit(BuildContext& ctx, bool scc = false) {
    LayerBuilder L(ctx, "reinit");
    op_reinit(L, scc);
    return finish_layer(L);
}

inline TransformerLayer build_increment(BuildContext& ctx, const std::string& C, const std::string& D) {
    LayerBuilder L(ctx, "increment");
    op_increment(L, C, D);
    return finish_layer(L);
}

inline TransformerLayer build_read_X(BuildContext& ctx, const std::string& C, const std::string& D,
                                     const std::string& E) {
    LayerBuilder L(ctx, "read-x");
    op_read_x(L, C, D, E);
    return finish_layer(L);
}

inline TransformerLayer build_read_A(BuildContext& ctx, const std::string& C, const std::string& D, Orientation o) {
    LayerBuilder L(ctx, "read-a");
    op_read_a(L, C, D, o);
    return finish_layer(L);
}

inline TransformerLayer build_write_row(BuildContext& ctx, const std::string& C, const std::string& D,
                                        const std::string& E) {
    LayerBuilder L(ctx, "write-row");
    op_write_row(L, C, L.c(D), E);
    return finish_layer(L);
}

inline TransformerLayer build_all_one(BuildContext& ctx, const std::string& C, const std::string& E) {
    LayerBuilder L(ctx, "all-one");
    op_all_one(L, C, E);
    return finish_layer(L);
}

inline TransformerLayer build_repeat_n(BuildContext& ctx, const std::string& C, const std::string& D,
                                       bool preserve_target = false) {
    LayerBuilder L(ctx, "repeat-n");
    op_repeat_n(L, C, D, preserve_target);
    return finish_layer(L);
}

inline TransformerLayer build_mask_visited(BuildContext& ctx, const std::string& V0, const std::string& C,
                                           const std::string& E) {
    LayerBuilder L(ctx, "mask");
    op_mask(L, V0, C, E);
    return finish_layer(L);
}

// sum of coeff * column plus bias * (bias column of the target's scope).
struct Affine {
    std::vector<std::pair<std::string, double>> terms;
    double bias = 0.0;
};

// E <- relu(outer + weight * relu(inner)) when rectified, else E <- outer
// (+ weight * relu(inner)) exactly.
inline TransformerLayer build_logic_affine(BuildContext& ctx, const Affine& outer, const std::string& E,
                                           const std::optional<std::pair<Affine, double>>& nested = std::nullopt,
                                           bool rectify = true) {
    LayerBuilder L(ctx, "logic");
    Lin b = L.bias_for(E);
    auto lin = [&](const Affine& a) {
        Lin e = b * a.bias;
        for (const auto& [name, w] : a.terms) e += L.c(name) * w;
        return e;
    };
    Lin e = lin(outer);
    if (nested) e += L.relu(lin(nested->first)) * nested->second;
    Lin out = rectify ? L.relu(e) : L.relu(e) - L.relu(-e);
    op_logic(L, E, out, L.schema().group(E).kind == ValueKind::boolean);
    return finish_layer(L);
}

inline TransformerLayer build_less_equal(BuildContext& ctx, const std::string& C, const std::string& E) {
    LayerBuilder L(ctx, "less-equal");
    op_less_equal(L, L.c(C), E);
    return finish_layer(L);
}

inline TransformerLayer build_round_binary(BuildContext& ctx, const std::vector<std::string>& columns) {
    LayerBuilder L(ctx, "round-binary");
    op_round_binary(L, columns);
    return finish_layer(L);
}

// Two layers: a soft read at the annealed temperature into S_pos, then a sharp
// read of P at the row it points to.
inline std::pair<TransformerLayer, TransformerLayer> build_round_posenc(BuildContext& ctx, const std::string& group) {
    if (!ctx.schema->has("S_pos")) ctx.schema->add("S_pos", 2, Scope::global, ValueKind::position, true);
    LayerBuilder A(ctx, "round-posenc soft");
    op_round_pos_a(A, group, A.col("S_pos", 0), A.col("S_pos", 1));
    A.writes("S_pos");
    LayerBuilder B(ctx, "round-posenc sharp");
    op_round_pos_b(B, group, "S_pos");
    std::size_t d = std::max({static_cast<std::size_t>(ctx.schema->width()), A.hidden_units(), B.hidden_units()});
    ctx.schema->pad_to(static_cast<int>(d));
    return {A.finalize(d), B.finalize(d)};
}

}  // namespace loom
