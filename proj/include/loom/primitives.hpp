#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "loom/config.hpp"
#include "loom/layout.hpp"
#include "loom/posenc.hpp"
#include "loom/transformer.hpp"

namespace loom {

// Reference to a level-0 column of X_attn or to a hidden ReLU unit of the layer.
struct Ref {
    bool unit = false;
    int index = 0;
    auto operator<=>(const Ref&) const = default;
};

// Linear combination of columns and units.
struct Lin {
    std::map<Ref, double> terms;

    Lin() = default;
    Lin(Ref r, double w) { terms[r] = w; }

    Lin& operator+=(const Lin& o) {
        for (const auto& [r, w] : o.terms) {
            double v = terms[r] + w;
            if (v == 0.0) terms.erase(r);
            else terms[r] = v;
        }
        return *this;
    }
    Lin& operator*=(double s) {
        if (s == 0.0) terms.clear();
        for (auto& [r, w] : terms) w *= s;
        return *this;
    }
    friend Lin operator+(Lin a, const Lin& b) { return a += b; }
    friend Lin operator-(Lin a, const Lin& b) { return a += b * -1.0; }
    friend Lin operator-(Lin a) { return a *= -1.0; }
    friend Lin operator*(Lin a, double s) { return a *= s; }
    friend Lin operator*(double s, Lin a) { return a *= s; }
};

constexpr int kAttentionWidth = 3;

// Query/key columns of an attention pattern; each entry is (column, weight).
struct Pattern {
    std::string key;
    std::array<std::vector<std::pair<int, double>>, kAttentionWidth> q, k;
};

struct BuildContext {
    std::shared_ptr<ColumnSchema> schema;
    SimConfig cfg;
    RotationSpec spec;
    std::vector<HeadKind> slots;

    BuildContext(std::shared_ptr<ColumnSchema> s, const SimConfig& c, std::vector<HeadKind> head_slots)
        : schema(std::move(s)), cfg(c), spec(quantize_angle(c.delta)), slots(std::move(head_slots)) {}

    // Write-pattern offset: halfway between a match (1) and the nearest non-match (cos).
    double lambda() const { return 1.0 - (1.0 - spec.cos_hat) / 2.0; }

    int scratch(int i) {
        std::string name = "S_" + std::to_string(i + 1);
        if (!schema->has(name)) schema->add(name, 1, Scope::global, ValueKind::real, true);
        return schema->col(name);
    }
};

// Adds the constant columns every program needs.
inline std::shared_ptr<ColumnSchema> base_schema() {
    auto s = std::make_shared<ColumnSchema>();
    s->add("P", 2, Scope::constant, ValueKind::position);
    s->add("B_global", 1, Scope::constant, ValueKind::boolean);
    s->add("B_local", 1, Scope::constant, ValueKind::boolean);
    return s;
}

class LayerBuilder {
public:
    LayerBuilder(BuildContext& ctx, std::string name, std::string step = {}) : ctx_(ctx), heads_(ctx.slots.size()) {
        info_.name = std::move(name);
        info_.step = std::move(step);
    }

    const ColumnSchema& schema() const { return *ctx_.schema; }
    BuildContext& context() { return ctx_; }
    const SimConfig& cfg() const { return ctx_.cfg; }
    LayerInfo& info() { return info_; }

    int col(const std::string& name, int i = 0) const {
        const auto& g = schema().group(name);
        if (i < 0 || i >= g.width) throw SchemaError("column index out of range in '" + name + "'");
        return g.col(i);
    }
    int col_of(const ColumnGroup& g, int i = 0) const { return g.col(i); }

    Lin c(const std::string& name, int i = 0) const { return Lin(Ref{false, col(name, i)}, 1.0); }
    Lin c(int column) const { return Lin(Ref{false, column}, 1.0); }

    Lin bias(Scope scope) const { return c(scope == Scope::node ? "B_local" : "B_global"); }
    Lin bias_for(const std::string& name) const { return bias(schema().group(name).scope); }

    Lin relu(const Lin& e) {
        if (e.terms.empty()) return {};
        units_.push_back({e});
        return Lin(Ref{true, static_cast<int>(units_.size() - 1)}, 1.0);
    }

    int scratch() { return ctx_.scratch(scratch_used_++); }

    // MLP output added onto a column.
    void emit(int column, const Lin& e) {
        if (!e.terms.empty()) emits_.push_back({column, e});
    }

    // MLP output replaces a column.
    void assign(int column, const Lin& e) {
        if (assigned_.count(column)) throw SchemaError("column assigned twice in one layer");
        assigned_.insert(column);
        assigns_.push_back({column, e});
    }

    // Attention heads, created on first use per pattern.
    int self_head() {
        const int px = col("P", 0), py = col("P", 1), bg = col("B_global");
        Pattern p{"self", {}, {}};
        p.q = {{{{px, 1.0}}, {{py, 1.0}}, {{bg, 1.0}}}};
        p.k = p.q;
        return head(HeadKind::identity, p);
    }

    int read_head(const std::string& group, double temperature = 0.0) {
        const auto& g = pos_group(group);
        const int px = col("P", 0), py = col("P", 1), bg = col("B_global"), bl = col("B_local");
        Pattern p{"read " + group, {}, {}};
        p.q = {{{{g.col(0), 1.0}}, {{g.col(1), 1.0}}, {{bl, 1.0}}}};
        p.k = {{{{px, 1.0}}, {{py, 1.0}}, {{bg, 1.0}}}};
        return head(HeadKind::identity, p, temperature);
    }

    int write_head(const std::string& group, HeadKind kind = HeadKind::identity) {
        const auto& g = pos_group(group);
        const int px = col("P", 0), py = col("P", 1), bg = col("B_global"), bl = col("B_local");
        const double lam = ctx_.lambda();
        Pattern p{"write " + group, {}, {}};
        p.q = {{{{px, 1.0}}, {{py, 1.0}}, {{bg, 1.0}}}};
        p.k = {{{{g.col(0), 1.0}, {px, lam}}, {{g.col(1), 1.0}, {py, lam}}, {{bl, 1.0}}}};
        return head(kind, p);
    }

    int broadcast_head() {
        const int bg = col("B_global"), bl = col("B_local");
        Pattern p{"broadcast", {}, {}};
        p.q = {{{{bl, 1.0}}, {{bg, 1.0}}, {}}};
        p.k = {{{{bg, 1.0}}, {{bl, 1.0}}, {}}};
        return head(HeadKind::identity, p);
    }

    void attn(int h, int src, int dst, double w = 1.0) {
        heads_.at(h).v[{src, dst}] += w;
        attn_written_.insert(dst);
    }

    // Erases a column during the attention phase.
    void attn_clear(int dst) {
        int h = self_head();
        heads_[h].v[{dst, dst}] += -1.0;
        attn_written_.insert(dst);
    }

    void attn_assign(int h, int src, int dst, double w = 1.0) {
        attn_clear(dst);
        attn(h, src, dst, w);
    }

    void writes(const std::string& name) {
        add_unique(info_.writes, name);
        if (schema().group(name).kind == ValueKind::boolean) add_unique(info_.bool_outputs, name);
    }
    void bool_output(const std::string& name) {
        writes(name);
        add_unique(info_.bool_outputs, name);
    }
    void pos_output(const std::string& name) {
        writes(name);
        add_unique(info_.pos_outputs, name);
    }
    void note(const std::string& s) { info_.detail.push_back(s); }

    // Largest number of hidden units on any MLP level after scheduling.
    std::size_t hidden_units() {
        schedule();
        std::size_t m = 0;
        for (const auto& l : levels_) m = std::max(m, l.size());
        return m;
    }

    TransformerLayer finalize(std::size_t d) {
        schedule();
        for (const auto& l : levels_)
            if (l.size() > d) throw SchemaError("layer '" + info_.name + "' needs more hidden units than width");
        TransformerLayer layer;
        layer.info = info_;
        double scale = ctx_.cfg.activation == Activation::softmax ? 1.0 / std::sqrt(ctx_.cfg.temperature) : 1.0;
        for (std::size_t s = 0; s < heads_.size(); ++s) {
            AttentionHead h{Matrix(d, kAttentionWidth), Matrix(d, kAttentionWidth), Matrix(d, d), ctx_.slots[s], ""};
            const auto& hs = heads_[s];
            if (hs.used) {
                double sc = hs.temperature > 0.0 ? 1.0 / std::sqrt(hs.temperature) : scale;
                if (ctx_.cfg.activation == Activation::hardmax) sc = 1.0;
                for (int a = 0; a < kAttentionWidth; ++a) {
                    for (auto [c, w] : hs.pattern.q[a]) h.W_Q(c, a) += w * sc;
                    for (auto [c, w] : hs.pattern.k[a]) h.W_K(c, a) += w * sc;
                }
                for (const auto& [sd, w] : hs.v)
                    if (w != 0.0) h.W_V(sd.first, sd.second) = w;
                h.pattern = hs.pattern.key;
            }
            layer.heads.push_back(std::move(h));
        }
        layer.mlp = {Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d)};
        for (int l = 0; l < 3; ++l)
            for (std::size_t u = 0; u < levels_[l].size(); ++u)
                for (const auto& [idx, w] : levels_[l][u]) layer.mlp[l](idx, u) += w;
        for (const auto& [key, w] : out_) layer.mlp[3](key.first, key.second) += w;
        return layer;
    }

private:
    struct HeadState {
        bool used = false;
        Pattern pattern;
        double temperature = 0.0;
        std::map<std::pair<int, int>, double> v;
    };
    struct Unit {
        Lin expr;
    };
    struct Emit {
        int column;
        Lin expr;
    };

    static void add_unique(std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    }

    const ColumnGroup& pos_group(const std::string& name) const {
        const auto& g = schema().group(name);
        if (g.width != 2) throw SchemaError("'" + name + "' is not a positional group");
        return g;
    }

    int head(HeadKind kind, const Pattern& p, double temperature = 0.0) {
        for (std::size_t s = 0; s < heads_.size(); ++s)
            if (heads_[s].used && ctx_.slots[s] == kind && heads_[s].pattern.key == p.key &&
                heads_[s].temperature == temperature)
                return static_cast<int>(s);
        // Prefer the first free slot for the self pattern so listings stay stable.
        for (std::size_t s = 0; s < heads_.size(); ++s)
            if (!heads_[s].used && ctx_.slots[s] == kind) {
                heads_[s].used = true;
                heads_[s].pattern = p;
                heads_[s].temperature = temperature;
                return static_cast<int>(s);
            }
        throw SchemaError("layer '" + info_.name + "': no free " + to_string(kind) + " head for " + p.key);
    }

    bool column_nonneg(int c) const { return schema().group_of(c).kind == ValueKind::boolean; }

    bool self_available() {
        for (std::size_t s = 0; s < heads_.size(); ++s)
            if (ctx_.slots[s] == HeadKind::identity && (!heads_[s].used || heads_[s].pattern.key == "self"))
                return true;
        return false;
    }

    // Places every unit as late as possible, lifts lower-level inputs with
    // ReLU pass-throughs and builds the level tables.
    void schedule() {
        if (scheduled_) return;
        scheduled_ = true;

        std::set<int> mlp_reads;
        for (const auto& u : units_)
            for (const auto& [r, w] : u.expr.terms)
                if (!r.unit) mlp_reads.insert(r.index);
        for (const auto& e : emits_)
            for (const auto& [r, w] : e.expr.terms)
                if (!r.unit) mlp_reads.insert(r.index);
        for (const auto& a : assigns_)
            for (const auto& [r, w] : a.expr.terms)
                if (!r.unit) mlp_reads.insert(r.index);
        for (const auto& a : assigns_) {
            if (attn_written_.count(a.column) && !mlp_reads.count(a.column))
                throw SchemaError("layer '" + info_.name + "': column written by attention and MLP assign");
            if (!mlp_reads.count(a.column) && self_available()) {
                attn_clear(a.column);
                emit(a.column, a.expr);
            } else {
                emit(a.column, a.expr - c(a.column));
            }
        }
        assigns_.clear();

        const int n = static_cast<int>(units_.size());
        std::vector<int> level(n, 4);
        for (const auto& e : emits_)
            for (const auto& [r, w] : e.expr.terms)
                if (r.unit) level[r.index] = std::min(level[r.index], 3);
        // Units only reference earlier units, so a reverse sweep settles the levels.
        for (int u = n - 1; u >= 0; --u) {
            if (level[u] == 4) level[u] = 3;  // unused unit; keep it harmless
            for (const auto& [r, w] : units_[u].expr.terms)
                if (r.unit) level[r.index] = std::min(level[r.index], level[u] - 1);
        }
        for (int u = 0; u < n; ++u)
            if (level[u] < 1) throw SchemaError("layer '" + info_.name + "': expression deeper than three ReLUs");

        levels_.assign(3, {});
        std::vector<int> slot(n, -1);
        for (int u = 0; u < n; ++u) {
            levels_[level[u] - 1].emplace_back();
            slot[u] = static_cast<int>(levels_[level[u] - 1].size() - 1);
        }
        auto at = [&](int lvl, const Lin& e) {  // expression rewritten over level lvl inputs
            std::vector<std::pair<int, double>> out;
            std::map<int, double> acc;
            for (const auto& [r, w] : e.terms) {
                for (auto [idx, ww] : lift(r, r.unit ? level[r.index] : 0, slot, lvl)) acc[idx] += w * ww;
            }
            for (auto [i, w] : acc)
                if (w != 0.0) out.push_back({i, w});
            return out;
        };
        for (int u = 0; u < n; ++u) levels_[level[u] - 1][slot[u]] = at(level[u] - 1, units_[u].expr);
        for (const auto& e : emits_)
            for (auto [idx, w] : at(3, e.expr)) out_[{idx, e.column}] += w;
    }

    // Index list expressing ref (living at level from) in terms of level `to` values.
    std::vector<std::pair<int, double>> lift(Ref r, int from, const std::vector<int>& slot, int to) {
        if (!r.unit) {
            if (to == 0) return {{r.index, 1.0}};
            if (column_nonneg(r.index)) return {{pass(0, r.index, 1.0, to), 1.0}};
            return {{pass(0, r.index, 1.0, to), 1.0}, {pass(0, r.index, -1.0, to), -1.0}};
        }
        if (from == to) return {{slot[r.index], 1.0}};
        if (from > to) throw SchemaError("unit referenced below its level");
        return {{pass(from, slot[r.index], 1.0, to), 1.0}};
    }

    // Unit at level `to` holding relu(sign * value) of the value at (from, idx).
    int pass(int from, int idx, double sign, int to) {
        int cur = idx;
        double sg = sign;
        for (int l = from + 1; l <= to; ++l) {
            auto key = std::make_tuple(l, l == from + 1 ? from : l - 1, cur, sg);
            auto it = passes_.find(key);
            if (it == passes_.end()) {
                levels_[l - 1].push_back({{cur, sg}});
                it = passes_.emplace(key, static_cast<int>(levels_[l - 1].size() - 1)).first;
            }
            cur = it->second;
            sg = 1.0;
        }
        return cur;
    }

    BuildContext& ctx_;
    LayerInfo info_;
    std::vector<HeadState> heads_;
    std::vector<Unit> units_;
    std::vector<Emit> emits_;
    std::vector<Emit> assigns_;
    std::set<int> assigned_;
    std::set<int> attn_written_;
    int scratch_used_ = 0;
    bool scheduled_ = false;
    std::vector<std::vector<std::vector<std::pair<int, double>>>> levels_;
    std::map<std::tuple<int, int, int, double>, int> passes_;
    std::map<std::pair<int, int>, double> out_;
};

// Saturating comparison helpers. Every form below is exact on the value grids
// the programs use (integers, half-integers and the sentinels).

// 1 if C < D (difference at least epsilon), 0 if C >= D.
inline Lin less_than_expr(LayerBuilder& L, const Lin& C, const Lin& D, const Lin& b) {
    double inv = 1.0 / L.cfg().epsilon;
    Lin u = L.relu((D - C) * inv);
    return b - L.relu(b - u);
}

// 1 if x <= 0, 0 if x >= epsilon.
inline Lin less_equal_zero_expr(LayerBuilder& L, const Lin& x, const Lin& b) {
    double inv = 1.0 / L.cfg().epsilon;
    return b - L.relu(b - L.relu(b - x * inv));
}

// 1 if x >= 1/2 + eta, 0 if x <= 1/2.
inline Lin round_binary_expr(LayerBuilder& L, const Lin& x, const Lin& b) {
    double inv = 1.0 / L.cfg().eta;
    return b - L.relu(b - L.relu((x - b * 0.5) * inv));
}

// V1 if C = 1 else V0, for |V0|, |V1| <= bound.
inline Lin select_expr(LayerBuilder& L, const Lin& V1, const Lin& V0, const Lin& C, const Lin& b, double bound) {
    Lin out = L.relu(V0 - C * bound) - L.relu(-V0 - C * bound);
    out += L.relu(V1 - b * bound + C * bound) - L.relu(-V1 - b * bound + C * bound);
    return out;
}

inline double clause_bound(const LayerBuilder& L) { return L.cfg().omega; }

struct SelectClause {
    std::string target;
    int index = 0;
    Lin v1;
    Lin v0;  // empty expression with keep_v0 set means "keep the target"
    bool keep = true;
};

// E <- C ? V1 : E for each clause; positional groups expand to both coordinates.
inline void op_cond_select(LayerBuilder& L, const Lin& C, Scope scope, const std::vector<SelectClause>& clauses) {
    Lin b = L.bias(scope);
    for (const auto& cl : clauses) {
        int col = L.col(cl.target, cl.index);
        Lin v0 = cl.keep ? L.c(col) : cl.v0;
        L.assign(col, select_expr(L, cl.v1, v0, C, b, clause_bound(L)));
        L.writes(cl.target);
    }
}

inline SelectClause keep_or(const std::string& target, const Lin& v1, int index = 0) {
    return {target, index, v1, {}, true};
}

inline std::vector<SelectClause> keep_or_pos(LayerBuilder& L, const std::string& target, const std::string& source) {
    return {keep_or(target, L.c(source, 0), 0), keep_or(target, L.c(source, 1), 1)};
}

inline void op_less_than(LayerBuilder& L, const Lin& C, const Lin& D, const std::string& E) {
    L.assign(L.col(E), less_than_expr(L, C, D, L.bias_for(E)));
    L.bool_output(E);
}

inline void op_less_equal(LayerBuilder& L, const Lin& C, const std::string& E) {
    L.assign(L.col(E), less_equal_zero_expr(L, C, L.bias_for(E)));
    L.bool_output(E);
}

// D <- R C. In-place when C == D.
inline void op_increment(LayerBuilder& L, const std::string& C, const std::string& D) {
    int h = L.self_head();
    const auto& s = L.context().spec;
    int c0 = L.col(C, 0), c1 = L.col(C, 1), d0 = L.col(D, 0), d1 = L.col(D, 1);
    L.attn_clear(d0);
    L.attn_clear(d1);
    L.attn(h, c0, d0, s.cos_hat);
    L.attn(h, c1, d0, s.sin_hat);
    L.attn(h, c0, d1, -s.sin_hat);
    L.attn(h, c1, d1, s.cos_hat);
    L.pos_output(D);
}

// Global E <- node column D at the row selected by C.
inline void op_read_x(LayerBuilder& L, const std::string& C, const std::string& D, const std::string& E,
                      int d_index = 0, int e_index = 0) {
    int h = L.read_head(C);
    L.attn_assign(h, L.col(D, d_index), L.col(E, e_index));
    L.writes(E);
}

enum class Orientation { row, column };

// Node column D <- row (or column) of the adjacency selected by C.
inline void op_read_a(LayerBuilder& L, const std::string& C, const std::string& D, Orientation o) {
    int h = L.write_head(C, o == Orientation::row ? HeadKind::adj_transpose : HeadKind::adj);
    L.attn_assign(h, L.col("B_global"), L.col(D));
    L.writes(D);
}

// Node column E at the row selected by C gains the global value of D.
inline void op_write_row(LayerBuilder& L, const std::string& C, const Lin& D, const std::string& E, int e_index = 0) {
    int h = L.write_head(C);
    for (const auto& [r, w] : D.terms) {
        if (r.unit) throw SchemaError("write_row source must be a column combination");
        L.attn(h, r.index, L.col(E, e_index), w);
    }
    L.writes(E);
}

// Node column D <- global value of C (added when preserve is set).
inline void op_repeat_n(LayerBuilder& L, const std::string& C, const std::string& D, bool preserve = false,
                        int c_index = 0, int d_index = 0) {
    int h = L.broadcast_head();
    if (preserve) L.attn(h, L.col(C, c_index), L.col(D, d_index));
    else L.attn_assign(h, L.col(C, c_index), L.col(D, d_index));
    L.writes(D);
}

// Global E <- 1 iff every node row of boolean column C is 1. Requires omega >= n.
inline void op_all_one(LayerBuilder& L, const std::string& C, const std::string& E) {
    int h = L.broadcast_head();
    int s = L.scratch();
    L.attn(h, L.col(C), s);
    Lin b = L.c("B_global");
    double om = L.cfg().omega;
    L.assign(L.col(E), L.relu(b - b * om + L.c(s) * om));
    L.emit(s, -L.c(s));
    L.bool_output(E);
}

// E[i] <- mask if C[i] else V0[i].
inline void op_mask(LayerBuilder& L, const std::string& V0, const std::string& C, const std::string& E) {
    Lin b = L.bias_for(E);
    L.assign(L.col(E), select_expr(L, b * L.cfg().mask_value(), L.c(V0), L.c(C), b, clause_bound(L)));
    L.writes(E);
}

// E <- expr with E cleared first.
inline void op_logic(LayerBuilder& L, const std::string& E, const Lin& expr, bool boolean = true) {
    L.assign(L.col(E), expr);
    if (boolean) L.bool_output(E);
    else L.writes(E);
}

inline void op_round_binary(LayerBuilder& L, const std::vector<std::string>& columns) {
    for (const auto& name : columns) {
        const auto& g = L.schema().group(name);
        for (int i = 0; i < g.width; ++i) {
            Lin b = L.bias(g.scope);
            L.assign(g.col(i), round_binary_expr(L, L.c(g.col(i)), b));
        }
        L.writes(name);
    }
}

// First half of positional rounding: a soft read of P at the annealed temperature
// into a scratch pair. The second half reads P again at the sharp temperature.
inline void op_round_pos_a(LayerBuilder& L, const std::string& group, int s0, int s1) {
    int h = L.read_head(group, L.cfg().activation == Activation::softmax ? L.cfg().annealed_temperature : 0.0);
    L.attn(h, L.col("P", 0), s0);
    L.attn(h, L.col("P", 1), s1);
    L.note("soft read " + group);
}

// Second half: snap the group to the P entry of the row picked by the soft read.
inline void op_round_pos_b(LayerBuilder& L, const std::string& group, const std::string& soft) {
    int h = L.read_head(soft);
    L.attn_assign(h, L.col("P", 0), L.col(group, 0));
    L.attn_assign(h, L.col("P", 1), L.col(group, 1));
    L.attn_clear(L.col(soft, 0));
    L.attn_clear(L.col(soft, 1));
    L.writes(group);
}

// Minimum-block reset: when term_min is set, the scan restarts from p0 with
// val_best at the mask value. term_min itself is always cleared.
inline void op_reinit(LayerBuilder& L, bool scc) {
    int h = L.broadcast_head();
    int s = L.scratch();
    L.attn(h, L.col("term_min"), s);
    Lin tm = L.c("term_min");
    Lin b = L.c("B_global");
    const double mask = L.cfg().mask_value();
    std::vector<SelectClause> g = {keep_or("idx_cur", {}, 0),     keep_or("idx_cur", b, 1),
                                   keep_or("idx_cur_int", {}),    keep_or("idx_best", {}, 0),
                                   keep_or("idx_best", b, 1),     keep_or("idx_best_int", {}),
                                   keep_or("val_best", b * mask), keep_or("val_cur", {})};
    if (scc) {
        g.push_back(keep_or("scc_best", {}, 0));
        g.push_back(keep_or("scc_best", b, 1));
        g.push_back(keep_or("scc_best_int", {}));
    }
    op_cond_select(L, tm, Scope::global, g);
    op_cond_select(L, L.c(s), Scope::node, {keep_or("visit_min", {})});
    L.assign(L.col("term_min"), {});
    L.writes("term_min");
    L.emit(s, -L.c(s));
}

}  // namespace loom
