#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "loom/config.hpp"
#include "loom/layout.hpp"
#include "loom/numerics.hpp"

namespace loom {

struct IterationLimitExceeded : std::runtime_error {
    std::size_t iterations = 0;
    IterationLimitExceeded(const std::string& msg, std::size_t it) : std::runtime_error(msg), iterations(it) {}
};

enum class HeadKind { identity, adj, adj_transpose };

inline std::string to_string(HeadKind k) {
    switch (k) {
        case HeadKind::identity: return "I";
        case HeadKind::adj: return "A";
        case HeadKind::adj_transpose: return "At";
    }
    return "?";
}

struct AttentionHead {
    Matrix W_Q;
    Matrix W_K;
    Matrix W_V;
    HeadKind kind = HeadKind::identity;
    std::string pattern;  // listing only
};

// Bookkeeping carried alongside the weights; the evaluator ignores it.
struct LayerInfo {
    std::string name;
    std::string step;
    std::vector<std::string> writes;
    std::vector<std::string> bool_outputs;
    std::vector<std::string> pos_outputs;
    std::vector<std::string> detail;
    bool instrumentation = false;
};

struct TransformerLayer {
    std::vector<AttentionHead> heads;
    std::array<Matrix, 4> mlp;
    LayerInfo info;
};

struct ProgramMetadata {
    AlgorithmId algorithm = AlgorithmId::dijkstra;
    std::size_t layer_count = 0;
    std::size_t distinct_head_count = 0;
    std::size_t core_layer_count = 0;  // before instrumentation
    std::size_t width = 0;
    std::size_t attention_width = 0;
    std::size_t scratch_columns = 0;
    bool clrs_order = false;
    bool rounding = false;
    bool write_prevention = false;
    Activation activation = Activation::hardmax;
};

struct LoopedProgram {
    std::vector<TransformerLayer> layers;
    std::shared_ptr<const ColumnSchema> schema;
    int term_column = 0;
    ProgramMetadata metadata;
    std::vector<HeadKind> head_slots;
};

namespace detail {

struct Term {
    int index;
    double weight;
};

// Sparse view of a matrix by output column.
inline std::vector<std::vector<Term>> columns_of(const Matrix& m) {
    std::vector<std::vector<Term>> out(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            if (m(r, c) != 0.0) out[c].push_back({static_cast<int>(r), m(r, c)});
    return out;
}

struct OutColumn {
    int col;
    std::vector<Term> terms;
};

inline std::vector<OutColumn> nonzero_columns(const Matrix& m) {
    std::vector<OutColumn> out;
    auto cols = columns_of(m);
    for (std::size_t c = 0; c < cols.size(); ++c)
        if (!cols[c].empty()) out.push_back({static_cast<int>(c), std::move(cols[c])});
    return out;
}

}  // namespace detail

struct CompiledHead {
    HeadKind kind = HeadKind::identity;
    std::vector<std::vector<detail::Term>> q;  // per attention dimension
    std::vector<std::vector<detail::Term>> k;
    std::vector<detail::OutColumn> v;        // output columns with their source terms
    std::string key;                         // identifies the query/key maps
    std::vector<int> reads;                  // columns the scores depend on
};

struct CompiledLayer {
    std::size_t d = 0;
    std::vector<CompiledHead> heads;
    // Attention outputs by column: (head, value column index) pairs feeding it.
    std::vector<std::pair<int, std::vector<std::pair<int, int>>>> attn_out;
    std::array<std::vector<detail::OutColumn>, 3> hidden;  // units of W1..W3
    std::vector<detail::OutColumn> out;                     // W4 by output column
    std::size_t hidden_width = 0;
    std::vector<int> writes;
};

inline CompiledLayer compile_layer(const TransformerLayer& layer) {
    CompiledLayer c;
    c.d = layer.mlp[0].rows();
    for (const auto& h : layer.heads) {
        CompiledHead ch;
        ch.kind = h.kind;
        ch.v = detail::nonzero_columns(h.W_V);
        if (ch.v.empty()) continue;
        ch.q = detail::columns_of(h.W_Q);
        ch.k = detail::columns_of(h.W_K);
        std::set<int> reads;
        std::ostringstream key;
        key.precision(17);
        for (const auto* side : {&ch.q, &ch.k}) {
            for (const auto& dim : *side) {
                for (const auto& t : dim) {
                    key << t.index << ':' << t.weight << ',';
                    reads.insert(t.index);
                }
                key << ';';
            }
            key << '|';
        }
        ch.key = key.str();
        ch.reads.assign(reads.begin(), reads.end());
        c.heads.push_back(std::move(ch));
    }
    std::map<int, std::vector<std::pair<int, int>>> by_col;
    for (std::size_t hi = 0; hi < c.heads.size(); ++hi)
        for (std::size_t vi = 0; vi < c.heads[hi].v.size(); ++vi)
            by_col[c.heads[hi].v[vi].col].push_back({static_cast<int>(hi), static_cast<int>(vi)});
    for (auto& [col, list] : by_col) c.attn_out.push_back({col, std::move(list)});
    for (int i = 0; i < 3; ++i) c.hidden[i] = detail::nonzero_columns(layer.mlp[i]);
    c.out = detail::nonzero_columns(layer.mlp[3]);
    c.hidden_width = layer.mlp[0].cols();
    std::set<int> writes;
    for (const auto& [col, list] : c.attn_out) writes.insert(col);
    for (const auto& oc : c.out) writes.insert(oc.col);
    c.writes.assign(writes.begin(), writes.end());
    // Units read downstream but fed by nothing still need an explicit zero.
    for (int l = 0; l < 3; ++l) {
        std::set<int> have;
        for (const auto& u : c.hidden[l]) have.insert(u.col);
        const auto& next = l < 2 ? c.hidden[l + 1] : c.out;
        std::set<int> read;
        for (const auto& u : next)
            for (const auto& t : u.terms) read.insert(t.index);
        for (int j : read)
            if (!have.count(j)) c.hidden[l].push_back({j, {}});
    }
    return c;
}

// Sparse adjacency lists for the graph heads.
struct AdjacencyLists {
    std::vector<std::vector<detail::Term>> rows;  // rows[r] = {(k, A[r,k])}
    std::vector<std::vector<detail::Term>> cols;  // cols[r] = {(k, A[k,r])}
};

inline AdjacencyLists adjacency_lists(const PaddedAdjacency& a) {
    std::size_t K = a.data.rows();
    AdjacencyLists l{std::vector<std::vector<detail::Term>>(K), std::vector<std::vector<detail::Term>>(K)};
    for (std::size_t r = 0; r < K; ++r)
        for (std::size_t k = 0; k < K; ++k) {
            double w = a.data(r, k);
            if (w != 0.0) {
                l.rows[r].push_back({static_cast<int>(k), w});
                l.cols[k].push_back({static_cast<int>(r), w});
            }
        }
    return l;
}

// Attention of one head: tie sets under hardmax, weights under softmax.
struct AttentionState {
    std::vector<int> begin;  // row r attends idx[begin[r] .. begin[r + 1])
    std::vector<int> idx;
    std::vector<double> weights;
    std::vector<double> vals;  // rounded values, K x |v|, filled when ties or softmax need them
    std::vector<double> u;     // graph heads: attended values, K x |v|
};

// Attention pattern kept while none of the columns it reads change.
struct PatternMemo {
    std::vector<int> begin, idx;
    std::vector<double> weights;
    std::vector<std::uint64_t> seen;
};

// Scratch buffers reused across layer applications. With memo on, the
// caller promises X is only modified through apply_compiled.
struct Workspace {
    std::vector<double> q, k, row, out;
    std::vector<AttentionState> heads;
    std::vector<double> h[3];
    bool memo = false;
    std::uint64_t clock = 0;
    std::vector<std::uint64_t> version;
    std::unordered_map<std::string, PatternMemo> patterns;
};

namespace detail {

inline void project(const Matrix& x, const std::vector<std::vector<Term>>& w, std::vector<double>& out) {
    std::size_t K = x.rows(), da = w.size();
    out.resize(K * da);
    for (std::size_t r = 0; r < K; ++r) {
        const double* row = x.row(r);
        for (std::size_t a = 0; a < da; ++a) {
            double s = 0.0;
            for (const auto& t : w[a]) s += row[t.index] * t.weight;
            out[r * da + a] = s;
        }
    }
}

inline double value_entry(const double* row, const std::vector<Term>& terms) {
    ExactSum s;
    for (const auto& t : terms) s.add_product(row[t.index], t.weight);
    return s.value();
}

inline void attention_pattern(const Matrix& x, const CompiledHead& h, Activation act, Workspace& ws,
                              AttentionState& st) {
    const std::size_t K = x.rows(), da = h.q.size();
    project(x, h.q, ws.q);
    project(x, h.k, ws.k);
    ws.row.resize(K);
    st.begin.assign(K + 1, 0);
    st.idx.clear();
    if (act == Activation::softmax) st.weights.resize(K * K);
    for (std::size_t r = 0; r < K; ++r) {
        const double* qr = &ws.q[r * da];
        double* sr = ws.row.data();
        for (std::size_t j = 0; j < K; ++j) {
            const double* kj = &ws.k[j * da];
            double s = 0.0;
            for (std::size_t a = 0; a < da; ++a) s += qr[a] * kj[a];
            sr[j] = s;
        }
        if (act == Activation::hardmax) {
            double best = sr[0];
            for (std::size_t j = 1; j < K; ++j) best = sr[j] > best ? sr[j] : best;
            for (std::size_t j = 0; j < K; ++j)
                if (sr[j] == best) st.idx.push_back(static_cast<int>(j));
            st.begin[r + 1] = static_cast<int>(st.idx.size());
        } else {
            softmax_row(sr, K, &st.weights[r * K]);
        }
    }
}

inline bool needs_values(std::size_t K, Activation act, const AttentionState& st) {
    return act == Activation::softmax || st.idx.size() != K;
}

inline void value_matrix(const Matrix& x, const CompiledHead& h, std::vector<double>& out) {
    std::size_t K = x.rows(), nv = h.v.size();
    out.resize(K * nv);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t vi = 0; vi < nv; ++vi) out[k * nv + vi] = value_entry(x.row(k), h.v[vi].terms);
}

// Adds the attended value of one output column at row r into acc. A single
// attended row contributes its raw products so the caller's sum stays exact.
inline void attended_terms(const Matrix& x, const CompiledHead& h, std::size_t vi, std::size_t r, Activation act,
                           const AttentionState& st, ExactSum& acc) {
    const std::size_t K = x.rows(), nv = h.v.size();
    if (act == Activation::hardmax) {
        int b = st.begin[r], e = st.begin[r + 1];
        if (e - b == 1) {
            const double* row = x.row(st.idx[b]);
            for (const auto& term : h.v[vi].terms) acc.add_product(row[term.index], term.weight);
            return;
        }
        ExactSum s;
        for (int i = b; i < e; ++i) s.add(st.vals[st.idx[i] * nv + vi]);
        acc.add(s.value() / static_cast<double>(e - b));
        return;
    }
    const double* w = &st.weights[r * K];
    for (std::size_t k = 0; k < K; ++k)
        if (w[k] != 0.0) acc.add_product(w[k], st.vals[k * nv + vi]);
}

inline void check_shapes(const Matrix& x, const TransformerLayer& layer) {
    std::size_t d = x.cols();
    for (const auto& h : layer.heads) {
        if (h.W_Q.rows() != d || h.W_K.rows() != d || h.W_Q.cols() != h.W_K.cols())
            throw ShapeError("attention head query/key shape mismatch");
        if (h.W_V.rows() != d || h.W_V.cols() != d) throw ShapeError("attention head value shape mismatch");
    }
    if (layer.mlp[0].rows() != d || layer.mlp[3].cols() != d) throw ShapeError("mlp shape mismatch");
    for (int i = 0; i < 3; ++i)
        if (layer.mlp[i].cols() != layer.mlp[i + 1].rows()) throw ShapeError("mlp inner shape mismatch");
}

// Attended values per row for a graph head, before the adjacency product.
inline void graph_values(const Matrix& x, const CompiledHead& h, Activation act, AttentionState& st) {
    const std::size_t K = x.rows(), nv = h.v.size();
    st.u.resize(K * nv);
    for (std::size_t r = 0; r < K; ++r)
        for (std::size_t vi = 0; vi < nv; ++vi) {
            ExactSum s;
            attended_terms(x, h, vi, r, act, st, s);
            st.u[r * nv + vi] = s.value();
        }
}

}  // namespace detail

// Contribution of a single head, each entry correctly rounded.
inline Matrix apply_head(const InputMatrix& X, const PaddedAdjacency& A, const AttentionHead& head,
                         const SimConfig& cfg) {
    const Matrix& x = X.data;
    std::size_t K = x.rows(), d = x.cols();
    if (head.W_Q.rows() != d || head.W_K.rows() != d || head.W_Q.cols() != head.W_K.cols() ||
        head.W_V.rows() != d || head.W_V.cols() != d)
        throw ShapeError("apply_head: weight shapes do not match X");
    if (head.kind != HeadKind::identity && A.data.rows() != K) throw ShapeError("apply_head: adjacency size");
    Matrix out(K, d);
    CompiledHead h;
    h.kind = head.kind;
    h.v = detail::nonzero_columns(head.W_V);
    if (h.v.empty()) return out;
    h.q = detail::columns_of(head.W_Q);
    h.k = detail::columns_of(head.W_K);
    Workspace ws;
    AttentionState st;
    detail::attention_pattern(x, h, cfg.activation, ws, st);
    detail::value_matrix(x, h, st.vals);
    detail::graph_values(x, h, cfg.activation, st);
    const std::size_t nv = h.v.size();
    for (std::size_t r = 0; r < K; ++r)
        for (std::size_t vi = 0; vi < nv; ++vi) {
            int col = h.v[vi].col;
            if (head.kind == HeadKind::identity) {
                out(r, col) = st.u[r * nv + vi];
                continue;
            }
            ExactSum s;
            for (std::size_t k = 0; k < K; ++k) {
                double a = head.kind == HeadKind::adj ? A.data(r, k) : A.data(k, r);
                if (a != 0.0) s.add_product(a, st.u[k * nv + vi]);
            }
            out(r, col) = s.value();
        }
    return out;
}

// One layer in place. Each output entry is a single correctly rounded sum of
// the residual entry and every contribution feeding it.
inline void apply_compiled(Matrix& x, const AdjacencyLists& adj, const CompiledLayer& layer, Activation act,
                           Workspace& ws) {
    const std::size_t K = x.rows();
    if (layer.d != x.cols()) throw ShapeError("apply_layer: width mismatch");

    if (ws.heads.size() < layer.heads.size()) ws.heads.resize(layer.heads.size());
    for (std::size_t hi = 0; hi < layer.heads.size(); ++hi) {
        const auto& h = layer.heads[hi];
        auto& st = ws.heads[hi];
        if (ws.memo) {
            if (ws.version.size() != x.cols()) ws.version.assign(x.cols(), 0);
            auto& m = ws.patterns[h.key];
            bool fresh = m.seen.size() == h.reads.size();
            for (std::size_t i = 0; fresh && i < h.reads.size(); ++i) fresh = m.seen[i] == ws.version[h.reads[i]];
            if (fresh) {
                st.begin = m.begin;
                st.idx = m.idx;
                st.weights = m.weights;
            } else {
                detail::attention_pattern(x, h, act, ws, st);
                m.begin = st.begin;
                m.idx = st.idx;
                m.weights = st.weights;
                m.seen.resize(h.reads.size());
                for (std::size_t i = 0; i < h.reads.size(); ++i) m.seen[i] = ws.version[h.reads[i]];
            }
        } else {
            detail::attention_pattern(x, h, act, ws, st);
        }
        if (detail::needs_values(K, act, st)) detail::value_matrix(x, h, st.vals);
        if (h.kind != HeadKind::identity) detail::graph_values(x, h, act, st);
    }

    ws.out.resize(K * layer.attn_out.size());
    for (std::size_t ci = 0; ci < layer.attn_out.size(); ++ci) {
        const auto& [j, feeds] = layer.attn_out[ci];
        for (std::size_t r = 0; r < K; ++r) {
            ExactSum acc(x(r, j));
            for (auto [hi, vi] : feeds) {
                const auto& h = layer.heads[hi];
                const auto& st = ws.heads[hi];
                if (h.kind == HeadKind::identity) {
                    detail::attended_terms(x, h, vi, r, act, st, acc);
                } else {
                    const std::size_t nv = h.v.size();
                    const auto& list = h.kind == HeadKind::adj ? adj.rows[r] : adj.cols[r];
                    for (const auto& t : list) acc.add_product(t.weight, st.u[t.index * nv + vi]);
                }
            }
            ws.out[ci * K + r] = acc.value();
        }
    }
    for (std::size_t ci = 0; ci < layer.attn_out.size(); ++ci)
        for (std::size_t r = 0; r < K; ++r) x(r, layer.attn_out[ci].first) = ws.out[ci * K + r];

    if (ws.memo) {
        ++ws.clock;
        for (int c : layer.writes) ws.version[c] = ws.clock;
    }

    // MLP: three ReLU layers, then the linear map added to the residual.
    const std::size_t w = layer.hidden_width;
    for (int l = 0; l < 3; ++l) {
        std::vector<double>& h = ws.h[l];
        h.resize(K * w);
        for (std::size_t r = 0; r < K; ++r) {
            const double* in = l == 0 ? x.row(r) : &ws.h[l - 1][r * w];
            double* hr = &h[r * w];
            for (const auto& u : layer.hidden[l]) {
                ExactSum s;
                for (const auto& t : u.terms) s.add_product(in[t.index], t.weight);
                double v = s.value();
                hr[u.col] = v > 0.0 ? v : 0.0;
            }
        }
    }
    for (std::size_t r = 0; r < K; ++r) {
        const double* in = &ws.h[2][r * w];
        double* xr = x.row(r);
        for (const auto& oc : layer.out) {
            ExactSum s(xr[oc.col]);
            for (const auto& t : oc.terms) s.add_product(in[t.index], t.weight);
            xr[oc.col] = s.value();
        }
    }
}

inline InputMatrix apply_layer(const InputMatrix& X, const PaddedAdjacency& A, const TransformerLayer& layer,
                               const SimConfig& cfg) {
    detail::check_shapes(X.data, layer);
    if (A.data.rows() != X.K()) throw ShapeError("apply_layer: adjacency size does not match X");
    InputMatrix out = X;
    Workspace ws;
    apply_compiled(out.data, adjacency_lists(A), compile_layer(layer), cfg.activation, ws);
    if (!out.data.all_finite()) throw NumericError("apply_layer: non-finite entry");
    return out;
}

struct TraceRecord {
    std::size_t iteration = 0;
    std::vector<std::pair<std::string, std::vector<double>>> columns;
};

struct RunOptions {
    std::vector<std::string> trace_groups;  // empty: no trace
    std::size_t max_iterations = 0;         // 0: use the config limit
    std::size_t extra_iterations = 0;       // keep looping after termination
};

struct RunResult {
    InputMatrix X;
    std::size_t iterations = 0;
    std::vector<TraceRecord> trace;
};

inline TraceRecord snapshot(const InputMatrix& X, const std::vector<std::string>& groups, std::size_t it) {
    TraceRecord rec;
    rec.iteration = it;
    for (const auto& name : groups) {
        const auto& g = X.schema->group(name);
        for (int i = 0; i < g.width; ++i) {
            std::vector<double> v;
            if (g.scope == Scope::global) {
                v.push_back(X.data(0, g.col(i)));
            } else {
                for (std::size_t r = 1; r < X.K(); ++r) v.push_back(X.data(r, g.col(i)));
            }
            rec.columns.emplace_back(X.schema->column_name(g.col(i)), std::move(v));
        }
    }
    return rec;
}

class Runner {
public:
    Runner(const LoopedProgram& prog, const PaddedAdjacency& A) : prog_(prog), adj_(adjacency_lists(A)) {
        for (const auto& l : prog.layers) compiled_.push_back(compile_layer(l));
    }

    void step(InputMatrix& X, Activation act) {
        if (X.data.row(0) != bound_) {
            ws_.patterns.clear();
            ws_.version.clear();
            bound_ = X.data.row(0);
        }
        ws_.memo = true;
        for (const auto& l : compiled_) apply_compiled(X.data, adj_, l, act, ws_);
        check(X);
    }

private:
    void check(const InputMatrix& X) const {
        if (!X.data.all_finite()) throw NumericError("run: non-finite entry in X");
        for (std::size_t r = static_cast<std::size_t>(X.n) + 1; r < X.K(); ++r)
            for (std::size_t c = 0; c < X.d(); ++c)
                if (X.data(r, c) != 0.0 && X.schema->scope_of(c) != Scope::constant)
                    throw NumericError("run: padding row became nonzero");
    }

    const LoopedProgram& prog_;
    AdjacencyLists adj_;
    std::vector<CompiledLayer> compiled_;
    Workspace ws_;
    const double* bound_ = nullptr;
};

inline void check_conforms(const LoopedProgram& prog, const InputMatrix& X, const PaddedAdjacency& A) {
    if (X.d() != static_cast<std::size_t>(prog.schema->width())) throw ShapeError("X width does not match program");
    if (A.data.rows() != X.K() || A.data.cols() != X.K()) throw ShapeError("adjacency size does not match X");
    if (!prog.layers.empty()) detail::check_shapes(X.data, prog.layers.front());
}

inline RunResult run_loop(const LoopedProgram& prog, const InputMatrix& X0, const PaddedAdjacency& A,
                          const SimConfig& cfg, const RunOptions& opt = {}) {
    check_conforms(prog, X0, A);
    RunResult res{X0, 0, {}};
    Runner runner(prog, A);
    std::size_t limit = opt.max_iterations ? opt.max_iterations : cfg.iteration_limit(X0.n);
    bool trace = !opt.trace_groups.empty();
    if (trace) res.trace.push_back(snapshot(res.X, opt.trace_groups, 0));
    while (res.X.data(0, prog.term_column) < 0.5) {
        if (res.iterations >= limit)
            throw IterationLimitExceeded("run_loop: no termination after " + std::to_string(limit) + " iterations",
                                         res.iterations);
        runner.step(res.X, cfg.activation);
        ++res.iterations;
        if (trace) res.trace.push_back(snapshot(res.X, opt.trace_groups, res.iterations));
    }
    for (std::size_t i = 0; i < opt.extra_iterations; ++i) {
        runner.step(res.X, cfg.activation);
        if (trace) res.trace.push_back(snapshot(res.X, opt.trace_groups, res.iterations + i + 1));
    }
    return res;
}

// Fixed number of iterations regardless of the termination column.
inline InputMatrix run_steps(const LoopedProgram& prog, const InputMatrix& X0, const PaddedAdjacency& A,
                             const SimConfig& cfg, std::size_t steps,
                             const std::function<void(std::size_t, const InputMatrix&)>& on_step = {}) {
    check_conforms(prog, X0, A);
    InputMatrix X = X0;
    Runner runner(prog, A);
    for (std::size_t i = 1; i <= steps; ++i) {
        runner.step(X, cfg.activation);
        if (on_step) on_step(i, X);
    }
    return X;
}

}  // namespace loom
