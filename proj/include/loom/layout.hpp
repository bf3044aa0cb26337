#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loom/config.hpp"
#include "loom/numerics.hpp"
#include "loom/posenc.hpp"

namespace loom {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotTerminated : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AlgorithmId { dijkstra, bfs, dfs, scc, multitask, graph_subleq };

inline std::string to_string(AlgorithmId a) {
    switch (a) {
        case AlgorithmId::dijkstra: return "dijkstra";
        case AlgorithmId::bfs: return "bfs";
        case AlgorithmId::dfs: return "dfs";
        case AlgorithmId::scc: return "scc";
        case AlgorithmId::multitask: return "multitask";
        case AlgorithmId::graph_subleq: return "graph_subleq";
    }
    return "?";
}

inline AlgorithmId parse_algorithm(const std::string& s) {
    for (auto a : {AlgorithmId::dijkstra, AlgorithmId::bfs, AlgorithmId::dfs, AlgorithmId::scc,
                   AlgorithmId::multitask, AlgorithmId::graph_subleq})
        if (to_string(a) == s) return a;
    if (s == "subleq") return AlgorithmId::graph_subleq;
    throw ParseError("unknown algorithm '" + s + "'");
}

// Row scope of a column group. Constant columns are never written by programs.
enum class Scope { global, node, constant };

// Value domain; boolean columns are known nonnegative, which halves MLP pass-through cost.
enum class ValueKind { real, boolean, integer, position };

struct ColumnGroup {
    std::string name;
    int begin = 0;
    int width = 1;
    Scope scope = Scope::global;
    bool scratch = false;
    ValueKind kind = ValueKind::real;

    int col(int i = 0) const { return begin + i; }
};

class ColumnSchema {
public:
    int add(const std::string& name, int width, Scope scope, ValueKind kind = ValueKind::real, bool scratch = false) {
        if (index_.count(name)) throw SchemaError("duplicate column group '" + name + "'");
        if (width < 1) throw SchemaError("column group '" + name + "' needs positive width");
        groups_.push_back({name, width_, width, scope, scratch, kind});
        index_[name] = groups_.size() - 1;
        for (int i = 0; i < width; ++i) owner_.push_back(static_cast<int>(groups_.size() - 1));
        width_ += width;
        return width_ - width;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const ColumnGroup& group(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw SchemaError("unknown column group '" + name + "'");
        return groups_[it->second];
    }

    int col(const std::string& name) const {
        const auto& g = group(name);
        if (g.width != 1) throw SchemaError("column group '" + name + "' is not scalar");
        return g.begin;
    }

    const ColumnGroup& group_of(int c) const {
        if (c < 0 || c >= width_) throw SchemaError("column index out of range");
        return groups_[owner_[c]];
    }

    std::string column_name(int c) const {
        const auto& g = group_of(c);
        if (g.width == 1) return g.name;
        return g.name + "." + std::to_string(c - g.begin);
    }

    Scope scope_of(int c) const { return group_of(c).scope; }
    int width() const { return width_; }
    const std::vector<ColumnGroup>& groups() const { return groups_; }

    int scratch_count() const {
        int s = 0;
        for (const auto& g : groups_)
            if (g.scratch) s += g.width;
        return s;
    }

    // Widens the schema with anonymous scratch columns.
    void pad_to(int d) {
        int k = 0;
        while (width_ < d) {
            while (has("pad_" + std::to_string(k))) ++k;
            add("pad_" + std::to_string(k), 1, Scope::global, ValueKind::real, true);
        }
    }

private:
    std::vector<ColumnGroup> groups_;
    std::map<std::string, std::size_t> index_;
    std::vector<int> owner_;
    int width_ = 0;
};

struct Edge {
    int source = 0;
    int target = 0;
    double weight = 1.0;
};

struct Graph {
    int n = 0;
    bool directed = false;
    bool weighted = false;
    std::vector<Edge> edges;
    std::string header;               // first line of the source file, echoed verbatim in traces
    std::vector<std::string> lines;  // edge lines as read

    std::string header_line() const {
        if (!header.empty()) return header;
        return std::to_string(n) + " " + std::to_string(edges.size()) + " " +
               (directed ? "directed" : "undirected") + " " + (weighted ? "weighted" : "unweighted");
    }

    double min_weight() const {
        double m = 0.0;
        for (const auto& e : edges)
            if (m == 0.0 || std::fabs(e.weight) < m) m = std::fabs(e.weight);
        return m;
    }

    double max_weight() const {
        double m = 0.0;
        for (const auto& e : edges) m = std::max(m, std::fabs(e.weight));
        return m;
    }

    // Dense n x n adjacency, 0-based, honouring direction.
    std::vector<std::vector<double>> dense(bool unit_weights = false) const {
        std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
        for (const auto& e : edges) {
            double w = unit_weights ? 1.0 : e.weight;
            a[e.source - 1][e.target - 1] = w;
            if (!directed) a[e.target - 1][e.source - 1] = w;
        }
        return a;
    }
};

inline void validate(const Graph& g) {
    if (g.n < 1) throw ParseError("graph needs at least one node");
    for (const auto& e : g.edges) {
        if (e.source < 1 || e.source > g.n || e.target < 1 || e.target > g.n)
            throw ParseError("edge endpoint out of range");
        if (!(e.weight > 0.0)) throw ParseError("edge weights must be positive");
    }
}

inline Graph parse_graph(std::istream& in) {
    Graph g;
    std::string line;
    while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {}
    if (line.empty()) throw ParseError("missing graph header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    g.header = line;
    std::istringstream hs(line);
    int m = 0;
    std::string dir, wt;
    if (!(hs >> g.n >> m >> dir >> wt)) throw ParseError("malformed graph header '" + line + "'");
    if (dir != "directed" && dir != "undirected") throw ParseError("expected directed|undirected");
    if (wt != "weighted" && wt != "unweighted") throw ParseError("expected weighted|unweighted");
    g.directed = dir == "directed";
    g.weighted = wt == "weighted";
    for (int i = 0; i < m; ++i) {
        if (!std::getline(in, line)) throw ParseError("graph file ends after " + std::to_string(i) + " edges");
        std::istringstream es(line);
        Edge e;
        if (!(es >> e.source >> e.target)) throw ParseError("malformed edge line '" + line + "'");
        if (g.weighted && !(es >> e.weight)) throw ParseError("missing weight on '" + line + "'");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        g.edges.push_back(e);
        g.lines.push_back(line);
    }
    validate(g);
    return g;
}

inline Graph load_graph(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open graph file '" + path + "'");
    return parse_graph(f);
}

inline std::string format_graph(const Graph& g) {
    std::ostringstream os;
    os.precision(17);
    os << g.header_line() << "\n";
    if (g.lines.size() == g.edges.size()) {
        for (const auto& l : g.lines) os << l << "\n";
        return os.str();
    }
    for (const auto& e : g.edges) {
        os << e.source << " " << e.target;
        if (g.weighted) os << " " << e.weight;
        os << "\n";
    }
    return os.str();
}

struct PaddedAdjacency {
    Matrix data;
    int n = 0;

    std::size_t K() const { return data.rows(); }
};

inline PaddedAdjacency pad_adjacency(const Graph& g, std::size_t K, bool transpose, double scale = 1.0,
                                     bool unit_weights = false) {
    if (K < static_cast<std::size_t>(g.n) + 1) throw SizeError("pad_adjacency: K < n + 1");
    PaddedAdjacency a{Matrix(K, K), g.n};
    for (const auto& e : g.edges) {
        double w = unit_weights ? 1.0 : e.weight / scale;
        int s = e.source, t = e.target;
        if (transpose) std::swap(s, t);
        a.data(s, t) = w;
        if (!g.directed) a.data(t, s) = w;
    }
    return a;
}

struct InputMatrix {
    Matrix data;
    std::shared_ptr<const ColumnSchema> schema;
    int n = 0;
    double weight_scale = 1.0;

    std::size_t K() const { return data.rows(); }
    std::size_t d() const { return data.cols(); }

    double get(const std::string& name, std::size_t row = 0, int i = 0) const {
        return data(row, schema->group(name).col(i));
    }
    void set(const std::string& name, std::size_t row, double v, int i = 0) {
        data(row, schema->group(name).col(i)) = v;
    }
    Pos pos(const std::string& name, std::size_t row = 0) const {
        const auto& g = schema->group(name);
        return {data(row, g.col(0)), data(row, g.col(1))};
    }
    void set_pos(const std::string& name, std::size_t row, const Pos& p) {
        const auto& g = schema->group(name);
        data(row, g.col(0)) = p[0];
        data(row, g.col(1)) = p[1];
    }
    std::vector<double> node_column(const std::string& name, int i = 0) const {
        std::vector<double> v(n);
        int c = schema->group(name).col(i);
        for (int r = 1; r <= n; ++r) v[r - 1] = data(r, c);
        return v;
    }
};

// Blank state: constants placed, everything else zero. Rows 1..rows_with_positions
// receive positional encodings and the local bias.
inline InputMatrix blank_input(std::shared_ptr<const ColumnSchema> schema, std::size_t K, int n,
                               const PositionTable& table, std::size_t rows_with_positions) {
    InputMatrix x{Matrix(K, schema->width()), schema, n};
    x.set("B_global", 0, 1.0);
    for (std::size_t r = 1; r <= rows_with_positions; ++r) {
        x.set("B_local", r, 1.0);
        x.set_pos("P", r, table[r]);
    }
    return x;
}

struct EncodeOptions {
    int start = 1;
    bool gamma_s = false;  // multitask: true selects the depth-first mode
};

inline bool needs_weights(AlgorithmId algo, const EncodeOptions& opt) {
    return algo == AlgorithmId::dijkstra || (algo == AlgorithmId::multitask && !opt.gamma_s);
}

inline void check_bounds(const Graph& g, AlgorithmId algo, const SimConfig& cfg, double scale, bool weighted) {
    if (!cfg.enforce_bounds) return;
    const double n = g.n;
    if (n > cfg.omega) throw BoundsError("node count exceeds omega");
    switch (algo) {
        case AlgorithmId::bfs:
        case AlgorithmId::dfs:
            if (n + 1 >= cfg.omega_hat()) throw BoundsError("node count exceeds the priority range");
            break;
        case AlgorithmId::scc:
            if (3 * n + 1 >= cfg.omega_hat()) throw BoundsError("node count exceeds a third of the priority range");
            break;
        case AlgorithmId::dijkstra:
        case AlgorithmId::multitask: {
            double w = weighted ? g.max_weight() / scale : 1.0;
            if (n * w + n + 1 >= cfg.omega_hat()) throw BoundsError("reweighted diameter may exceed the sentinel");
            break;
        }
        case AlgorithmId::graph_subleq: break;
    }
}

// Builds X and the padded adjacency for a graph program (K = n + 1).
inline std::pair<InputMatrix, PaddedAdjacency> encode(const Graph& g, AlgorithmId algo, int start,
                                                      const SimConfig& cfg,
                                                      std::shared_ptr<const ColumnSchema> schema,
                                                      const EncodeOptions& extra = {}) {
    validate(g);
    if (algo == AlgorithmId::graph_subleq) throw SchemaError("encode: use encode_subleq for graph_subleq");
    if (start < 1 || start > g.n) throw BoundsError("start node out of range");
    RotationSpec spec = quantize_angle(cfg.delta);
    const std::size_t K = g.n + 1;
    PositionTable table = enumerate_positions(g.n, spec);

    EncodeOptions opt = extra;
    opt.start = start;
    bool weighted = needs_weights(algo, opt) && g.weighted;
    double scale = weighted ? g.min_weight() : 1.0;
    check_bounds(g, algo, cfg, scale, weighted);

    InputMatrix x = blank_input(schema, K, g.n, table, g.n);
    x.weight_scale = scale;
    const double hat = cfg.omega_hat();

    x.set_pos("idx_cur", 0, table[0]);
    x.set_pos("idx_best", 0, table[0]);
    x.set("val_best", 0, cfg.mask_value());
    if (schema->has("node")) x.set_pos("node", 0, table[0]);

    auto init_priorities = [&](const std::string& name) {
        for (int i = 1; i <= g.n; ++i) x.set(name, i, i == start ? 0.0 : hat);
    };
    for (int i = 1; i <= g.n; ++i) {
        if (schema->has("prev")) x.set("prev", i, i);
    }
    switch (algo) {
        case AlgorithmId::dijkstra: init_priorities("dists"); break;
        case AlgorithmId::bfs:
            init_priorities("orders");
            x.set("disc", start, 1.0);
            break;
        case AlgorithmId::dfs: init_priorities("orders"); break;
        case AlgorithmId::scc:
            init_priorities("orders1");
            for (int i = 1; i <= g.n; ++i) x.set("orders2", i, hat);
            x.set_pos("scc_cur", 0, table[0]);
            x.set_pos("scc_best", 0, table[0]);
            x.set_pos("scc", 0, table[0]);
            x.set_pos("node_ref", 0, table[0]);
            for (int i = 1; i <= g.n; ++i) {
                x.set("sccs", i, i);
                x.set_pos("sccs_pos", i, table[i]);
            }
            break;
        case AlgorithmId::multitask:
            init_priorities("dists");
            x.set("gamma", 0, opt.gamma_s ? 1.0 : 0.0);
            break;
        case AlgorithmId::graph_subleq: break;
    }
    PaddedAdjacency a = pad_adjacency(g, K, false, scale, !weighted);
    return {std::move(x), std::move(a)};
}

struct Decoded {
    std::vector<int> prev;
    std::vector<double> dists;
    std::vector<int> sccs;
    std::vector<double> memory;
};

inline int to_index(double v) { return static_cast<int>(std::lround(v)); }

inline Decoded decode(const InputMatrix& x, AlgorithmId algo, bool require_termination = true) {
    const auto& s = *x.schema;
    if (require_termination && algo != AlgorithmId::graph_subleq && x.get("term") < 0.5)
        throw NotTerminated("decode: termination flag is not set");
    Decoded out;
    auto ints = [&](const std::string& name) {
        std::vector<int> v;
        for (double d : x.node_column(name)) v.push_back(to_index(d));
        return v;
    };
    switch (algo) {
        case AlgorithmId::dijkstra:
        case AlgorithmId::multitask:
            out.prev = ints("prev");
            out.dists = x.node_column("dists");
            break;
        case AlgorithmId::bfs:
        case AlgorithmId::dfs: out.prev = ints("prev"); break;
        case AlgorithmId::scc: out.sccs = ints("sccs"); break;
        case AlgorithmId::graph_subleq: {
            int c = s.col("M");
            for (std::size_t r = 1; r < x.K(); ++r) out.memory.push_back(x.data(r, c));
            break;
        }
    }
    return out;
}

}  // namespace loom
