#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "loom/config.hpp"
#include "loom/layout.hpp"
#include "loom/oracles.hpp"
#include "loom/programs.hpp"
#include "loom/transformer.hpp"

namespace loom {

// splitmix64: small, portable and identical on every platform, unlike the
// standard distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // Uniform in [0, n).
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
    // Uniform in [lo, hi].
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
    // Uniform in [0, 1) with 53 bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    bool chance(double p) { return unit() < p; }

private:
    std::uint64_t state_;
};

// LOOM_SEED, when set to an integer, replaces the given seed.
inline std::uint64_t resolve_seed(std::uint64_t seed) {
    if (const char* env = std::getenv("LOOM_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && end != env) return v;
    }
    return seed;
}

enum class GraphKind { er_connected, er_directed, weighted_er };

inline std::string to_string(GraphKind k) {
    switch (k) {
        case GraphKind::er_connected: return "er_connected";
        case GraphKind::er_directed: return "er_directed";
        case GraphKind::weighted_er: return "weighted_er";
    }
    return "?";
}

inline GraphKind parse_graph_kind(const std::string& s) {
    if (s == "er_connected") return GraphKind::er_connected;
    if (s == "er_directed") return GraphKind::er_directed;
    if (s == "weighted_er") return GraphKind::weighted_er;
    throw ParseError("unknown graph kind '" + s + "'");
}

inline GraphKind default_kind(AlgorithmId a) {
    switch (a) {
        case AlgorithmId::dijkstra:
        case AlgorithmId::multitask: return GraphKind::weighted_er;
        case AlgorithmId::scc: return GraphKind::er_directed;
        default: return GraphKind::er_connected;
    }
}

// Connected undirected graphs are a random spanning tree plus independent
// extra edges; weights are multiples of 1/4 in [1/4, 4] with at least one
// edge at 1/4, so dividing by the minimum weight stays exact.
inline Graph random_graph(GraphKind kind, int n, Rng& rng) {
    if (n < 1) throw BoundsError("random_graph: n must be positive");
    Graph g;
    g.n = n;
    g.directed = kind == GraphKind::er_directed;
    g.weighted = kind == GraphKind::weighted_er;
    std::vector<std::vector<char>> has(n + 1, std::vector<char>(n + 1, 0));
    auto add = [&](int u, int v) {
        if (u == v || has[u][v]) return;
        has[u][v] = 1;
        if (!g.directed) has[v][u] = 1;
        g.edges.push_back({u, v, 1.0});
    };
    if (g.directed) {
        const double p = std::min(1.0, 1.5 / n);
        for (int u = 1; u <= n; ++u)
            for (int v = 1; v <= n; ++v)
                if (u != v && rng.chance(p)) add(u, v);
    } else {
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i + 1;
        for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        for (int i = 1; i < n; ++i) add(perm[rng.below(i)], perm[i]);
        const double p = n > 1 ? std::min(1.0, 2.0 / (n - 1)) : 0.0;
        for (int u = 1; u <= n; ++u)
            for (int v = u + 1; v <= n; ++v)
                if (!has[u][v] && rng.chance(p)) add(u, v);
    }
    if (g.weighted) {
        for (auto& e : g.edges) e.weight = 0.25 * static_cast<double>(rng.range(1, 16));
        if (!g.edges.empty()) g.edges[rng.below(g.edges.size())].weight = 0.25;
    }
    return g;
}

inline std::vector<Graph> generate_graphs(GraphKind kind, int n, int count, std::uint64_t seed) {
    if (n < 1 || count < 0) throw BoundsError("generate_graphs: bad size");
    Rng rng(seed);
    std::vector<Graph> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(random_graph(kind, n, rng));
    return out;
}

// Which traversal the multitask network runs.
enum class TaskMode { shortest_path, breadth_first, depth_first };

inline std::string to_string(TaskMode m) {
    switch (m) {
        case TaskMode::shortest_path: return "sp";
        case TaskMode::breadth_first: return "bfs";
        case TaskMode::depth_first: return "dfs";
    }
    return "?";
}

struct RunSpec {
    int start = 1;
    bool clrs_order = false;
    TaskMode mode = TaskMode::shortest_path;
};

// Graph as the multitask mode sees it: unit weights outside shortest paths.
inline Graph task_graph(const Graph& g, AlgorithmId algo, TaskMode mode) {
    if (algo != AlgorithmId::multitask || mode == TaskMode::shortest_path) return g;
    Graph h = g;
    h.weighted = false;
    h.header.clear();
    h.lines.clear();
    for (auto& e : h.edges) e.weight = 1.0;
    return h;
}

struct Expected {
    std::vector<int> prev;
    std::vector<double> dists;  // in graph units
    std::vector<int> sccs;
};

inline Expected oracle_outputs(AlgorithmId algo, const Graph& g, const RunSpec& spec, double unreached) {
    Expected e;
    switch (algo) {
        case AlgorithmId::dijkstra: {
            auto r = oracle::dijkstra_ref(g, spec.start, unreached);
            e.prev = r.prev;
            e.dists = r.dists;
            break;
        }
        case AlgorithmId::bfs: e.prev = oracle::bfs_ref(g, spec.start, spec.clrs_order); break;
        case AlgorithmId::dfs: e.prev = oracle::dfs_ref(g, spec.start); break;
        case AlgorithmId::scc: e.sccs = oracle::scc_ref(g, spec.start); break;
        case AlgorithmId::multitask:
            if (spec.mode == TaskMode::depth_first) {
                e.prev = oracle::dfs_ref(g, spec.start);
            } else {
                auto r = oracle::dijkstra_ref(g, spec.start, unreached);
                e.prev = spec.mode == TaskMode::breadth_first ? oracle::bfs_ref(g, spec.start, true) : r.prev;
                e.dists = r.dists;
            }
            break;
        case AlgorithmId::graph_subleq: throw SchemaError("oracle_outputs: not a graph program");
    }
    return e;
}

struct Outcome {
    bool match = false;
    bool failed = false;  // exception instead of a decoded result
    std::size_t iterations = 0;
    std::string detail;
    Decoded decoded;
    double weight_scale = 1.0;
};

// Exact comparison; distances get an absolute tolerance in softmax mode.
inline std::string compare(const Decoded& d, const Expected& e, double scale, double tolerance) {
    if (d.prev != e.prev) {
        for (std::size_t i = 0; i < std::min(d.prev.size(), e.prev.size()); ++i)
            if (d.prev[i] != e.prev[i])
                return "prev[" + std::to_string(i + 1) + "] " + std::to_string(d.prev[i]) + " expected " +
                       std::to_string(e.prev[i]);
        return "prev length";
    }
    if (d.sccs != e.sccs) {
        for (std::size_t i = 0; i < std::min(d.sccs.size(), e.sccs.size()); ++i)
            if (d.sccs[i] != e.sccs[i])
                return "sccs[" + std::to_string(i + 1) + "] " + std::to_string(d.sccs[i]) + " expected " +
                       std::to_string(e.sccs[i]);
        return "sccs length";
    }
    if (!e.dists.empty()) {
        if (d.dists.size() != e.dists.size()) return "dists length";
        for (std::size_t i = 0; i < e.dists.size(); ++i) {
            double got = d.dists[i] * scale;
            bool ok = tolerance > 0.0 ? std::fabs(got - e.dists[i]) <= tolerance : got == e.dists[i];
            if (!ok) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "dists[%zu] %.17g expected %.17g", i + 1, got, e.dists[i]);
                return buf;
            }
        }
    }
    return {};
}

inline ProgramOptions program_options(const SimConfig& cfg, bool clrs_order) {
    return {clrs_order, cfg.rounding_enabled, cfg.write_prevention_enabled};
}

inline LoopedProgram suite_program(AlgorithmId algo, const SimConfig& cfg, bool clrs_order) {
    return build_program(algo, cfg, program_options(cfg, clrs_order));
}

inline EncodeOptions encode_options(const RunSpec& spec) {
    EncodeOptions o;
    o.start = spec.start;
    o.gamma_s = spec.mode == TaskMode::depth_first;
    return o;
}

// encode, run, decode and compare one graph. Failures are captured.
inline Outcome run_graph(const LoopedProgram& prog, AlgorithmId algo, const Graph& graph, const SimConfig& cfg,
                         const RunSpec& spec = {}, std::size_t extra_iterations = 0) {
    Outcome out;
    try {
        Graph g = task_graph(graph, algo, spec.mode);
        auto [X, A] = encode(g, algo, spec.start, cfg, prog.schema, encode_options(spec));
        out.weight_scale = X.weight_scale;
        RunOptions ro;
        ro.extra_iterations = extra_iterations;
        auto res = run_loop(prog, X, A, cfg, ro);
        out.iterations = res.iterations;
        out.decoded = decode(res.X, algo);
        Expected e = oracle_outputs(algo, g, spec, cfg.omega_hat() * X.weight_scale);
        double tol = cfg.activation == Activation::softmax ? 1e-6 : 0.0;
        out.detail = compare(out.decoded, e, X.weight_scale, tol);
        out.match = out.detail.empty();
    } catch (const IterationLimitExceeded& e) {
        out.failed = true;
        out.iterations = e.iterations;
        out.detail = e.what();
    } catch (const std::exception& e) {
        out.failed = true;
        out.detail = e.what();
    }
    return out;
}

struct SuiteOptions {
    RunSpec spec;
    unsigned threads = 0;  // 0: hardware concurrency
    std::uint64_t seed = 0;
    std::string split;     // defaults to n
};

struct SuiteReport {
    AlgorithmId algorithm = AlgorithmId::bfs;
    std::string split;
    std::size_t count = 0;
    std::size_t matches = 0;
    std::vector<Outcome> outcomes;
    SimConfig cfg;
    SuiteOptions options;
    double seconds = 0.0;

    double accuracy() const { return count ? 100.0 * static_cast<double>(matches) / static_cast<double>(count) : 0.0; }
    bool perfect() const { return count > 0 && matches == count; }
};

// Graphs run in parallel; each result lands in its own slot so the report
// does not depend on scheduling.
inline SuiteReport run_suite(AlgorithmId algo, const std::vector<Graph>& graphs, const SimConfig& cfg,
                             const SuiteOptions& opt = {}) {
    auto t0 = std::chrono::steady_clock::now();
    SuiteReport rep;
    rep.algorithm = algo;
    rep.cfg = cfg;
    rep.options = opt;
    rep.count = graphs.size();
    rep.split = !opt.split.empty() ? opt.split : graphs.empty() ? "0" : std::to_string(graphs.front().n);
    rep.outcomes.resize(graphs.size());
    const LoopedProgram prog = suite_program(algo, cfg, opt.spec.clrs_order);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < graphs.size();)
            rep.outcomes[i] = run_graph(prog, algo, graphs[i], cfg, opt.spec);
    };
    unsigned t = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    t = static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(1, graphs.size())));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < t; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (const auto& o : rep.outcomes) rep.matches += o.match ? 1 : 0;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string config_echo(const SimConfig& c) {
    std::ostringstream os;
    os << "omega=" << fmt(c.omega) << " epsilon=" << fmt(c.epsilon) << " delta=" << fmt(c.delta)
       << " eta=" << fmt(c.eta) << " temperature=" << fmt(c.temperature)
       << " annealed_temperature=" << fmt(c.annealed_temperature) << " activation=" << to_string(c.activation)
       << " max_iterations=" << c.max_iterations << " rounding=" << c.rounding_enabled
       << " write_prevention=" << c.write_prevention_enabled << " mask_fraction=" << fmt(c.mask_fraction)
       << " enforce_bounds=" << c.enforce_bounds;
    return os.str();
}

inline SimConfig parse_config_echo(const std::string& line) {
    SimConfig c;
    std::istringstream is(line);
    std::string kv;
    while (is >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key=value, got '" + kv + "'");
        std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        try {
            if (k == "omega") c.omega = std::stod(v);
            else if (k == "epsilon") c.epsilon = std::stod(v);
            else if (k == "delta") c.delta = std::stod(v);
            else if (k == "eta") c.eta = std::stod(v);
            else if (k == "temperature") c.temperature = std::stod(v);
            else if (k == "annealed_temperature") c.annealed_temperature = std::stod(v);
            else if (k == "activation") c.activation = v == "softmax" ? Activation::softmax : Activation::hardmax;
            else if (k == "max_iterations") c.max_iterations = std::stoull(v);
            else if (k == "rounding") c.rounding_enabled = v == "1";
            else if (k == "write_prevention") c.write_prevention_enabled = v == "1";
            else if (k == "mask_fraction") c.mask_fraction = std::stod(v);
            else if (k == "enforce_bounds") c.enforce_bounds = v == "1";
            else throw ParseError("config: unknown key '" + k + "'");
        } catch (const std::invalid_argument&) {
            throw ParseError("config: bad value for '" + k + "'");
        }
    }
    return c;
}

inline std::string suite_name(AlgorithmId algo, const SuiteOptions& opt) {
    std::string s = to_string(algo);
    if (algo == AlgorithmId::multitask) s += ":" + to_string(opt.spec.mode);
    if (algo == AlgorithmId::bfs && opt.spec.clrs_order) s += ":clrs";
    return s;
}

// "bfs 16 100/100 100.0%"
inline std::string accuracy_line(const SuiteReport& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %zu/%zu %.1f%%", r.matches, r.count, r.accuracy());
    return suite_name(r.algorithm, r.options) + " " + r.split + buf;
}

// TSV report. Timing is left out unless asked for so that reports from the
// same seed and config are byte-identical.
inline std::string format_report(const SuiteReport& r, bool timing = false) {
    std::ostringstream os;
    os << "suite\t" << suite_name(r.algorithm, r.options) << "\tsplit\t" << r.split << "\tseed\t" << r.options.seed
       << "\tstart\t" << r.options.spec.start << "\n";
    os << "config\t" << config_echo(r.cfg) << "\n";
    for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
        const auto& o = r.outcomes[i];
        os << "graph\t" << i << "\t" << (o.match ? "match" : o.failed ? "failed" : "mismatch") << "\t"
           << o.iterations;
        if (!o.detail.empty()) os << "\t" << o.detail;
        os << "\n";
    }
    os << accuracy_line(r) << "\n";
    if (timing) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
        os << "time\t" << buf << "s\n";
    }
    return os.str();
}

// Traces: header, config, run description, graph echo, initial X at full
// precision, then one block of column snapshots per iteration.
struct TraceFile {
    SimConfig cfg;
    AlgorithmId algorithm = AlgorithmId::bfs;
    RunSpec spec;
    Graph graph;
    std::vector<std::string> groups;
    std::vector<std::string> schema;
    Matrix X0;
    std::vector<TraceRecord> records;
};

inline void write_trace(std::ostream& os, const TraceFile& t) {
    os << "loom-trace 1\n";
    os << "schema";
    for (const auto& c : t.schema) os << "\t" << c;
    os << "\n";
    os << "config " << config_echo(t.cfg) << "\n";
    os << "run " << to_string(t.algorithm) << " start=" << t.spec.start << " clrs=" << t.spec.clrs_order
       << " mode=" << to_string(t.spec.mode) << "\n";
    os << "groups";
    for (const auto& g : t.groups) os << " " << g;
    os << "\n";
    os << "graph\n" << format_graph(t.graph) << "end-graph\n";
    os << "init " << t.X0.rows() << " " << t.X0.cols() << "\n";
    for (std::size_t r = 0; r < t.X0.rows(); ++r) {
        for (std::size_t c = 0; c < t.X0.cols(); ++c) os << (c ? " " : "") << fmt(t.X0(r, c));
        os << "\n";
    }
    for (const auto& rec : t.records) {
        os << "iteration " << rec.iteration << "\n";
        for (const auto& [name, vals] : rec.columns) {
            os << name;
            for (double v : vals) os << "\t" << fmt(v);
            os << "\n";
        }
    }
}

inline TaskMode parse_task_mode(const std::string& s) {
    if (s == "sp") return TaskMode::shortest_path;
    if (s == "bfs") return TaskMode::breadth_first;
    if (s == "dfs") return TaskMode::depth_first;
    throw ParseError("unknown task mode '" + s + "'");
}

inline TraceFile read_trace(std::istream& in) {
    TraceFile t;
    std::string line;
    auto need = [&](const char* what) {
        if (!std::getline(in, line)) throw ParseError(std::string("trace: missing ") + what);
    };
    need("header");
    if (line != "loom-trace 1") throw ParseError("trace: bad header");
    need("schema");
    {
        std::istringstream is(line);
        std::string tok;
        std::getline(is, tok, '\t');
        if (tok != "schema") throw ParseError("trace: expected schema line");
        while (std::getline(is, tok, '\t')) t.schema.push_back(tok);
    }
    need("config");
    if (line.rfind("config ", 0) != 0) throw ParseError("trace: expected config line");
    t.cfg = parse_config_echo(line.substr(7));
    need("run");
    {
        std::istringstream is(line);
        std::string tag, algo;
        is >> tag >> algo;
        if (tag != "run") throw ParseError("trace: expected run line");
        t.algorithm = parse_algorithm(algo);
        std::string kv;
        while (is >> kv) {
            auto eq = kv.find('=');
            std::string k = kv.substr(0, eq), v = eq == std::string::npos ? "" : kv.substr(eq + 1);
            if (k == "start") t.spec.start = std::stoi(v);
            else if (k == "clrs") t.spec.clrs_order = v == "1";
            else if (k == "mode") t.spec.mode = parse_task_mode(v);
        }
    }
    need("groups");
    {
        std::istringstream is(line);
        std::string tok;
        is >> tok;
        if (tok != "groups") throw ParseError("trace: expected groups line");
        while (is >> tok) t.groups.push_back(tok);
    }
    need("graph");
    if (line != "graph") throw ParseError("trace: expected graph block");
    std::ostringstream gs;
    for (;;) {
        need("end-graph");
        if (line == "end-graph") break;
        gs << line << "\n";
    }
    std::istringstream gin(gs.str());
    t.graph = parse_graph(gin);
    need("init");
    std::size_t K = 0, d = 0;
    {
        std::istringstream is(line);
        std::string tag;
        if (!(is >> tag >> K >> d) || tag != "init") throw ParseError("trace: expected init line");
    }
    t.X0 = Matrix(K, d);
    for (std::size_t r = 0; r < K; ++r) {
        need("init row");
        std::istringstream is(line);
        for (std::size_t c = 0; c < d; ++c)
            if (!(is >> t.X0(r, c))) throw ParseError("trace: short init row");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("iteration ", 0) == 0) {
            TraceRecord rec;
            rec.iteration = std::stoull(line.substr(10));
            t.records.push_back(std::move(rec));
            continue;
        }
        if (t.records.empty()) throw ParseError("trace: column before first iteration");
        std::istringstream is(line);
        std::string name, tok;
        std::getline(is, name, '\t');
        std::vector<double> vals;
        while (std::getline(is, tok, '\t')) vals.push_back(std::stod(tok));
        t.records.back().columns.emplace_back(name, std::move(vals));
    }
    return t;
}

inline std::vector<std::string> schema_names(const ColumnSchema& s) {
    std::vector<std::string> out;
    for (int c = 0; c < s.width(); ++c) out.push_back(s.column_name(c));
    return out;
}

// Runs one graph with tracing and packages the result.
inline TraceFile trace_run(AlgorithmId algo, const Graph& graph, const SimConfig& cfg, const RunSpec& spec,
                           std::vector<std::string> groups = {}) {
    if (groups.empty()) groups = default_trace_groups(algo);
    LoopedProgram prog = suite_program(algo, cfg, spec.clrs_order);
    Graph g = task_graph(graph, algo, spec.mode);
    auto [X, A] = encode(g, algo, spec.start, cfg, prog.schema, encode_options(spec));
    RunOptions ro;
    ro.trace_groups = groups;
    auto res = run_loop(prog, X, A, cfg, ro);
    TraceFile t;
    t.cfg = cfg;
    t.algorithm = algo;
    t.spec = spec;
    t.graph = graph;
    t.groups = groups;
    t.schema = schema_names(*prog.schema);
    t.X0 = X.data;
    t.records = std::move(res.trace);
    return t;
}

// Re-runs from the recorded initial X. Returns an empty string when every
// snapshot matches bit for bit, else a description of the first difference.
inline std::string replay_trace(const TraceFile& t) {
    LoopedProgram prog = suite_program(t.algorithm, t.cfg, t.spec.clrs_order);
    if (schema_names(*prog.schema) != t.schema) return "schema differs from the recorded one";
    Graph g = task_graph(t.graph, t.algorithm, t.spec.mode);
    auto [X, A] = encode(g, t.algorithm, t.spec.start, t.cfg, prog.schema, encode_options(t.spec));
    if (t.X0.rows() != X.K() || t.X0.cols() != X.d()) return "initial X has the wrong shape";
    X.data = t.X0;
    RunOptions ro;
    ro.trace_groups = t.groups;
    ro.max_iterations = t.records.empty() ? 0 : t.records.back().iteration;
    RunResult res;
    try {
        res = run_loop(prog, X, A, t.cfg, ro);
    } catch (const std::exception& e) {
        return std::string("replay failed: ") + e.what();
    }
    if (res.trace.size() != t.records.size())
        return "iteration count " + std::to_string(res.trace.size()) + " vs " + std::to_string(t.records.size());
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
        const auto& a = res.trace[i];
        const auto& b = t.records[i];
        if (a.iteration != b.iteration || a.columns.size() != b.columns.size())
            return "record " + std::to_string(i) + " layout differs";
        for (std::size_t c = 0; c < a.columns.size(); ++c) {
            if (a.columns[c].first != b.columns[c].first) return "record " + std::to_string(i) + " column names differ";
            const auto& x = a.columns[c].second;
            const auto& y = b.columns[c].second;
            if (x.size() != y.size()) return "record " + std::to_string(i) + " column size differs";
            for (std::size_t k = 0; k < x.size(); ++k)
                if (fmt(x[k]) != fmt(y[k]))
                    return "iteration " + std::to_string(a.iteration) + " column " + a.columns[c].first + " entry " +
                           std::to_string(k) + ": " + fmt(x[k]) + " vs " + fmt(y[k]);
        }
    }
    return {};
}

// Random Graph-SUBLEQ machines. The last instruction subtracts a dedicated
// zero cell from itself and jumps to 0, so programs never fall off the end;
// candidates whose values leave [-bound, bound] within `steps` are redrawn.
struct SubleqGen {
    int instructions = 20;
    int memory = 12;   // writable cells, the last one being the zero cell
    int graph_n = 4;
    int max_value = 4;
    std::size_t steps = 100;
    double bound = 1e3;
};

inline oracle::SubleqState random_graph_subleq(Rng& rng, const SubleqGen& p) {
    for (;;) {
        oracle::SubleqState s;
        const int m = p.memory, zero = p.memory - 1;
        s.M_G.assign(p.graph_n, std::vector<double>(p.graph_n, 0.0));
        for (auto& row : s.M_G)
            for (auto& v : row) v = static_cast<double>(rng.range(-p.max_value, p.max_value));
        for (int i = 0; i < m; ++i) s.M.push_back(i == zero ? 0.0 : static_cast<double>(rng.range(-p.max_value, p.max_value)));
        for (int i = 0; i + 1 < p.instructions; ++i) {
            oracle::GraphInstruction ins;
            ins.g = p.graph_n > 0 && rng.chance(0.5);
            ins.a1 = ins.g ? rng.range(0, p.graph_n - 1) : rng.range(0, m - 1);
            ins.a2 = ins.g ? rng.range(0, p.graph_n - 1) : 0;
            ins.b = rng.range(0, zero - 1);
            ins.c = rng.range(0, p.instructions - 1);
            s.I.push_back(ins);
        }
        s.I.push_back({zero, 0, zero, 0, false});
        oracle::SubleqState probe = s;
        bool ok = true;
        for (std::size_t k = 0; k < p.steps && ok; ++k) {
            oracle::graph_subleq_step(probe);
            for (double v : probe.M) ok = ok && std::fabs(v) <= p.bound;
        }
        if (ok) return s;
    }
}

// Random SUBLEQ- programs over n*n read-only cells and `writable` cells.
struct MinusProgram {
    std::vector<double> memory;
    std::vector<oracle::SubleqInstruction> program;
    std::int64_t n = 0;
};

inline MinusProgram random_subleq_minus(Rng& rng, int n, int writable, int instructions, int max_value = 4) {
    MinusProgram p;
    p.n = n;
    const std::int64_t ro = static_cast<std::int64_t>(n) * n, size = ro + writable;
    for (std::int64_t i = 0; i < size; ++i) p.memory.push_back(static_cast<double>(rng.range(-max_value, max_value)));
    for (int i = 0; i < instructions; ++i)
        p.program.push_back({rng.range(0, size - 1), rng.range(ro, size - 1), rng.range(0, instructions)});
    return p;
}

struct LockstepResult {
    bool match = true;
    std::size_t steps = 0;
    std::string detail;
};

// Runs the transformer and the interpreter side by side, comparing the
// memory column and the instruction pointer after every step.
inline LockstepResult subleq_lockstep(const LoopedProgram& prog, const oracle::SubleqState& s, const SimConfig& cfg,
                                      std::size_t steps) {
    LockstepResult r;
    auto enc = encode_subleq(s, cfg, prog.schema);
    oracle::SubleqState ref = s;
    const auto halt = static_cast<std::int64_t>(s.I.size());
    try {
        run_steps(prog, enc.X, enc.A, cfg, steps, [&](std::size_t i, const InputMatrix& X) {
            oracle::graph_subleq_step(ref);
            if (!r.match) return;
            r.steps = i;
            std::int64_t want = ref.halted() ? halt : ref.k;
            std::int64_t got = decode_pointer(X, enc.table);
            if (got != want) {
                r.match = false;
                r.detail = "step " + std::to_string(i) + ": k " + std::to_string(got) + " expected " + std::to_string(want);
                return;
            }
            auto mem = decode_memory(X, ref.M.size());
            for (std::size_t c = 0; c < mem.size(); ++c)
                if (mem[c] != ref.M[c]) {
                    r.match = false;
                    r.detail = "step " + std::to_string(i) + ": M[" + std::to_string(c) + "] " + fmt(mem[c]) +
                               " expected " + fmt(ref.M[c]);
                    return;
                }
        });
    } catch (const std::exception& e) {
        r.match = false;
        r.detail = e.what();
    }
    return r;
}

}  // namespace loom
