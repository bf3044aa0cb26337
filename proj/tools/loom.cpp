#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "loom/harness.hpp"

using namespace loom;

namespace {

struct ConfigFlags {
    double omega = 1e5, epsilon = 0.5, delta = 1e-2, temperature = 1e-7, annealed = 1e-5, eta = 1.0 / 1024.0;
    std::size_t max_iters = 0;
    bool softmax = false, rounding = false, write_prevention = false, no_bounds = false, clrs_order = false;

    void attach(CLI::App* app) {
        app->add_option("--omega", omega, "clause bound")->capture_default_str();
        app->add_option("--epsilon", epsilon, "less-than sharpness")->capture_default_str();
        app->add_option("--delta", delta, "positional angle")->capture_default_str();
        app->add_option("--temperature", temperature, "softmax temperature")->capture_default_str();
        app->add_option("--annealed-temperature", annealed, "temperature of the positional rounding read")
            ->capture_default_str();
        app->add_option("--eta", eta, "binary rounding band")->capture_default_str();
        app->add_option("--max-iters", max_iters, "iteration limit, 0 for the default");
        app->add_flag("--softmax", softmax, "softmax attention with rounding and write prevention");
        app->add_flag("--rounding", rounding, "insert rounding layers");
        app->add_flag("--write-prevention", write_prevention, "gate writes after termination");
        app->add_flag("--no-bounds", no_bounds, "skip the input bound checks");
        app->add_flag("--clrs-order", clrs_order, "breadth-first discovery in index order");
    }

    SimConfig config() const {
        SimConfig c = softmax ? SimConfig::softmax_defaults() : SimConfig{};
        c.omega = omega;
        c.epsilon = epsilon;
        c.delta = delta;
        c.temperature = temperature;
        c.annealed_temperature = annealed;
        c.eta = eta;
        c.max_iterations = max_iters;
        c.rounding_enabled = c.rounding_enabled || rounding;
        c.write_prevention_enabled = c.write_prevention_enabled || write_prevention;
        c.enforce_bounds = !no_bounds;
        c.validate();
        return c;
    }
};

void print_ints(const char* name, const std::vector<int>& v) {
    std::cout << name;
    for (int x : v) std::cout << " " << x;
    std::cout << "\n";
}

void print_reals(const char* name, const std::vector<double>& v, double scale) {
    std::cout << name;
    for (double x : v) std::cout << " " << fmt(x * scale);
    std::cout << "\n";
}

std::vector<double> parse_memory(const std::string& line) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    std::vector<double> m;
    double v;
    while (is >> v) m.push_back(v);
    return m;
}

// Program file: "mem v0 v1 ..." lines give memory, other lines instructions.
std::pair<std::vector<double>, std::string> split_program(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open program '" + path + "'");
    std::vector<double> mem;
    std::ostringstream code;
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("mem", 0) == 0) {
            auto m = parse_memory(line);
            mem.insert(mem.end(), m.begin(), m.end());
        } else {
            code << line << "\n";
        }
    }
    return {mem, code.str()};
}

int cmd_build(const std::string& algo, const ConfigFlags& f) {
    SimConfig cfg = f.config();
    auto prog = build_program(parse_algorithm(algo), cfg, program_options(cfg, f.clrs_order));
    std::cout << listing(prog);
    return 0;
}

int cmd_run(const std::string& algo_name, const std::string& path, int start, const std::string& mode,
            const std::string& trace_out, const ConfigFlags& f) {
    SimConfig cfg = f.config();
    AlgorithmId algo = parse_algorithm(algo_name);
    if (algo == AlgorithmId::graph_subleq) throw ParseError("use 'subleq run' for graph_subleq");
    Graph g = load_graph(path);
    RunSpec spec{start, f.clrs_order, parse_task_mode(mode)};
    auto prog = suite_program(algo, cfg, f.clrs_order);
    Outcome o;
    if (!trace_out.empty()) {
        auto t = trace_run(algo, g, cfg, spec);
        std::ofstream out(trace_out);
        if (!out) throw ParseError("cannot write trace '" + trace_out + "'");
        write_trace(out, t);
    }
    o = run_graph(prog, algo, g, cfg, spec);
    if (o.failed) {
        std::cerr << "error: " << o.detail << "\n";
        return 2;
    }
    std::cout << "iterations " << o.iterations << "\n";
    if (!o.decoded.prev.empty()) print_ints("prev", o.decoded.prev);
    if (!o.decoded.dists.empty() && !(algo == AlgorithmId::multitask && spec.mode == TaskMode::depth_first))
        print_reals("dists", o.decoded.dists, o.weight_scale);
    if (!o.decoded.sccs.empty()) print_ints("sccs", o.decoded.sccs);
    std::cout << "oracle " << (o.match ? "match" : "mismatch: " + o.detail) << "\n";
    return o.match ? 0 : 1;
}

int cmd_suite(const std::vector<std::string>& algos, int n, int count, std::uint64_t seed, const std::string& kind,
              const std::string& mode, unsigned threads, bool timing, bool allow_fail, const ConfigFlags& f) {
    SimConfig cfg = f.config();
    seed = resolve_seed(seed);
    bool all = true;
    for (const auto& name : algos) {
        AlgorithmId algo = parse_algorithm(name);
        if (algo == AlgorithmId::graph_subleq) throw ParseError("suite: graph_subleq has no graph suite");
        GraphKind k = kind.empty() ? default_kind(algo) : parse_graph_kind(kind);
        SuiteOptions opt;
        opt.spec.clrs_order = f.clrs_order;
        opt.spec.mode = parse_task_mode(mode);
        opt.threads = threads;
        opt.seed = seed;
        auto rep = run_suite(algo, generate_graphs(k, n, count, seed), cfg, opt);
        std::cout << format_report(rep, timing);
        all = all && rep.perfect();
    }
    return all || allow_fail ? 0 : 1;
}

int cmd_subleq(const std::string& path, const std::string& graph_path, bool graph_form, std::size_t max_steps,
               const ConfigFlags& f) {
    SimConfig cfg = f.config();
    auto [mem, code] = split_program(path);
    std::istringstream cs(code);
    oracle::SubleqState s;
    std::vector<double> minus_memory;
    std::vector<oracle::SubleqInstruction> minus;
    std::int64_t n = 0;
    if (!graph_path.empty()) {
        Graph g = load_graph(graph_path);
        n = g.n;
        s.M_G = g.dense();
    }
    if (graph_form) {
        s.I = oracle::parse_graph_subleq(cs);
        s.M = mem;
    } else {
        minus = oracle::parse_subleq(cs);
        for (const auto& row : s.M_G) minus_memory.insert(minus_memory.end(), row.begin(), row.end());
        minus_memory.insert(minus_memory.end(), mem.begin(), mem.end());
        auto t = oracle::translate_program(minus_memory, minus, n);
        s.I = t.I;
        s.M = t.M;
    }
    auto prog = build_graph_subleq(cfg);
    auto enc = encode_subleq(s, cfg, prog.schema);
    oracle::SubleqState ref = s;
    std::size_t steps = 0;
    bool agree = true;
    const auto halt = static_cast<std::int64_t>(s.I.size());
    InputMatrix X = enc.X;
    Runner runner(prog, enc.A);
    while (!ref.halted() && steps < max_steps) {
        runner.step(X, cfg.activation);
        oracle::graph_subleq_step(ref);
        ++steps;
        if (decode_pointer(X, enc.table) != (ref.halted() ? halt : ref.k) || decode_memory(X, ref.M.size()) != ref.M)
            agree = false;
    }
    std::cout << "steps " << steps << (ref.halted() ? " halted" : " limit") << "\n";
    std::cout << "k " << decode_pointer(X, enc.table) << "\n";
    print_reals("M", decode_memory(X, ref.M.size()), 1.0);
    if (!minus.empty()) {
        auto r = oracle::subleq_minus_run(minus_memory, minus, n, steps, true);
        std::vector<double> tail(r.memory.begin() + n * n, r.memory.end());
        std::cout << "subleq- " << (tail == ref.M ? "match" : "mismatch") << "\n";
        agree = agree && tail == ref.M;
    }
    std::cout << "interpreter " << (agree ? "match" : "mismatch") << "\n";
    return agree ? 0 : 1;
}

int cmd_replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trace '" + path + "'");
    auto t = read_trace(in);
    std::string diff = replay_trace(t);
    if (diff.empty()) {
        std::cout << "replay ok " << t.records.size() << " records\n";
        return 0;
    }
    std::cout << "replay differs: " << diff << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"loom: looped transformer programs for graph algorithms"};
    app.require_subcommand(1);
    ConfigFlags flags;

    auto* build = app.add_subcommand("build", "print the layer listing of a program");
    std::string build_algo;
    build->add_option("algo", build_algo, "dijkstra|bfs|dfs|scc|multitask|graph_subleq")->required();
    flags.attach(build);

    auto* run = app.add_subcommand("run", "run a program on a graph file");
    std::string run_algo, run_graph_path, trace_out, run_mode = "sp";
    int start = 1;
    run->add_option("algo", run_algo)->required();
    run->add_option("graph", run_graph_path)->required()->check(CLI::ExistingFile);
    run->add_option("--start", start, "start node")->capture_default_str();
    run->add_option("--mode", run_mode, "multitask mode sp|bfs|dfs")->capture_default_str();
    run->add_option("--trace", trace_out, "write a trace file");
    flags.attach(run);

    auto* suite = app.add_subcommand("suite", "run random graphs against the oracles");
    std::vector<std::string> suite_algos;
    int n = 16, count = 100;
    std::uint64_t seed = 7;
    std::string kind, suite_mode = "sp";
    unsigned threads = 0;
    bool timing = false, allow_fail = false;
    suite->add_option("algo", suite_algos)->required();
    suite->add_option("--n", n, "nodes per graph")->capture_default_str();
    suite->add_option("--count", count, "number of graphs")->capture_default_str();
    suite->add_option("--seed", seed, "generator seed (LOOM_SEED overrides)")->capture_default_str();
    suite->add_option("--kind", kind, "er_connected|er_directed|weighted_er");
    suite->add_option("--mode", suite_mode, "multitask mode sp|bfs|dfs")->capture_default_str();
    suite->add_option("--threads", threads, "worker threads, 0 for all cores");
    suite->add_flag("--timing", timing, "append wall time to the report");
    suite->add_flag("--allow-fail", allow_fail, "exit 0 even below 100%");
    flags.attach(suite);

    auto* subleq = app.add_subcommand("subleq", "SUBLEQ machines");
    subleq->require_subcommand(1);
    auto* subleq_run = subleq->add_subcommand("run", "run a program on the transformer and the interpreter");
    std::string program, subleq_graph;
    bool graph_form = false;
    std::size_t max_steps = 1000;
    subleq_run->add_option("program", program)->required()->check(CLI::ExistingFile);
    subleq_run->add_option("--graph", subleq_graph, "graph file for the read-only block")->check(CLI::ExistingFile);
    subleq_run->add_flag("--graph-form", graph_form, "instructions are 'a1 a2 b c g' lines");
    subleq_run->add_option("--max-steps", max_steps)->capture_default_str();
    flags.attach(subleq_run);

    auto* replay = app.add_subcommand("replay", "re-run a trace from its initial state");
    std::string trace_in;
    replay->add_option("trace", trace_in)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*build) return cmd_build(build_algo, flags);
        if (*run) return cmd_run(run_algo, run_graph_path, start, run_mode, trace_out, flags);
        if (*suite)
            return cmd_suite(suite_algos, n, count, seed, kind, suite_mode, threads, timing, allow_fail, flags);
        if (*subleq_run) return cmd_subleq(program, subleq_graph, graph_form, max_steps, flags);
        if (*replay) return cmd_replay(trace_in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
