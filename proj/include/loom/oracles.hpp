#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loom/layout.hpp"

// Classical reference algorithms. Nothing here touches the transformer code.
namespace loom::oracle {

struct StepLimit : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct WriteToReadOnly : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AddressError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShortestPaths {
    std::vector<int> prev;  // 1-based, prev[i] = i for the start and unreached nodes
    std::vector<double> dists;
};

// Out-neighbour lists in increasing index order, 0-based.
inline std::vector<std::vector<std::pair<int, double>>> out_lists(const Graph& g, bool transpose = false) {
    auto a = g.dense();
    std::vector<std::vector<std::pair<int, double>>> out(g.n);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            double w = transpose ? a[j][i] : a[i][j];
            if (w != 0.0) out[i].push_back({j, w});
        }
    return out;
}

// Lowest index wins among equal tentative distances.
inline ShortestPaths dijkstra_ref(const Graph& g, int start, double unreached) {
    const int n = g.n;
    auto adj = out_lists(g);
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, inf);
    std::vector<int> prev(n);
    std::vector<bool> done(n, false);
    for (int i = 0; i < n; ++i) prev[i] = i + 1;
    dist[start - 1] = 0.0;
    for (;;) {
        int u = -1;
        for (int i = 0; i < n; ++i)
            if (!done[i] && dist[i] < inf && (u < 0 || dist[i] < dist[u])) u = i;
        if (u < 0) break;
        done[u] = true;
        for (auto [v, w] : adj[u])
            if (dist[u] + w < dist[v]) {
                dist[v] = dist[u] + w;
                prev[v] = u + 1;
            }
    }
    for (double& d : dist)
        if (d == inf) d = unreached;
    return {prev, dist};
}

// Exhaustive simple-path minimum, for small graphs only.
inline std::vector<double> brute_force_dists(const Graph& g, int start, double unreached) {
    auto adj = out_lists(g);
    std::vector<double> best(g.n, std::numeric_limits<double>::infinity());
    std::vector<bool> on(g.n, false);
    std::function<void(int, double)> walk = [&](int u, double d) {
        best[u] = std::min(best[u], d);
        on[u] = true;
        for (auto [v, w] : adj[u])
            if (!on[v]) walk(v, d + w);
        on[u] = false;
    };
    walk(start - 1, 0.0);
    for (double& d : best)
        if (std::isinf(d)) d = unreached;
    return best;
}

// Breadth-first parents. FIFO queue with neighbours enqueued by index; with
// index_order each level is expanded in increasing node index instead.
inline std::vector<int> bfs_ref(const Graph& g, int start, bool index_order) {
    const int n = g.n;
    auto adj = out_lists(g);
    std::vector<int> prev(n);
    for (int i = 0; i < n; ++i) prev[i] = i + 1;
    std::vector<int> level(n, -1);
    level[start - 1] = 0;
    if (!index_order) {
        std::queue<int> q;
        q.push(start - 1);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (auto [v, w] : adj[u])
                if (level[v] < 0) {
                    level[v] = level[u] + 1;
                    prev[v] = u + 1;
                    q.push(v);
                }
        }
        return prev;
    }
    std::vector<int> frontier{start - 1};
    while (!frontier.empty()) {
        std::sort(frontier.begin(), frontier.end());
        std::vector<int> next;
        for (int u : frontier)
            for (auto [v, w] : adj[u])
                if (level[v] < 0) {
                    level[v] = level[u] + 1;
                    prev[v] = u + 1;
                    next.push_back(v);
                }
        frontier = std::move(next);
    }
    return prev;
}

// Stack-based depth-first parents over all nodes. Popping an unvisited node
// pushes every unvisited neighbour so the lowest index ends on top; a later
// push overrides the parent. Roots: start, then unvisited nodes by index.
inline std::vector<int> dfs_ref(const Graph& g, int start) {
    const int n = g.n;
    auto adj = out_lists(g);
    std::vector<int> prev(n);
    for (int i = 0; i < n; ++i) prev[i] = i + 1;
    std::vector<bool> seen(n, false);
    auto run = [&](int root) {
        std::vector<int> stack{root};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            if (seen[u]) continue;
            seen[u] = true;
            for (auto it = adj[u].rbegin(); it != adj[u].rend(); ++it) {
                int v = it->first;
                if (!seen[v]) {
                    prev[v] = u + 1;
                    stack.push_back(v);
                }
            }
        }
    };
    run(start - 1);
    for (int i = 0; i < n; ++i)
        if (!seen[i]) run(i);
    return prev;
}

// Kosaraju: recursive DFS finish order on G (start first, then by index,
// neighbours by index), then DFS on the transpose in decreasing finish time.
// Each node maps to the 1-based index of its component's second-pass root.
inline std::vector<int> scc_ref(const Graph& g, int start = 1) {
    const int n = g.n;
    auto adj = out_lists(g);
    auto radj = out_lists(g, true);
    std::vector<bool> seen(n, false);
    std::vector<int> finish;
    std::function<void(int)> dfs1 = [&](int u) {
        seen[u] = true;
        for (auto [v, w] : adj[u])
            if (!seen[v]) dfs1(v);
        finish.push_back(u);
    };
    dfs1(start - 1);
    for (int i = 0; i < n; ++i)
        if (!seen[i]) dfs1(i);
    std::vector<int> comp(n, 0);
    std::function<void(int, int)> dfs2 = [&](int u, int root) {
        comp[u] = root + 1;
        for (auto [v, w] : radj[u])
            if (!comp[v]) dfs2(v, root);
    };
    for (auto it = finish.rbegin(); it != finish.rend(); ++it)
        if (!comp[*it]) dfs2(*it, *it);
    return comp;
}

// Components by mutual reachability, as a label-free cross-check of scc_ref.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

inline std::vector<int> reachability_components(const Graph& g) {
    const int n = g.n;
    auto adj = out_lists(g);
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (int s = 0; s < n; ++s) {
        std::vector<int> st{s};
        reach[s][s] = true;
        while (!st.empty()) {
            int u = st.back();
            st.pop_back();
            for (auto [v, w] : adj[u])
                if (!reach[s][v]) {
                    reach[s][v] = true;
                    st.push_back(v);
                }
        }
    }
    std::vector<int> label(n, 0);
    for (int i = 0; i < n; ++i) {
        if (label[i]) continue;
        for (int j = i; j < n; ++j)
            if (reach[i][j] && reach[j][i]) label[j] = i + 1;
    }
    return label;
}

// SUBLEQ with a read-only vectorised graph prefix of n*n cells.
struct SubleqInstruction {
    std::int64_t a = 0, b = 0, c = 0;
};

struct GraphInstruction {
    std::int64_t a1 = 0, a2 = 0, b = 0, c = 0;
    bool g = false;  // true: read M_G[a1][a2], false: read M[a1]
};

struct SubleqState {
    std::vector<double> M;
    std::vector<std::vector<double>> M_G;
    std::vector<GraphInstruction> I;
    std::int64_t k = 0;

    bool halted() const { return k < 0 || k >= static_cast<std::int64_t>(I.size()); }
};

struct MinusResult {
    std::vector<double> memory;
    std::int64_t k = 0;
    std::size_t steps = 0;
};

// Runs until the pointer leaves the program, or for exactly max_steps when
// stop_at_limit is set (otherwise exceeding max_steps throws StepLimit).
inline MinusResult subleq_minus_run(std::vector<double> memory, const std::vector<SubleqInstruction>& program,
                                    std::int64_t n, std::size_t max_steps, bool stop_at_limit = false) {
    const std::int64_t ro = n * n;
    const auto size = static_cast<std::int64_t>(memory.size());
    MinusResult res;
    std::int64_t k = 0;
    while (k >= 0 && k < static_cast<std::int64_t>(program.size())) {
        if (res.steps == max_steps) {
            if (stop_at_limit) break;
            throw StepLimit("subleq: step limit reached");
        }
        const auto& ins = program[k];
        if (ins.a < 0 || ins.a >= size || ins.b < 0 || ins.b >= size) throw AddressError("subleq: address out of range");
        if (ins.b < ro) throw WriteToReadOnly("subleq: write into the read-only graph region");
        memory[ins.b] = memory[ins.b] - memory[ins.a];
        k = memory[ins.b] <= 0.0 ? ins.c : k + 1;
        ++res.steps;
    }
    res.memory = std::move(memory);
    res.k = k;
    return res;
}

inline GraphInstruction translate_instruction(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t n) {
    const std::int64_t ro = n * n;
    if (a < 0 || b < 0) throw AddressError("translate: negative address");
    if (b < ro) throw AddressError("translate: target inside the read-only region");
    GraphInstruction out;
    if (a < ro) {
        out.g = true;
        out.a1 = a / n;
        out.a2 = a - n * out.a1;
    } else {
        out.g = false;
        out.a1 = a - ro;
        out.a2 = 0;
    }
    out.b = b - ro;
    out.c = c;
    return out;
}

// Splits a SUBLEQ- memory image into the graph block and writable memory.
inline SubleqState translate_program(const std::vector<double>& memory, const std::vector<SubleqInstruction>& program,
                                     std::int64_t n) {
    const std::int64_t ro = n * n;
    if (static_cast<std::int64_t>(memory.size()) < ro) throw AddressError("translate: memory smaller than graph");
    SubleqState s;
    s.M_G.assign(n, std::vector<double>(n, 0.0));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) s.M_G[i][j] = memory[i * n + j];
    s.M.assign(memory.begin() + ro, memory.end());
    for (const auto& ins : program) s.I.push_back(translate_instruction(ins.a, ins.b, ins.c, n));
    return s;
}

// One instruction; returns false when already halted.
inline bool graph_subleq_step(SubleqState& s) {
    if (s.halted()) return false;
    const auto& ins = s.I[s.k];
    const auto msize = static_cast<std::int64_t>(s.M.size());
    double ma;
    if (ins.g) {
        if (ins.a1 < 0 || ins.a1 >= static_cast<std::int64_t>(s.M_G.size()) || ins.a2 < 0 ||
            ins.a2 >= static_cast<std::int64_t>(s.M_G[ins.a1].size()))
            throw AddressError("graph subleq: graph address out of range");
        ma = s.M_G[ins.a1][ins.a2];
    } else {
        if (ins.a1 < 0 || ins.a1 >= msize) throw AddressError("graph subleq: memory address out of range");
        ma = s.M[ins.a1];
    }
    if (ins.b < 0 || ins.b >= msize) throw AddressError("graph subleq: target out of range");
    s.M[ins.b] = s.M[ins.b] - ma;
    s.k = s.M[ins.b] <= 0.0 ? ins.c : s.k + 1;
    return true;
}

inline SubleqState graph_subleq_run(SubleqState s, std::size_t max_steps, bool stop_at_limit = false) {
    std::size_t steps = 0;
    while (!s.halted()) {
        if (steps == max_steps) {
            if (stop_at_limit) break;
            throw StepLimit("graph subleq: step limit reached");
        }
        graph_subleq_step(s);
        ++steps;
    }
    return s;
}

inline std::vector<SubleqInstruction> parse_subleq(std::istream& in) {
    std::vector<SubleqInstruction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream ls(line);
        SubleqInstruction ins;
        if (!(ls >> ins.a >> ins.b >> ins.c)) throw ParseError("malformed instruction '" + line + "'");
        out.push_back(ins);
    }
    return out;
}

inline std::vector<GraphInstruction> parse_graph_subleq(std::istream& in) {
    std::vector<GraphInstruction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::istringstream ls(line);
        GraphInstruction ins;
        int g = 0;
        if (!(ls >> ins.a1 >> ins.a2 >> ins.b >> ins.c >> g)) throw ParseError("malformed instruction '" + line + "'");
        ins.g = g != 0;
        out.push_back(ins);
    }
    return out;
}

}  // namespace loom::oracle
