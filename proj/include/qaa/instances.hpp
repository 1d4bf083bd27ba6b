// Problem instances: 3-regular 3-XORSAT and 3-regular Max-Cut.
// Generation (configuration model), validation, gauge transformation,
// duality, ensemble filtering and the text serialization format.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qaa/errors.hpp"
#include "qaa/gf2.hpp"
#include "qaa/rng.hpp"

namespace qaa {

// A single cost-function term acting on 1, 2 or 3 spins, counting 1 per
// unsatisfied clause: (1 + J s_i s_j)/2 for arity 2 (antiferromagnetic
// convention), (1 - J prod)/2 for arity 1 and 3.
struct Clause {
    int arity = 0;
    std::array<int, 3> sites{{-1, -1, -1}};
    int coupling = 1;

    // +1/-1 product of the member spins of configuration z (bit=1 -> spin -1).
    int spin_product_bits(std::uint64_t z) const {
        int par = 0;
        for (int a = 0; a < arity; ++a) par ^= static_cast<int>((z >> sites[a]) & 1u);
        return par ? -1 : 1;
    }

    int energy_bits(std::uint64_t z) const {
        const int prod = coupling * spin_product_bits(z);
        return arity == 2 ? (1 + prod) / 2 : (1 - prod) / 2;
    }
};

// Generic clause-based cost function; the SSE and exact-diagonalization
// engines operate on this view so that small toy systems can bypass the
// 3-regularity constraints of the named ensembles.
struct ClauseSystem {
    int n_sites = 0;
    std::vector<Clause> clauses;

    int energy_bits(std::uint64_t z) const {
        int e = 0;
        for (const auto& c : clauses) e += c.energy_bits(z);
        return e;
    }

    bool two_local() const {
        for (const auto& c : clauses)
            if (c.arity != 2) return false;
        return true;
    }
};

struct XorsatInstance {
    int n_bits = 0;
    std::vector<std::array<int, 3>> clauses;
    std::vector<int> couplings;  // +1 or -1 per clause

    void validate() const {
        if (static_cast<int>(clauses.size()) != n_bits)
            throw error("xorsat: clause count must equal bit count");
        if (couplings.size() != clauses.size()) throw error("xorsat: couplings size mismatch");
        std::vector<int> deg(n_bits, 0);
        for (const auto& cl : clauses) {
            if (cl[0] == cl[1] || cl[0] == cl[2] || cl[1] == cl[2])
                throw error("xorsat: repeated bit inside a clause");
            for (int b : cl) {
                if (b < 0 || b >= n_bits) throw error("xorsat: bit index out of range");
                ++deg[b];
            }
        }
        for (int d : deg)
            if (d != 3) throw error("xorsat: every bit must appear in exactly 3 clauses");
        for (int j : couplings)
            if (j != 1 && j != -1) throw error("xorsat: couplings must be +-1");
    }

    GF2Matrix incidence() const {
        GF2Matrix m(static_cast<int>(clauses.size()), n_bits);
        for (int c = 0; c < static_cast<int>(clauses.size()); ++c)
            for (int b : clauses[c]) m.set(c, b, true);
        return m;
    }

    // Right-hand side of M v = b: clause c requires bit-parity (1-J_c)/2.
    std::vector<std::uint8_t> parity_targets() const {
        std::vector<std::uint8_t> b(clauses.size());
        for (std::size_t c = 0; c < clauses.size(); ++c) b[c] = couplings[c] == 1 ? 0 : 1;
        return b;
    }

    ClauseSystem to_clause_system() const {
        ClauseSystem sys;
        sys.n_sites = n_bits;
        sys.clauses.reserve(clauses.size());
        for (std::size_t c = 0; c < clauses.size(); ++c)
            sys.clauses.push_back({3, {clauses[c][0], clauses[c][1], clauses[c][2]}, couplings[c]});
        return sys;
    }

    friend bool operator==(const XorsatInstance& a, const XorsatInstance& b) {
        return a.n_bits == b.n_bits && a.clauses == b.clauses && a.couplings == b.couplings;
    }
};

struct MaxCutInstance {
    int n_vertices = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<int> couplings;  // all +1 for pure Max-Cut

    void validate() const {
        if (n_vertices % 2 != 0) throw error("maxcut: vertex count must be even");
        if (static_cast<int>(edges.size()) != 3 * n_vertices / 2)
            throw error("maxcut: edge count must be 3N/2");
        if (couplings.size() != edges.size()) throw error("maxcut: couplings size mismatch");
        std::vector<int> deg(n_vertices, 0);
        std::map<std::pair<int, int>, int> seen;
        for (auto [u, v] : edges) {
            if (u == v) throw error("maxcut: self-loop");
            if (u < 0 || v < 0 || u >= n_vertices || v >= n_vertices)
                throw error("maxcut: vertex index out of range");
            auto key = std::minmax(u, v);
            if (++seen[{key.first, key.second}] > 1) throw error("maxcut: duplicate edge");
            ++deg[u];
            ++deg[v];
        }
        for (int d : deg)
            if (d != 3) throw error("maxcut: every vertex must have degree 3");
    }

    ClauseSystem to_clause_system() const {
        ClauseSystem sys;
        sys.n_sites = n_vertices;
        sys.clauses.reserve(edges.size());
        for (std::size_t c = 0; c < edges.size(); ++c)
            sys.clauses.push_back({2, {edges[c].first, edges[c].second, -1}, couplings[c]});
        return sys;
    }

    friend bool operator==(const MaxCutInstance& a, const MaxCutInstance& b) {
        return a.n_vertices == b.n_vertices && a.edges == b.edges && a.couplings == b.couplings;
    }
};

// ---------------------------------------------------------------------------
// Generation: configuration model with 3 stubs per node. Invalid pairings
// (within-clause repeats, self-loops, duplicate edges) trigger a full
// re-shuffle; a bounded number of restarts guards against pathological sizes.

namespace detail {
inline constexpr int kGenerationRestarts = 2000;

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}
}  // namespace detail

inline XorsatInstance generate_xorsat(int n_bits, std::uint64_t seed) {
    if (n_bits < 4) throw error("generate_xorsat: need n_bits >= 4");
    Rng rng(derive_seed(seed, 0x3f0a));
    std::vector<int> stubs(3 * n_bits);
    for (int i = 0; i < 3 * n_bits; ++i) stubs[i] = i / 3;
    for (int attempt = 0; attempt < detail::kGenerationRestarts; ++attempt) {
        detail::shuffle(stubs, rng);
        XorsatInstance inst;
        inst.n_bits = n_bits;
        bool ok = true;
        for (int c = 0; c < n_bits && ok; ++c) {
            std::array<int, 3> cl{stubs[3 * c], stubs[3 * c + 1], stubs[3 * c + 2]};
            std::sort(cl.begin(), cl.end());
            ok = cl[0] != cl[1] && cl[1] != cl[2];
            inst.clauses.push_back(cl);
        }
        if (!ok) continue;
        inst.couplings.resize(n_bits);
        for (auto& j : inst.couplings) j = rng.pm1();
        inst.validate();
        return inst;
    }
    throw generation_error("generate_xorsat: configuration model failed");
}

inline MaxCutInstance generate_maxcut(int n_vertices, std::uint64_t seed) {
    if (n_vertices < 4 || n_vertices % 2 != 0)
        throw error("generate_maxcut: need even n_vertices >= 4");
    Rng rng(derive_seed(seed, 0x6c1d));
    std::vector<int> stubs(3 * n_vertices);
    for (int i = 0; i < 3 * n_vertices; ++i) stubs[i] = i / 3;
    for (int attempt = 0; attempt < detail::kGenerationRestarts; ++attempt) {
        detail::shuffle(stubs, rng);
        MaxCutInstance inst;
        inst.n_vertices = n_vertices;
        bool ok = true;
        std::map<std::pair<int, int>, int> seen;
        for (std::size_t p = 0; p + 1 < stubs.size() && ok; p += 2) {
            auto [u, v] = std::minmax(stubs[p], stubs[p + 1]);
            ok = u != v && seen[{u, v}]++ == 0;
            inst.edges.emplace_back(u, v);
        }
        if (!ok) continue;
        inst.couplings.assign(inst.edges.size(), 1);
        inst.validate();
        return inst;
    }
    throw generation_error("generate_maxcut: configuration model failed");
}

// ---------------------------------------------------------------------------
// XORSAT structure: unique satisfying assignment, gauge, duality.

inline bool has_unique_satisfying_assignment(const XorsatInstance& inst) {
    GF2Matrix m = inst.incidence();
    if (m.rows() != m.cols() || m.rank() != m.cols()) return false;
    // Square and full rank: M v = b has exactly one solution for any b.
    return m.solve(inst.parity_targets()).has_value();
}

struct GaugeResult {
    XorsatInstance instance;
    std::vector<std::uint8_t> flip_mask;
};

// Maps a satisfiable instance to the all-ferromagnetic form (every J_c = +1)
// by flipping the bits of one satisfying assignment; the mask returned maps
// ground states of the output back onto the input.
inline GaugeResult gauge_to_ferromagnetic(const XorsatInstance& inst) {
    auto sol = inst.incidence().solve(inst.parity_targets());
    if (!sol) throw gauge_error("gauge_to_ferromagnetic: instance is unsatisfiable");
    GaugeResult out;
    out.instance = inst;
    std::fill(out.instance.couplings.begin(), out.instance.couplings.end(), 1);
    out.flip_mask = *sol;
    return out;
}

// Dual instance: incidence matrix transposed, defined on the gauged form
// (all couplings +1). Requires a unique satisfying assignment.
inline XorsatInstance dualize(const XorsatInstance& inst) {
    GF2Matrix m = inst.incidence();
    if (m.rows() != m.cols() || m.rank() != m.cols())
        throw duality_error("dualize: incidence matrix is not invertible over GF(2)");
    XorsatInstance dual;
    dual.n_bits = inst.n_bits;
    dual.clauses.assign(inst.n_bits, {});
    std::vector<std::vector<int>> members(inst.n_bits);
    for (int c = 0; c < inst.n_bits; ++c)
        for (int b : inst.clauses[c]) members[b].push_back(c);
    for (int b = 0; b < inst.n_bits; ++b) {
        std::array<int, 3> cl{members[b][0], members[b][1], members[b][2]};
        std::sort(cl.begin(), cl.end());
        dual.clauses[b] = cl;
    }
    dual.couplings.assign(inst.n_bits, 1);
    dual.validate();
    return dual;
}

// ---------------------------------------------------------------------------
// Exact Max-Cut ground states. Exhaustive Gray-code enumeration up to
// kEnumLimit bits, branch and bound beyond that, nothing above kBnbLimit.

struct MaxCutSolution {
    int energy = 0;       // minimum number of unsatisfied (uncut) clauses
    long degeneracy = 0;  // ground-state count including global-flip partners
    std::uint64_t witness = 0;
};

namespace detail {
inline constexpr int kEnumLimit = 28;
inline constexpr int kBnbLimit = 48;

inline MaxCutSolution maxcut_enumerate(const MaxCutInstance& inst) {
    const int n = inst.n_vertices;
    std::vector<std::array<int, 3>> nbr(n, {-1, -1, -1});
    std::vector<int> deg(n, 0);
    for (auto [u, v] : inst.edges) {
        nbr[u][deg[u]++] = v;
        nbr[v][deg[v]++] = u;
    }
    // Fix the top vertex to 0 and enumerate half the space in Gray order;
    // the global flip doubles the count at the end.
    const std::uint64_t half = 1ull << (n - 1);
    std::uint64_t z = 0;
    auto sys = inst.to_clause_system();
    int e = sys.energy_bits(0);
    MaxCutSolution best{e, 1, 0};
    for (std::uint64_t g = 1; g < half; ++g) {
        const int bit = std::countr_zero(g);
        // Energy delta from flipping `bit`: each incident edge toggles
        // between cut and uncut.
        int delta = 0;
        for (int k = 0; k < 3; ++k) {
            const int w = nbr[bit][k];
            const bool aligned = (((z >> bit) ^ (z >> w)) & 1u) == 0;
            delta += aligned ? -1 : +1;  // aligned (uncut) becomes cut and vice versa
        }
        e += delta;
        z ^= 1ull << bit;
        if (e < best.energy) {
            best = {e, 1, z};
        } else if (e == best.energy) {
            ++best.degeneracy;
        }
    }
    best.degeneracy *= 2;
    return best;
}

struct BnbState {
    const std::vector<std::array<int, 3>>* nbr;
    std::vector<int> order;     // BFS order
    std::vector<int> assign;    // -1 unassigned, else 0/1
    int best_energy;
    long count;
    std::uint64_t witness;
};

inline void bnb_recurse(BnbState& st, int depth, int energy) {
    if (energy > st.best_energy) return;
    if (depth == static_cast<int>(st.order.size())) {
        if (energy < st.best_energy) {
            st.best_energy = energy;
            st.count = 1;
            st.witness = 0;
            for (std::size_t i = 0; i < st.assign.size(); ++i)
                if (st.assign[i] == 1) st.witness |= 1ull << i;
        } else {
            ++st.count;
        }
        return;
    }
    const int v = st.order[depth];
    for (int val = 0; val <= 1; ++val) {
        st.assign[v] = val;
        int e = energy;
        for (int w : (*st.nbr)[v])
            if (st.assign[w] >= 0 && st.assign[w] == val) ++e;  // aligned -> uncut
        bnb_recurse(st, depth + 1, e);
    }
    st.assign[v] = -1;
}

inline MaxCutSolution maxcut_branch_and_bound(const MaxCutInstance& inst) {
    const int n = inst.n_vertices;
    std::vector<std::array<int, 3>> nbr(n, {-1, -1, -1});
    std::vector<int> deg(n, 0);
    for (auto [u, v] : inst.edges) {
        nbr[u][deg[u]++] = v;
        nbr[v][deg[v]++] = u;
    }
    // BFS order keeps new vertices adjacent to assigned ones, which makes the
    // running-cost bound effective.
    std::vector<int> order;
    std::vector<char> seen(n, 0);
    for (int root = 0; root < n; ++root) {
        if (seen[root]) continue;
        std::vector<int> queue{root};
        seen[root] = 1;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const int v = queue[q];
            order.push_back(v);
            for (int w : nbr[v])
                if (!seen[w]) {
                    seen[w] = 1;
                    queue.push_back(w);
                }
        }
    }
    BnbState st;
    st.nbr = &nbr;
    st.order = order;
    st.assign.assign(n, -1);
    st.best_energy = static_cast<int>(inst.edges.size());
    st.count = 0;
    st.witness = 0;
    // Fix the first vertex; the flip symmetry doubles the count.
    st.assign[order[0]] = 0;
    std::vector<int> rest(order.begin() + 1, order.end());
    st.order = rest;
    bnb_recurse(st, 0, 0);
    return {st.best_energy, st.count * 2, st.witness};
}
}  // namespace detail

inline MaxCutSolution solve_maxcut_exact(const MaxCutInstance& inst) {
    if (inst.n_vertices <= detail::kEnumLimit) return detail::maxcut_enumerate(inst);
    if (inst.n_vertices <= detail::kBnbLimit) return detail::maxcut_branch_and_bound(inst);
    throw solver_budget_error("solve_maxcut_exact: N > 48 exceeds the exact-solver budget");
}

// ---------------------------------------------------------------------------
// Filtered Max-Cut ensemble: ground degeneracy exactly 2 and ground energy
// exactly N/8 unsatisfied clauses.

struct EnsembleFilterReport {
    long sampled = 0;
    long accepted = 0;
    std::map<std::string, long> rejections;
};

struct FilteredMaxCut {
    MaxCutInstance instance;
    MaxCutSolution solution;
    EnsembleFilterReport report;
};

inline FilteredMaxCut filter_maxcut_ensemble(int n_vertices, std::uint64_t seed, long max_tries) {
    if (n_vertices % 8 != 0)
        throw ensemble_error("filter_maxcut_ensemble: ground energy N/8 requires N divisible by 8");
    EnsembleFilterReport report;
    for (long t = 0; t < max_tries; ++t) {
        MaxCutInstance inst = generate_maxcut(n_vertices, derive_seed(seed, 0xf11e, t));
        ++report.sampled;
        MaxCutSolution sol = solve_maxcut_exact(inst);
        if (sol.energy != n_vertices / 8) {
            ++report.rejections["energy"];
            continue;
        }
        if (sol.degeneracy != 2) {
            ++report.rejections["degeneracy"];
            continue;
        }
        ++report.accepted;
        return {std::move(inst), sol, report};
    }
    throw ensemble_error("filter_maxcut_ensemble: max_tries exhausted after " +
                         std::to_string(report.sampled) + " samples");
}

// ---------------------------------------------------------------------------
// Serialization. Line-oriented text:
//   problem {xorsat|maxcut} N M
//   c i1 i2 [i3] J          (one line per clause, 0-based indices)

inline std::string serialize(const XorsatInstance& inst) {
    std::ostringstream os;
    os << "problem xorsat " << inst.n_bits << ' ' << inst.clauses.size() << '\n';
    for (std::size_t c = 0; c < inst.clauses.size(); ++c)
        os << c << ' ' << inst.clauses[c][0] << ' ' << inst.clauses[c][1] << ' '
           << inst.clauses[c][2] << ' ' << inst.couplings[c] << '\n';
    return os.str();
}

inline std::string serialize(const MaxCutInstance& inst) {
    std::ostringstream os;
    os << "problem maxcut " << inst.n_vertices << ' ' << inst.edges.size() << '\n';
    for (std::size_t c = 0; c < inst.edges.size(); ++c)
        os << c << ' ' << inst.edges[c].first << ' ' << inst.edges[c].second << ' '
           << inst.couplings[c] << '\n';
    return os.str();
}

struct ParsedInstance {
    std::optional<XorsatInstance> xorsat;
    std::optional<MaxCutInstance> maxcut;

    ClauseSystem to_clause_system() const {
        if (xorsat) return xorsat->to_clause_system();
        if (maxcut) return maxcut->to_clause_system();
        throw error("empty parsed instance");
    }
    int n_sites() const { return xorsat ? xorsat->n_bits : maxcut->n_vertices; }
};

inline ParsedInstance parse_instance(const std::string& text) {
    std::istringstream is(text);
    std::string word, kind;
    int n = 0, m = 0;
    if (!(is >> word >> kind >> n >> m) || word != "problem")
        throw io_error("instance parse: bad header");
    ParsedInstance out;
    if (kind == "xorsat") {
        XorsatInstance inst;
        inst.n_bits = n;
        for (int c = 0; c < m; ++c) {
            int idx, i1, i2, i3, j;
            if (!(is >> idx >> i1 >> i2 >> i3 >> j)) throw io_error("instance parse: bad clause line");
            inst.clauses.push_back({i1, i2, i3});
            inst.couplings.push_back(j);
        }
        inst.validate();
        out.xorsat = std::move(inst);
    } else if (kind == "maxcut") {
        MaxCutInstance inst;
        inst.n_vertices = n;
        for (int c = 0; c < m; ++c) {
            int idx, i1, i2, j;
            if (!(is >> idx >> i1 >> i2 >> j)) throw io_error("instance parse: bad clause line");
            inst.edges.emplace_back(i1, i2);
            inst.couplings.push_back(j);
        }
        inst.validate();
        out.maxcut = std::move(inst);
    } else {
        throw io_error("instance parse: unknown problem kind '" + kind + "'");
    }
    return out;
}

}  // namespace qaa
