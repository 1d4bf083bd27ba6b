// SSE-based projection QMC with free imaginary-time boundaries: acting with
// exp(-beta H / 2) on the equal superposition |phi> from both sides projects
// onto the bit-flip-even subspace as beta grows. Configurations are a free
// boundary state z1 plus an operator sequence; a level cut at n1 carries the
// binomial weight w(n, n1) = 2^-n C(n, n1).
//
// Estimators implemented (diagonal, bond, products of <= 2 bond operators,
// imaginary-time correlations and integrated susceptibilities) follow the
// level-sum expressions; a large-beta mode replaces the binomial weights by a
// uniform average over the middle n/4 levels.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "qaa/accumulators.hpp"
#include "qaa/errors.hpp"
#include "qaa/instances.hpp"
#include "qaa/rng.hpp"
#include "qaa/tempering.hpp"

namespace qaa {

// Normalized binomial row w(n, k) = 2^-n C(n, k), k = 0..n.
inline std::vector<double> binomial_level_weights(int n) {
    std::vector<double> w(n + 1, 0.0);
    const int c = n / 2;
    double lw = std::lgamma(n + 1.0) - std::lgamma(c + 1.0) - std::lgamma(n - c + 1.0) -
                n * std::log(2.0);
    w[c] = std::exp(lw);
    for (int k = c; k < n; ++k) w[k + 1] = w[k] * (static_cast<double>(n - k) / (k + 1));
    for (int k = c; k > 0; --k) w[k - 1] = w[k] * (static_cast<double>(k) / (n - k + 1));
    return w;
}

enum class ProjMode { binomial, middle_quarter };

struct ProjOptions {
    std::vector<double> tau_grid;   // empty: default grid
    bool measure_correlations = true;
    bool measure_susceptibility = false;  // O(n^2) per measurement; toys only
};

class ProjChain {
  public:
    ProjChain(const ClauseSystem& sys, double s, double beta, std::uint64_t seed,
              ProjOptions opts = {})
        : sys_(sys),
          s_(s),
          beta_(beta),
          rng_(seed),
          opts_(opts),
          hx_((1.0 - s) / 2.0),
          n_sites_(sys.n_sites),
          n_clauses_(static_cast<int>(sys.clauses.size())) {
        if (beta <= 0) throw error("ProjChain: beta must be positive");
        for (const auto& c : sys.clauses)
            if (c.arity == 3)
                throw error("ProjChain: projection is defined for bit-flip symmetric problems");
        spins_.resize(n_sites_);
        for (auto& sp : spins_) sp = rng_.pm1();  // |phi>: uniform boundary state
        ops_.assign(std::max(16, 2 * n_sites_), SseOp{});
        incident_.resize(n_sites_);
        for (int c = 0; c < n_clauses_; ++c)
            for (int a = 0; a < sys_.clauses[c].arity; ++a)
                incident_[sys_.clauses[c].sites[a]].push_back(c);
        if (opts_.tau_grid.empty()) opts_.tau_grid = default_tau_grid(beta);
        for (double t : opts_.tau_grid)
            if (t < 0.0 || t > beta) throw domain_error("ProjChain: tau outside [0, beta]");
    }

    double s() const { return s_; }
    double beta() const { return beta_; }
    int n_ops() const { return n_; }
    int cutoff() const { return static_cast<int>(ops_.size()); }
    const std::vector<int8_t>& boundary_state() const { return spins_; }
    const std::vector<SseOp>& op_string() const { return ops_; }
    const std::vector<double>& tau_grid() const { return opts_.tau_grid; }

    void sweep() {
        diagonal_update();
        if (4 * n_ > 3 * cutoff()) ops_.resize(n_ + n_ / 3, SseOp{});
        cluster_update();
    }

    // Test hook: flipping the boundary state globally maps a valid
    // configuration onto one of equal weight.
    void flip_boundary_state() {
        for (auto& sp : spins_) sp = -sp;
    }

    void validate_configuration() const {
        std::vector<int8_t> z = spins_;
        int n = 0;
        for (const auto& op : ops_) {
            if (op.kind == OpKind::identity) continue;
            ++n;
            if (op.kind == OpKind::site_flip) z[op.index] = -z[op.index];
            if (op.kind == OpKind::bond_diag && !clause_satisfied(op.index, z))
                throw error("projection invariant: bond operator on unsatisfied clause");
        }
        if (n != n_) throw error("projection invariant: operator count out of sync");
    }

    // cluster ids of the two boundary levels per site, for structural tests
    std::pair<std::vector<int>, std::vector<int>> boundary_cluster_ids() {
        build_segments();
        uf_parent_.resize(total_segments_);
        std::iota(uf_parent_.begin(), uf_parent_.end(), 0);
        for (const auto& b : bond_ops_)
            if (b.arity == 2) uf_union(b.segs[0], b.segs[1]);
        std::vector<int> first(n_sites_), last(n_sites_);
        for (int i = 0; i < n_sites_; ++i) {
            first[i] = uf_find(seg_offset_[i]);
            last[i] = uf_find(seg_offset_[i] + site_op_count_[i]);
        }
        return {first, last};
    }

    void measure(MeasurementAccumulator& acc) {
        build_levels();
        const int n = n_;
        acc.scalar("n").add(n);
        acc.scalar("energy_direct").add(shift_constant() - n / beta_);

        // Level weights and the two averaging modes for diagonal observables.
        weights_ = binomial_level_weights(n);
        const int mid_lo = n / 2 - n / 8;
        const int mid_hi = n / 2 + n / 8;  // inclusive; >= mid_lo
        double hp_binom = 0.0, hp_mid = 0.0;
        long mid_count = 0;
        for (int l = 0; l <= n; ++l) {
            const double a = level_a_[l];
            hp_binom += weights_[l] * a;
            if (l >= mid_lo && l <= mid_hi) {
                hp_mid += a;
                ++mid_count;
            }
        }
        hp_mid /= std::max<long>(1, mid_count);
        acc.scalar("hp_binom").add(hp_binom);
        acc.scalar("hp_mid").add(hp_mid);
        acc.scalar("a_hp").add(hp_binom);

        // per-clause expectation values (binomial weights)
        auto& clause_k = acc.vector_obs("clause_k", n_clauses_);
        const int words = (n_clauses_ + 63) / 64;
        {
            const int lo = window_lo(n), hi = window_hi(n);
            for (int c = 0; c < n_clauses_; ++c) {
                double acc_c = 0.0;
                for (int l = lo; l <= hi; ++l)
                    acc_c += weights_[l] *
                             ((level_bits_[static_cast<std::size_t>(l) * words + (c >> 6)] >>
                               (c & 63)) &
                              1u);
                clause_k.add_at(c, acc_c);
            }
            clause_k.count_sample();
        }

        // <sx_i> from the bond estimator on flip operators:
        // <A> = (2/beta) sum_{n1} w(n, n1) (n - n1) delta[A at position n1+1].
        double mx = 0.0;
        if (hx_ > 0) {
            int pos = 0;  // 1-based position among non-identity operators
            for (const auto& op : ops_) {
                if (op.kind == OpKind::identity) continue;
                ++pos;
                if (op.kind == OpKind::site_flip) mx += weights_[pos - 1] * (n - pos + 1);
            }
            mx *= 2.0 / (beta_ * hx_) / n_sites_;
        }
        acc.scalar("mx").add(mx);
        // Composite energy estimator: (1-s)(N - sum_i <sx_i>)/2 + s <H_P>.
        acc.scalar("energy").add((1.0 - s_) * (n_sites_ - mx * n_sites_) / 2.0 + s_ * hp_binom);

        if (opts_.measure_correlations) measure_correlations(acc);
        if (opts_.measure_susceptibility) measure_susceptibility(acc);
    }

    // <A> for the SSE bond operator at clause c (weight s per occurrence).
    double bond_estimator_clause(int c) const {
        const int n = n_;
        auto w = binomial_level_weights(n);
        double acc = 0.0;
        int pos = 0;
        for (const auto& op : ops_) {
            if (op.kind == OpKind::identity) continue;
            ++pos;
            if (op.kind == OpKind::bond_diag && op.index == c) acc += w[pos - 1] * (n - pos + 1);
        }
        return acc * 2.0 / beta_;
    }

    // <A1 A2> for an adjacent product of two bond operators (m = 2 case).
    double product_estimator(const SseOp& a1, const SseOp& a2) const {
        const int n = n_;
        auto w = binomial_level_weights(n);
        double acc = 0.0;
        int pos = 0;
        const SseOp* prev = nullptr;
        for (const auto& op : ops_) {
            if (op.kind == OpKind::identity) continue;
            ++pos;
            if (pos >= 2 && prev && *prev == a1 && op == a2) {
                const int n1 = pos - 2;
                if (n1 <= n - 2)
                    acc += w[n1] * static_cast<double>(n - n1) * (n - n1 - 1);
            }
            prev = &op;
        }
        return acc * 4.0 / (beta_ * beta_);
    }

    // <A1(tau/2) A2(-tau/2)> for two bond operators: pairs of matching
    // operator positions p1 < p2 contribute with m = p2 - p1 - 1.
    double bond_correlation(const SseOp& a1, const SseOp& a2, double tau) const {
        if (tau < 0.0 || tau > beta_) throw domain_error("bond_correlation: tau outside [0, beta]");
        const int n = n_;
        if (n < 2) return 0.0;
        positions(a1, pos1_);
        positions(a2, pos2_);
        double acc = 0.0;
        for (int p1 : pos1_) {
            for (int p2 : pos2_) {
                if (p2 <= p1) continue;
                const int m = p2 - p1 - 1;
                const int n1 = p1 - 1;
                if (m > n - 2 || n1 > n - m - 2) continue;
                // stable product form: the (beta - tau)^-2 factor is folded
                // into the binomial so both tau = 0 and tau = beta are exact
                if (tau == 0.0 && m > 0) continue;
                if (tau == beta_ && m != n - 2) continue;
                double logterm = std::lgamma(n + 1.0) - std::lgamma(m + 1.0) -
                                 std::lgamma(n - m + 1.0) - n * std::log(beta_);
                if (m > 0) logterm += m * std::log(tau);
                if (n - m - 2 > 0) logterm += (n - m - 2) * std::log(beta_ - tau);
                const double wrow = std::exp(
                    std::lgamma(n - m - 2 + 1.0) - std::lgamma(n1 + 1.0) -
                    std::lgamma(n - m - 2 - n1 + 1.0) - (n - m - 2) * std::log(2.0));
                acc += std::exp(logterm) * (static_cast<double>(n - m) * (n - m - 1)) * wrow;
            }
        }
        return acc;
    }

    // Integrated susceptibility for two bond operators.
    double bond_susceptibility(const SseOp& a1, const SseOp& a2) const {
        const int n = n_;
        if (n < 2) return 0.0;
        positions(a1, pos1_);
        positions(a2, pos2_);
        double acc = 0.0;
        for (int p1 : pos1_)
            for (int p2 : pos2_) {
                if (p2 <= p1) continue;
                const int m = p2 - p1 - 1;
                const int n1 = p1 - 1;
                if (m > n - 2 || n1 > n - m - 2) continue;
                acc += std::exp(std::lgamma(n - m - 2 + 1.0) - std::lgamma(n1 + 1.0) -
                                std::lgamma(n - m - 2 - n1 + 1.0) - (n - m - 2) * std::log(2.0));
            }
        return acc * n / beta_;
    }

    Rng& rng() { return rng_; }

  private:
    double shift_constant() const { return (1.0 - s_) * n_sites_ + s_ * n_clauses_; }

    // 1-based positions of a given operator among the non-identity entries.
    void positions(const SseOp& a, std::vector<int>& out) const {
        out.clear();
        int pos = 0;
        for (const auto& op : ops_) {
            if (op.kind == OpKind::identity) continue;
            ++pos;
            if (op == a) out.push_back(pos);
        }
    }

    bool clause_satisfied(int c, const std::vector<int8_t>& sp) const {
        const auto& cl = sys_.clauses[c];
        int prod = cl.coupling;
        for (int a = 0; a < cl.arity; ++a) prod *= sp[cl.sites[a]];
        return cl.arity == 2 ? prod == -1 : prod == 1;
    }

    // diagonal updates: identical acceptance ratios to the periodic scheme
    void diagonal_update() {
        const int lambda = cutoff();
        const int d_choices = n_sites_ + n_clauses_;
        std::vector<int8_t>& z = work_spins_;
        z = spins_;
        for (int p = 0; p < lambda; ++p) {
            SseOp& op = ops_[p];
            switch (op.kind) {
                case OpKind::identity: {
                    const int r = rng_.below_int(d_choices);
                    double w;
                    SseOp cand;
                    if (r < n_sites_) {
                        cand = {OpKind::site_const, r};
                        w = hx_;
                    } else {
                        cand = {OpKind::bond_diag, r - n_sites_};
                        w = clause_satisfied(r - n_sites_, z) ? s_ : 0.0;
                    }
                    if (w > 0.0) {
                        const double p_acc = beta_ * d_choices * w / (lambda - n_);
                        if (p_acc >= 1.0 || rng_.uniform() < p_acc) {
                            op = cand;
                            ++n_;
                        }
                    }
                    break;
                }
                case OpKind::site_const:
                case OpKind::bond_diag: {
                    const double w = op.kind == OpKind::site_const ? hx_ : s_;
                    const double p_acc = (lambda - n_ + 1) / (beta_ * d_choices * w);
                    if (p_acc >= 1.0 || rng_.uniform() < p_acc) {
                        op = SseOp{};
                        --n_;
                    }
                    break;
                }
                case OpKind::site_flip:
                    z[op.index] = -z[op.index];
                    break;
            }
        }
    }

    // Free-boundary segments: a site with k site operators has k+1 segments;
    // the first contains the z1 boundary, the last the z2 boundary. Clusters
    // terminate at the boundaries (no wrap).
    struct SiteOpRef {
        int pos;
        int seg_before;
        int seg_after;
    };
    struct BondOpRef {
        std::array<int, 3> segs;
        int arity;
    };

    void build_segments() {
        site_op_count_.assign(n_sites_, 0);
        for (const auto& op : ops_)
            if (op.kind == OpKind::site_const || op.kind == OpKind::site_flip)
                ++site_op_count_[op.index];
        seg_offset_.assign(n_sites_ + 1, 0);
        for (int i = 0; i < n_sites_; ++i)
            seg_offset_[i + 1] = seg_offset_[i] + site_op_count_[i] + 1;
        total_segments_ = seg_offset_[n_sites_];
        site_ops_.clear();
        bond_ops_.clear();
        seen_count_.assign(n_sites_, 0);
        for (int p = 0; p < cutoff(); ++p) {
            const SseOp& op = ops_[p];
            if (op.kind == OpKind::site_const || op.kind == OpKind::site_flip) {
                const int site = op.index;
                const int c = seen_count_[site]++;
                site_ops_.push_back({p, seg_offset_[site] + c, seg_offset_[site] + c + 1});
            } else if (op.kind == OpKind::bond_diag) {
                const auto& cl = sys_.clauses[op.index];
                BondOpRef ref{{-1, -1, -1}, cl.arity};
                for (int a = 0; a < cl.arity; ++a)
                    ref.segs[a] = seg_offset_[cl.sites[a]] + seen_count_[cl.sites[a]];
                bond_ops_.push_back(ref);
            }
        }
    }

    int uf_find(int x) {
        while (uf_parent_[x] != x) {
            uf_parent_[x] = uf_parent_[uf_parent_[x]];
            x = uf_parent_[x];
        }
        return x;
    }
    void uf_union(int a, int b) {
        a = uf_find(a);
        b = uf_find(b);
        if (a != b) uf_parent_[b] = a;
    }

    void cluster_update() {
        build_segments();
        uf_parent_.resize(total_segments_);
        std::iota(uf_parent_.begin(), uf_parent_.end(), 0);
        frozen_.assign(total_segments_, 0);
        for (const auto& b : bond_ops_) {
            if (b.arity == 1)
                frozen_[b.segs[0]] = 1;
            else
                uf_union(b.segs[0], b.segs[1]);
        }
        frozen_root_.assign(total_segments_, 0);
        for (int g = 0; g < total_segments_; ++g)
            if (frozen_[g]) frozen_root_[uf_find(g)] = 1;
        flip_.assign(total_segments_, 0);
        decided_.assign(total_segments_, 0);
        for (int g = 0; g < total_segments_; ++g) {
            const int r = uf_find(g);
            if (!decided_[r]) {
                decided_[r] = 1;
                flip_[r] = frozen_root_[r] ? 0 : (rng_.coin() ? 1 : 0);
            }
        }
        // boundary spins flip with the first segment's cluster
        for (int i = 0; i < n_sites_; ++i)
            if (flip_[uf_find(seg_offset_[i])]) spins_[i] = -spins_[i];
        for (const auto& so : site_ops_) {
            if (flip_[uf_find(so.seg_before)] != flip_[uf_find(so.seg_after)]) {
                SseOp& op = ops_[so.pos];
                op.kind = op.kind == OpKind::site_const ? OpKind::site_flip : OpKind::site_const;
            }
        }
    }

    // --- measurement machinery --------------------------------------------

    int window_lo(int n) const {
        return std::max(0, n / 2 - static_cast<int>(8.0 * std::sqrt(n) / 2.0) - 2);
    }
    int window_hi(int n) const {
        return std::min(n, n / 2 + static_cast<int>(8.0 * std::sqrt(n) / 2.0) + 2);
    }

    // Propagate z1 through the sequence recording all n+1 levels: clause
    // bitmaps and H_P values.
    void build_levels() {
        const int words = (n_clauses_ + 63) / 64;
        level_bits_.assign(static_cast<std::size_t>(n_ + 1) * words, 0);
        level_a_.assign(n_ + 1, 0);
        std::vector<int8_t>& z = work_spins_;
        z = spins_;
        sat_.resize(n_clauses_);
        int unsat = 0;
        for (int c = 0; c < n_clauses_; ++c) {
            sat_[c] = clause_satisfied(c, z) ? 0 : 1;
            unsat += sat_[c];
        }
        int level = 0;
        auto record = [&]() {
            std::uint64_t* dst = level_bits_.data() + static_cast<std::size_t>(level) * words;
            for (int c = 0; c < n_clauses_; ++c)
                if (sat_[c]) dst[c >> 6] |= 1ull << (c & 63);
            level_a_[level] = unsat;
            ++level;
        };
        record();
        for (const auto& op : ops_) {
            if (op.kind == OpKind::identity) continue;
            if (op.kind == OpKind::site_flip) {
                z[op.index] = -z[op.index];
                for (int c : incident_[op.index]) {
                    unsat += sat_[c] ? -1 : 1;
                    sat_[c] ^= 1;
                }
            }
            record();
        }
    }

    // Correlation estimator for diagonal observables:
    //   C(tau) = sum_m C(n,m) (tau/b)^m (1-tau/b)^(n-m)
    //            sum_n1 w(n-m, n1) a1(n1) a2(n1+m)
    // computed for A = H_P and for the clause-summed autocorrelation.
    void measure_correlations(MeasurementAccumulator& acc) {
        const auto& grid = opts_.tau_grid;
        const int n = n_;
        const int words = (n_clauses_ + 63) / 64;
        auto& ctau_hp = acc.vector_obs("ctau_hp", grid.size());
        auto& ctau_clause = acc.vector_obs("ctau_clause", grid.size());
        const double tau_max = grid.back();
        int m_max = n == 0 ? 0
                           : std::min(n, static_cast<int>(std::ceil(n * tau_max / beta_ +
                                                                    8.0 * std::sqrt(n) / 2.0)));
        r_hp_.assign(m_max + 1, 0.0);
        r_clause_.assign(m_max + 1, 0.0);
        for (int m = 0; m <= m_max; ++m) {
            const int k = n - m;
            // window of the w(k, n1) row
            const int lo = std::max(0, k / 2 - static_cast<int>(8.0 * std::sqrt(std::max(1, k)) / 2.0) - 2);
            const int hi = std::min(k, k / 2 + static_cast<int>(8.0 * std::sqrt(std::max(1, k)) / 2.0) + 2);
            const int c = (lo + hi) / 2;
            double lw = std::lgamma(k + 1.0) - std::lgamma(c + 1.0) - std::lgamma(k - c + 1.0) -
                        k * std::log(2.0);
            double wc = std::exp(lw);
            // fill forward and backward from the center
            double rh = 0.0, rc = 0.0;
            double w = wc;
            for (int n1 = c; n1 <= hi; ++n1) {
                rh += w * level_a_[n1] * level_a_[n1 + m];
                const std::uint64_t* ra = level_bits_.data() + static_cast<std::size_t>(n1) * words;
                const std::uint64_t* rb =
                    level_bits_.data() + static_cast<std::size_t>(n1 + m) * words;
                int pc = 0;
                for (int wd = 0; wd < words; ++wd) pc += std::popcount(ra[wd] & rb[wd]);
                rc += w * pc;
                w *= static_cast<double>(k - n1) / (n1 + 1);
            }
            w = wc;
            for (int n1 = c; n1 > lo; --n1) {
                w *= static_cast<double>(n1) / (k - n1 + 1);
                rh += w * level_a_[n1 - 1] * level_a_[n1 - 1 + m];
                const std::uint64_t* ra =
                    level_bits_.data() + static_cast<std::size_t>(n1 - 1) * words;
                const std::uint64_t* rb =
                    level_bits_.data() + static_cast<std::size_t>(n1 - 1 + m) * words;
                int pc = 0;
                for (int wd = 0; wd < words; ++wd) pc += std::popcount(ra[wd] & rb[wd]);
                rc += w * pc;
            }
            r_hp_[m] = rh;
            r_clause_[m] = rc;
        }
        for (std::size_t t = 0; t < grid.size(); ++t) {
            const double q = grid[t] / beta_;
            double ch, cc;
            if (n == 0 || q == 0.0) {
                ch = r_hp_[0];
                cc = r_clause_[0];
            } else if (q >= 1.0) {
                ch = m_max == n ? r_hp_[n] : 0.0;
                cc = m_max == n ? r_clause_[n] : 0.0;
            } else {
                const double mean = n * q;
                const double sd = std::sqrt(n * q * (1 - q));
                const int lo = std::max(0, static_cast<int>(mean - 8 * sd));
                const int hi = std::min(m_max, static_cast<int>(mean + 8 * sd) + 1);
                double logw = std::lgamma(n + 1.0) - std::lgamma(lo + 1.0) -
                              std::lgamma(n - lo + 1.0) + lo * std::log(q) +
                              (n - lo) * std::log1p(-q);
                double w = std::exp(logw);
                ch = cc = 0.0;
                for (int m = lo; m <= hi; ++m) {
                    ch += w * r_hp_[m];
                    cc += w * r_clause_[m];
                    w *= (static_cast<double>(n - m) / (m + 1)) * (q / (1 - q));
                }
            }
            ctau_hp.add_at(t, ch);
            ctau_clause.add_at(t, cc);
        }
        ctau_hp.count_sample();
        ctau_clause.count_sample();
    }

    // Integrated susceptibility, diagonal operators:
    //   chi = (beta/(n+1)) sum_m sum_n1 a1(n1) a2(n1+m) w(n-m, n1)
    void measure_susceptibility(MeasurementAccumulator& acc) {
        const int n = n_;
        double chi = 0.0;
        for (int m = 0; m <= n; ++m) {
            auto w = binomial_level_weights(n - m);
            double inner = 0.0;
            for (int n1 = 0; n1 + m <= n; ++n1)
                inner += w[n1] * level_a_[n1] * level_a_[n1 + m];
            chi += inner;
        }
        acc.scalar("chi_hp").add(beta_ / (n + 1.0) * chi);
    }

    ClauseSystem sys_;
    double s_;
    double beta_;
    Rng rng_;
    ProjOptions opts_;
    double hx_;
    int n_sites_;
    int n_clauses_;

    std::vector<int8_t> spins_;  // boundary state z1
    std::vector<SseOp> ops_;
    int n_ = 0;
    std::vector<std::vector<int>> incident_;

    std::vector<int8_t> work_spins_;
    std::vector<int> site_op_count_, seg_offset_, seen_count_;
    std::vector<SiteOpRef> site_ops_;
    std::vector<BondOpRef> bond_ops_;
    int total_segments_ = 0;
    std::vector<int> uf_parent_;
    std::vector<char> frozen_, frozen_root_, flip_, decided_;
    std::vector<std::uint64_t> level_bits_;
    std::vector<int8_t> sat_;
    std::vector<int> level_a_;
    std::vector<double> weights_, r_hp_, r_clause_;
    mutable std::vector<int> pos1_, pos2_;
};

// Two independent projection chains per s; connected correlation functions
// subtract the cross-replica product of means exactly as in the periodic
// scheme.
struct ProjScheduleOptions {
    long sweeps = 20000;
    long equilibration = 0;  // 0: sweeps / 5
    int measure_every = 10;
    int bins = 25;
    ProjOptions chain;
};

inline SseSResult run_projection(const ClauseSystem& sys, double s, double beta,
                                 std::uint64_t seed, const ProjScheduleOptions& opt = {}) {
    const long equil = opt.equilibration > 0 ? opt.equilibration : std::max<long>(1, opt.sweeps / 5);
    const long meas_count = std::max<long>(1, opt.sweeps / opt.measure_every);
    const long bin_size = std::max<long>(1, meas_count / std::max(1, opt.bins));
    ProjChain c1(sys, s, beta, derive_seed(seed, 0x11a, 0), opt.chain);
    ProjChain c2(sys, s, beta, derive_seed(seed, 0x11a, 1), opt.chain);
    MeasurementAccumulator a1, a2;
    for (long t = 0; t < equil; ++t) {
        c1.sweep();
        c2.sweep();
    }
    long meas_done = 0;
    for (long t = 0; t < opt.sweeps; ++t) {
        c1.sweep();
        c2.sweep();
        if ((t + 1) % opt.measure_every == 0) {
            c1.measure(a1);
            c2.measure(a2);
            if (++meas_done % bin_size == 0) {
                a1.close_bin();
                a2.close_bin();
            }
        }
    }
    return assemble_pair_result(s, beta, c1.tau_grid(), a1, a2, sys.n_sites);
}

}  // namespace qaa
