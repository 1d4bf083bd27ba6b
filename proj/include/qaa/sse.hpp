// Stochastic series expansion QMC for H(s) = (1-s) sum_i (1-sx_i)/2 + s H_P
// at inverse temperature beta. Operator decomposition (all weights >= 0):
//   site constant  (1-s)/2 * 1_i        diagonal
//   site flip      (1-s)/2 * sx_i       off-diagonal
//   bond diagonal  s * (1 - K_c)        weight s when clause c is satisfied
// so that sum of ops = -H + C with C = (1-s) N + s M, and <H> = C - <n>/beta.
//
// Updates: serial diagonal sweep (identity <-> diagonal substitutions),
// Swendsen-Wang cluster update for two-spin problems, and the pair-choice
// cluster construction with abort/restart for three-spin problems.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "qaa/accumulators.hpp"
#include "qaa/errors.hpp"
#include "qaa/instances.hpp"
#include "qaa/rng.hpp"

namespace qaa {

enum class OpKind : std::uint8_t { identity, site_const, site_flip, bond_diag };

struct SseOp {
    OpKind kind = OpKind::identity;
    std::int32_t index = -1;  // site for site ops, clause for bond ops

    friend bool operator==(const SseOp&, const SseOp&) = default;
};

// tau grid {0,1,...,16} then multiplicative 1.25 steps up to beta/2.
inline std::vector<double> default_tau_grid(double beta) {
    std::vector<double> grid;
    for (int t = 0; t <= 16 && t <= beta / 2; ++t) grid.push_back(t);
    double tau = 16.0;
    while (tau * 1.25 < beta / 2) {
        tau *= 1.25;
        grid.push_back(tau);
    }
    if (grid.empty() || grid.back() < beta / 2) grid.push_back(beta / 2);
    return grid;
}

struct SseOptions {
    bool measure_pairs = false;        // <sz_i sz_j> table (q' input)
    bool measure_correlations = false; // C_A(tau) series
    std::vector<double> tau_grid;      // empty: default grid
    int cluster_attempts_per_site = 1; // three-spin variant only
    std::uint64_t init_spin_state = 0; // used when init_from_state is set
    bool init_from_state = false;
};

class SseChain {
  public:
    SseChain(const ClauseSystem& sys, double s, double beta, std::uint64_t seed,
             SseOptions opts = {})
        : sys_(sys),
          s_(s),
          beta_(beta),
          rng_(seed),
          opts_(opts),
          hx_((1.0 - s) / 2.0),
          n_sites_(sys.n_sites),
          n_clauses_(static_cast<int>(sys.clauses.size())) {
        if (beta <= 0) throw error("SseChain: beta must be positive");
        spins_.resize(n_sites_);
        if (opts_.init_from_state) {
            for (int i = 0; i < n_sites_; ++i)
                spins_[i] = ((opts_.init_spin_state >> i) & 1u) ? -1 : 1;
        } else {
            for (auto& sp : spins_) sp = rng_.pm1();
        }
        ops_.assign(std::max(16, 2 * n_sites_), SseOp{});
        incident_.resize(n_sites_);
        for (int c = 0; c < n_clauses_; ++c)
            for (int a = 0; a < sys_.clauses[c].arity; ++a)
                incident_[sys_.clauses[c].sites[a]].push_back(c);
        three_spin_ = !sys_.two_local();
        if (opts_.tau_grid.empty()) opts_.tau_grid = default_tau_grid(beta);
    }

    double s() const { return s_; }
    double beta() const { return beta_; }
    int n_ops() const { return n_; }
    int n_site_ops() const { return n_site_; }
    int n_bond_ops() const { return n_bond_; }
    int cutoff() const { return static_cast<int>(ops_.size()); }
    const std::vector<int8_t>& spins() const { return spins_; }
    const std::vector<double>& tau_grid() const { return opts_.tau_grid; }
    double shift_constant() const { return (1.0 - s_) * n_sites_ + s_ * n_clauses_; }
    double abort_rate() const {
        return attempts_total_ > 0 ? static_cast<double>(aborts_total_) / attempts_total_ : 0.0;
    }
    const std::vector<SseOp>& op_string() const { return ops_; }

    // Structural invariants: propagating the state through the operator
    // string must return to the initial state, every bond operator must sit
    // on a satisfied clause at its level, and type counts must match.
    void validate_configuration() const {
        std::vector<int8_t> z = spins_;
        int n = 0, nsite = 0, nflip = 0, nbond = 0;
        for (const auto& op : ops_) {
            switch (op.kind) {
                case OpKind::identity:
                    break;
                case OpKind::site_const:
                    ++n, ++nsite;
                    break;
                case OpKind::site_flip:
                    ++n, ++nsite, ++nflip;
                    z[op.index] = -z[op.index];
                    break;
                case OpKind::bond_diag:
                    ++n, ++nbond;
                    if (!clause_satisfied(op.index, z))
                        throw error("sse invariant: bond operator on an unsatisfied clause");
                    break;
            }
        }
        if (z != spins_) throw error("sse invariant: string does not close periodically");
        if (n != n_ || nsite != n_site_ || nflip != n_flip_ || nbond != n_bond_)
            throw error("sse invariant: operator counts out of sync");
    }
    double mean_max_cluster_fraction() const {
        return cluster_updates_ > 0 ? max_cluster_fraction_sum_ / cluster_updates_ : 0.0;
    }

    void sweep() {
        diagonal_update();
        maybe_grow_cutoff();
        if (three_spin_)
            cluster_update_3spin();
        else
            cluster_update_ising();
    }

    // One full measurement into `acc`. Call on an equilibrated chain.
    void measure(MeasurementAccumulator& acc) {
        const double shift = shift_constant();
        acc.scalar("n").add(n_);
        acc.scalar("energy").add(shift - n_ / beta_);
        // Direct estimator: diagonal part on the slice-0 state, off-diagonal
        // part from the flip-operator count.
        const int ep0 = problem_energy(spins_);
        acc.scalar("energy_direct")
            .add((1.0 - s_) * n_sites_ / 2.0 + s_ * ep0 - n_flip_ / beta_);
        acc.scalar("mx").add(hx_ > 0 ? n_flip_ / (beta_ * hx_ * n_sites_) : 0.0);
        acc.scalar("ep_slice0").add(ep0);

        auto& sz = acc.vector_obs("sz", n_sites_);
        for (int i = 0; i < n_sites_; ++i) sz.add_at(i, spins_[i]);
        sz.count_sample();

        if (opts_.measure_pairs) {
            auto& pairs = acc.vector_obs("szsz", static_cast<std::size_t>(n_sites_) * (n_sites_ - 1) / 2);
            std::size_t idx = 0;
            const bool improved = !three_spin_ && !slice0_cluster_.empty();
            for (int i = 0; i < n_sites_; ++i)
                for (int j = i + 1; j < n_sites_; ++j, ++idx) {
                    double v = static_cast<double>(spins_[i]) * spins_[j];
                    if (improved && slice0_cluster_[i] != slice0_cluster_[j]) v = 0.0;
                    pairs.add_at(idx, v);
                }
            pairs.count_sample();
        }
        if (opts_.measure_correlations) measure_correlations(acc);
    }

    void swap_configuration_with(SseChain& other) {
        std::swap(spins_, other.spins_);
        std::swap(ops_, other.ops_);
        std::swap(n_, other.n_);
        std::swap(n_site_, other.n_site_);
        std::swap(n_flip_, other.n_flip_);
        std::swap(n_bond_, other.n_bond_);
        slice0_cluster_.clear();
        other.slice0_cluster_.clear();
    }

    void grow_cutoff_to(int lambda) {
        if (lambda <= cutoff()) return;
        ops_.resize(lambda, SseOp{});
    }

    Rng& rng() { return rng_; }

    // --- serialization for checkpointing ---------------------------------
    void save_state(std::vector<std::uint64_t>& out) const {
        out.push_back(ops_.size());
        out.push_back(static_cast<std::uint64_t>(n_));
        for (auto w : rng_.state()) out.push_back(w);
        out.push_back(0);  // layout version
        for (int base = 0; base < n_sites_; base += 64) {
            std::uint64_t w = 0;
            for (int i = base; i < std::min(base + 64, n_sites_); ++i)
                if (spins_[i] < 0) w |= 1ull << (i - base);
            out.push_back(w);
        }
        for (const auto& op : ops_)
            out.push_back((static_cast<std::uint64_t>(op.kind) << 32) |
                          static_cast<std::uint32_t>(op.index + 1));
    }

    void load_state(const std::uint64_t* data, std::size_t len) {
        std::size_t pos = 0;
        auto need = [&](std::size_t k) {
            if (pos + k > len) throw io_error("SseChain::load_state: truncated");
        };
        need(2);
        const auto lambda = static_cast<std::size_t>(data[pos++]);
        n_ = static_cast<int>(data[pos++]);
        need(4);
        std::array<std::uint64_t, 4> st{data[pos], data[pos + 1], data[pos + 2], data[pos + 3]};
        pos += 4;
        rng_.set_state(st);
        need(1);
        ++pos;  // layout version
        const int spin_words = (n_sites_ + 63) / 64;
        need(spin_words);
        for (int base = 0; base < n_sites_; base += 64) {
            const std::uint64_t w = data[pos++];
            for (int i = base; i < std::min(base + 64, n_sites_); ++i)
                spins_[i] = (w >> (i - base)) & 1u ? -1 : 1;
        }
        need(lambda);
        ops_.assign(lambda, SseOp{});
        n_site_ = n_flip_ = n_bond_ = 0;
        for (auto& op : ops_) {
            const std::uint64_t w = data[pos++];
            op.kind = static_cast<OpKind>(w >> 32);
            op.index = static_cast<std::int32_t>(w & 0xffffffffu) - 1;
            if (op.kind == OpKind::site_const || op.kind == OpKind::site_flip) ++n_site_;
            if (op.kind == OpKind::site_flip) ++n_flip_;
            if (op.kind == OpKind::bond_diag) ++n_bond_;
        }
    }

  private:
    int problem_energy(const std::vector<int8_t>& sp) const {
        int e = 0;
        for (const auto& c : sys_.clauses) {
            int prod = c.coupling;
            for (int a = 0; a < c.arity; ++a) prod *= sp[c.sites[a]];
            e += c.arity == 2 ? (1 + prod) / 2 : (1 - prod) / 2;
        }
        return e;
    }

    bool clause_satisfied(int c, const std::vector<int8_t>& sp) const {
        const auto& cl = sys_.clauses[c];
        int prod = cl.coupling;
        for (int a = 0; a < cl.arity; ++a) prod *= sp[cl.sites[a]];
        return cl.arity == 2 ? prod == -1 : prod == 1;
    }

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
                        const int c = r - n_sites_;
                        cand = {OpKind::bond_diag, c};
                        w = clause_satisfied(c, z) ? s_ : 0.0;
                    }
                    if (w > 0.0) {
                        const double p_acc = beta_ * d_choices * w / (lambda - n_);
                        if (p_acc >= 1.0 || rng_.uniform() < p_acc) {
                            op = cand;
                            ++n_;
                            if (cand.kind == OpKind::site_const)
                                ++n_site_;
                            else
                                ++n_bond_;
                        }
                    }
                    break;
                }
                case OpKind::site_const:
                case OpKind::bond_diag: {
                    const double w = op.kind == OpKind::site_const ? hx_ : s_;
                    const double p_acc = (lambda - n_ + 1) / (beta_ * d_choices * w);
                    if (p_acc >= 1.0 || rng_.uniform() < p_acc) {
                        if (op.kind == OpKind::site_const)
                            --n_site_;
                        else
                            --n_bond_;
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

    void maybe_grow_cutoff() {
        if (4 * n_ > 3 * cutoff()) grow_cutoff_to(n_ + n_ / 3);
    }

    // --- segment machinery shared by both cluster updates -----------------
    // World lines are cut only by site operators; a bond operator binds the
    // segments of its member spins at its position.
    struct SiteOpRef {
        int pos;
        int site;
        int seg_before;
        int seg_after;
    };
    struct BondOpRef {
        int clause;
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
            seg_offset_[i + 1] = seg_offset_[i] + std::max(1, site_op_count_[i]);
        total_segments_ = seg_offset_[n_sites_];
        site_ops_.clear();
        bond_ops_.clear();
        seen_count_.assign(n_sites_, 0);
        auto seg_at = [&](int site) {
            const int k = site_op_count_[site];
            if (k == 0) return seg_offset_[site];
            const int c = seen_count_[site];
            return seg_offset_[site] + (c == 0 ? k - 1 : c - 1);
        };
        for (int p = 0; p < cutoff(); ++p) {
            const SseOp& op = ops_[p];
            if (op.kind == OpKind::site_const || op.kind == OpKind::site_flip) {
                const int site = op.index;
                const int k = site_op_count_[site];
                const int c = seen_count_[site]++;
                const int before = seg_offset_[site] + (c == 0 ? k - 1 : c - 1);
                const int after = seg_offset_[site] + c;
                site_ops_.push_back({p, site, before, after});
            } else if (op.kind == OpKind::bond_diag) {
                const auto& cl = sys_.clauses[op.index];
                BondOpRef ref{op.index, {-1, -1, -1}, cl.arity};
                for (int a = 0; a < cl.arity; ++a) ref.segs[a] = seg_at(cl.sites[a]);
                bond_ops_.push_back(ref);
            }
        }
    }

    int wrap_segment(int site) const {
        const int k = site_op_count_[site];
        return seg_offset_[site] + (k == 0 ? 0 : k - 1);
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

    // Swendsen-Wang update for two-spin (and field) operators: every bond
    // operator fuses the four adjacent legs, site operators terminate
    // clusters, each cluster flips with probability 1/2. The flip maps
    // boundary site operators const <-> flip; all weights are unchanged.
    void cluster_update_ising() {
        build_segments();
        uf_parent_.resize(total_segments_);
        std::iota(uf_parent_.begin(), uf_parent_.end(), 0);
        frozen_.assign(total_segments_, 0);
        for (const auto& b : bond_ops_) {
            if (b.arity == 1) {
                frozen_[b.segs[0]] = 1;  // field term pins its segment
            } else {
                uf_union(b.segs[0], b.segs[1]);
            }
        }
        flip_.assign(total_segments_, 0);
        frozen_root_buf_.assign(total_segments_, 0);
        for (int g = 0; g < total_segments_; ++g)
            if (frozen_[g]) frozen_root_buf_[uf_find(g)] = 1;
        // decide one coin per root
        decided_.assign(total_segments_, 0);
        std::vector<std::int64_t> cluster_size(total_segments_, 0);
        for (int g = 0; g < total_segments_; ++g) {
            const int r = uf_find(g);
            ++cluster_size[r];
            if (!decided_[r]) {
                decided_[r] = 1;
                flip_[r] = frozen_root_buf_[r] ? 0 : (rng_.coin() ? 1 : 0);
            }
        }
        std::int64_t max_cluster = 0;
        for (int g = 0; g < total_segments_; ++g) max_cluster = std::max(max_cluster, cluster_size[g]);
        max_cluster_fraction_sum_ += static_cast<double>(max_cluster) / total_segments_;
        ++cluster_updates_;
        // apply flips
        slice0_cluster_.assign(n_sites_, 0);
        for (int i = 0; i < n_sites_; ++i) {
            const int r = uf_find(wrap_segment(i));
            slice0_cluster_[i] = r;
            if (flip_[r]) spins_[i] = -spins_[i];
        }
        for (const auto& so : site_ops_) {
            if (flip_[uf_find(so.seg_before)] != flip_[uf_find(so.seg_after)]) toggle_site_op(so.pos);
        }
    }

    // Cluster construction for three-spin operators: on first contact with an
    // operator instance one of its three spins is designated spectator
    // (uniformly); the other two form the bound pair. Any construction that
    // would flip a spectator is aborted and restarted, leaving the
    // configuration unchanged.
    void cluster_update_3spin() {
        build_segments();
        // adjacency segment -> (bond op, member slot)
        adj_head_.assign(total_segments_ + 1, 0);
        for (const auto& b : bond_ops_)
            for (int a = 0; a < b.arity; ++a) ++adj_head_[b.segs[a] + 1];
        for (int g = 0; g < total_segments_; ++g) adj_head_[g + 1] += adj_head_[g];
        adj_list_.resize(adj_head_[total_segments_]);
        fill_cursor_ = adj_head_;
        for (int bi = 0; bi < static_cast<int>(bond_ops_.size()); ++bi)
            for (int a = 0; a < bond_ops_[bi].arity; ++a)
                adj_list_[fill_cursor_[bond_ops_[bi].segs[a]]++] = {bi, a};

        in_cluster_epoch_.assign(total_segments_, 0);
        op_epoch_.assign(bond_ops_.size(), 0);
        op_spectator_.assign(bond_ops_.size(), -1);
        // two bounding site ops per segment (k >= 1 sites only)
        seg_bound_lo_.assign(total_segments_, -1);
        seg_bound_hi_.assign(total_segments_, -1);
        for (int so = 0; so < static_cast<int>(site_ops_.size()); ++so) {
            seg_bound_hi_[site_ops_[so].seg_before] = so;  // op ends seg_before
            seg_bound_lo_[site_ops_[so].seg_after] = so;   // op starts seg_after
        }

        const int attempts = std::max(4, opts_.cluster_attempts_per_site * n_sites_);
        touch_epoch_.assign(site_ops_.size(), 0);
        std::vector<int>& stack = cluster_stack_;
        std::vector<int>& members = cluster_members_;
        for (int att = 0; att < attempts; ++att) {
            ++epoch_;
            ++attempts_total_;
            const int seed_seg = static_cast<int>(rng_.below(total_segments_));
            stack.clear();
            members.clear();
            stack.push_back(seed_seg);
            in_cluster_epoch_[seed_seg] = epoch_;
            members.push_back(seed_seg);
            bool abort = false;
            while (!stack.empty() && !abort) {
                const int g = stack.back();
                stack.pop_back();
                for (int e = adj_head_[g]; e < adj_head_[g + 1] && !abort; ++e) {
                    const auto [bi, slot] = adj_list_[e];
                    const auto& b = bond_ops_[bi];
                    if (b.arity == 1) {
                        abort = true;
                        break;
                    }
                    if (b.arity == 2) {
                        const int other = b.segs[slot == 0 ? 1 : 0];
                        if (in_cluster_epoch_[other] != epoch_) {
                            in_cluster_epoch_[other] = epoch_;
                            members.push_back(other);
                            stack.push_back(other);
                        }
                        continue;
                    }
                    if (op_epoch_[bi] != epoch_) {
                        op_epoch_[bi] = epoch_;
                        const int spectator = rng_.below_int(3);
                        op_spectator_[bi] = spectator;
                        if (spectator == slot) {
                            abort = true;
                            break;
                        }
                        if (in_cluster_epoch_[b.segs[spectator]] == epoch_) {
                            abort = true;  // spectator side already inside
                            break;
                        }
                    } else if (op_spectator_[bi] == slot) {
                        abort = true;
                        break;
                    }
                    const int spectator = op_spectator_[bi];
                    for (int a = 0; a < 3; ++a) {
                        if (a == spectator || a == slot) continue;
                        const int partner = b.segs[a];
                        if (in_cluster_epoch_[partner] != epoch_) {
                            in_cluster_epoch_[partner] = epoch_;
                            members.push_back(partner);
                            stack.push_back(partner);
                        }
                    }
                }
            }
            if (abort) {
                ++aborts_total_;
                continue;
            }
            if (!rng_.coin()) continue;
            // Flip the cluster: slice-0 spins via wrap segments, boundary site
            // operators toggled when exactly one side is inside.
            ++epoch_flip_;
            for (int g : members) {
                for (int which : {seg_bound_lo_[g], seg_bound_hi_[g]}) {
                    if (which < 0) continue;
                    if (touch_epoch_[which] == epoch_flip_) {
                        touch_epoch_[which] = 0;  // both sides flipped: no toggle
                    } else {
                        touch_epoch_[which] = epoch_flip_;
                    }
                }
            }
            for (int g : members) {
                for (int which : {seg_bound_lo_[g], seg_bound_hi_[g]}) {
                    if (which >= 0 && touch_epoch_[which] == epoch_flip_) {
                        toggle_site_op(site_ops_[which].pos);
                        touch_epoch_[which] = 0;
                    }
                }
            }
            for (int i = 0; i < n_sites_; ++i)
                if (in_cluster_epoch_[wrap_segment(i)] == epoch_) spins_[i] = -spins_[i];
        }
        slice0_cluster_.clear();  // no exclusive decomposition for 3-spin updates
    }

    void toggle_site_op(int pos) {
        SseOp& op = ops_[pos];
        if (op.kind == OpKind::site_const) {
            op.kind = OpKind::site_flip;
            ++n_flip_;
        } else if (op.kind == OpKind::site_flip) {
            op.kind = OpKind::site_const;
            --n_flip_;
        }
    }

    // --- imaginary-time correlation measurement ----------------------------
    // Level series of clause-satisfaction bitmaps; cyclic lagged products via
    // popcount give both the clause-summed autocorrelation and the H_P one.
    void measure_correlations(MeasurementAccumulator& acc) {
        const auto& grid = opts_.tau_grid;
        const int words = (n_clauses_ + 63) / 64;
        auto& ctau_hp = acc.vector_obs("ctau_hp", grid.size());
        auto& ctau_clause = acc.vector_obs("ctau_clause", grid.size());
        auto& clause_k = acc.vector_obs("clause_k", n_clauses_);
        if (n_ == 0) {
            const double a0 = problem_energy(spins_);
            for (std::size_t t = 0; t < grid.size(); ++t) {
                ctau_hp.add_at(t, a0 * a0);
                ctau_clause.add_at(t, a0);  // sum_c K_c^2 = sum_c K_c for 0/1 values
            }
            ctau_hp.count_sample();
            ctau_clause.count_sample();
            for (int c = 0; c < n_clauses_; ++c)
                clause_k.add_at(c, clause_satisfied(c, spins_) ? 0.0 : 1.0);
            clause_k.count_sample();
            acc.scalar("a_hp").add(a0);
            acc.scalar("chi_hp").add(beta_ * a0 * a0);
            return;
        }
        // build level bitmaps
        level_bits_.assign(static_cast<std::size_t>(n_) * words, 0);
        std::vector<int8_t>& z = work_spins_;
        z = spins_;
        sat_.resize(n_clauses_);
        for (int c = 0; c < n_clauses_; ++c) sat_[c] = clause_satisfied(c, z) ? 0 : 1;  // 1 = unsat
        int level = 0;
        auto record = [&]() {
            std::uint64_t* dst = level_bits_.data() + static_cast<std::size_t>(level) * words;
            for (int c = 0; c < n_clauses_; ++c)
                if (sat_[c]) dst[c >> 6] |= 1ull << (c & 63);
            ++level;
        };
        record();
        for (const auto& op : ops_) {
            if (op.kind == OpKind::identity) continue;
            if (level == n_) break;
            if (op.kind == OpKind::site_flip) {
                z[op.index] = -z[op.index];
                for (int c : incident_[op.index]) sat_[c] ^= 1;
            }
            record();
        }
        // a(p) = H_P(level p): popcount per level; per-clause level means
        level_a_.resize(n_);
        double suma = 0.0, suma2 = 0.0;
        for (int p = 0; p < n_; ++p) {
            int pc = 0;
            const std::uint64_t* row = level_bits_.data() + static_cast<std::size_t>(p) * words;
            for (int w = 0; w < words; ++w) pc += std::popcount(row[w]);
            level_a_[p] = pc;
            suma += pc;
            suma2 += static_cast<double>(pc) * pc;
        }
        for (int c = 0; c < n_clauses_; ++c) {
            long cnt = 0;
            for (int p = 0; p < n_; ++p)
                cnt += (level_bits_[static_cast<std::size_t>(p) * words + (c >> 6)] >> (c & 63)) & 1u;
            clause_k.add_at(c, static_cast<double>(cnt) / n_);
        }
        clause_k.count_sample();
        acc.scalar("a_hp").add(suma / n_);
        acc.scalar("chi_hp").add(beta_ / (static_cast<double>(n_) * (n_ + 1)) *
                                 (suma * suma + suma2));
        // lagged products
        const double tau_max = grid.back();
        int m_max = static_cast<int>(std::ceil(n_ * tau_max / beta_ + 8.0 * std::sqrt(n_) / 2.0));
        m_max = std::min(m_max, n_);
        r_hp_.assign(m_max + 1, 0.0);
        r_clause_.assign(m_max + 1, 0.0);
        for (int m = 0; m <= m_max; ++m) {
            double rh = 0.0;
            double rc = 0.0;
            for (int p = 0; p < n_; ++p) {
                const int q = p + m < n_ ? p + m : p + m - n_;
                rh += static_cast<double>(level_a_[p]) * level_a_[q];
                const std::uint64_t* rp = level_bits_.data() + static_cast<std::size_t>(p) * words;
                const std::uint64_t* rq = level_bits_.data() + static_cast<std::size_t>(q) * words;
                int pc = 0;
                for (int w = 0; w < words; ++w) pc += std::popcount(rp[w] & rq[w]);
                rc += pc;
            }
            r_hp_[m] = rh / n_;
            r_clause_[m] = rc / n_;
        }
        // binomial mixture per tau: C(tau) = sum_m Bin(n, tau/beta)(m) R(m),
        // R cyclic with R(n) = R(0).
        for (std::size_t t = 0; t < grid.size(); ++t) {
            const double q = grid[t] / beta_;
            double ch = 0.0, cc = 0.0;
            if (q == 0.0) {
                ch = r_hp_[0];
                cc = r_clause_[0];
            } else if (q >= 1.0) {
                ch = r_hp_[n_];
                cc = r_clause_[n_];
            } else {
                // recursive binomial weights over a +-8 sigma window
                const double mean = n_ * q;
                const double sd = std::sqrt(n_ * q * (1 - q));
                int lo = std::max(0, static_cast<int>(mean - 8 * sd));
                int hi = std::min(n_, static_cast<int>(mean + 8 * sd) + 1);
                hi = std::min(hi, m_max);
                double logw = std::lgamma(n_ + 1.0) - std::lgamma(lo + 1.0) -
                              std::lgamma(n_ - lo + 1.0) + lo * std::log(q) +
                              (n_ - lo) * std::log1p(-q);
                double w = std::exp(logw);
                for (int m = lo; m <= hi; ++m) {
                    ch += w * r_hp_[m];
                    cc += w * r_clause_[m];
                    w *= (static_cast<double>(n_ - m) / (m + 1)) * (q / (1 - q));
                }
            }
            ctau_hp.add_at(t, ch);
            ctau_clause.add_at(t, cc);
        }
        ctau_hp.count_sample();
        ctau_clause.count_sample();
    }

    ClauseSystem sys_;
    double s_;
    double beta_;
    Rng rng_;
    SseOptions opts_;
    double hx_;
    int n_sites_;
    int n_clauses_;
    bool three_spin_ = false;

    std::vector<int8_t> spins_;
    std::vector<SseOp> ops_;
    int n_ = 0;
    int n_site_ = 0;
    int n_flip_ = 0;
    int n_bond_ = 0;
    std::vector<std::vector<int>> incident_;

    // cluster statistics
    long attempts_total_ = 0;
    long aborts_total_ = 0;
    long cluster_updates_ = 0;
    double max_cluster_fraction_sum_ = 0.0;
    std::vector<int> slice0_cluster_;

    // scratch buffers
    std::vector<int8_t> work_spins_;
    std::vector<int> site_op_count_, seg_offset_, seen_count_;
    std::vector<SiteOpRef> site_ops_;
    std::vector<BondOpRef> bond_ops_;
    int total_segments_ = 0;
    std::vector<int> uf_parent_;
    std::vector<char> frozen_, flip_, decided_;
    std::vector<char> frozen_root_buf_;
    std::vector<int> adj_head_, fill_cursor_;
    std::vector<std::pair<int, int>> adj_list_;
    std::vector<long> in_cluster_epoch_, op_epoch_;
    std::vector<int> op_spectator_;
    std::vector<int> seg_bound_lo_, seg_bound_hi_;
    std::vector<long> touch_epoch_;
    std::vector<int> cluster_stack_, cluster_members_;
    long epoch_ = 0, epoch_flip_ = 0;
    std::vector<std::uint64_t> level_bits_;
    std::vector<int8_t> sat_;
    std::vector<int> level_a_;
    std::vector<double> r_hp_, r_clause_;
};

}  // namespace qaa
