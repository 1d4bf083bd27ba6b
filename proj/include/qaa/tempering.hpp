// Parallel tempering in s, replica pairs for unbiased squared expectation
// values, and the measurement schedule with checkpoint/resume.
//
// Every observable that involves <A>^2 (the spin-glass order parameters and
// connected correlation functions) is assembled from the product of two
// independent replicas simulated at the same s.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qaa/serialize.hpp"
#include "qaa/sse.hpp"

namespace qaa {

// Swap acceptance ratio from operator-type counts: each site operator carries
// a factor (1-s)/2 and each bond operator a factor s, so exchanging the
// configurations of replicas i and j needs only the counts.
inline double pt_log_ratio(double s_i, double s_j, int nsite_i, int nbond_i, int nsite_j,
                           int nbond_j) {
    const int dsite = nsite_j - nsite_i;
    const int dbond = nbond_j - nbond_i;
    double lr = 0.0;
    if (dsite != 0) lr += dsite * (std::log1p(-s_i) - std::log1p(-s_j));
    if (dbond != 0) lr += dbond * (std::log(s_i) - std::log(s_j));
    return lr;
}

struct TemperingStats {
    std::vector<long> attempts;  // per adjacent pair
    std::vector<long> accepts;

    double acceptance(std::size_t pair) const {
        return attempts[pair] > 0 ? static_cast<double>(accepts[pair]) / attempts[pair] : 0.0;
    }
};

// A set of replicas at strictly increasing s values sharing one beta.
class TemperingEnsemble {
  public:
    TemperingEnsemble(const ClauseSystem& sys, std::vector<double> s_list, double beta,
                      std::uint64_t seed, const SseOptions& opts = {})
        : rng_(derive_seed(seed, 0x9e37)) {
        if (s_list.size() < 2) throw error("TemperingEnsemble: need >= 2 replicas");
        for (std::size_t i = 0; i + 1 < s_list.size(); ++i)
            if (s_list[i + 1] <= s_list[i]) throw error("TemperingEnsemble: s values must increase");
        for (double s : s_list) {
            if (s <= 0.0 || s >= 1.0)
                throw error("TemperingEnsemble: tempering requires 0 < s < 1");
            chains_.emplace_back(sys, s, beta, derive_seed(seed, 0xc4a1, chains_.size()), opts);
        }
        stats_.attempts.assign(chains_.size() - 1, 0);
        stats_.accepts.assign(chains_.size() - 1, 0);
    }

    std::vector<SseChain>& chains() { return chains_; }
    const TemperingStats& stats() const { return stats_; }

    void sweep() {
        int lambda_max = 0;
        for (auto& c : chains_) {
            c.sweep();
            lambda_max = std::max(lambda_max, c.cutoff());
        }
        for (auto& c : chains_) c.grow_cutoff_to(lambda_max);
        exchange(parity_);
        parity_ ^= 1;
    }

    // Proposes swaps for adjacent pairs of one parity class.
    void exchange(int parity) {
        for (std::size_t i = parity; i + 1 < chains_.size(); i += 2) {
            auto& a = chains_[i];
            auto& b = chains_[i + 1];
            ++stats_.attempts[i];
            const double lr = pt_log_ratio(a.s(), b.s(), a.n_site_ops(), a.n_bond_ops(),
                                           b.n_site_ops(), b.n_bond_ops());
            if (lr >= 0.0 || rng_.uniform() < std::exp(lr)) {
                a.swap_configuration_with(b);
                ++stats_.accepts[i];
            }
        }
    }

  private:
    std::vector<SseChain> chains_;
    TemperingStats stats_;
    Rng rng_;
    int parity_ = 0;
};

// ---------------------------------------------------------------------------
// Derived per-s results assembled from replica pairs.

struct ValueWithError {
    double value = 0.0;
    double error = std::numeric_limits<double>::quiet_NaN();
    long bins = 0;
};

struct CorrelationPoint {
    double tau;
    double value;
    double error;
    long bins;
};

struct SseSResult {
    double s = 0.0;
    double beta = 0.0;
    ValueWithError energy;
    ValueWithError energy_direct;
    ValueWithError mx;
    ValueWithError q;        // XORSAT order parameter, cross-replica
    ValueWithError qprime;   // Max-Cut order parameter, cross-replica
    ValueWithError chi_hp;   // integrated susceptibility of H_P
    std::vector<CorrelationPoint> ctau_hp;      // connected, A = H_P
    std::vector<CorrelationPoint> ctau_clause;  // connected, clause-summed
    bool equilibrated = true;
    double geweke_z = 0.0;
    double abort_rate = 0.0;
    MeasurementAccumulator replica[2];
};

namespace detail {

inline ValueWithError from_bins(const std::vector<double>& bins) {
    ValueWithError v;
    v.bins = static_cast<long>(bins.size());
    if (bins.empty()) return v;
    double m = 0.0;
    for (double b : bins) m += b;
    m /= bins.size();
    v.value = m;
    if (v.bins >= 2) {
        double var = 0.0;
        for (double b : bins) var += (b - m) * (b - m);
        v.error = std::sqrt(var / (static_cast<double>(v.bins) * (v.bins - 1)));
    }
    if (v.bins < kMinBinsForErrors) v.error = std::numeric_limits<double>::quiet_NaN();
    return v;
}

inline ValueWithError scalar_both(const MeasurementAccumulator& a, const MeasurementAccumulator& b,
                                  const std::string& name) {
    std::vector<double> bins;
    auto ia = a.scalars.find(name);
    auto ib = b.scalars.find(name);
    if (ia != a.scalars.end()) bins.insert(bins.end(), ia->second.bins.begin(), ia->second.bins.end());
    if (ib != b.scalars.end()) bins.insert(bins.end(), ib->second.bins.begin(), ib->second.bins.end());
    return from_bins(bins);
}

}  // namespace detail

// Cross-replica assembly of the derived observables for one s value.
inline SseSResult assemble_pair_result(double s, double beta, const std::vector<double>& tau_grid,
                                       const MeasurementAccumulator& r1,
                                       const MeasurementAccumulator& r2, int n_sites) {
    SseSResult out;
    out.s = s;
    out.beta = beta;
    out.replica[0] = r1;
    out.replica[1] = r2;
    out.energy = detail::scalar_both(r1, r2, "energy");
    out.energy_direct = detail::scalar_both(r1, r2, "energy_direct");
    out.mx = detail::scalar_both(r1, r2, "mx");
    out.chi_hp = detail::scalar_both(r1, r2, "chi_hp");

    if (r1.vectors.count("sz") && r2.vectors.count("sz")) {
        const auto& sz1 = r1.vectors.at("sz");
        const auto& sz2 = r2.vectors.at("sz");
        const long nb = std::min(sz1.n_bins(), sz2.n_bins());
        std::vector<double> qbins;
        for (long b = 0; b < nb; ++b) {
            double q = 0.0;
            for (int i = 0; i < n_sites; ++i) q += sz1.bins[b][i] * sz2.bins[b][i];
            qbins.push_back(q / n_sites);
        }
        out.q = detail::from_bins(qbins);
    }
    if (r1.vectors.count("szsz") && r2.vectors.count("szsz")) {
        const auto& p1 = r1.vectors.at("szsz");
        const auto& p2 = r2.vectors.at("szsz");
        std::vector<double> q2bins;
        const long npb = std::min(p1.n_bins(), p2.n_bins());
        for (long b = 0; b < npb; ++b) {
            double acc = 0.0;
            for (std::size_t k = 0; k < p1.size; ++k) acc += p1.bins[b][k] * p2.bins[b][k];
            q2bins.push_back(2.0 * acc / (static_cast<double>(n_sites) * (n_sites - 1)));
        }
        auto q2 = detail::from_bins(q2bins);
        out.qprime.bins = q2.bins;
        out.qprime.value = std::sqrt(std::max(0.0, q2.value));
        out.qprime.error =
            out.qprime.value > 0 ? q2.error / (2.0 * out.qprime.value) : std::sqrt(std::abs(q2.error));
    }
    // Connected correlation functions: <A(tau)A(0)> - <A>_1 <A>_2 per bin.
    auto connect = [&](const std::string& raw, const std::string& mean_scalar,
                       std::vector<CorrelationPoint>& dst) {
        if (!r1.vectors.count(raw) || !r2.vectors.count(raw)) return;
        const auto& c1 = r1.vectors.at(raw);
        const auto& c2 = r2.vectors.at(raw);
        const auto& a1 = r1.scalars.at(mean_scalar);
        const auto& a2 = r2.scalars.at(mean_scalar);
        const long ncb = std::min({c1.n_bins(), c2.n_bins(), static_cast<long>(a1.bins.size()),
                                   static_cast<long>(a2.bins.size())});
        for (std::size_t t = 0; t < tau_grid.size(); ++t) {
            std::vector<double> bins;
            for (long b = 0; b < ncb; ++b) {
                const double raw_avg = 0.5 * (c1.bins[b][t] + c2.bins[b][t]);
                bins.push_back(raw_avg - a1.bins[b] * a2.bins[b]);
            }
            auto v = detail::from_bins(bins);
            dst.push_back({tau_grid[t], v.value, v.error, v.bins});
        }
    };
    connect("ctau_hp", "a_hp", out.ctau_hp);
    // the clause-summed series subtracts sum_c <K_c>_1 <K_c>_2
    if (r1.vectors.count("ctau_clause") && r1.vectors.count("clause_k")) {
        const auto& c1 = r1.vectors.at("ctau_clause");
        const auto& c2 = r2.vectors.at("ctau_clause");
        const auto& k1 = r1.vectors.at("clause_k");
        const auto& k2 = r2.vectors.at("clause_k");
        const long ncb = std::min({c1.n_bins(), c2.n_bins(), k1.n_bins(), k2.n_bins()});
        for (std::size_t t = 0; t < tau_grid.size(); ++t) {
            std::vector<double> bins;
            for (long b = 0; b < ncb; ++b) {
                double sub = 0.0;
                for (std::size_t c = 0; c < k1.size; ++c) sub += k1.bins[b][c] * k2.bins[b][c];
                bins.push_back(0.5 * (c1.bins[b][t] + c2.bins[b][t]) - sub);
            }
            auto v = detail::from_bins(bins);
            out.ctau_clause.push_back({tau_grid[t], v.value, v.error, v.bins});
        }
    }
    if (r1.scalars.count("energy") && r1.scalars.at("energy").bins.size() >= 8) {
        out.geweke_z = r1.geweke_z("energy");
        out.equilibrated = std::abs(out.geweke_z) < 3.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Measurement schedule: equilibrate, measure with binning, optional parallel
// tempering and checkpoint/resume.

struct ScheduleOptions {
    long sweeps = 20000;         // measurement sweeps per s value
    long equilibration = 0;      // 0: sweeps / 5
    int measure_every = 10;
    int bins = 25;               // target bin count when bin size is derived
    long measurements_per_bin = 0;  // 0: derived from sweeps and bins
    bool parallel_tempering = false;
    SseOptions chain;
    std::string checkpoint_path;  // empty: no checkpointing
    int checkpoint_every_bins = 0;
};

namespace detail {

inline constexpr char kCheckpointMagic[9] = "QAASSE01";

struct ScheduleState {
    std::vector<SseChain>* chains[2];
    std::vector<MeasurementAccumulator>* accs;
    long* sweep_done;
};

}  // namespace detail

// Runs the full schedule and returns one result per s value. A checkpoint
// written every `checkpoint_every_bins` bins allows byte-identical resume.
inline std::vector<SseSResult> run_schedule(const ClauseSystem& sys, std::vector<double> s_list,
                                            double beta, std::uint64_t seed,
                                            const ScheduleOptions& opt = {}) {
    if (s_list.empty()) throw error("run_schedule: empty s list");
    const long equil = opt.equilibration > 0 ? opt.equilibration : std::max<long>(1, opt.sweeps / 5);
    const long meas_count = std::max<long>(1, opt.sweeps / opt.measure_every);
    const long bin_size = opt.measurements_per_bin > 0
                              ? opt.measurements_per_bin
                              : std::max<long>(1, meas_count / std::max(1, opt.bins));

    // Two independent replica sets; with tempering enabled each set is its own
    // tempering ensemble.
    std::vector<std::vector<SseChain>> sets;
    for (int rep = 0; rep < 2; ++rep) {
        std::vector<SseChain> chains;
        for (std::size_t i = 0; i < s_list.size(); ++i)
            chains.emplace_back(sys, s_list[i], beta, derive_seed(seed, 0xc4a1 + rep, i), opt.chain);
        sets.push_back(std::move(chains));
    }
    std::vector<Rng> pt_rng{Rng(derive_seed(seed, 0x9e37, 0)), Rng(derive_seed(seed, 0x9e37, 1))};
    std::vector<std::vector<MeasurementAccumulator>> accs(
        2, std::vector<MeasurementAccumulator>(s_list.size()));
    long sweep_done = 0;   // completed measurement sweeps
    long equil_done = 0;
    int parity = 0;

    // Resume from checkpoint when one is present.
    if (!opt.checkpoint_path.empty() && std::filesystem::exists(opt.checkpoint_path)) {
        auto words = read_words_file(opt.checkpoint_path, detail::kCheckpointMagic);
        WordReader r{words.data(), words.size()};
        equil_done = r.i64();
        sweep_done = r.i64();
        parity = static_cast<int>(r.i64());
        for (int rep = 0; rep < 2; ++rep) {
            std::array<std::uint64_t, 4> st{r.u64(), r.u64(), r.u64(), r.u64()};
            pt_rng[rep].set_state(st);
            for (auto& chain : sets[rep]) {
                const auto k = static_cast<std::size_t>(r.u64());
                chain.load_state(r.take(k), k);
            }
            for (auto& a : accs[rep]) a = deserialize_accumulator(r);
        }
    }

    auto write_checkpoint = [&]() {
        if (opt.checkpoint_path.empty()) return;
        WordWriter w;
        w.i64(equil_done);
        w.i64(sweep_done);
        w.i64(parity);
        for (int rep = 0; rep < 2; ++rep) {
            for (auto s : pt_rng[rep].state()) w.u64(s);
            for (auto& chain : sets[rep]) {
                std::vector<std::uint64_t> cw;
                chain.save_state(cw);
                w.u64(cw.size());
                w.words.insert(w.words.end(), cw.begin(), cw.end());
            }
            for (auto& a : accs[rep]) serialize_accumulator(w, a);
        }
        const std::string tmp = opt.checkpoint_path + ".tmp";
        write_words_file(tmp, detail::kCheckpointMagic, w.words);
        std::filesystem::rename(tmp, opt.checkpoint_path);
    };

    auto pt_sweep_set = [&](int rep) {
        auto& chains = sets[rep];
        int lambda_max = 0;
        for (auto& c : chains) {
            c.sweep();
            lambda_max = std::max(lambda_max, c.cutoff());
        }
        if (opt.parallel_tempering && chains.size() >= 2) {
            for (auto& c : chains) c.grow_cutoff_to(lambda_max);
            for (std::size_t i = parity; i + 1 < chains.size(); i += 2) {
                auto& a = chains[i];
                auto& b = chains[i + 1];
                const double lr = pt_log_ratio(a.s(), b.s(), a.n_site_ops(), a.n_bond_ops(),
                                               b.n_site_ops(), b.n_bond_ops());
                if (lr >= 0.0 || pt_rng[rep].uniform() < std::exp(lr)) a.swap_configuration_with(b);
            }
        }
    };

    for (; equil_done < equil; ++equil_done)
        for (int rep = 0; rep < 2; ++rep) pt_sweep_set(rep);

    long since_checkpoint = 0;
    for (; sweep_done < opt.sweeps; ++sweep_done) {
        for (int rep = 0; rep < 2; ++rep) pt_sweep_set(rep);
        parity ^= 1;
        if ((sweep_done + 1) % opt.measure_every == 0) {
            for (int rep = 0; rep < 2; ++rep)
                for (std::size_t i = 0; i < s_list.size(); ++i)
                    sets[rep][i].measure(accs[rep][i]);
            const long meas_done = (sweep_done + 1) / opt.measure_every;
            if (meas_done % bin_size == 0) {
                for (int rep = 0; rep < 2; ++rep)
                    for (auto& a : accs[rep]) a.close_bin();
                if (opt.checkpoint_every_bins > 0 &&
                    ++since_checkpoint >= opt.checkpoint_every_bins) {
                    since_checkpoint = 0;
                    write_checkpoint();
                }
            }
        }
    }
    write_checkpoint();

    std::vector<SseSResult> out;
    for (std::size_t i = 0; i < s_list.size(); ++i) {
        auto res = assemble_pair_result(s_list[i], beta, sets[0][i].tau_grid(), accs[0][i],
                                        accs[1][i], sys.n_sites);
        res.abort_rate = 0.5 * (sets[0][i].abort_rate() + sets[1][i].abort_rate());
        out.push_back(std::move(res));
    }
    return out;
}

}  // namespace qaa
