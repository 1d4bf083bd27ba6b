#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "qaa/exactdiag.hpp"
#include "qaa/instances.hpp"
#include "qaa/tempering.hpp"
#include "support/oracles.hpp"

using namespace qaa;

namespace {

ClauseSystem two_spin_afm() {
    ClauseSystem sys;
    sys.n_sites = 2;
    sys.clauses.push_back({2, {0, 1, -1}, 1});
    return sys;
}

ClauseSystem three_spin_clause() {
    ClauseSystem sys;
    sys.n_sites = 3;
    sys.clauses.push_back({3, {0, 1, 2}, 1});
    return sys;
}

struct EdThermal {
    ThermalObservables obs;
    std::vector<double> evals, evecs;
};

EdThermal ed_thermal(const ClauseSystem& sys, double s, double beta) {
    auto h = build_hamiltonian<double>(sys, s, Sector::full);
    auto [evals, evecs] = dense_spectrum(h);
    return {thermal_observables(evals, evecs, sys.n_sites, beta), evals, evecs};
}

double sigma_away(const ValueWithError& v, double target) {
    return std::abs(v.value - target) / v.error;
}

}  // namespace

TEST_CASE("two-spin toy reproduces exact thermal values at beta=4") {
    auto sys = two_spin_afm();
    const double s = 0.5, beta = 4.0;
    auto ed = ed_thermal(sys, s, beta);

    ScheduleOptions opt;
    opt.sweeps = 200000;
    opt.measure_every = 2;
    opt.bins = 40;
    opt.chain.measure_pairs = true;
    auto res = run_schedule(sys, {s}, beta, 314159, opt);
    const auto& r = res[0];

    REQUIRE(sigma_away(r.energy, ed.obs.energy) < 3.0);
    REQUIRE(sigma_away(r.energy_direct, ed.obs.energy) < 3.0);
    REQUIRE(sigma_away(r.mx, ed.obs.mx) < 3.0);
    // <s1 s2> via the improved pair estimator against the exact value.
    const double exact_ss = ed.obs.szsz[0 * 2 + 1];
    const auto& p1 = r.replica[0].vectors.at("szsz");
    const auto& p2 = r.replica[1].vectors.at("szsz");
    // direct (non-cross-replica) estimate of <s1 s2>: plain mean of either
    auto m1 = p1.mean(), e1 = p1.stderr_mean();
    REQUIRE(std::abs(m1[0] - exact_ss) < 4.0 * e1[0]);
    auto m2 = p2.mean();
    REQUIRE(std::abs(m2[0] - exact_ss) < 4.0 * p2.stderr_mean()[0]);
    // energy and direct estimator agree with each other (internal consistency)
    REQUIRE(std::abs(r.energy.value - r.energy_direct.value) <
            4.0 * std::hypot(r.energy.error, r.energy_direct.error));
}

TEST_CASE("sse stationary distribution matches exact weights (chi^2)") {
    auto sys = two_spin_afm();
    const double s = 0.5, beta = 0.7;
    SseChain chain(sys, s, beta, 777);
    const int lambda = chain.cutoff();
    auto ed = ed_thermal(sys, s, beta);
    double zfun = 0.0;
    for (double e : ed.evals) zfun += std::exp(-beta * e);
    const double shift = chain.shift_constant();
    const double log_norm = beta * shift + std::log(zfun);

    std::map<std::uint64_t, std::pair<long, double>> seen;  // hash -> (count, log weight)
    const long samples = 150000;
    for (long t = 0; t < samples; ++t) {
        for (int r = 0; r < 5; ++r) chain.sweep();
        REQUIRE(chain.cutoff() == lambda);
        // hash the configuration and compute its exact weight once
        std::uint64_t h = 0xcbf29ce484222325ull;
        h = fnv1a64(chain.spins().data(), chain.spins().size(), h);
        h = fnv1a64(chain.op_string().data(), chain.op_string().size() * sizeof(SseOp), h);
        auto it = seen.find(h);
        if (it == seen.end()) {
            const int n = chain.n_ops();
            double logw = n * std::log(beta);
            for (int k = lambda - n + 1; k <= lambda; ++k) logw -= std::log(k);
            logw += chain.n_site_ops() * std::log((1.0 - s) / 2.0);
            logw += chain.n_bond_ops() * std::log(s);
            seen.emplace(h, std::make_pair(1L, logw));
        } else {
            ++it->second.first;
        }
    }
    double chi2 = 0.0;
    long dof = 0;
    double covered = 0.0;
    for (const auto& [h, cw] : seen) {
        const double p = std::exp(cw.second - log_norm);
        const double expect = p * samples;
        covered += p;
        if (expect < 25) continue;
        chi2 += (cw.first - expect) * (cw.first - expect) / expect;
        ++dof;
    }
    REQUIRE(covered > 0.95);  // observed configurations carry nearly all mass
    REQUIRE(dof >= 10);
    REQUIRE(chi2 / dof < 1.8);
}

TEST_CASE("three-spin cluster update: z-basis marginal matches ED at beta=2") {
    auto sys = three_spin_clause();
    const double s = 0.5, beta = 2.0;
    auto h = build_hamiltonian<double>(sys, s, Sector::full);
    auto [evals, evecs] = dense_spectrum(h);
    // exact diagonal thermal density
    std::vector<double> rho(8, 0.0);
    double z = 0.0;
    for (int i = 0; i < 8; ++i) {
        const double w = std::exp(-beta * (evals[i] - evals[0]));
        z += w;
        for (int zz = 0; zz < 8; ++zz) rho[zz] += w * evecs[i * 8 + zz] * evecs[i * 8 + zz];
    }
    for (auto& r : rho) r /= z;

    SseChain chain(sys, s, beta, 424243);
    for (int t = 0; t < 2000; ++t) chain.sweep();
    std::vector<long> counts(8, 0);
    const long samples = 200000;
    for (long t = 0; t < samples; ++t) {
        chain.sweep();
        int state = 0;
        for (int i = 0; i < 3; ++i)
            if (chain.spins()[i] < 0) state |= 1 << i;
        ++counts[state];
    }
    chain.validate_configuration();
    double chi2 = 0.0;
    for (int state = 0; state < 8; ++state) {
        const double expect = rho[state] * samples;
        chi2 += (counts[state] - expect) * (counts[state] - expect) / expect;
    }
    REQUIRE(chi2 / 7.0 < 2.5);  // correlated samples inflate chi2 slightly
}

TEST_CASE("structural invariants hold after many sweeps, both problems") {
    auto x = generate_xorsat(8, 5);
    SseChain cx(x.to_clause_system(), 0.4, 8.0, 99);
    for (int t = 0; t < 3000; ++t) cx.sweep();
    REQUIRE_NOTHROW(cx.validate_configuration());

    auto m = generate_maxcut(8, 5);
    SseOptions mo;
    mo.measure_pairs = true;
    SseChain cm(m.to_clause_system(), 0.6, 8.0, 99, mo);
    for (int t = 0; t < 3000; ++t) cm.sweep();
    REQUIRE_NOTHROW(cm.validate_configuration());
}

TEST_CASE("s=0 gives only site operators; bond insertions vanish") {
    auto x = generate_xorsat(8, 11);
    SseChain chain(x.to_clause_system(), 0.0, 8.0, 3);
    for (int t = 0; t < 2000; ++t) chain.sweep();
    REQUIRE(chain.n_bond_ops() == 0);
    REQUIRE(chain.n_ops() > 0);
    // free spins in x: M_x -> tanh(beta/2) ~ 1, q -> 0
    ScheduleOptions opt;
    opt.sweeps = 30000;
    opt.measure_every = 3;
    auto res = run_schedule(x.to_clause_system(), {0.0}, 8.0, 2024, opt);
    auto ed = ed_thermal(x.to_clause_system(), 0.0, 8.0);
    REQUIRE(sigma_away(res[0].mx, ed.obs.mx) < 3.0);
    REQUIRE(std::abs(res[0].q.value) < 4.0 * res[0].q.error + 0.01);
}

TEST_CASE("N=8 xorsat at s=0.3, beta=16: energy matches ED within 3 sigma") {
    auto x = generate_xorsat(8, 21);
    auto sys = x.to_clause_system();
    auto ed = ed_thermal(sys, 0.3, 16.0);
    ScheduleOptions opt;
    opt.sweeps = 60000;
    opt.measure_every = 5;
    auto res = run_schedule(sys, {0.3}, 16.0, 777, opt);
    REQUIRE(sigma_away(res[0].energy, ed.obs.energy) < 3.0);
    REQUIRE(sigma_away(res[0].mx, ed.obs.mx) < 3.0);
    // q via two replicas against the exact sum of <sz_i>^2
    REQUIRE(std::abs(res[0].q.value - ed.obs.q) < 3.0 * res[0].q.error);
}

TEST_CASE("maxcut N=6 at s=0.5, beta=8: energy, mx, q' match ED") {
    auto m = generate_maxcut(6, 2);
    auto sys = m.to_clause_system();
    auto ed = ed_thermal(sys, 0.5, 8.0);
    ScheduleOptions opt;
    opt.sweeps = 80000;
    opt.measure_every = 5;
    opt.chain.measure_pairs = true;
    auto res = run_schedule(sys, {0.5}, 8.0, 31337, opt);
    REQUIRE(sigma_away(res[0].energy, ed.obs.energy) < 3.0);
    REQUIRE(sigma_away(res[0].mx, ed.obs.mx) < 3.0);
    REQUIRE(std::abs(res[0].qprime.value - ed.obs.qprime) < 3.0 * res[0].qprime.error + 0.01);
}

TEST_CASE("imaginary-time correlation matches ED and is reflection symmetric") {
    auto sys = two_spin_afm();
    const double s = 0.4, beta = 8.0;
    auto h = build_hamiltonian<double>(sys, s, Sector::full);
    auto [evals, evecs] = dense_spectrum(h);
    // A = H_P: diagonal values on the z basis
    std::vector<double> a(4);
    for (int z = 0; z < 4; ++z) a[z] = sys.energy_bits(z);
    ScheduleOptions opt;
    opt.sweeps = 150000;
    opt.measure_every = 3;
    opt.chain.measure_correlations = true;
    opt.chain.tau_grid = {0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 7.5, 8.0};
    auto res = run_schedule(sys, {s}, beta, 5417, opt);
    const double a_exact = thermal_observables(evals, evecs, 2, beta).energy;  // not used directly
    (void)a_exact;
    double a_mean_exact = 0.0;
    {
        // <H_P> exactly
        double zz = 0.0;
        for (std::size_t i = 0; i < evals.size(); ++i) {
            const double w = std::exp(-beta * (evals[i] - evals[0]));
            zz += w;
            double ai = 0.0;
            for (int q = 0; q < 4; ++q) ai += evecs[i * 4 + q] * a[q] * evecs[i * 4 + q];
            a_mean_exact += w * ai;
        }
        a_mean_exact /= zz;
    }
    for (const auto& pt : res[0].ctau_hp) {
        const double exact =
            thermal_autocorrelation(evals, evecs, a, beta, pt.tau) - a_mean_exact * a_mean_exact;
        REQUIRE(std::abs(pt.value - exact) < 4.0 * pt.error + 1e-4);
    }
    // reflection symmetry C(tau) = C(beta - tau) within errors
    auto find = [&](double tau) {
        for (const auto& pt : res[0].ctau_hp)
            if (std::abs(pt.tau - tau) < 1e-9) return pt;
        throw std::runtime_error("tau not found");
    };
    for (double tau : {0.5, 1.0, 2.0, 3.0}) {
        auto p1 = find(tau);
        auto p2 = find(beta - tau);
        REQUIRE(std::abs(p1.value - p2.value) < 4.0 * std::hypot(p1.error, p2.error) + 1e-4);
    }
    // integrated susceptibility of H_P against the exact value
    const double chi_exact = thermal_susceptibility(evals, evecs, a, beta);
    REQUIRE(sigma_away(res[0].chi_hp, chi_exact) < 4.0);
}

TEST_CASE("parallel tempering: ratio from counts equals brute-force weight ratio") {
    auto sys = two_spin_afm();
    SseChain a(sys, 0.35, 6.0, 10), b(sys, 0.45, 6.0, 11);
    for (int t = 0; t < 500; ++t) {
        a.sweep();
        b.sweep();
    }
    const int lambda = std::max(a.cutoff(), b.cutoff());
    a.grow_cutoff_to(lambda);
    b.grow_cutoff_to(lambda);
    auto logw = [&](const SseChain& c, double s) {
        double lw = 0.0;
        for (const auto& op : c.op_string()) {
            if (op.kind == OpKind::site_const || op.kind == OpKind::site_flip)
                lw += std::log((1.0 - s) / 2.0);
            else if (op.kind == OpKind::bond_diag)
                lw += std::log(s);
        }
        return lw;
    };
    const double direct = (logw(a, 0.45) + logw(b, 0.35)) - (logw(a, 0.35) + logw(b, 0.45));
    const double fast = pt_log_ratio(0.35, 0.45, a.n_site_ops(), a.n_bond_ops(), b.n_site_ops(),
                                     b.n_bond_ops());
    REQUIRE(std::abs(direct - fast) < 1e-9);
    // identical counts -> acceptance 1; ratio -> 1 continuously as ds -> 0
    REQUIRE(pt_log_ratio(0.4, 0.42, 7, 3, 7, 3) == 0.0);
    double prev = std::abs(pt_log_ratio(0.4, 0.4 + 0.08, 7, 3, 9, 4));
    for (double ds : {0.04, 0.02, 0.01}) {
        const double cur = std::abs(pt_log_ratio(0.4, 0.4 + ds, 7, 3, 9, 4));
        REQUIRE(cur < prev);
        prev = cur;
    }
}

TEST_CASE("parallel tempering sweep keeps thermal averages exact") {
    auto sys = two_spin_afm();
    const double beta = 6.0;
    std::vector<double> s_list{0.3, 0.5, 0.7};
    ScheduleOptions opt;
    opt.sweeps = 120000;
    opt.measure_every = 4;
    opt.parallel_tempering = true;
    auto res = run_schedule(sys, s_list, beta, 999, opt);
    for (std::size_t i = 0; i < s_list.size(); ++i) {
        auto ed = ed_thermal(sys, s_list[i], beta);
        REQUIRE(sigma_away(res[i].energy, ed.obs.energy) < 3.5);
        REQUIRE(sigma_away(res[i].mx, ed.obs.mx) < 3.5);
    }
}

TEST_CASE("beta-doubling: energy converged to ground once beta * gap >~ 10") {
    auto m = generate_maxcut(8, 17);
    auto sys = m.to_clause_system();
    // gap at s = 0.45 from dense spectra
    auto spec = lowest_eigenvalues<double>(build_hamiltonian<double>(sys, 0.45, Sector::full), 2);
    const double gap = spec.gap();
    const double e0 = spec.eigenvalues[0];
    ScheduleOptions opt;
    opt.sweeps = 60000;
    opt.measure_every = 5;
    double beta_ok = 12.0 / gap;  // beta * gap = 12
    auto res = run_schedule(sys, {0.45}, beta_ok, 246, opt);
    REQUIRE(std::abs(res[0].energy.value - e0) < std::max(4.0 * res[0].energy.error, 0.02));
}

TEST_CASE("cluster diagnostics: spanning cluster towards s -> 1, abort rate bounded") {
    auto m = generate_maxcut(8, 23);
    SseChain low(m.to_clause_system(), 0.3, 8.0, 5), high(m.to_clause_system(), 0.85, 8.0, 5);
    for (int t = 0; t < 4000; ++t) {
        low.sweep();
        high.sweep();
    }
    REQUIRE(high.mean_max_cluster_fraction() > low.mean_max_cluster_fraction());
    REQUIRE(high.mean_max_cluster_fraction() > 0.5);

    auto x = generate_xorsat(16, 29);
    SseChain cx(x.to_clause_system(), 0.5, 16.0, 5);
    for (int t = 0; t < 3000; ++t) cx.sweep();
    REQUIRE(cx.abort_rate() < 0.9);
    REQUIRE(cx.abort_rate() > 0.0);
}

TEST_CASE("accumulator merge of two half runs equals the full run") {
    auto sys = two_spin_afm();
    auto make = [&](long sweeps, std::uint64_t seed) {
        SseChain chain(sys, 0.5, 4.0, seed);
        MeasurementAccumulator acc;
        for (long t = 0; t < sweeps; ++t) {
            chain.sweep();
            chain.measure(acc);
            if ((t + 1) % 50 == 0) acc.close_bin();
        }
        return acc;
    };
    // one chain, identical stream: full vs (first half, second half recorded separately)
    SseChain chain(sys, 0.5, 4.0, 4242);
    MeasurementAccumulator full, h1, h2;
    for (long t = 0; t < 2000; ++t) {
        chain.sweep();
        chain.measure(full);
        chain.measure(t < 1000 ? h1 : h2);
        if ((t + 1) % 50 == 0) {
            full.close_bin();
            (t < 1000 ? h1 : h2).close_bin();
        }
    }
    h1.merge(h2);
    REQUIRE(h1.scalars.at("energy").bins == full.scalars.at("energy").bins);
    REQUIRE(h1.scalars.at("energy").mean() == full.scalars.at("energy").mean());
    (void)make;
}

TEST_CASE("doubling sweeps shrinks error bars roughly by sqrt(2)") {
    auto sys = two_spin_afm();
    ScheduleOptions o1;
    o1.sweeps = 40000;
    o1.measure_every = 4;
    o1.measurements_per_bin = 250;
    ScheduleOptions o2 = o1;
    o2.sweeps = 80000;
    auto r1 = run_schedule(sys, {0.5}, 6.0, 1618, o1);
    auto r2 = run_schedule(sys, {0.5}, 6.0, 1618, o2);
    const double ratio = r2[0].energy.error / r1[0].energy.error;
    REQUIRE(ratio > 1.0 / std::sqrt(2.0) - 0.3);
    REQUIRE(ratio < 1.0 / std::sqrt(2.0) + 0.3);
}

TEST_CASE("checkpoint restart reproduces the uninterrupted stream exactly") {
    auto sys = two_spin_afm();
    const std::string ck = "/tmp/qaa_test_ckpt.bin";
    std::filesystem::remove(ck);
    ScheduleOptions base;
    base.sweeps = 3000;
    base.equilibration = 500;  // resumable runs must pin the schedule shape
    base.measure_every = 3;
    base.measurements_per_bin = 20;
    auto full = run_schedule(sys, {0.4, 0.6}, 5.0, 10101, base);

    ScheduleOptions part = base;
    part.checkpoint_path = ck;
    part.checkpoint_every_bins = 2;
    part.sweeps = 1500;
    run_schedule(sys, {0.4, 0.6}, 5.0, 10101, part);  // writes checkpoint at 1500
    part.sweeps = 3000;
    auto resumed = run_schedule(sys, {0.4, 0.6}, 5.0, 10101, part);  // resumes
    std::filesystem::remove(ck);

    for (int i = 0; i < 2; ++i) {
        REQUIRE(resumed[i].energy.value == full[i].energy.value);
        REQUIRE(resumed[i].mx.value == full[i].mx.value);
        REQUIRE(resumed[i].replica[0].scalars.at("energy").bins ==
                full[i].replica[0].scalars.at("energy").bins);
    }
}

TEST_CASE("q' equals 1 at s=1 on a filtered instance seeded in a ground state") {
    auto f = filter_maxcut_ensemble(16, 777, 100000);
    auto sys = f.instance.to_clause_system();
    SseOptions so;
    so.measure_pairs = true;
    so.init_from_state = true;
    so.init_spin_state = f.solution.witness;
    ScheduleOptions opt;
    opt.sweeps = 4000;
    opt.measure_every = 4;
    opt.chain = so;
    auto res = run_schedule(sys, {1.0}, 16.0, 5, opt);
    REQUIRE(res[0].qprime.value == Catch::Approx(1.0).margin(1e-9));
}
