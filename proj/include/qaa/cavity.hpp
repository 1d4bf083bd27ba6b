// Continuous-imaginary-time quantum cavity method on 3-regular graphs.
//
// A single-spin trajectory in a piecewise-constant longitudinal field h(t)
// and transverse field lambda is sampled exactly (no time discretization)
// from the measure  lambda^r dt_1..dt_r exp(-int h(t) s(t) dt)  over
// periodic paths, via 2x2 segment propagators and conditional first-flip
// sampling. Cavity distributions are weighted lists of N_R representative
// paths; the population holds N_D of them. The replica-symmetric fixed
// point iterates one distribution against itself; the 1RSB m=0 population
// dynamics replaces members by the recursion built from two independently
// drawn members.
//
// Model conventions, H(lambda) = H0 - lambda sum_i sx_i with
//   maxcut       H0 = sum_edges  sz_i sz_j        (h = s1 + s2)
//   pmj          H0 = sum_edges  J sz_i sz_j      (h = J1 s1 + J2 s2)
//   xorsat-ferro H0 = -sum_clauses sz_i sz_j sz_k (h = -(s_j s_k)_1 -(s_j s_k)_2)
// Thermal averages of H(s) at inverse temperature beta' map to H(lambda) at
// beta via s = 1/(1+lambda), beta' = 2 beta / s.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "qaa/accumulators.hpp"
#include "qaa/errors.hpp"
#include "qaa/rng.hpp"

namespace qaa {

struct SpinPath {
    int b0 = 1;                 // value at t = 0 (+1 / -1)
    std::vector<double> flips;  // strictly increasing transition times in [0, beta)

    int value_at(double t) const {
        // parity of flips at or before t
        std::size_t k = std::upper_bound(flips.begin(), flips.end(), t) - flips.begin();
        return (k % 2 == 0) ? b0 : -b0;
    }

    // time integral of s(t) over [0, beta]
    double integral(double beta) const {
        double acc = 0.0;
        double prev = 0.0;
        int v = b0;
        for (double t : flips) {
            acc += v * (t - prev);
            prev = t;
            v = -v;
        }
        acc += v * (beta - prev);
        return acc;
    }
};

struct PiecewiseField {
    std::vector<double> t_end;  // ascending, last entry = beta
    std::vector<double> h;
};

// Merge the flip times of several neighbor paths into a piecewise field
// h(t) = sum_k factors[k] * s_k(t) (pair factors) or products, supplied by a
// combiner over the instantaneous neighbor values.
template <typename Combine>
PiecewiseField build_field(const std::vector<const SpinPath*>& paths, double beta,
                           Combine&& combine) {
    std::vector<std::pair<double, int>> events;  // (time, path index)
    for (std::size_t k = 0; k < paths.size(); ++k)
        for (double t : paths[k]->flips) events.emplace_back(t, static_cast<int>(k));
    std::sort(events.begin(), events.end());
    std::vector<int> vals(paths.size());
    for (std::size_t k = 0; k < paths.size(); ++k) vals[k] = paths[k]->b0;
    PiecewiseField field;
    double prev = 0.0;
    for (const auto& [t, k] : events) {
        if (t > prev) {
            field.t_end.push_back(t);
            field.h.push_back(combine(vals));
        }
        vals[k] = -vals[k];
        prev = t;
    }
    field.t_end.push_back(beta);
    field.h.push_back(combine(vals));
    return field;
}

namespace detail {

// Scaled segment propagator exp(d * [[-h, l], [l, h]]) * exp(-scale); the
// scale keeps entries bounded. Indices: 0 = spin +1, 1 = spin -1.
struct Propagator {
    double g[2][2];
    double log_scale;

    static Propagator make(double h, double lambda, double d) {
        Propagator p;
        const double omega = std::hypot(h, lambda);
        if (omega * d < 1e-14) {
            p.g[0][0] = 1.0 - h * d;
            p.g[1][1] = 1.0 + h * d;
            p.g[0][1] = p.g[1][0] = lambda * d;
            p.log_scale = 0.0;
            return p;
        }
        // exp(dA) = e^{wd} [ (1+e^{-2wd})/2 I + (1-e^{-2wd})/(2w) A ]
        const double e2 = std::exp(-2.0 * omega * d);
        const double ch = 0.5 * (1.0 + e2);
        const double sh = 0.5 * (1.0 - e2) / omega;
        p.g[0][0] = ch - h * sh;
        p.g[1][1] = ch + h * sh;
        p.g[0][1] = p.g[1][0] = lambda * sh;
        p.log_scale = omega * d;
        return p;
    }
};

// Survival function of the first flip inside a segment: starting in state a
// at time 0 with h constant, required to end the segment of length d in
// state b. S(t) = e^{-h a t} G(d-t)[b, flip(a)->a] ... / G(d)[b, a].
struct SegmentSampler {
    double h, lambda, d;
    int a, b;        // entry and exit states as 0/1 indices
    double denom_g;  // G(d)[b][a], unscaled relative to scale(d)
    double omega;

    double g_entry(double u, int bb, int aa) const {
        // G(u)[bb][aa] * exp(-omega u)
        if (omega * u < 1e-14) {
            // near-identity expansion, consistent scaling
            const double base = (bb == aa) ? 1.0 : 0.0;
            const double lin = (bb == aa) ? ((aa == 0) ? -h : h) * u : lambda * u;
            return (base + lin) * std::exp(-omega * u);
        }
        const double e2 = std::exp(-2.0 * omega * u);
        const double ch = 0.5 * (1.0 + e2);
        const double sh = 0.5 * (1.0 - e2) / omega;
        if (bb == aa) return aa == 0 ? ch - h * sh : ch + h * sh;
        return lambda * sh;
    }

    // S(t), normalized so S(0) = 1.
    double survival(double t) const {
        const double sa = a == 0 ? 1.0 : -1.0;
        // e^{-h sa t} * G(d-t)[b][a] * e^{omega (d-t)} / (G(d)[b][a] e^{omega d})
        return std::exp(-h * sa * t - omega * t) * g_entry(d - t, b, a) / denom_g;
    }
};

}  // namespace detail

// Exact sampler for one periodic spin path in the field `field` with
// transverse coupling lambda. Returns the path; log_z receives the log of
// the local partition function (the importance weight of the draw).
inline SpinPath sample_path_in_field(const PiecewiseField& field, double lambda, double beta,
                                     Rng& rng, double* log_z = nullptr) {
    const std::size_t k = field.h.size();
    // suffix products R_j = G_k ... G_{j+1} (R_k = I), normalized
    std::vector<std::array<double, 4>> suffix(k + 1);
    std::vector<double> suffix_scale(k + 1, 0.0);
    suffix[k] = {1.0, 0.0, 0.0, 1.0};
    std::vector<detail::Propagator> props(k);
    double prev_t = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        props[j] = detail::Propagator::make(field.h[j], lambda, field.t_end[j] - prev_t);
        prev_t = field.t_end[j];
    }
    for (std::size_t j = k; j-- > 0;) {
        const auto& r = suffix[j + 1];
        const auto& g = props[j].g;
        std::array<double, 4> m;
        // m = R_{j+1} * G_j   (indices m[row*2+col])
        m[0] = r[0] * g[0][0] + r[1] * g[1][0];
        m[1] = r[0] * g[0][1] + r[1] * g[1][1];
        m[2] = r[2] * g[0][0] + r[3] * g[1][0];
        m[3] = r[2] * g[0][1] + r[3] * g[1][1];
        double mx = std::max({m[0], m[1], m[2], m[3]});
        if (mx <= 0.0) throw error("sample_path_in_field: vanishing propagator");
        for (auto& v : m) v /= mx;
        suffix[j] = m;
        suffix_scale[j] = suffix_scale[j + 1] + std::log(mx) + props[j].log_scale;
    }
    const double tr = suffix[0][0] + suffix[0][3];
    if (log_z) *log_z = std::log(tr) + suffix_scale[0];

    SpinPath path;
    path.b0 = rng.uniform() * tr < suffix[0][0] ? 1 : -1;
    const int b0i = path.b0 == 1 ? 0 : 1;
    int a = b0i;
    prev_t = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double seg_end = field.t_end[j];
        const double d_full = seg_end - prev_t;
        // exit state for this segment: P(b) ~ R_{j+1}[b0, b] G_j[b, a]
        const auto& r = suffix[j + 1];
        const double p0 = r[b0i * 2 + 0] * props[j].g[0][a];
        const double p1 = r[b0i * 2 + 1] * props[j].g[1][a];
        const int b = (rng.uniform() * (p0 + p1) < p0) ? 0 : 1;
        // sample flips inside the segment by repeated first-flip draws
        detail::SegmentSampler seg;
        seg.h = field.h[j];
        seg.lambda = lambda;
        seg.omega = std::hypot(seg.h, lambda);
        double t0 = 0.0;  // time within the segment
        int cur = a;
        while (true) {
            const double d = d_full - t0;
            if (d <= 0) break;
            seg.a = cur;
            seg.b = b;
            seg.d = d;
            seg.denom_g = seg.g_entry(d, b, cur);
            if (seg.denom_g <= 0.0) throw error("sample_path_in_field: impossible segment");
            const double s_end = seg.survival(d);  // probability of no flip
            const double u = rng.uniform();
            if (cur == b && u < s_end) break;  // no further flips in this segment
            // solve S(t) = u with S(0)=1 > u >= S(d): safeguarded Newton
            double lo = 0.0, hi = d;
            double t = 0.5 * d;
            const double target = std::max(u, s_end);
            for (int it = 0; it < 80; ++it) {
                const double s = seg.survival(t);
                if (s > target)
                    lo = t;
                else
                    hi = t;
                // Newton step from the numeric derivative of log S
                const double eps = 1e-7 * d;
                const double sp = seg.survival(std::min(t + eps, d));
                const double ds = (sp - s) / eps;
                double tn = ds != 0.0 ? t - (s - target) / ds : 0.5 * (lo + hi);
                if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
                if (std::abs(tn - t) < 1e-13 * std::max(1.0, d)) {
                    t = tn;
                    break;
                }
                t = tn;
            }
            path.flips.push_back(prev_t + t0 + t);
            cur ^= 1;
            t0 += t;
        }
        a = b;
        prev_t = seg_end;
    }
    return path;
}

// The replica-symmetric single-site recursion for the 3-regular
// antiferromagnet: neighbors n1, n2 define h(t) = s1(t) + s2(t).
inline SpinPath sample_effective_path(const SpinPath& n1, const SpinPath& n2, double lambda,
                                      double beta, Rng& rng, double* log_z = nullptr) {
    auto field = build_field({&n1, &n2}, beta,
                             [](const std::vector<int>& v) { return double(v[0] + v[1]); });
    return sample_path_in_field(field, lambda, beta, rng, log_z);
}

// ---------------------------------------------------------------------------
// Weighted path lists (cavity distributions) and populations.

struct CavityDistribution {
    std::vector<SpinPath> paths;
    std::vector<double> weights;  // normalized
    std::vector<double> cdf;

    void finalize_from_log_weights(std::vector<double> logw) {
        const std::size_t n = paths.size();
        weights.resize(n);
        cdf.resize(n);
        const double mx = *std::max_element(logw.begin(), logw.end());
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            weights[i] = std::exp(logw[i] - mx);
            sum += weights[i];
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            weights[i] /= sum;
            acc += weights[i];
            cdf[i] = acc;
        }
        cdf[n - 1] = 1.0;
    }

    void make_uniform() {
        const std::size_t n = paths.size();
        weights.assign(n, 1.0 / n);
        cdf.resize(n);
        for (std::size_t i = 0; i < n; ++i) cdf[i] = static_cast<double>(i + 1) / n;
    }

    const SpinPath& draw(Rng& rng) const {
        const double u = rng.uniform();
        const std::size_t i = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        return paths[std::min(i, paths.size() - 1)];
    }

    double effective_sample_size() const {
        double s2 = 0.0;
        for (double w : weights) s2 += w * w;
        return 1.0 / s2;
    }

    // systematic resampling to uniform weights
    void resample(Rng& rng) {
        const std::size_t n = paths.size();
        std::vector<SpinPath> out;
        out.reserve(n);
        const double step = 1.0 / n;
        double u = rng.uniform() * step;
        std::size_t i = 0;
        for (std::size_t j = 0; j < n; ++j) {
            while (i + 1 < n && cdf[i] < u) ++i;
            out.push_back(paths[i]);
            u += step;
        }
        paths = std::move(out);
        make_uniform();
    }
};

enum class CavityModel { maxcut, pmj, xorsat_ferro };

inline CavityModel cavity_model_from_name(const std::string& name) {
    if (name == "maxcut") return CavityModel::maxcut;
    if (name == "pmj") return CavityModel::pmj;
    if (name == "xorsat-ferro") return CavityModel::xorsat_ferro;
    throw config_error("unknown cavity model '" + name + "'");
}

// s and beta' of the interpolating ensemble equivalent to H(lambda) at beta.
inline std::pair<double, double> lambda_to_s(double lambda, double beta) {
    if (lambda < 0) throw error("lambda_to_s: lambda must be >= 0");
    const double s = 1.0 / (1.0 + lambda);
    return {s, 2.0 * beta / s};
}

struct CavityOptions {
    int n_r = 2000;            // representative paths per distribution
    int n_d = 100;             // population members (1RSB)
    double ess_fraction = 0.1; // resample below N_R * fraction
    bool polarized_init = true;
};

namespace detail {

// One new cavity distribution from the recursion, drawing neighbor paths
// from `src1`/`src2` (RS: both the same distribution).
template <typename FieldBuilder>
CavityDistribution cavity_generation(const CavityDistribution& src1,
                                     const CavityDistribution& src2, double lambda, double beta,
                                     int n_r, double ess_fraction, Rng& rng,
                                     FieldBuilder&& make_field) {
    CavityDistribution out;
    out.paths.reserve(n_r);
    std::vector<double> logw(n_r);
    for (int i = 0; i < n_r; ++i) {
        const PiecewiseField field = make_field(src1, src2, rng);
        double lz = 0.0;
        out.paths.push_back(sample_path_in_field(field, lambda, beta, rng, &lz));
        logw[i] = lz;
    }
    out.finalize_from_log_weights(std::move(logw));
    if (out.effective_sample_size() < ess_fraction * n_r) out.resample(rng);
    return out;
}

inline PiecewiseField maxcut_field(const CavityDistribution& s1, const CavityDistribution& s2,
                                   double beta, Rng& rng, int j1 = 1, int j2 = 1) {
    const SpinPath& p1 = s1.draw(rng);
    const SpinPath& p2 = s2.draw(rng);
    return build_field({&p1, &p2}, beta, [j1, j2](const std::vector<int>& v) {
        return double(j1 * v[0] + j2 * v[1]);
    });
}

inline PiecewiseField xorsat_field(const CavityDistribution& s1, const CavityDistribution& s2,
                                   double beta, Rng& rng) {
    // two cavity clauses, two bit paths each; h = -(s_j s_k)_1 - (s_j s_k)_2
    const SpinPath& pa = s1.draw(rng);
    const SpinPath& pb = s1.draw(rng);
    const SpinPath& pc = s2.draw(rng);
    const SpinPath& pd = s2.draw(rng);
    return build_field({&pa, &pb, &pc, &pd}, beta, [](const std::vector<int>& v) {
        return double(-(v[0] * v[1]) - (v[2] * v[3]));
    });
}

}  // namespace detail

struct CavityObservables {
    double energy_per_spin = 0.0;  // of H(lambda)
    double mx = 0.0;
    double qbar = 0.0;
    double flip_density = 0.0;  // mean transitions per path
};

// ---------------------------------------------------------------------------
// Replica-symmetric fixed point: one distribution iterated against itself.

class RsCavity {
  public:
    RsCavity(CavityModel model, double lambda, double beta, std::uint64_t seed,
             CavityOptions opts = {})
        : model_(model), lambda_(lambda), beta_(beta), rng_(seed), opts_(opts) {
        if (model == CavityModel::pmj)
            throw config_error("RS with +-J disorder needs distributions of distributions");
        dist_.paths.assign(opts_.n_r, SpinPath{});
        if (opts_.polarized_init) {
            for (auto& p : dist_.paths) p.b0 = 1;
        } else {
            for (auto& p : dist_.paths) p.b0 = rng_.pm1();
        }
        dist_.make_uniform();
    }

    const CavityDistribution& distribution() const { return dist_; }

    void sweep() {
        auto builder = [this](const CavityDistribution& a, const CavityDistribution& b, Rng& r) {
            return model_ == CavityModel::maxcut ? detail::maxcut_field(a, b, beta_, r)
                                                 : detail::xorsat_field(a, b, beta_, r);
        };
        dist_ = detail::cavity_generation(dist_, dist_, lambda_, beta_, opts_.n_r,
                                          opts_.ess_fraction, rng_, builder);
    }

    // Iterates until the tracked moments drift less than `tol` per 10 sweeps
    // (averaged over a window) or throws after max_sweeps.
    int iterate_to_fixed_point(int max_sweeps, double tol, int min_sweeps = 30) {
        std::vector<double> trace;
        for (int t = 0; t < max_sweeps; ++t) {
            sweep();
            trace.push_back(quick_moment());
            const int w = 10;
            if (t >= min_sweeps && static_cast<int>(trace.size()) >= 3 * w) {
                auto mean = [&](int lo, int hi) {
                    double m = 0.0;
                    for (int i = lo; i < hi; ++i) m += trace[i];
                    return m / (hi - lo);
                };
                const int n = static_cast<int>(trace.size());
                const double drift = std::abs(mean(n - w, n) - mean(n - 3 * w, n - 2 * w)) / 2.0;
                if (drift < tol) return t + 1;
            }
        }
        throw convergence_error("RS cavity: no fixed point after " + std::to_string(max_sweeps) +
                                " sweeps");
    }

    CavityObservables observables(int n_samples) {
        return measure_rs(dist_, model_, lambda_, beta_, n_samples, rng_);
    }

    static CavityObservables measure_rs(const CavityDistribution& dist, CavityModel model,
                                        double lambda, double beta, int n_samples, Rng& rng);

  private:
    double quick_moment() {
        double flips = 0.0, mag = 0.0;
        for (std::size_t i = 0; i < dist_.paths.size(); ++i) {
            flips += dist_.weights[i] * dist_.paths[i].flips.size();
            mag += dist_.weights[i] * dist_.paths[i].integral(beta_) / beta_;
        }
        return flips + 0.3 * mag;
    }

    CavityModel model_;
    double lambda_;
    double beta_;
    Rng rng_;
    CavityOptions opts_;
    CavityDistribution dist_;
};

namespace detail {

// int h(t) s0(t) dt for a path in its sampling field.
inline double field_path_overlap(const PiecewiseField& field, const SpinPath& p0) {
    double acc = 0.0;
    double prev = 0.0;
    for (std::size_t j = 0; j < field.t_end.size(); ++j) {
        const double seg_hi = field.t_end[j];
        auto lo_it = std::lower_bound(p0.flips.begin(), p0.flips.end(), prev);
        auto hi_it = std::lower_bound(p0.flips.begin(), p0.flips.end(), seg_hi);
        double tprev = prev;
        int v = p0.value_at(prev);
        for (auto it = lo_it; it != hi_it; ++it) {
            acc += field.h[j] * v * (*it - tprev);
            tprev = *it;
            v = -v;
        }
        acc += field.h[j] * v * (seg_hi - tprev);
        prev = seg_hi;
    }
    return acc;
}

// Importance-weighted averages over full-site draws: each draw of the site
// marginal carries the local partition function z of its conditional sampler.
struct WeightedSiteStats {
    std::vector<double> logw, mag, flips, edot;

    void add(double lz, double m, double f, double e) {
        logw.push_back(lz);
        mag.push_back(m);
        flips.push_back(f);
        edot.push_back(e);
    }

    struct Result {
        double mag, mag_var, flips, edot, ess;
    };

    Result reduce() const {
        const double mx = *std::max_element(logw.begin(), logw.end());
        double wsum = 0.0, w2 = 0.0, ms = 0.0, fs = 0.0, es = 0.0;
        for (std::size_t i = 0; i < logw.size(); ++i) {
            const double w = std::exp(logw[i] - mx);
            wsum += w;
            w2 += w * w;
            ms += w * mag[i];
            fs += w * flips[i];
            es += w * edot[i];
        }
        Result r;
        r.mag = ms / wsum;
        r.flips = fs / wsum;
        r.edot = es / wsum;
        r.ess = wsum * wsum / w2;
        double var = 0.0;
        for (std::size_t i = 0; i < logw.size(); ++i) {
            const double w = std::exp(logw[i] - mx);
            var += w * (mag[i] - r.mag) * (mag[i] - r.mag);
        }
        r.mag_var = var / wsum;
        return r;
    }
};

}  // namespace detail

// Full-site observables reconstructed from incoming cavity messages.
inline CavityObservables RsCavity::measure_rs(const CavityDistribution& dist, CavityModel model,
                                              double lambda, double beta, int n_samples,
                                              Rng& rng) {
    detail::WeightedSiteStats stats;
    for (int t = 0; t < n_samples; ++t) {
        PiecewiseField field;
        if (model == CavityModel::maxcut) {
            const SpinPath& p1 = dist.draw(rng);
            const SpinPath& p2 = dist.draw(rng);
            const SpinPath& p3 = dist.draw(rng);
            field = build_field({&p1, &p2, &p3}, beta, [](const std::vector<int>& v) {
                return double(v[0] + v[1] + v[2]);
            });
        } else {
            const SpinPath* nb[6];
            for (int k = 0; k < 6; ++k) nb[k] = &dist.draw(rng);
            field = build_field({nb[0], nb[1], nb[2], nb[3], nb[4], nb[5]}, beta,
                                [](const std::vector<int>& v) {
                                    return double(-(v[0] * v[1]) - (v[2] * v[3]) - (v[4] * v[5]));
                                });
        }
        double lz = 0.0;
        SpinPath p0 = sample_path_in_field(field, lambda, beta, rng, &lz);
        stats.add(lz, p0.integral(beta) / beta, static_cast<double>(p0.flips.size()),
                  detail::field_path_overlap(field, p0));
    }
    auto r = stats.reduce();
    CavityObservables out;
    out.mx = lambda > 0 ? r.flips / (beta * lambda) : 0.0;
    out.flip_density = r.flips;
    // h s0 collects every coupling term at the site: each edge is shared by
    // two sites (maxcut), each three-spin clause by three (xorsat).
    const double share = model == CavityModel::xorsat_ferro ? 3.0 : 2.0;
    out.energy_per_spin = r.edot / (share * beta) - lambda * out.mx;
    out.qbar = r.mag * r.mag;
    return out;
}

// ---------------------------------------------------------------------------
// 1RSB with Parisi parameter m = 0: a population of cavity distributions.

class CavityPopulation {
  public:
    CavityPopulation(CavityModel model, double lambda, double beta, std::uint64_t seed,
                     CavityOptions opts = {})
        : model_(model), lambda_(lambda), beta_(beta), rng_(seed), opts_(opts) {
        members_.resize(opts_.n_d);
        for (int d = 0; d < opts_.n_d; ++d) {
            auto& m = members_[d];
            m.paths.assign(opts_.n_r, SpinPath{});
            const int sign = opts_.polarized_init ? (rng_.coin() ? 1 : -1) : 0;
            for (auto& p : m.paths) p.b0 = sign != 0 ? sign : rng_.pm1();
            m.make_uniform();
        }
    }

    double lambda() const { return lambda_; }
    double beta() const { return beta_; }
    const std::vector<CavityDistribution>& members() const { return members_; }

    // Collapse the population onto copies of one distribution (the 1RSB
    // recursion then degenerates to the RS one).
    void set_all_members(const CavityDistribution& proto) {
        for (auto& m : members_) m = proto;
    }

    void shuffle_members(Rng& rng) {
        for (std::size_t i = members_.size(); i > 1; --i)
            std::swap(members_[i - 1], members_[rng.below(i)]);
    }

    // One population step: replace a random member with the recursion of two
    // independently drawn members.
    void step() {
        const int target = rng_.below_int(opts_.n_d);
        const int i1 = rng_.below_int(opts_.n_d);
        const int i2 = rng_.below_int(opts_.n_d);
        int j1 = 1, j2 = 1;
        if (model_ == CavityModel::pmj) {
            j1 = rng_.pm1();
            j2 = rng_.pm1();
        }
        auto builder = [this, j1, j2](const CavityDistribution& a, const CavityDistribution& b,
                                      Rng& r) {
            return model_ == CavityModel::xorsat_ferro
                       ? detail::xorsat_field(a, b, beta_, r)
                       : detail::maxcut_field(a, b, beta_, r, j1, j2);
        };
        members_[target] = detail::cavity_generation(members_[i1], members_[i2], lambda_, beta_,
                                                     opts_.n_r, opts_.ess_fraction, rng_, builder);
    }

    void sweep() {
        for (int d = 0; d < opts_.n_d; ++d) step();
    }

    // Population observables: energy and mx from independent members, qbar
    // from the per-member site magnetization (all three messages of the site
    // drawn from the same member), with the squared-mean noise bias removed.
    CavityObservables observables(int site_samples_per_member = 40) {
        CavityObservables out;
        double xsum = 0.0, fsum = 0.0;
        double qsum = 0.0;
        for (int d = 0; d < opts_.n_d; ++d) {
            detail::WeightedSiteStats stats;
            for (int t = 0; t < site_samples_per_member; ++t) {
                const auto& mem = members_[d];
                const SpinPath& p1 = mem.draw(rng_);
                const SpinPath& p2 = mem.draw(rng_);
                const SpinPath& p3 = mem.draw(rng_);
                const int jj[3] = {model_ == CavityModel::pmj ? rng_.pm1() : 1,
                                   model_ == CavityModel::pmj ? rng_.pm1() : 1,
                                   model_ == CavityModel::pmj ? rng_.pm1() : 1};
                auto field = build_field({&p1, &p2, &p3}, beta_, [&jj](const std::vector<int>& v) {
                    return double(jj[0] * v[0] + jj[1] * v[1] + jj[2] * v[2]);
                });
                double lz = 0.0;
                SpinPath p0 = sample_path_in_field(field, lambda_, beta_, rng_, &lz);
                stats.add(lz, p0.integral(beta_) / beta_,
                          static_cast<double>(p0.flips.size()), 0.0);
            }
            auto r = stats.reduce();
            xsum += lambda_ > 0 ? r.flips / (beta_ * lambda_) : 0.0;
            fsum += r.flips;
            qsum += std::clamp(r.mag * r.mag - r.mag_var / std::max(1.0, r.ess), 0.0, 1.0);
        }
        out.qbar = qsum / opts_.n_d;
        out.mx = xsum / opts_.n_d;
        out.flip_density = fsum / opts_.n_d;

        // Edge term: with m = 0 every state counts equally, so the
        // e^{-J int s_i s_j} reweighting is normalized within each member
        // pair (each pair is one state's edge marginal), then averaged flat.
        double edge_mean = 0.0;
        const int edge_pairs = 2 * opts_.n_d;
        const int inner = std::max(8, site_samples_per_member / 2);
        for (int t = 0; t < edge_pairs; ++t) {
            const auto& ma = members_[rng_.below_int(opts_.n_d)];
            const auto& mb = members_[rng_.below_int(opts_.n_d)];
            const int j = model_ == CavityModel::pmj ? rng_.pm1() : 1;
            double num = 0.0, den = 0.0, mx_shift = -1e300;
            std::vector<double> ssv(inner);
            for (int k = 0; k < inner; ++k) {
                const SpinPath& pi = ma.draw(rng_);
                const SpinPath& pj = mb.draw(rng_);
                auto field = build_field({&pi, &pj}, beta_, [](const std::vector<int>& v) {
                    return double(v[0] * v[1]);
                });
                double ss = 0.0;
                double prev = 0.0;
                for (std::size_t g = 0; g < field.t_end.size(); ++g) {
                    ss += field.h[g] * (field.t_end[g] - prev);
                    prev = field.t_end[g];
                }
                ssv[k] = j * ss;
                mx_shift = std::max(mx_shift, -ssv[k]);
            }
            for (int k = 0; k < inner; ++k) {
                const double w = std::exp(-ssv[k] - mx_shift);
                num += w * (ssv[k] / beta_);
                den += w;
            }
            edge_mean += num / den;
        }
        edge_mean /= edge_pairs;
        // 3-regular: 3/2 edges per spin
        out.energy_per_spin = 1.5 * edge_mean - lambda_ * out.mx;
        return out;
    }

    Rng& rng() { return rng_; }

  private:
    CavityModel model_;
    double lambda_;
    double beta_;
    Rng rng_;
    CavityOptions opts_;
    std::vector<CavityDistribution> members_;
};

}  // namespace qaa
