// Gap extraction from imaginary-time correlation functions, minimum-gap
// scans over s (with double-minimum detection), ensemble medians, and
// gap-vs-N scaling fits with the goodness-of-fit probability Q.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qaa/errors.hpp"
#include "qaa/rng.hpp"

namespace qaa {

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a):
// series for x < a+1, continued fraction otherwise.
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw error("gamma_q: need a > 0, x >= 0");
    if (x == 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) by series; Q = 1 - P
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - lg);
        return 1.0 - p;
    }
    // Lentz continued fraction for Q
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

struct CorrelationSeries {
    std::vector<double> taus;
    std::vector<double> values;
    std::vector<double> errors;
    double beta = 0.0;
    std::string label;
};

struct GapEstimate {
    double s = 0.0;
    double gap = 0.0;
    double error = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    int window_points = 0;
    double beta_gap = 0.0;   // beta * gap at the estimate
    bool reliable = true;    // false when beta * gap < 5
    std::string label;
};

struct FitGapOptions {
    bool periodic = false;     // include the exp(-D (beta - tau)) reflection
    int min_window = 5;
    double stationarity_sigma = 1.5;
    int bootstrap_samples = 500;
    std::uint64_t bootstrap_seed = 2718281828;
};

namespace detail {

// chi^2 of the log-model with the amplitude profiled out analytically.
inline double gap_profile_chi2(const std::vector<double>& taus, const std::vector<double>& u,
                               const std::vector<double>& su, double beta, bool periodic,
                               double delta, double* log_a_out = nullptr) {
    double num = 0.0, den = 0.0;
    std::vector<double> logf(taus.size());
    for (std::size_t i = 0; i < taus.size(); ++i) {
        double f = std::exp(-delta * taus[i]);
        if (periodic) f += std::exp(-delta * (beta - taus[i]));
        logf[i] = std::log(f);
        const double w = 1.0 / (su[i] * su[i]);
        num += w * (u[i] - logf[i]);
        den += w;
    }
    const double log_a = num / den;
    if (log_a_out) *log_a_out = log_a;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const double r = (u[i] - log_a - logf[i]) / su[i];
        chi2 += r * r;
    }
    return chi2;
}

inline double fit_gap_window(const std::vector<double>& taus, const std::vector<double>& u,
                             const std::vector<double>& su, double beta, bool periodic,
                             double lo, double hi) {
    // golden-section minimum of the profile chi^2 over delta in [lo, hi]
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = gap_profile_chi2(taus, u, su, beta, periodic, x1);
    double f2 = gap_profile_chi2(taus, u, su, beta, periodic, x2);
    for (int it = 0; it < 120 && (b - a) > 1e-10 * std::max(1.0, b); ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = gap_profile_chi2(taus, u, su, beta, periodic, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = gap_profile_chi2(taus, u, su, beta, periodic, x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Fits log C(tau) = log a - Delta tau (with the beta - tau reflection term for
// periodic-boundary data) over an automatically selected window where the
// local effective gap is stationary. Longest window wins; ties go to the
// latest (largest-tau) window where excited-state contamination is smallest.
inline GapEstimate fit_gap(const CorrelationSeries& series, const FitGapOptions& opt = {}) {
    if (series.taus.size() != series.values.size() || series.taus.size() != series.errors.size())
        throw error("fit_gap: inconsistent series");
    // signal filter: C > 3 err, tau <= beta/2, positive errors
    std::vector<double> taus, u, su;
    for (std::size_t i = 0; i < series.taus.size(); ++i) {
        const double c = series.values[i];
        const double e = series.errors[i];
        if (!(e > 0.0)) continue;
        if (series.taus[i] > series.beta / 2.0 + 1e-12) continue;
        if (c < 3.0 * e) continue;
        taus.push_back(series.taus[i]);
        u.push_back(std::log(c));
        su.push_back(e / c);
    }
    if (taus.size() < static_cast<std::size_t>(opt.min_window) + 1)
        throw fit_signal_error("fit_gap: fewer than " + std::to_string(opt.min_window + 1) +
                               " points above the noise floor");

    // provisional gap from the overall slope, used to correct the pairwise
    // effective gaps for the reflection term
    const std::size_t np = taus.size();
    double delta0 = (u.front() - u.back()) / std::max(1e-9, taus.back() - taus.front());
    delta0 = std::max(delta0, 1e-6);
    std::vector<double> pair_gap(np - 1), pair_err(np - 1);
    for (std::size_t i = 0; i + 1 < np; ++i) {
        const double dt = taus[i + 1] - taus[i];
        double slope = -(u[i + 1] - u[i]) / dt;
        if (opt.periodic) {
            // remove the provisional reflection contribution from both points
            auto corr = [&](double tau) {
                return std::log1p(std::exp(-delta0 * (series.beta - 2.0 * tau)));
            };
            slope += (corr(taus[i + 1]) - corr(taus[i])) / dt;
        }
        pair_gap[i] = slope;
        pair_err[i] = std::sqrt(su[i] * su[i] + su[i + 1] * su[i + 1]) / dt;
    }
    // longest stationary window of >= min_window points (min_window-1 pairs),
    // ties resolved towards the latest window
    int best_lo = -1, best_hi = -1;
    for (std::size_t lo = 0; lo + opt.min_window <= np; ++lo) {
        for (std::size_t hi = lo + opt.min_window - 1; hi < np; ++hi) {
            bool ok = true;
            for (std::size_t a = lo; a < hi && ok; ++a)
                for (std::size_t b = a + 1; b < hi && ok; ++b) {
                    const double sep = std::abs(pair_gap[a] - pair_gap[b]);
                    const double sig = std::sqrt(pair_err[a] * pair_err[a] + pair_err[b] * pair_err[b]);
                    ok = sep <= opt.stationarity_sigma * sig;
                }
            if (!ok) break;  // longer windows from this lo will also fail
            const int len = static_cast<int>(hi - lo + 1);
            if (best_lo < 0 || len > best_hi - best_lo + 1 ||
                (len == best_hi - best_lo + 1 && static_cast<int>(lo) > best_lo)) {
                best_lo = static_cast<int>(lo);
                best_hi = static_cast<int>(hi);
            }
        }
    }
    if (best_lo < 0) throw fit_window_error("fit_gap: no stationary plateau found");

    std::vector<double> wt(taus.begin() + best_lo, taus.begin() + best_hi + 1);
    std::vector<double> wu(u.begin() + best_lo, u.begin() + best_hi + 1);
    std::vector<double> ws(su.begin() + best_lo, su.begin() + best_hi + 1);
    double d_lo = 1e-4, d_hi = 0.0;
    for (std::size_t i = best_lo; i < static_cast<std::size_t>(best_hi); ++i)
        d_hi = std::max(d_hi, pair_gap[i] + 5.0 * pair_err[i]);
    d_hi = std::max({d_hi, 4.0 * delta0, 10.0 * d_lo});
    const double delta = detail::fit_gap_window(wt, wu, ws, series.beta, opt.periodic, d_lo, d_hi);

    // seeded parametric bootstrap over the window points
    Rng rng(opt.bootstrap_seed);
    std::vector<double> boots;
    std::vector<double> ub(wu.size());
    for (int rep = 0; rep < opt.bootstrap_samples; ++rep) {
        for (std::size_t i = 0; i < wu.size(); ++i) ub[i] = wu[i] + ws[i] * rng.normal();
        boots.push_back(
            detail::fit_gap_window(wt, ub, ws, series.beta, opt.periodic, d_lo, d_hi));
    }
    double bmean = 0.0;
    for (double bsample : boots) bmean += bsample;
    bmean /= boots.size();
    double bvar = 0.0;
    for (double bsample : boots) bvar += (bsample - bmean) * (bsample - bmean);
    bvar /= std::max<std::size_t>(1, boots.size() - 1);

    GapEstimate out;
    out.gap = delta;
    out.error = std::sqrt(bvar);
    out.window_lo = wt.front();
    out.window_hi = wt.back();
    out.window_points = static_cast<int>(wt.size());
    out.beta_gap = series.beta * delta;
    out.reliable = out.beta_gap >= 5.0;
    out.label = series.label;
    return out;
}

// ---------------------------------------------------------------------------
// Minimum-gap scan over s: all significant local minima, labelled "local"
// (nearest the critical point) and "global" when two or more coexist.

struct ScanMinimum {
    double s = 0.0;
    double gap = 0.0;
    double error = 0.0;
    double significance = 0.0;
    std::string role;                  // "global" or "local"
    std::vector<double> refine_s;      // suggested re-simulation points
};

struct MinGapScanReport {
    std::vector<ScanMinimum> minima;
    bool boundary_warning = false;  // monotone scan, no interior minimum
    double global_min_gap = 0.0;
    double global_min_s = 0.0;
};

inline MinGapScanReport min_gap_scan(const std::vector<GapEstimate>& gaps, double s_critical,
                                     double significance_sigma = 2.0) {
    if (gaps.size() < 3) throw error("min_gap_scan: need at least 3 scan points");
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
        if (gaps[i + 1].s <= gaps[i].s) throw error("min_gap_scan: scan must be sorted in s");
    MinGapScanReport report;
    for (std::size_t i = 1; i + 1 < gaps.size(); ++i) {
        const auto& g = gaps[i];
        double sig = std::numeric_limits<double>::infinity();
        bool below = true;
        for (std::size_t j : {i - 1, i + 1}) {
            const double diff = gaps[j].gap - g.gap;
            const double sigma = std::hypot(gaps[j].error, g.error);
            below = below && diff > 0;
            if (sigma > 0) sig = std::min(sig, diff / sigma);
        }
        if (!below || sig < significance_sigma) continue;
        ScanMinimum m;
        m.s = g.s;
        m.gap = g.gap;
        m.error = g.error;
        m.significance = sig;
        const double step = 0.5 * std::min(g.s - gaps[i - 1].s, gaps[i + 1].s - g.s);
        m.refine_s = {g.s - step, g.s, g.s + step};
        report.minima.push_back(std::move(m));
    }
    if (report.minima.empty()) {
        report.boundary_warning = true;
        std::size_t imin = 0;
        for (std::size_t i = 1; i < gaps.size(); ++i)
            if (gaps[i].gap < gaps[imin].gap) imin = i;
        report.global_min_gap = gaps[imin].gap;
        report.global_min_s = gaps[imin].s;
        return report;
    }
    std::size_t iglobal = 0, ilocal = 0;
    for (std::size_t i = 1; i < report.minima.size(); ++i) {
        if (report.minima[i].gap < report.minima[iglobal].gap) iglobal = i;
        if (std::abs(report.minima[i].s - s_critical) <
            std::abs(report.minima[ilocal].s - s_critical))
            ilocal = i;
    }
    for (std::size_t i = 0; i < report.minima.size(); ++i) {
        if (i == iglobal)
            report.minima[i].role = "global";
        else if (i == ilocal)
            report.minima[i].role = "local";
    }
    if (report.minima.size() == 1) report.minima[0].role = "global";
    report.global_min_gap = report.minima[iglobal].gap;
    report.global_min_s = report.minima[iglobal].s;
    return report;
}

// ---------------------------------------------------------------------------
// Ensemble median with a seeded bootstrap confidence interval.

struct MedianResult {
    double median = 0.0;
    double error = 0.0;
    std::size_t count = 0;
};

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline MedianResult median_min_gap(std::vector<double> minima, int bootstrap_samples = 500,
                                   std::uint64_t seed = 1729) {
    if (minima.empty()) throw error("median_min_gap: empty sample");
    std::sort(minima.begin(), minima.end());  // order invariance, exact
    MedianResult out;
    out.count = minima.size();
    out.median = median_of(minima);
    Rng rng(seed);
    std::vector<double> resample(minima.size());
    std::vector<double> medians;
    for (int rep = 0; rep < bootstrap_samples; ++rep) {
        for (auto& x : resample) x = minima[rng.below(minima.size())];
        medians.push_back(median_of(resample));
    }
    double m = 0.0;
    for (double x : medians) m += x;
    m /= medians.size();
    double var = 0.0;
    for (double x : medians) var += (x - m) * (x - m);
    out.error = std::sqrt(var / std::max<std::size_t>(1, medians.size() - 1));
    return out;
}

// ---------------------------------------------------------------------------
// Scaling fits: weighted least squares in linearized coordinates.

enum class ScalingModel { exponential, polynomial, stretched };

inline const char* scaling_model_name(ScalingModel m) {
    switch (m) {
        case ScalingModel::exponential: return "exp";
        case ScalingModel::polynomial: return "poly";
        default: return "stretch";
    }
}

struct ScalingPoint {
    double n;
    double gap;
    double error;
};

struct ScalingFit {
    ScalingModel model = ScalingModel::exponential;
    double amplitude = 0.0;  // A
    double rate = 0.0;       // c (exp, stretched) or rho (polynomial)
    double chi2 = 0.0;
    int ndof = 0;
    double q = 0.0;
    std::vector<double> excluded;
    std::size_t n_points = 0;
};

inline ScalingFit fit_scaling(const std::vector<ScalingPoint>& points, ScalingModel model,
                              const std::vector<double>& excluded_sizes = {}) {
    std::vector<double> x, y, w;
    for (const auto& p : points) {
        bool excluded = false;
        for (double n : excluded_sizes) excluded = excluded || std::abs(p.n - n) < 1e-9;
        if (excluded) continue;
        double xv;
        switch (model) {
            case ScalingModel::exponential: xv = p.n; break;
            case ScalingModel::polynomial: xv = std::log(p.n); break;
            default: xv = std::sqrt(p.n); break;
        }
        x.push_back(xv);
        y.push_back(std::log(p.gap));
        const double sy = p.error / p.gap;
        w.push_back(1.0 / (sy * sy));
    }
    if (x.size() < 3) throw underdetermined_error("fit_scaling: need >= 3 points after exclusions");
    const int ndof = static_cast<int>(x.size()) - 2;
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - intercept - slope * x[i];
        chi2 += w[i] * r * r;
    }
    ScalingFit fit;
    fit.model = model;
    fit.amplitude = std::exp(intercept);
    fit.rate = -slope;
    fit.chi2 = chi2;
    fit.ndof = ndof;
    fit.q = gamma_q(ndof / 2.0, chi2 / 2.0);
    fit.excluded = excluded_sizes;
    fit.n_points = x.size();
    return fit;
}

}  // namespace qaa
