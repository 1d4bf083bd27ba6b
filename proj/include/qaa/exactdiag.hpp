// Exact spectra of the interpolating Hamiltonian
//   H(s) = (1-s) sum_i (1-sx_i)/2 + s H_P
// with optional restriction to the even/odd sector of the global bit-flip
// symmetry (two-local problems only). Ground truth for the stochastic
// modules: gap scans, adiabatic-runtime bound, thermal expectation values.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "qaa/instances.hpp"
#include "qaa/spectra.hpp"

namespace qaa {

enum class Sector { full, even, odd };

inline const char* sector_name(Sector s) {
    switch (s) {
        case Sector::full: return "full";
        case Sector::even: return "even";
        default: return "odd";
    }
}

// Fills e[z] = H_P(z) for all configurations of `bits` bits (Gray-code walk).
// In the even/odd sectors `bits` = N-1 and the top bit is implicitly 0.
template <typename Real>
std::vector<Real> problem_energy_table(const ClauseSystem& sys, int bits) {
    const std::size_t dim = std::size_t(1) << bits;
    std::vector<Real> e(dim);
    std::vector<std::vector<int>> incident(sys.n_sites);
    for (int c = 0; c < static_cast<int>(sys.clauses.size()); ++c)
        for (int a = 0; a < sys.clauses[c].arity; ++a) incident[sys.clauses[c].sites[a]].push_back(c);
    std::vector<int> unsat(sys.clauses.size());
    int energy = 0;
    for (std::size_t c = 0; c < sys.clauses.size(); ++c) {
        unsat[c] = sys.clauses[c].energy_bits(0);
        energy += unsat[c];
    }
    e[0] = static_cast<Real>(energy);
    std::uint64_t z = 0;
    for (std::size_t g = 1; g < dim; ++g) {
        const int bit = std::countr_zero(g);
        for (int c : incident[bit]) {
            energy += 1 - 2 * unsat[c];
            unsat[c] ^= 1;
        }
        z ^= std::uint64_t(1) << bit;
        e[z] = static_cast<Real>(energy);
    }
    return e;
}

template <typename Real>
class InterpolatingHamiltonian {
  public:
    InterpolatingHamiltonian(const ClauseSystem& sys, double s, Sector sector)
        : sys_(sys), s_(s), sector_(sector), n_(sys.n_sites) {
        if (sector != Sector::full) {
            if (!sys.two_local())
                throw sector_error("parity sectors require a bit-flip symmetric (two-local) problem");
            bits_ = n_ - 1;
        } else {
            bits_ = n_;
        }
        dim_ = std::size_t(1) << bits_;
        mask_ = dim_ - 1;
        hx_ = (1.0 - s) / 2.0;
        problem_diag_ = problem_energy_table<Real>(sys, bits_);
        diag_.resize(dim_);
        const Real c0 = static_cast<Real>((1.0 - s) * n_ / 2.0);
#pragma omp parallel for schedule(static)
        for (std::size_t z = 0; z < dim_; ++z)
            diag_[z] = c0 + static_cast<Real>(s_) * problem_diag_[z];
    }

    std::size_t dim() const { return dim_; }
    double s() const { return s_; }
    Sector sector() const { return sector_; }
    int n_sites() const { return n_; }
    bool is_diagonal() const { return hx_ == 0.0; }
    const std::vector<Real>& diagonal() const { return diag_; }
    const std::vector<Real>& problem_diagonal() const { return problem_diag_; }

    // out = H in
    void apply(const Real* in, Real* out) const {
        const Real hx = static_cast<Real>(hx_);
        const int bits = bits_;
        const bool pair_term = sector_ != Sector::full;
        const Real pair_sign = sector_ == Sector::odd ? Real(-1) : Real(1);
        const std::size_t mask = mask_;
#pragma omp parallel for schedule(static)
        for (std::size_t z = 0; z < dim_; ++z) {
            Real acc = 0;
            for (int i = 0; i < bits; ++i) acc += in[z ^ (std::size_t(1) << i)];
            if (pair_term) acc += pair_sign * in[~z & mask];
            out[z] = diag_[z] * in[z] - hx * acc;
        }
    }

    // out = (sum_i sx_i) in, within the sector.
    void apply_transverse_sum(const Real* in, Real* out) const {
        const bool pair_term = sector_ != Sector::full;
        const Real pair_sign = sector_ == Sector::odd ? Real(-1) : Real(1);
        const std::size_t mask = mask_;
        const int bits = bits_;
#pragma omp parallel for schedule(static)
        for (std::size_t z = 0; z < dim_; ++z) {
            Real acc = 0;
            for (int i = 0; i < bits; ++i) acc += in[z ^ (std::size_t(1) << i)];
            if (pair_term) acc += pair_sign * in[~z & mask];
            out[z] = acc;
        }
    }

    std::vector<double> materialize_dense() const {
        std::vector<double> m(dim_ * dim_, 0.0);
        std::vector<Real> e(dim_, Real(0)), h(dim_);
        for (std::size_t j = 0; j < dim_; ++j) {
            e[j] = Real(1);
            apply(e.data(), h.data());
            e[j] = Real(0);
            for (std::size_t i = 0; i < dim_; ++i) m[j * dim_ + i] = static_cast<double>(h[i]);
        }
        return m;
    }

  private:
    ClauseSystem sys_;
    double s_;
    Sector sector_;
    int n_;
    int bits_;
    std::size_t dim_;
    std::size_t mask_;
    double hx_;
    std::vector<Real> problem_diag_;
    std::vector<Real> diag_;
};

template <typename Real>
InterpolatingHamiltonian<Real> build_hamiltonian(const ClauseSystem& sys, double s,
                                                 Sector sector = Sector::full) {
    return InterpolatingHamiltonian<Real>(sys, s, sector);
}

struct SpectrumResult {
    double s = 0.0;
    std::vector<double> eigenvalues;  // ascending, k lowest
    Sector sector = Sector::full;
    std::vector<std::vector<double>> eigenvectors;  // filled by the dense path or on request
    std::vector<double> residuals;

    double gap() const { return eigenvalues.at(1) - eigenvalues.at(0); }
};

inline constexpr std::size_t kDenseEigLimit = 4096;

template <typename Real>
SpectrumResult lowest_eigenvalues(const InterpolatingHamiltonian<Real>& h, int k,
                                  double tol = 1e-10, bool want_vectors = false,
                                  const std::vector<std::vector<Real>>* warm = nullptr,
                                  int max_iter = 600) {
    SpectrumResult out;
    out.s = h.s();
    out.sector = h.sector();
    const std::size_t dim = h.dim();
    if (k < 1) throw error("lowest_eigenvalues: k >= 1 required");
    if (h.is_diagonal() && dim > kDenseEigLimit) {
        // s = 1: the operator is classical; the spectrum is the sorted diagonal.
        std::vector<std::pair<Real, std::size_t>> entries(dim);
        for (std::size_t z = 0; z < dim; ++z) entries[z] = {h.diagonal()[z], z};
        std::partial_sort(entries.begin(), entries.begin() + k, entries.end());
        for (int j = 0; j < k; ++j) out.eigenvalues.push_back(entries[j].first);
        out.residuals.assign(k, 0.0);
        if (want_vectors)
            for (int j = 0; j < k; ++j) {
                std::vector<double> v(dim, 0.0);
                v[entries[j].second] = 1.0;
                out.eigenvectors.push_back(std::move(v));
            }
        return out;
    }
    if (dim <= kDenseEigLimit || static_cast<std::size_t>(3 * (k + 2)) >= dim) {
        std::vector<double> m = h.materialize_dense();
        std::vector<double> evals;
        dense_symmetric_eig(m, static_cast<int>(dim), evals, true);
        const int kk = std::min<std::size_t>(k, dim);
        out.eigenvalues.assign(evals.begin(), evals.begin() + kk);
        out.residuals.assign(kk, 0.0);
        for (int j = 0; j < kk; ++j)
            out.eigenvectors.emplace_back(m.begin() + static_cast<std::size_t>(j) * dim,
                                          m.begin() + static_cast<std::size_t>(j + 1) * dim);
        return out;
    }
    LobpcgOptions<Real> opt;
    opt.tol_abs = tol;
    opt.max_iter = max_iter;
    auto fn = [&h](const Real* in, Real* o) { h.apply(in, o); };
    auto res = lobpcg<Real>(fn, dim, h.diagonal(), k, opt, warm);
    out.eigenvalues = res.eigenvalues;
    out.residuals = res.residuals;
    if (want_vectors)
        for (auto& v : res.vectors)
            out.eigenvectors.emplace_back(v.begin(), v.end());
    return out;
}

// ---------------------------------------------------------------------------
// Gap scan over an s grid with parabolic refinement of the minimum.

struct GapScanPoint {
    double s;
    double gap;
    double e0;
    double e1;
};

struct GapScanResult {
    std::vector<GapScanPoint> points;
    double argmin_s = 0.0;
    double min_gap = 0.0;
};

template <typename Real>
GapScanResult min_gap_scan_exact(const ClauseSystem& sys, const std::vector<double>& s_grid,
                                 Sector sector, double tol = 1e-8) {
    if (s_grid.empty()) throw error("min_gap_scan_exact: empty grid");
    for (std::size_t i = 0; i + 1 < s_grid.size(); ++i)
        if (s_grid[i + 1] <= s_grid[i] || s_grid[i] < 0.0 || s_grid[i + 1] > 1.0)
            throw error("min_gap_scan_exact: grid must be sorted within [0,1]");
    GapScanResult out;
    std::vector<std::vector<Real>> warm;
    auto eval = [&](double s) {
        auto h = build_hamiltonian<Real>(sys, s, sector);
        auto spec = lowest_eigenvalues<Real>(h, 2, tol, true, warm.empty() ? nullptr : &warm, 900);
        if (h.dim() > kDenseEigLimit) {
            warm.clear();
            for (auto& v : spec.eigenvectors) warm.emplace_back(v.begin(), v.end());
        }
        return GapScanPoint{s, spec.gap(), spec.eigenvalues[0], spec.eigenvalues[1]};
    };
    for (double s : s_grid) out.points.push_back(eval(s));
    std::size_t imin = 0;
    for (std::size_t i = 1; i < out.points.size(); ++i)
        if (out.points[i].gap < out.points[imin].gap) imin = i;
    out.argmin_s = out.points[imin].s;
    out.min_gap = out.points[imin].gap;
    if (imin > 0 && imin + 1 < out.points.size()) {
        // Parabola through the three points surrounding the minimum.
        const auto& a = out.points[imin - 1];
        const auto& b = out.points[imin];
        const auto& c = out.points[imin + 1];
        const double d1 = (b.gap - a.gap) / (b.s - a.s);
        const double d2 = (c.gap - b.gap) / (c.s - b.s);
        const double curv = (d2 - d1) / ((c.s - a.s) / 2.0);
        if (curv > 0) {
            double sv = (a.s + b.s) / 2.0 - d1 / curv;
            sv = std::clamp(sv, a.s, c.s);
            if (std::abs(sv - b.s) > 1e-3) {
                auto p = eval(sv);
                if (p.gap < out.min_gap) {
                    out.min_gap = p.gap;
                    out.argmin_s = p.s;
                }
            } else {
                out.argmin_s = sv;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adiabatic runtime bound  max_s |V10(s)| / (min_s gap)^2, V10 = <0|dH/ds|1>.

struct AdiabaticBoundResult {
    double bound = 0.0;
    double min_gap = 0.0;
    double max_v10 = 0.0;
    bool degenerate = false;
    double degenerate_s = 0.0;
};

template <typename Real>
AdiabaticBoundResult adiabatic_time_bound(const ClauseSystem& sys,
                                          const std::vector<double>& s_grid,
                                          Sector sector = Sector::full, double tol = 1e-9) {
    AdiabaticBoundResult out;
    out.min_gap = std::numeric_limits<double>::infinity();
    for (double s : s_grid) {
        auto h = build_hamiltonian<Real>(sys, s, sector);
        auto spec = lowest_eigenvalues<Real>(h, 2, tol, true);
        const double gap = spec.gap();
        if (gap < 1e-10 * std::max(1.0, std::abs(spec.eigenvalues[0]))) {
            out.degenerate = true;
            out.degenerate_s = s;
            return out;
        }
        out.min_gap = std::min(out.min_gap, gap);
        const auto& v0 = spec.eigenvectors[0];
        const auto& v1 = spec.eigenvectors[1];
        const std::size_t dim = h.dim();
        // <0|H_P|1> from the diagonal table, <0|H_B|1> from the transverse sum.
        double hp = 0.0;
        for (std::size_t z = 0; z < dim; ++z)
            hp += v0[z] * static_cast<double>(h.problem_diagonal()[z]) * v1[z];
        std::vector<Real> tin(dim), tout(dim);
        for (std::size_t z = 0; z < dim; ++z) tin[z] = static_cast<Real>(v1[z]);
        h.apply_transverse_sum(tin.data(), tout.data());
        double tsum = 0.0;
        for (std::size_t z = 0; z < dim; ++z) tsum += v0[z] * static_cast<double>(tout[z]);
        const double hb = -0.5 * tsum;  // N/2 <0|1> vanishes by orthogonality
        out.max_v10 = std::max(out.max_v10, std::abs(hp - hb));
    }
    out.bound = out.max_v10 / (out.min_gap * out.min_gap);
    return out;
}

// ---------------------------------------------------------------------------
// Thermal expectation values from a dense spectrum: the oracle used to
// validate the SSE estimators.

struct ThermalObservables {
    double energy = 0.0;
    double mx = 0.0;                      // N^{-1} sum_i <sx_i>
    std::vector<double> sz;               // <sz_i>
    std::vector<double> szsz;             // <sz_i sz_j>, row-major i*N+j
    double q = 0.0;                       // N^{-1} sum_i <sz_i>^2
    double qprime = 0.0;                  // RMS of <sz_i sz_j>, i != j
};

// Dense eigendecomposition helper: returns (eigenvalues, column eigenvectors).
template <typename Real>
std::pair<std::vector<double>, std::vector<double>> dense_spectrum(
    const InterpolatingHamiltonian<Real>& h) {
    std::vector<double> m = h.materialize_dense();
    std::vector<double> evals;
    dense_symmetric_eig(m, static_cast<int>(h.dim()), evals, true);
    return {evals, m};
}

inline ThermalObservables thermal_observables(const std::vector<double>& evals,
                                              const std::vector<double>& evecs, int n_sites,
                                              double beta) {
    const std::size_t dim = evals.size();
    ThermalObservables out;
    const double e0 = evals[0];
    std::vector<double> w(dim);
    double zsum = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        w[i] = std::exp(-beta * (evals[i] - e0));
        zsum += w[i];
    }
    std::vector<double> rho(dim, 0.0);  // diagonal thermal density in the z basis
    for (std::size_t i = 0; i < dim; ++i) {
        if (w[i] / zsum < 1e-16) continue;
        out.energy += w[i] * evals[i];
        const double* v = evecs.data() + i * dim;
        for (std::size_t z = 0; z < dim; ++z) rho[z] += w[i] * v[z] * v[z];
        double mx = 0.0;
        for (std::size_t z = 0; z < dim; ++z)
            for (int b = 0; b < n_sites; ++b) mx += v[z] * v[z ^ (std::size_t(1) << b)];
        out.mx += w[i] * mx / n_sites;
    }
    out.energy /= zsum;
    out.mx /= zsum;
    for (std::size_t z = 0; z < dim; ++z) rho[z] /= zsum;
    out.sz.assign(n_sites, 0.0);
    out.szsz.assign(static_cast<std::size_t>(n_sites) * n_sites, 0.0);
    for (std::size_t z = 0; z < dim; ++z) {
        for (int i = 0; i < n_sites; ++i) {
            const double si = ((z >> i) & 1u) ? -1.0 : 1.0;
            out.sz[i] += rho[z] * si;
            for (int j = 0; j < n_sites; ++j) {
                const double sj = ((z >> j) & 1u) ? -1.0 : 1.0;
                out.szsz[static_cast<std::size_t>(i) * n_sites + j] += rho[z] * si * sj;
            }
        }
    }
    double q = 0.0;
    for (int i = 0; i < n_sites; ++i) q += out.sz[i] * out.sz[i];
    out.q = q / n_sites;
    double qp = 0.0;
    for (int i = 0; i < n_sites; ++i)
        for (int j = 0; j < n_sites; ++j)
            if (i != j) {
                const double c = out.szsz[static_cast<std::size_t>(i) * n_sites + j];
                qp += c * c;
            }
    out.qprime = std::sqrt(qp / (static_cast<double>(n_sites) * (n_sites - 1)));
    return out;
}

// <A(tau) A(0)> for a diagonal observable a(z), exact from the spectrum.
inline double thermal_autocorrelation(const std::vector<double>& evals,
                                      const std::vector<double>& evecs,
                                      const std::vector<double>& a, double beta, double tau) {
    const std::size_t dim = evals.size();
    const double e0 = evals[0];
    double zsum = 0.0;
    for (std::size_t i = 0; i < dim; ++i) zsum += std::exp(-beta * (evals[i] - e0));
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double wi = std::exp(-(beta - tau) * (evals[i] - e0));
        if (wi < 1e-18) continue;
        for (std::size_t j = 0; j < dim; ++j) {
            const double wj = std::exp(-tau * (evals[j] - e0));
            if (wj < 1e-18) continue;
            double aij = 0.0;
            for (std::size_t z = 0; z < dim; ++z) aij += evecs[i * dim + z] * a[z] * evecs[j * dim + z];
            acc += wi * wj * aij * aij;
        }
    }
    return acc / zsum;
}

// Integrated susceptibility int_0^beta <A(tau) A(0)> dtau, diagonal A.
inline double thermal_susceptibility(const std::vector<double>& evals,
                                     const std::vector<double>& evecs,
                                     const std::vector<double>& a, double beta) {
    const std::size_t dim = evals.size();
    const double e0 = evals[0];
    double zsum = 0.0;
    for (std::size_t i = 0; i < dim; ++i) zsum += std::exp(-beta * (evals[i] - e0));
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double wi = std::exp(-beta * (evals[i] - e0));
        for (std::size_t j = 0; j < dim; ++j) {
            double aij = 0.0;
            for (std::size_t z = 0; z < dim; ++z) aij += evecs[i * dim + z] * a[z] * evecs[j * dim + z];
            const double de = evals[j] - evals[i];
            double factor;
            if (std::abs(de) < 1e-12) {
                factor = beta * wi;
            } else {
                const double wj = std::exp(-beta * (evals[j] - e0));
                factor = (wi - wj) / de;
            }
            acc += aij * aij * factor;
        }
    }
    return acc / zsum;
}

}  // namespace qaa
