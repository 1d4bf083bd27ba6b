// Symmetric eigensolvers: dense LAPACK path for small dimensions and a
// matrix-free preconditioned block solver (LOBPCG) for large ones.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <cblas.h>
#include <lapacke.h>

#include "qaa/errors.hpp"
#include "qaa/rng.hpp"

namespace qaa {

// Eigendecomposition of a dense symmetric matrix (column-major, n x n).
// Values ascending; vectors overwrite `a` when requested.
inline void dense_symmetric_eig(std::vector<double>& a, int n, std::vector<double>& evals,
                                bool vectors) {
    evals.assign(n, 0.0);
    const int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'U', n, a.data(), n,
                                    evals.data());
    if (info != 0) throw eigensolver_error("dsyevd failed, info=" + std::to_string(info));
}

namespace detail {

inline void blas_gemm(bool ta, bool tb, int m, int n, int kk, double alpha, const double* a,
                      int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasColMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                kk, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void blas_gemm(bool ta, bool tb, int m, int n, int kk, float alpha, const float* a, int lda,
                      const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasColMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                kk, alpha, a, lda, b, ldb, beta, c, ldc);
}

// C (ca x cb, column-major, double) = A^T B for two tall column blocks with
// leading dimension `dim`. BLAS gemm handles this shape poorly; a blocked
// pass with double accumulation is both faster and more accurate.
template <typename Real>
void tall_gram(const Real* a, int ca, const Real* b, int cb, std::size_t dim, double* c) {
    std::fill(c, c + static_cast<std::size_t>(ca) * cb, 0.0);
#pragma omp parallel
    {
        std::vector<double> local(static_cast<std::size_t>(ca) * cb, 0.0);
        const std::size_t chunk = 8192;
        const std::size_t nchunks = (dim + chunk - 1) / chunk;
#pragma omp for schedule(static) nowait
        for (std::size_t ch = 0; ch < nchunks; ++ch) {
            const std::size_t lo = ch * chunk;
            const std::size_t hi = std::min(dim, lo + chunk);
            for (int j = 0; j < cb; ++j) {
                const Real* bj = b + static_cast<std::size_t>(j) * dim;
                for (int i = 0; i < ca; ++i) {
                    const Real* ai = a + static_cast<std::size_t>(i) * dim;
                    double acc = 0.0;
                    for (std::size_t z = lo; z < hi; ++z)
                        acc += static_cast<double>(ai[z]) * static_cast<double>(bj[z]);
                    local[static_cast<std::size_t>(j) * ca + i] += acc;
                }
            }
        }
#pragma omp critical
        for (std::size_t k = 0; k < local.size(); ++k) c[k] += local[k];
    }
}

// Generalized symmetric eigenproblem A c = theta B c with a whitening
// fallback for ill-conditioned B. Returns eigenvalues ascending and the
// eigenvectors (column-major, n x n_kept); n_kept <= n when B is rank
// deficient.
inline int gsym_eig(std::vector<double> a, std::vector<double> b, int n,
                    std::vector<double>& evals, std::vector<double>& evecs) {
    std::vector<double> bd = b;
    std::vector<double> d;
    dense_symmetric_eig(bd, n, d, true);
    const double dmax = std::max(d.back(), 0.0);
    if (dmax <= 0.0) throw eigensolver_error("gsym_eig: Gram matrix not positive");
    const double cut = dmax * 1e-12;
    std::vector<double> y;  // n x m
    int m = 0;
    for (int j = 0; j < n; ++j) {
        if (d[j] <= cut) continue;
        const double inv = 1.0 / std::sqrt(d[j]);
        for (int i = 0; i < n; ++i) y.push_back(bd[static_cast<std::size_t>(j) * n + i] * inv);
        ++m;
    }
    // T = Yt A Y  (m x m)
    std::vector<double> ay(static_cast<std::size_t>(n) * m, 0.0);
    blas_gemm(false, false, n, m, n, 1.0, a.data(), n, y.data(), n, 0.0, ay.data(), n);
    std::vector<double> t(static_cast<std::size_t>(m) * m, 0.0);
    blas_gemm(true, false, m, m, n, 1.0, y.data(), n, ay.data(), n, 0.0, t.data(), m);
    dense_symmetric_eig(t, m, evals, true);
    // Back-transform eigenvectors: C = Y * T_vecs (n x m)
    evecs.assign(static_cast<std::size_t>(n) * m, 0.0);
    blas_gemm(false, false, n, m, m, 1.0, y.data(), n, t.data(), m, 0.0, evecs.data(), n);
    return m;
}

}  // namespace detail

template <typename Real>
struct LobpcgOptions {
    int block = 0;            // 0: chosen from k
    int max_iter = 600;
    double tol_abs = 1e-10;   // absolute residual 2-norm target
    std::uint64_t seed = 12345;
    bool throw_on_fail = true;
};

template <typename Real>
struct LobpcgResult {
    std::vector<double> eigenvalues;          // k entries, ascending
    std::vector<std::vector<Real>> vectors;   // k vectors (optional use)
    std::vector<double> residuals;            // k entries
    int iterations = 0;
    bool converged = false;
};

// Matrix-free LOBPCG for the lowest k eigenpairs of a symmetric operator.
// `apply(in, out)` must compute out = H * in for a single vector; `diag`
// supplies the operator diagonal for preconditioning (may be empty).
template <typename Real>
LobpcgResult<Real> lobpcg(const std::function<void(const Real*, Real*)>& apply, std::size_t dim,
                          const std::vector<Real>& diag, int k,
                          const LobpcgOptions<Real>& opt = {},
                          const std::vector<std::vector<Real>>* warm_start = nullptr) {
    const int b = opt.block > 0 ? opt.block : std::max(k + 2, 4);
    if (static_cast<std::size_t>(3 * b) >= dim)
        throw eigensolver_error("lobpcg: dimension too small for block size; use the dense path");
    const int n = static_cast<int>(dim);

    auto col = [dim](std::vector<Real>& m, int j) { return m.data() + static_cast<std::size_t>(j) * dim; };
    auto ccol = [dim](const std::vector<Real>& m, int j) {
        return m.data() + static_cast<std::size_t>(j) * dim;
    };
    auto dot = [dim](const Real* x, const Real* y) {
        double acc = 0.0;
#pragma omp parallel for reduction(+ : acc) schedule(static)
        for (std::size_t i = 0; i < dim; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
        return acc;
    };
    auto axpy = [dim](double a, const Real* x, Real* y) {
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < dim; ++i) y[i] += static_cast<Real>(a * static_cast<double>(x[i]));
    };
    auto scal = [dim](double a, Real* x) {
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < dim; ++i) x[i] = static_cast<Real>(a * static_cast<double>(x[i]));
    };

    std::vector<Real> X(dim * b), HX(dim * b), W(dim * b), HW(dim * b), P(dim * b), HP(dim * b);
    Rng rng(derive_seed(opt.seed, dim, static_cast<std::uint64_t>(k)));
    for (int j = 0; j < b; ++j) {
        Real* xj = col(X, j);
        if (warm_start && j < static_cast<int>(warm_start->size()) &&
            (*warm_start)[j].size() == dim) {
            std::copy((*warm_start)[j].begin(), (*warm_start)[j].end(), xj);
        } else {
            for (std::size_t i = 0; i < dim; ++i) xj[i] = static_cast<Real>(rng.uniform() - 0.5);
        }
    }

    // Block Gram-Schmidt orthonormalization, in place. A column is replaced
    // by noise only when projection annihilates it (rank deficiency), judged
    // relative to its pre-projection norm.
    auto orthonormalize = [&](std::vector<Real>& M, int cols) {
        for (int j = 0; j < cols; ++j) {
            Real* mj = col(M, j);
            const double nrm0 = std::sqrt(dot(mj, mj));
            for (int rep = 0; rep < 2; ++rep)
                for (int i = 0; i < j; ++i) axpy(-dot(ccol(M, i), mj), ccol(M, i), mj);
            double nrm = std::sqrt(dot(mj, mj));
            if (nrm < 1e-6 * nrm0 || nrm0 == 0.0) {
                for (std::size_t i = 0; i < dim; ++i) mj[i] = static_cast<Real>(rng.uniform() - 0.5);
                for (int i = 0; i < j; ++i) axpy(-dot(ccol(M, i), mj), ccol(M, i), mj);
                nrm = std::sqrt(dot(mj, mj));
            }
            scal(1.0 / nrm, mj);
        }
    };

    orthonormalize(X, b);
    auto apply_block = [&](const std::vector<Real>& in, std::vector<Real>& out, int cols) {
        for (int j = 0; j < cols; ++j) apply(ccol(in, j), out.data() + static_cast<std::size_t>(j) * dim);
    };
    apply_block(X, HX, b);

    LobpcgResult<Real> res;
    std::vector<double> theta(b, 0.0);
    int p_cols = 0;

    std::vector<Real> Xn(dim * b), HXn(dim * b), Pn(dim * b), HPn(dim * b);
    for (int it = 0; it < opt.max_iter; ++it) {
        // Trial basis S = [X | W | P] (W only after the first iteration).
        const int w_cols = it > 0 ? b : 0;
        const int nS = b + w_cols + p_cols;
        struct Blk { const Real* v; const Real* hv; int cols; };
        const Blk blocks[3] = {{X.data(), HX.data(), b},
                               {W.data(), HW.data(), w_cols},
                               {P.data(), HP.data(), p_cols}};
        std::vector<double> Ad(static_cast<std::size_t>(nS) * nS, 0.0), Bd(Ad.size(), 0.0);
        std::vector<double> tile;
        int coff = 0;
        for (const auto& cb : blocks) {
            if (cb.cols == 0) continue;
            int roff = 0;
            for (const auto& rb : blocks) {
                if (rb.cols == 0) continue;
                if (roff <= coff) {  // upper block triangle, mirrored below
                    tile.assign(static_cast<std::size_t>(rb.cols) * cb.cols, 0.0);
                    detail::tall_gram(rb.v, rb.cols, cb.hv, cb.cols, dim, tile.data());
                    for (int j = 0; j < cb.cols; ++j)
                        for (int i = 0; i < rb.cols; ++i)
                            Ad[static_cast<std::size_t>(coff + j) * nS + roff + i] =
                                tile[static_cast<std::size_t>(j) * rb.cols + i];
                    detail::tall_gram(rb.v, rb.cols, cb.v, cb.cols, dim, tile.data());
                    for (int j = 0; j < cb.cols; ++j)
                        for (int i = 0; i < rb.cols; ++i)
                            Bd[static_cast<std::size_t>(coff + j) * nS + roff + i] =
                                tile[static_cast<std::size_t>(j) * rb.cols + i];
                }
                roff += rb.cols;
            }
            coff += cb.cols;
        }
        for (int j = 0; j < nS; ++j)
            for (int i = j + 1; i < nS; ++i) {
                Ad[static_cast<std::size_t>(j) * nS + i] = Ad[static_cast<std::size_t>(i) * nS + j];
                Bd[static_cast<std::size_t>(j) * nS + i] = Bd[static_cast<std::size_t>(i) * nS + j];
            }
        std::vector<double> evals, C;
        const int kept = detail::gsym_eig(Ad, Bd, nS, evals, C);
        if (kept < b) throw eigensolver_error("lobpcg: basis collapse");

        // New X = S C[:, :b]; P aggregates the W and P parts of the update.
        std::vector<Real> Cx(static_cast<std::size_t>(nS) * b);
        for (int j = 0; j < b; ++j) {
            theta[j] = evals[j];
            for (int i = 0; i < nS; ++i)
                Cx[static_cast<std::size_t>(j) * nS + i] = static_cast<Real>(C[static_cast<std::size_t>(j) * nS + i]);
        }
        auto combine = [&](std::vector<Real>& out, bool h_side, int row_begin) {
            std::fill(out.begin(), out.end(), Real(0));
            int off = 0;
            for (const auto& cb : blocks) {
                if (cb.cols > 0) {
                    const Real* src = h_side ? cb.hv : cb.v;
                    if (off + cb.cols > row_begin) {
                        const int skip = std::max(0, row_begin - off);
                        detail::blas_gemm(false, false, n, b, cb.cols - skip, Real(1),
                                          src + static_cast<std::size_t>(skip) * dim, n,
                                          Cx.data() + off + skip, nS, Real(1), out.data(), n);
                    }
                }
                off += cb.cols;
            }
        };
        combine(Xn, false, 0);
        combine(HXn, true, 0);
        combine(Pn, false, b);   // skip the X block: implicit difference directions
        combine(HPn, true, b);
        X.swap(Xn);
        HX.swap(HXn);
        p_cols = 0;
        for (int j = 0; j < b; ++j) {
            const double nrm = std::sqrt(dot(ccol(Pn, j), ccol(Pn, j)));
            if (nrm < 1e-8) continue;
            Real* pj = col(P, p_cols);
            Real* hpj = col(HP, p_cols);
            std::copy(ccol(Pn, j), ccol(Pn, j) + dim, pj);
            std::copy(ccol(HPn, j), ccol(HPn, j) + dim, hpj);
            scal(1.0 / nrm, pj);
            scal(1.0 / nrm, hpj);
            ++p_cols;
        }

        // Residuals R = HX - X Theta; stored in W for the next expansion.
        res.residuals.assign(k, 0.0);
        bool all_ok = true;
        for (int j = 0; j < b; ++j) {
            Real* wj = col(W, j);
            std::copy(ccol(HX, j), ccol(HX, j) + dim, wj);
            axpy(-theta[j], ccol(X, j), wj);
            const double rn = std::sqrt(dot(wj, wj));
            if (j < k) {
                res.residuals[j] = rn;
                if (rn > opt.tol_abs) all_ok = false;
            }
            // Jacobi preconditioning with a positive shift; the shift keeps
            // the preconditioner away from exact resonance with the diagonal
            // (where w would reproduce x and the subspace would stagnate).
            if (!diag.empty()) {
                const double th0 = theta[0];
                const double delta = std::max(0.2, 0.05 * std::abs(th0));
#pragma omp parallel for schedule(static)
                for (std::size_t i = 0; i < dim; ++i) {
                    const double dd = std::max(static_cast<double>(diag[i]) - th0 + delta, delta);
                    wj[i] = static_cast<Real>(static_cast<double>(wj[i]) / dd);
                }
            }
        }
        res.iterations = it + 1;
        if (all_ok) {
            res.converged = true;
            break;
        }
        // W = (I - X Xt) W, then orthonormalize internally and apply H.
        std::vector<double> Gd(static_cast<std::size_t>(b) * b);
        std::vector<Real> G(static_cast<std::size_t>(b) * b);
        for (int rep = 0; rep < 2; ++rep) {
            detail::tall_gram(X.data(), b, W.data(), b, dim, Gd.data());
            for (std::size_t k = 0; k < G.size(); ++k) G[k] = static_cast<Real>(Gd[k]);
            detail::blas_gemm(false, false, n, b, b, Real(-1), X.data(), n, G.data(), b, Real(1),
                              W.data(), n);
        }
        orthonormalize(W, b);
        apply_block(W, HW, b);
    }

    if (!res.converged && opt.throw_on_fail) {
        double worst = 0.0;
        for (double r : res.residuals) worst = std::max(worst, r);
        throw eigensolver_error("lobpcg: no convergence after " + std::to_string(res.iterations) +
                                " iterations, residual " + std::to_string(worst));
    }
    res.eigenvalues.assign(theta.begin(), theta.begin() + k);
    res.vectors.resize(k);
    for (int j = 0; j < k; ++j) res.vectors[j].assign(ccol(X, j), ccol(X, j) + dim);
    return res;
}

}  // namespace qaa
