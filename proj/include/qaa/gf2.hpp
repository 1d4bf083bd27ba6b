// Dense bit matrices over GF(2): rank, linear solves, inverse, transpose.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qaa/errors.hpp"

namespace qaa {

class GF2Matrix {
  public:
    GF2Matrix() = default;

    GF2Matrix(int rows, int cols)
        : rows_(rows), cols_(cols), words_((cols + 63) / 64), bits_(static_cast<std::size_t>(rows) * words_, 0) {}

    static GF2Matrix identity(int n) {
        GF2Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.set(i, i, true);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    bool get(int r, int c) const { return (bits_[row_off(r) + c / 64] >> (c % 64)) & 1u; }

    void set(int r, int c, bool v) {
        auto& w = bits_[row_off(r) + c / 64];
        const std::uint64_t mask = 1ull << (c % 64);
        if (v)
            w |= mask;
        else
            w &= ~mask;
    }

    void flip(int r, int c) { bits_[row_off(r) + c / 64] ^= 1ull << (c % 64); }

    GF2Matrix transpose() const {
        GF2Matrix t(cols_, rows_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c)
                if (get(r, c)) t.set(c, r, true);
        return t;
    }

    int rank() const {
        GF2Matrix m = *this;
        return m.eliminate(nullptr);
    }

    bool invertible() const { return rows_ == cols_ && rank() == rows_; }

    // Solves M x = b; returns a solution (free variables set to 0) or nullopt.
    std::optional<std::vector<std::uint8_t>> solve(const std::vector<std::uint8_t>& b) const {
        GF2Matrix m = *this;
        std::vector<std::uint8_t> rhs = b;
        std::vector<int> pivot_col(rows_, -1);
        int rank = 0;
        for (int c = 0; c < cols_ && rank < rows_; ++c) {
            int p = -1;
            for (int r = rank; r < rows_; ++r)
                if (m.get(r, c)) { p = r; break; }
            if (p < 0) continue;
            m.swap_rows(rank, p);
            std::swap(rhs[rank], rhs[p]);
            for (int r = 0; r < rows_; ++r) {
                if (r != rank && m.get(r, c)) {
                    m.xor_row(r, rank);
                    rhs[r] ^= rhs[rank];
                }
            }
            pivot_col[rank] = c;
            ++rank;
        }
        for (int r = rank; r < rows_; ++r)
            if (rhs[r]) return std::nullopt;  // inconsistent
        std::vector<std::uint8_t> x(cols_, 0);
        for (int r = 0; r < rank; ++r) x[pivot_col[r]] = rhs[r];
        return x;
    }

    std::optional<GF2Matrix> inverse() const {
        if (rows_ != cols_) return std::nullopt;
        GF2Matrix m = *this;
        GF2Matrix inv = identity(rows_);
        int rank = m.eliminate(&inv);
        if (rank != rows_) return std::nullopt;
        return inv;
    }

    std::vector<std::uint8_t> mul_vec(const std::vector<std::uint8_t>& v) const {
        std::vector<std::uint8_t> out(rows_, 0);
        for (int r = 0; r < rows_; ++r) {
            std::uint8_t acc = 0;
            for (int c = 0; c < cols_; ++c) acc ^= static_cast<std::uint8_t>(get(r, c) & (v[c] & 1));
            out[r] = acc;
        }
        return out;
    }

    friend bool operator==(const GF2Matrix& a, const GF2Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.bits_ == b.bits_;
    }

  private:
    std::size_t row_off(int r) const { return static_cast<std::size_t>(r) * words_; }

    void swap_rows(int a, int b) {
        if (a == b) return;
        for (int w = 0; w < words_; ++w) std::swap(bits_[row_off(a) + w], bits_[row_off(b) + w]);
    }

    void xor_row(int dst, int src) {
        for (int w = 0; w < words_; ++w) bits_[row_off(dst) + w] ^= bits_[row_off(src) + w];
    }

    // Row reduction in place; mirrors row ops onto `aug` when given. Returns rank.
    int eliminate(GF2Matrix* aug) {
        int rank = 0;
        for (int c = 0; c < cols_ && rank < rows_; ++c) {
            int p = -1;
            for (int r = rank; r < rows_; ++r)
                if (get(r, c)) { p = r; break; }
            if (p < 0) continue;
            swap_rows(rank, p);
            if (aug) aug->swap_rows(rank, p);
            for (int r = 0; r < rows_; ++r) {
                if (r != rank && get(r, c)) {
                    xor_row(r, rank);
                    if (aug) aug->xor_row(r, rank);
                }
            }
            ++rank;
        }
        return rank;
    }

    int rows_ = 0;
    int cols_ = 0;
    int words_ = 0;
    std::vector<std::uint64_t> bits_;
};

}  // namespace qaa
