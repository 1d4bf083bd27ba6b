// Binned Monte Carlo accumulators: mergeable, with jackknife-free errors
// from bin scatter and a Geweke-style equilibration check.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qaa/errors.hpp"

namespace qaa {

inline constexpr int kMinBinsForErrors = 20;

struct BinSeries {
    std::vector<double> bins;
    double partial = 0.0;
    long partial_count = 0;

    void add(double v) {
        partial += v;
        ++partial_count;
    }

    void close_bin() {
        if (partial_count == 0) return;
        bins.push_back(partial / partial_count);
        partial = 0.0;
        partial_count = 0;
    }

    long n_bins() const { return static_cast<long>(bins.size()); }

    double mean() const {
        if (bins.empty()) throw error("BinSeries: no closed bins");
        double s = 0.0;
        for (double b : bins) s += b;
        return s / bins.size();
    }

    // Standard error of the mean from bin scatter.
    double stderr_mean() const {
        const long n = n_bins();
        if (n < 2) throw error("BinSeries: need >= 2 bins for errors");
        const double m = mean();
        double v = 0.0;
        for (double b : bins) v += (b - m) * (b - m);
        return std::sqrt(v / (static_cast<double>(n) * (n - 1)));
    }

    bool errors_reportable() const { return n_bins() >= kMinBinsForErrors; }

    void merge(const BinSeries& other) {
        if (partial_count != 0 || other.partial_count != 0)
            throw error("BinSeries::merge: close bins before merging");
        bins.insert(bins.end(), other.bins.begin(), other.bins.end());
    }
};

struct VectorBinSeries {
    std::size_t size = 0;
    std::vector<std::vector<double>> bins;
    std::vector<double> partial;
    long partial_count = 0;

    explicit VectorBinSeries(std::size_t sz = 0) : size(sz), partial(sz, 0.0) {}

    void add(const std::vector<double>& v) {
        if (v.size() != size) throw error("VectorBinSeries: size mismatch");
        for (std::size_t i = 0; i < size; ++i) partial[i] += v[i];
        ++partial_count;
    }

    void add_at(std::size_t i, double v) { partial.at(i) += v; }
    void count_sample() { ++partial_count; }

    void close_bin() {
        if (partial_count == 0) return;
        std::vector<double> b(size);
        for (std::size_t i = 0; i < size; ++i) b[i] = partial[i] / partial_count;
        bins.push_back(std::move(b));
        partial.assign(size, 0.0);
        partial_count = 0;
    }

    long n_bins() const { return static_cast<long>(bins.size()); }

    std::vector<double> mean() const {
        if (bins.empty()) throw error("VectorBinSeries: no closed bins");
        std::vector<double> m(size, 0.0);
        for (const auto& b : bins)
            for (std::size_t i = 0; i < size; ++i) m[i] += b[i];
        for (auto& x : m) x /= bins.size();
        return m;
    }

    std::vector<double> stderr_mean() const {
        const long n = n_bins();
        if (n < 2) throw error("VectorBinSeries: need >= 2 bins");
        auto m = mean();
        std::vector<double> v(size, 0.0);
        for (const auto& b : bins)
            for (std::size_t i = 0; i < size; ++i) v[i] += (b[i] - m[i]) * (b[i] - m[i]);
        for (auto& x : v) x = std::sqrt(x / (static_cast<double>(n) * (n - 1)));
        return v;
    }

    void merge(const VectorBinSeries& other) {
        if (size != other.size) throw error("VectorBinSeries::merge: size mismatch");
        if (partial_count != 0 || other.partial_count != 0)
            throw error("VectorBinSeries::merge: close bins before merging");
        bins.insert(bins.end(), other.bins.begin(), other.bins.end());
    }
};

// Named collection of binned observables; the merge is associative and
// commutative up to bin order, and exact for aligned half-runs.
struct MeasurementAccumulator {
    std::map<std::string, BinSeries> scalars;
    std::map<std::string, VectorBinSeries> vectors;

    BinSeries& scalar(const std::string& name) { return scalars[name]; }
    VectorBinSeries& vector_obs(const std::string& name, std::size_t size) {
        auto it = vectors.find(name);
        if (it == vectors.end()) it = vectors.emplace(name, VectorBinSeries(size)).first;
        return it->second;
    }

    void close_bin() {
        for (auto& [k, v] : scalars) v.close_bin();
        for (auto& [k, v] : vectors) v.close_bin();
    }

    void merge(const MeasurementAccumulator& other) {
        for (const auto& [k, v] : other.scalars) {
            auto it = scalars.find(k);
            if (it == scalars.end())
                scalars.emplace(k, v);
            else
                it->second.merge(v);
        }
        for (const auto& [k, v] : other.vectors) {
            auto it = vectors.find(k);
            if (it == vectors.end())
                vectors.emplace(k, v);
            else
                it->second.merge(v);
        }
    }

    // Geweke-style drift test on one scalar: z-score between the first and
    // last quarter of bins. |z| >= 3 flags an unequilibrated run.
    double geweke_z(const std::string& name) const {
        auto it = scalars.find(name);
        if (it == scalars.end()) throw error("geweke_z: unknown observable " + name);
        const auto& bins = it->second.bins;
        const long n = static_cast<long>(bins.size());
        if (n < 8) throw error("geweke_z: need >= 8 bins");
        const long q = n / 4;
        auto stats = [&](long lo, long hi) {
            double m = 0.0;
            for (long i = lo; i < hi; ++i) m += bins[i];
            m /= (hi - lo);
            double v = 0.0;
            for (long i = lo; i < hi; ++i) v += (bins[i] - m) * (bins[i] - m);
            v /= (hi - lo) * std::max<long>(1, hi - lo - 1);
            return std::pair<double, double>(m, v);
        };
        auto [m1, v1] = stats(0, q);
        auto [m2, v2] = stats(n - q, n);
        const double denom = std::sqrt(v1 + v2);
        return denom > 0 ? (m1 - m2) / denom : 0.0;
    }

    bool equilibrated(const std::string& name) const { return std::abs(geweke_z(name)) < 3.0; }
};

}  // namespace qaa
