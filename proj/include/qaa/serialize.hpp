// Minimal word-stream binary serialization for checkpoints.
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "qaa/accumulators.hpp"
#include "qaa/errors.hpp"

namespace qaa {

struct WordWriter {
    std::vector<std::uint64_t> words;

    void u64(std::uint64_t v) { words.push_back(v); }
    void i64(std::int64_t v) { words.push_back(static_cast<std::uint64_t>(v)); }
    void f64(double v) { words.push_back(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        std::uint64_t w = 0;
        int k = 0;
        for (unsigned char ch : s) {
            w |= static_cast<std::uint64_t>(ch) << (8 * k);
            if (++k == 8) {
                words.push_back(w);
                w = 0;
                k = 0;
            }
        }
        if (k) words.push_back(w);
    }
};

struct WordReader {
    const std::uint64_t* data;
    std::size_t len;
    std::size_t pos = 0;

    std::uint64_t u64() {
        if (pos >= len) throw io_error("checkpoint: truncated stream");
        return data[pos++];
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const auto n = static_cast<std::size_t>(u64());
        std::string s(n, '\0');
        std::uint64_t w = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 8 == 0) w = u64();
            s[i] = static_cast<char>((w >> (8 * (i % 8))) & 0xff);
        }
        return s;
    }
    const std::uint64_t* take(std::size_t k) {
        if (pos + k > len) throw io_error("checkpoint: truncated stream");
        const std::uint64_t* p = data + pos;
        pos += k;
        return p;
    }
};

inline void serialize_accumulator(WordWriter& w, const MeasurementAccumulator& acc) {
    w.u64(acc.scalars.size());
    for (const auto& [name, series] : acc.scalars) {
        w.str(name);
        w.u64(series.bins.size());
        for (double b : series.bins) w.f64(b);
        w.f64(series.partial);
        w.i64(series.partial_count);
    }
    w.u64(acc.vectors.size());
    for (const auto& [name, series] : acc.vectors) {
        w.str(name);
        w.u64(series.size);
        w.u64(series.bins.size());
        for (const auto& bin : series.bins)
            for (double v : bin) w.f64(v);
        for (double v : series.partial) w.f64(v);
        w.i64(series.partial_count);
    }
}

inline MeasurementAccumulator deserialize_accumulator(WordReader& r) {
    MeasurementAccumulator acc;
    const auto ns = r.u64();
    for (std::uint64_t i = 0; i < ns; ++i) {
        const std::string name = r.str();
        BinSeries series;
        const auto nb = r.u64();
        series.bins.resize(nb);
        for (auto& b : series.bins) b = r.f64();
        series.partial = r.f64();
        series.partial_count = r.i64();
        acc.scalars.emplace(name, std::move(series));
    }
    const auto nv = r.u64();
    for (std::uint64_t i = 0; i < nv; ++i) {
        const std::string name = r.str();
        const auto size = static_cast<std::size_t>(r.u64());
        VectorBinSeries series(size);
        const auto nb = r.u64();
        series.bins.assign(nb, std::vector<double>(size));
        for (auto& bin : series.bins)
            for (auto& v : bin) v = r.f64();
        for (auto& v : series.partial) v = r.f64();
        series.partial_count = r.i64();
        acc.vectors.emplace(name, std::move(series));
    }
    return acc;
}

inline void write_words_file(const std::string& path, const char magic[8],
                             const std::vector<std::uint64_t>& words) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + path);
    out.write(magic, 8);
    const std::uint64_t n = words.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(8 * words.size()));
}

inline std::vector<std::uint64_t> read_words_file(const std::string& path, const char magic[8]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    char head[8];
    in.read(head, 8);
    if (in.gcount() != 8 || std::string(head, 8) != std::string(magic, 8))
        throw io_error("bad magic header in " + path);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    std::vector<std::uint64_t> words(n);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(8 * n));
    if (static_cast<std::uint64_t>(in.gcount()) != 8 * n) throw io_error("truncated file " + path);
    return words;
}

}  // namespace qaa
