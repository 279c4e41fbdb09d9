#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ap3d {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
        st[i] = st[i + 1] * s[i + 1];
    }
    return st;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << s[i] << (i + 1 < s.size() ? "," : "");
    }
    os << ")";
    return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

// Seeded RNG used everywhere; one generator per logical task so results do not
// depend on evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }
    std::int64_t uniform_int(std::int64_t n) {  // [0, n)
        std::uniform_int_distribution<std::int64_t> d(0, n - 1);
        return d(gen_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(gen_);
    }
    std::uint64_t raw() { return gen_(); }

    // Derive an independent stream (for per-item determinism under parallelism).
    Rng fork(std::uint64_t salt) const {
        std::uint64_t h = seed_mix_ ^ (salt + 0x9e3779b97f4a7c15ULL + (seed_mix_ << 6) + (seed_mix_ >> 2));
        return Rng(h);
    }

    explicit Rng(std::uint64_t seed, std::uint64_t mix) : gen_(seed), seed_mix_(mix) {}

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_mix_ = 0;

public:
    static Rng seeded(std::uint64_t seed) {
        Rng r(seed);
        r.seed_mix_ = seed;
        return r;
    }
};

inline int worker_threads() {
    if (const char* env = std::getenv("AP3D_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Each item must be independent; results are
// identical for any thread count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    int threads = std::min<std::int64_t>(worker_threads(), n);
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::int64_t> next{0};
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            while (true) {
                std::int64_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

// ---- small file helpers -------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "cannot open for writing: " + path.string());
    f << content;
}

// P5 binary PGM, 8-bit.
inline void write_pgm(const std::filesystem::path& path, std::int64_t h, std::int64_t w,
                      const std::vector<std::uint8_t>& pixels) {
    check(static_cast<std::int64_t>(pixels.size()) == h * w, "write_pgm: pixel count mismatch");
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "cannot open for writing: " + path.string());
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

inline std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::int64_t& h, std::int64_t& w) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "cannot open: " + path.string());
    std::string magic;
    f >> magic;
    check(magic == "P5", "read_pgm: not a P5 file: " + path.string());
    std::int64_t maxval = 0;
    f >> w >> h >> maxval;
    check(maxval == 255, "read_pgm: expected 8-bit data");
    f.get();  // single whitespace after header
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h * w));
    f.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    check(f.gcount() == static_cast<std::streamsize>(pixels.size()), "read_pgm: truncated file");
    return pixels;
}

inline std::uint8_t to_u8(double v) {
    double x = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<std::uint8_t>(x + 0.5);
}

}  // namespace ap3d
