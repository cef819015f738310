#pragma once

// Shared plumbing: error type, deterministic random stream, float formatting,
// and a fixed-order parallel loop helper.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace posealign {

enum class ErrorCode {
    io,          // file missing / unreadable / unwritable
    parse,       // malformed file contents
    validation,  // inputs violate a documented invariant
    shape,       // dimension mismatch between otherwise valid objects
    numeric,     // non-finite or zero-norm data where finite/nonzero required
    degenerate,  // degenerate pose (anchor has no planar extent)
    usage        // bad command-line arguments
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::io: return "E_IO";
        case ErrorCode::parse: return "E_PARSE";
        case ErrorCode::validation: return "E_VALIDATE";
        case ErrorCode::shape: return "E_SHAPE";
        case ErrorCode::numeric: return "E_NUMERIC";
        case ErrorCode::degenerate: return "E_DEGENERATE";
        case ErrorCode::usage: return "E_USAGE";
    }
    return "E_UNKNOWN";
}

class PoseError : public std::runtime_error {
public:
    PoseError(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Deterministic random stream. Every draw is derived from the raw mt19937_64
// output so results do not depend on the standard library's distribution
// implementations and stay reproducible across platforms.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(engine_() % n);
    }

    std::uint64_t raw() { return engine_(); }

    // Fisher-Yates, driven by this stream only
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// All floating-point report output uses 9 significant digits.
inline std::string format_float(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    return buf;
}

// Nearest double to the 9-significant-digit decimal of v; used so JSON
// reports print the same digits as the CSV reports.
inline double round_to_9_digits(double value) {
    return std::strtod(format_float(value).c_str(), nullptr);
}

inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("POSEALIGN_THREADS")) {
        int parsed = std::atoi(env);
        if (parsed > 0) return parsed;
    }
    return 1;
}

// Runs fn(i) for i in [0, n). Each index writes only its own outputs, so the
// result is identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    threads = resolve_thread_count(threads);
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace posealign
