#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace s1avg {

// Coordinate tuples are small (<= 8 entries: trivial bundle with k <= 7, or
// S^3 in R^4), so fixed-capacity Eigen vectors keep everything on the stack.
// Capacity 24 leaves room for stacked systems (three copies of a state) used
// by finite-difference flow differentials.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 24, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 8, 8>;

inline constexpr double two_pi = 6.283185307179586476925286766559;

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct StepUnderflow : Error {
    using Error::Error;
};
struct BlowUp : Error {
    using Error::Error;
};
struct NotSameFiber : Error {
    using Error::Error;
};
struct NotInvariant : Error {
    using Error::Error;
};
struct DomainExit : Error {
    using Error::Error;
};
struct FirstIntegralViolated : Error {
    using Error::Error;
};
struct MathDomainError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

/// Wraps an angle into [0, 2*pi).
inline double wrap_angle(double a) {
    double w = std::fmod(a, two_pi);
    if (w < 0.0) w += two_pi;
    if (w >= two_pi) w = 0.0;
    return w;
}

/// Shorter-arc distance between two angles.
inline double angle_distance(double a, double b) {
    double d = std::fabs(wrap_angle(a) - wrap_angle(b));
    return d > two_pi / 2.0 ? two_pi - d : d;
}

/// acos with a small slack band: arguments outside [-1-slack, 1+slack] are a
/// domain error, anything closer is clamped.
inline double clamped_acos(double x, double slack = 1e-9) {
    if (x > 1.0 + slack || x < -1.0 - slack)
        throw MathDomainError("acos argument " + std::to_string(x) + " outside [-1,1] beyond slack");
    return std::acos(std::fmin(1.0, std::fmax(-1.0, x)));
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

/// Slope of log(y) vs log(x); pairs with non-positive y are rejected.
inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    lx.reserve(x.size());
    ly.reserve(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw MathDomainError("log-log slope needs positive data");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return fit_slope(lx, ly);
}

/// i-th element of the van der Corput sequence in the given base.
inline double van_der_corput(std::uint64_t i, std::uint64_t base) {
    double r = 0.0, f = 1.0 / double(base);
    while (i > 0) {
        r += f * double(i % base);
        i /= base;
        f /= double(base);
    }
    return r;
}

/// Halton point (deterministic low-discrepancy) in [0,1)^dim, dim <= 6.
inline std::vector<double> halton_point(std::uint64_t i, int dim) {
    static const std::uint64_t primes[6] = {2, 3, 5, 7, 11, 13};
    std::vector<double> p(dim);
    for (int d = 0; d < dim; ++d) p[d] = van_der_corput(i + 1, primes[d]);
    return p;
}

namespace detail {

inline int& thread_count_ref() {
    static int n = []() {
        if (const char* env = std::getenv("S1AVG_THREADS")) {
            int v = std::atoi(env);
            if (v > 0) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : int(hw);
    }();
    return n;
}

} // namespace detail

inline void set_thread_count(int n) { detail::thread_count_ref() = n > 0 ? n : 1; }
inline int thread_count() { return detail::thread_count_ref(); }

/// Maximum of f(i) over i in [0, n). Evaluations are pure and independent, so
/// they run on a small thread pool; the max reduction is order-independent
/// and the result does not depend on the schedule.
inline std::pair<double, std::size_t> parallel_max_index(std::size_t n,
                                                         const std::function<double(std::size_t)>& f) {
    if (n == 0) throw Error("parallel_max_index: empty range");
    const int nt = std::min<int>(thread_count(), int(n));
    if (nt <= 1) {
        double best = f(0);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < n; ++i) {
            double v = f(i);
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        return {best, arg};
    }
    std::vector<double> best(nt, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> arg(nt, 0);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < n; i += std::size_t(nt)) {
                double v = f(i);
                if (v > best[t] || (v == best[t] && i < arg[t])) {
                    best[t] = v;
                    arg[t] = i;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    double b = best[0];
    std::size_t a = arg[0];
    for (int t = 1; t < nt; ++t) {
        // ties resolved by smallest index so the argmax is deterministic
        if (best[t] > b || (best[t] == b && arg[t] < a)) {
            b = best[t];
            a = arg[t];
        }
    }
    return {b, a};
}

} // namespace s1avg
