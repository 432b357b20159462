#pragma once

#include <algorithm>
#include <limits>

#include "s1avg/common.hpp"

namespace s1avg::detail {

// Embedded Dormand-Prince 5(4) pair with FSAL, PI-free standard step control
// and cubic Hermite dense output between accepted steps.

struct RkOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
    double blowup = 1e6;           // max-norm bound; exceeding it throws BlowUp
    long max_steps = 20'000'000;
};

using Rhs = std::function<void(double, const Vec&, Vec&)>;
using Project = std::function<void(Vec&)>;          // per-step state projection
using StepCheck = std::function<void(double, const Vec&)>; // may throw (domain exit)

class DenseTrajectory {
public:
    double t_begin() const { return ts_.front(); }
    double t_end() const { return ts_.back(); }
    std::size_t step_count() const { return ts_.size() - 1; }
    const std::vector<double>& times() const { return ts_; }
    const Vec& state_at_node(std::size_t i) const { return ys_[i]; }

    Vec state(double t) const {
        const auto [i, th, h] = locate(t);
        const double h00 = (2 * th - 3) * th * th + 1, h10 = ((th - 2) * th + 1) * th;
        const double h01 = (3 - 2 * th) * th * th, h11 = (th - 1) * th * th;
        return h00 * ys_[i] + (h10 * h) * fs_[i] + h01 * ys_[i + 1] + (h11 * h) * fs_[i + 1];
    }

    Vec derivative(double t) const {
        const auto [i, th, h] = locate(t);
        const double d00 = 6 * th * (th - 1), d10 = (3 * th - 4) * th + 1;
        const double d01 = -6 * th * (th - 1), d11 = (3 * th - 2) * th;
        return (d00 / h) * ys_[i] + d10 * fs_[i] + (d01 / h) * ys_[i + 1] + d11 * fs_[i + 1];
    }

    void push(double t, Vec y, Vec f) {
        ts_.push_back(t);
        ys_.push_back(std::move(y));
        fs_.push_back(std::move(f));
    }

private:
    std::tuple<std::size_t, double, double> locate(double t) const {
        const bool fwd = ts_.back() >= ts_.front();
        const double lo = fwd ? ts_.front() : ts_.back();
        const double hi = fwd ? ts_.back() : ts_.front();
        const double slack = 1e-9 * (1.0 + hi - lo);
        if (t < lo - slack || t > hi + slack)
            throw Error("dense output query outside the integrated span");
        t = std::clamp(t, lo, hi);
        std::size_t i;
        if (fwd) {
            i = std::upper_bound(ts_.begin(), ts_.end(), t) - ts_.begin();
        } else {
            i = std::upper_bound(ts_.begin(), ts_.end(), t, std::greater<double>()) - ts_.begin();
        }
        i = std::clamp<std::size_t>(i, 1, ts_.size() - 1) - 1;
        const double h = ts_[i + 1] - ts_[i];
        return {i, (t - ts_[i]) / h, h};
    }

    std::vector<double> ts_;
    std::vector<Vec> ys_, fs_;
};

inline double error_norm(const Vec& err, const Vec& y0, const Vec& y1, double atol, double rtol) {
    double s = 0.0;
    for (int i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::fabs(y0[i]), std::fabs(y1[i]));
        const double e = err[i] / sc;
        s += e * e;
    }
    return std::sqrt(s / double(err.size()));
}

inline double initial_step(const Rhs& rhs, double t0, const Vec& y0, const Vec& f0, double dir,
                           double atol, double rtol, double span) {
    const auto scaled = [&](const Vec& v, const Vec& ref) {
        double s = 0.0;
        for (int i = 0; i < v.size(); ++i) {
            const double sc = atol + rtol * std::fabs(ref[i]);
            s += (v[i] / sc) * (v[i] / sc);
        }
        return std::sqrt(s / double(v.size()));
    };
    const double d0 = scaled(y0, y0), d1 = scaled(f0, y0);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    Vec y1 = y0 + dir * h0 * f0;
    Vec f1(y0.size());
    rhs(t0 + dir * h0, y1, f1);
    const double d2 = scaled(Vec(f1 - f0), y0) / h0;
    double h1;
    if (std::max(d1, d2) <= 1e-15)
        h1 = std::max(1e-6, h0 * 1e-3);
    else
        h1 = std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min({100.0 * h0, h1, span});
}

inline DenseTrajectory rk45_integrate(const Rhs& rhs, Vec y0, double t0, double t1, const RkOptions& opt,
                                      const Project& project = {}, const StepCheck& check = {}) {
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    const int n = int(y0.size());
    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    const double span = std::fabs(t1 - t0);

    DenseTrajectory out;
    if (project) project(y0);
    Vec f0(n);
    rhs(t0, y0, f0);
    out.push(t0, y0, f0);
    if (check) check(t0, y0);
    if (span == 0.0) return out;

    double h = std::min(initial_step(rhs, t0, y0, f0, dir, opt.abs_tol, opt.rel_tol, span), opt.max_step);
    double t = t0;
    Vec y = y0, k1 = f0;
    Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);

    for (long step = 0; step < opt.max_steps; ++step) {
        if (std::fabs(t - t1) <= 1e-14 * std::max(1.0, std::fabs(t1))) return out;
        h = std::min(h, std::fabs(t1 - t));
        if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(t)))
            throw StepUnderflow("rk45: step size underflow at t = " + std::to_string(t));
        const double hd = dir * h;

        ytmp = y + hd * (a21 * k1);
        rhs(t + c2 * hd, ytmp, k2);
        ytmp = y + hd * (a31 * k1 + a32 * k2);
        rhs(t + c3 * hd, ytmp, k3);
        ytmp = y + hd * (a41 * k1 + a42 * k2 + a43 * k3);
        rhs(t + c4 * hd, ytmp, k4);
        ytmp = y + hd * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        rhs(t + c5 * hd, ytmp, k5);
        ytmp = y + hd * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        rhs(t + hd, ytmp, k6);
        ynew = y + hd * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        rhs(t + hd, ynew, k7);
        err = hd * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        const double en = error_norm(err, y, ynew, opt.abs_tol, opt.rel_tol);
        if (en <= 1.0) {
            t += hd;
            y = ynew;
            if (project) {
                project(y);
                rhs(t, y, k7); // derivative at the projected state
            }
            k1 = k7;
            if (y.lpNorm<Eigen::Infinity>() > opt.blowup)
                throw BlowUp("rk45: trajectory norm exceeded " + std::to_string(opt.blowup) +
                             " at t = " + std::to_string(t));
            out.push(t, y, k1);
            if (check) check(t, y);
        }
        const double fac = (en == 0.0) ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
        h = std::min(h * fac, opt.max_step);
    }
    throw Error("rk45: exceeded max_steps");
}

} // namespace s1avg::detail
