#pragma once

#include <memory>

#include "s1avg/detail/rk45.hpp"
#include "s1avg/geometry.hpp"

namespace s1avg {

using TimeField = std::function<Vec(double, const Point&)>;

struct FlowSpec {
    const ManifoldModel* model = nullptr;
    VectorField field;
    double t_end = 1.0; // t_span is [0, t_end]; t_end may be negative
    double rel_tol = 1e-10;
    double abs_tol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
    double blowup = 0.0; // 0 -> model default
};

namespace detail {

inline RkOptions rk_options(const ManifoldModel& M, double rel_tol, double abs_tol, double max_step,
                            double blowup) {
    RkOptions o;
    o.rel_tol = rel_tol;
    o.abs_tol = abs_tol;
    o.max_step = max_step;
    o.blowup = blowup > 0.0 ? blowup : M.blowup_bound();
    return o;
}

inline Project state_projection(const ManifoldModel& M) {
    if (!M.projects_state()) return {};
    const ManifoldModel* m = &M;
    return [m](Vec& y) { m->project_state(y); };
}

inline Project orbit_state_projection(const ManifoldModel& M) {
    if (!M.projects_state()) return {};
    const ManifoldModel* m = &M;
    return [m](Vec& y) { m->orbit_project_state(y); };
}

} // namespace detail

/// Dense-output trajectory on a manifold model, queryable at any time in the
/// integrated span (cubic Hermite between accepted steps; states renormalized
/// by the model on query).
class Trajectory {
public:
    Trajectory(const ManifoldModel& M, std::shared_ptr<const detail::DenseTrajectory> dense)
        : model_(&M), dense_(std::move(dense)) {}

    double t_begin() const { return dense_->t_begin(); }
    double t_end() const { return dense_->t_end(); }
    std::size_t step_count() const { return dense_->step_count(); }

    Point at(double t) const { return model_->make_point(dense_->state(t)); }

    TangentVector velocity(double t) const {
        const Point p = at(t);
        return TangentVector{p, model_->tangent_project(p, dense_->derivative(t))};
    }

    PointCurve curve() const {
        const ManifoldModel* m = model_;
        auto d = dense_;
        PointCurve c;
        c.t0 = std::min(t_begin(), t_end());
        c.t1 = std::max(t_begin(), t_end());
        c.at = [m, d](double t) { return m->make_point(d->state(t)); };
        c.velocity = [m, d](double t) {
            Vec y = d->state(t);
            m->project_state(y);
            return m->tangent_project(Point{m->id(), y}, d->derivative(t));
        };
        return c;
    }

    const detail::DenseTrajectory& dense() const { return *dense_; }

private:
    const ManifoldModel* model_;
    std::shared_ptr<const detail::DenseTrajectory> dense_;
};

/// Orbit-space counterpart of Trajectory.
class OrbitTrajectory {
public:
    OrbitTrajectory(const ManifoldModel& M, std::shared_ptr<const detail::DenseTrajectory> dense)
        : model_(&M), dense_(std::move(dense)) {}

    double t_begin() const { return dense_->t_begin(); }
    double t_end() const { return dense_->t_end(); }

    OrbitPoint at(double t) const { return model_->make_orbit_point(dense_->state(t)); }

    OrbitCurve curve() const {
        const ManifoldModel* m = model_;
        auto d = dense_;
        OrbitCurve c;
        c.t0 = std::min(dense_->t_begin(), dense_->t_end());
        c.t1 = std::max(dense_->t_begin(), dense_->t_end());
        c.at = [m, d](double t) { return m->make_orbit_point(d->state(t)); };
        return c;
    }

private:
    const ManifoldModel* model_;
    std::shared_ptr<const detail::DenseTrajectory> dense_;
};

/// Integrates a time-dependent field from p over [t0, t1].
inline Trajectory integrate_time_field(const ManifoldModel& M, const TimeField& f, const Point& p,
                                       double t0, double t1, double rel_tol = 1e-10,
                                       double abs_tol = 1e-10,
                                       double max_step = std::numeric_limits<double>::infinity(),
                                       double blowup = 0.0,
                                       const std::function<void(double, const Point&)>& check = {}) {
    check_model(M, p, "integrate_time_field");
    const ManifoldModel* m = &M;
    detail::Rhs rhs = [m, &f](double t, const Vec& y, Vec& dy) { dy = f(t, Point{m->id(), y}); };
    detail::StepCheck sc;
    if (check) sc = [m, &check](double t, const Vec& y) { check(t, m->make_point(y)); };
    auto dense = std::make_shared<detail::DenseTrajectory>(detail::rk45_integrate(
        rhs, p.coords, t0, t1, detail::rk_options(M, rel_tol, abs_tol, max_step, blowup),
        detail::state_projection(M), sc));
    return Trajectory(M, std::move(dense));
}

/// Trajectory of the flow Fl^t of spec.field through p, t in [0, t_end].
inline Trajectory integrate_flow(const FlowSpec& spec, const Point& p,
                                 const std::function<void(double, const Point&)>& check = {}) {
    const ManifoldModel& M = *spec.model;
    const VectorField& X = spec.field;
    return integrate_time_field(
        M, [&X](double, const Point& q) { return X.components(q); }, p, 0.0, spec.t_end, spec.rel_tol,
        spec.abs_tol, spec.max_step, spec.blowup, check);
}

inline Trajectory integrate_field(const ManifoldModel& M, const VectorField& X, const Point& p, double T,
                                  double rel_tol = 1e-10, double abs_tol = 1e-10) {
    FlowSpec spec{&M, X, T, rel_tol, abs_tol};
    return integrate_flow(spec, p);
}

/// Integrates an orbit-space field z' = f(z) from z0 over [0, T].
inline OrbitTrajectory integrate_orbit(const ManifoldModel& M,
                                       const std::function<Vec(const OrbitPoint&)>& f,
                                       const OrbitPoint& z0, double T, double rel_tol = 1e-10,
                                       double abs_tol = 1e-10,
                                       const std::function<void(double, const OrbitPoint&)>& check = {},
                                       double max_step = std::numeric_limits<double>::infinity()) {
    check_model(M, z0, "integrate_orbit");
    const ManifoldModel* m = &M;
    detail::Rhs rhs = [m, &f](double, const Vec& y, Vec& dy) {
        const OrbitPoint z{m->id(), y};
        dy = m->orbit_tangent_project(z, f(z));
    };
    detail::StepCheck sc;
    if (check) sc = [m, &check](double t, const Vec& y) { check(t, m->make_orbit_point(y)); };
    auto dense = std::make_shared<detail::DenseTrajectory>(
        detail::rk45_integrate(rhs, z0.coords, 0.0, T,
                               detail::rk_options(M, rel_tol, abs_tol, max_step, 0.0),
                               detail::orbit_state_projection(M), sc));
    return OrbitTrajectory(M, std::move(dense));
}

/// Differential d_p Fl^t applied to v, by a central difference of two nearby
/// trajectories integrated as one stacked system (shared adaptive steps keep
/// the difference quotient clean). Offset h = 1e-6 (1+|p|)/|v|.
inline TangentVector flow_differential(const FlowSpec& spec, const Point& p, const TangentVector& v,
                                       double t) {
    const ManifoldModel& M = *spec.model;
    check_model(M, p, "flow_differential");
    const int n = M.coord_dim();
    const double vn = v.components.norm();
    if (t == 0.0) return TangentVector{p, M.tangent_project(p, v.components)};
    if (vn == 0.0) {
        Trajectory traj = integrate_flow(FlowSpec{spec.model, spec.field, t, spec.rel_tol, spec.abs_tol,
                                                  spec.max_step, spec.blowup},
                                         p);
        return TangentVector{traj.at(t), Vec::Zero(n)};
    }
    const double h = 1e-6 * (1.0 + p.coords.norm()) / vn;

    const ManifoldModel* m = &M;
    const VectorField& X = spec.field;
    detail::Rhs rhs = [m, &X, n](double, const Vec& y, Vec& dy) {
        dy.resize(3 * n);
        for (int b = 0; b < 3; ++b)
            dy.segment(b * n, n) = X.components(Point{m->id(), y.segment(b * n, n)});
    };
    detail::Project proj;
    if (M.projects_state()) {
        proj = [m, n](Vec& y) {
            for (int b = 0; b < 3; ++b) {
                Vec s = y.segment(b * n, n);
                m->project_state(s);
                y.segment(b * n, n) = s;
            }
        };
    }
    Vec y0(3 * n);
    y0.segment(0, n) = p.coords;
    y0.segment(n, n) = M.nudge(p, v.components, h).coords;
    y0.segment(2 * n, n) = M.nudge(p, v.components, -h).coords;

    auto opts = detail::rk_options(M, spec.rel_tol, spec.abs_tol, spec.max_step, spec.blowup);
    auto dense = detail::rk45_integrate(rhs, y0, 0.0, t, opts, proj);
    const Vec yT = dense.state_at_node(dense.step_count());
    const Point q = M.make_point(yT.segment(0, n));
    Vec d = (yT.segment(n, n) - yT.segment(2 * n, n)) / (2.0 * h);
    return TangentVector{q, M.tangent_project(q, d)};
}

/// Pullback (Fl^t)^* Y as a field: m -> (d_m Fl^t)^{-1} Y(Fl^t(m)), the
/// inverse differential computed as the differential of the time -t flow.
inline VectorField pullback_field(const FlowSpec& spec, double t, const VectorField& Y) {
    const ManifoldModel* m = spec.model;
    FlowSpec fwd = spec;
    fwd.t_end = t;
    return VectorField{m->id(), [fwd, t, Y, m](const Point& p) {
                           Trajectory traj = integrate_flow(fwd, p);
                           const Point q = traj.at(t);
                           const TangentVector w{q, Y.components(q)};
                           FlowSpec back = fwd;
                           const TangentVector r = flow_differential(back, q, w, -t);
                           return m->tangent_project(p, r.components);
                       }};
}

/// Horizontal lift of an orbit curve through m0: solves the lift ODE taking,
/// at each step, the unique horizontal vector projecting onto the curve
/// velocity. n_steps bounds the step size (span / n_steps).
inline PointCurve horizontal_lift_curve(const ManifoldModel& M, const OrbitCurve& alpha, const Point& m0,
                                        int n_steps = 256) {
    check_model(M, m0, "horizontal_lift_curve");
    if (M.orbit_distance(alpha.at(alpha.t0), M.project(m0)) > 1e-6)
        throw Error("horizontal_lift_curve: curve does not start at the fiber of m0");
    const ManifoldModel* m = &M;
    detail::Rhs rhs = [m, &alpha](double t, const Vec& y, Vec& dy) {
        const Point p{m->id(), y};
        dy = m->horizontal_lift_vector(p, detail::orbit_curve_velocity(*m, alpha, t));
    };
    auto opts = detail::rk_options(M, 1e-10, 1e-10, (alpha.t1 - alpha.t0) / std::max(1, n_steps), 0.0);
    auto dense = std::make_shared<detail::DenseTrajectory>(
        detail::rk45_integrate(rhs, m0.coords, alpha.t0, alpha.t1, opts, detail::state_projection(M)));
    return Trajectory(M, std::move(dense)).curve();
}

} // namespace s1avg
