#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>

#include "s1avg/common.hpp"

namespace s1avg {

enum class ModelKind { TrivialBundle, Hopf };

struct ModelId {
    ModelKind kind = ModelKind::TrivialBundle;
    int k = 1; // base dimension for the trivial bundle, 0 for Hopf
    friend bool operator==(const ModelId& a, const ModelId& b) {
        return a.kind == b.kind && a.k == b.k;
    }
    friend bool operator!=(const ModelId& a, const ModelId& b) { return !(a == b); }
};

/// A point on a manifold model. Trivial bundle: (phi, x_1..x_k) with the
/// canonical representative keeping phi in [0, 2*pi). Hopf: (a,b,c,d) on the
/// unit sphere in R^4, identified with (z1, z2) = (a+ib, c+id).
struct Point {
    ModelId model;
    Vec coords;
};

struct TangentVector {
    Point base;
    Vec components;
};

/// A point of the orbit space O = M/S^1. Trivial bundle: x in R^k.
/// Hopf: a point of the radius-1/2 sphere in R^3.
struct OrbitPoint {
    ModelId model;
    Vec coords;
};

using ScalarField = std::function<double(const Point&)>;

/// A smooth assignment point -> tangent vector, stored as a closure over the
/// component tuple. Fields produced by operators capture their inputs by
/// pointer; those inputs must outlive the field.
struct VectorField {
    ModelId model;
    std::function<Vec(const Point&)> components;
    TangentVector operator()(const Point& p) const { return TangentVector{p, components(p)}; }
};

struct PointCurve {
    double t0 = 0.0, t1 = 1.0;
    std::function<Point(double)> at;
    std::function<Vec(double)> velocity; // optional; finite differences when empty
};

struct OrbitCurve {
    double t0 = 0.0, t1 = 1.0;
    std::function<OrbitPoint(double)> at;
    std::function<Vec(double)> velocity; // optional
};

// ---------------------------------------------------------------------------
// Manifold models
// ---------------------------------------------------------------------------

/// An S^1-principal bundle model carrying an invariant metric, the circle
/// action with its infinitesimal generator, the orbit projection, and the
/// closed-form dictionary (action differential, distances, frames) every
/// other module builds on. Two concrete models ship: S^1 x R^k with the
/// product metric and S^3 -> S^2(1/2) with the round metric; the interface
/// is open for further models.
class ManifoldModel {
public:
    virtual ~ManifoldModel() = default;

    const ModelId& id() const { return id_; }
    int dim() const { return dim_; }               // manifold dimension
    int coord_dim() const { return coord_dim_; }   // stored coordinate arity
    int orbit_dim() const { return orbit_dim_; }
    int orbit_coord_dim() const { return orbit_coord_dim_; }

    /// Frequency of the periodic flow at p; positive on the working domain.
    double omega(const Point& p) const { return omega_(p); }
    const ScalarField& omega_field() const { return omega_; }

    /// Infinitesimal generator of the circle action (components at p).
    virtual Vec generator(const Point& p) const = 0;

    /// The circle action Fl_Upsilon^theta; 2*pi-periodic in theta.
    virtual Point action(const Point& p, double theta) const = 0;

    /// Differential of the action applied to a component tuple. For both
    /// shipped models the differential does not depend on the base point
    /// (translation resp. a rigid rotation of R^4).
    virtual Vec action_push(double theta, const Vec& components) const = 0;

    virtual OrbitPoint project(const Point& p) const = 0;

    /// d rho at p applied to a component tuple.
    virtual Vec project_push(const Point& p, const Vec& components) const = 0;

    /// A section of the bundle: a point in the fiber over z. Not globally
    /// continuous on the Hopf bundle (no global section exists); used only
    /// pointwise.
    virtual Point section(const OrbitPoint& z) const = 0;

    virtual double metric(const Point& p, const Vec& u, const Vec& v) const = 0;
    double norm(const Point& p, const Vec& u) const { return std::sqrt(std::max(0.0, metric(p, u, u))); }

    virtual double orbit_metric(const OrbitPoint& z, const Vec& u, const Vec& v) const = 0;
    double orbit_norm(const OrbitPoint& z, const Vec& u) const {
        return std::sqrt(std::max(0.0, orbit_metric(z, u, u)));
    }

    virtual double distance(const Point& p, const Point& q) const = 0;
    virtual double orbit_distance(const OrbitPoint& z1, const OrbitPoint& z2) const = 0;

    /// Projects a component tuple onto the tangent space at p (identity for
    /// the trivial bundle, removal of the radial part on S^3).
    virtual Vec tangent_project(const Point& p, const Vec& v) const = 0;

    /// Canonical representative: wraps phi into [0, 2*pi) resp. renormalizes
    /// onto S^3.
    virtual Point normalize(const Point& p) const = 0;

    /// Point reached from p along direction v at parameter t, staying on the
    /// manifold; used for finite-difference stencils. Does not wrap angles,
    /// so stencils never straddle a coordinate seam.
    virtual Point nudge(const Point& p, const Vec& v, double t) const = 0;

    virtual OrbitPoint orbit_normalize(const OrbitPoint& z) const = 0;
    virtual Vec orbit_tangent_project(const OrbitPoint& z, const Vec& w) const = 0;
    virtual OrbitPoint orbit_nudge(const OrbitPoint& z, const Vec& w, double t) const = 0;

    /// Orthonormal tangent frame at p; frame[0] is the normalized generator.
    virtual std::vector<Vec> tangent_frame(const Point& p) const = 0;

    /// Orthonormal basis of the horizontal subspace at p.
    std::vector<Vec> horizontal_frame(const Point& p) const {
        auto f = tangent_frame(p);
        return std::vector<Vec>(f.begin() + 1, f.end());
    }

    /// Orthonormal tangent frame of the orbit space at z.
    virtual std::vector<Vec> orbit_frame(const OrbitPoint& z) const = 0;

    /// The unique horizontal u at p with d rho(u) = w.
    virtual Vec horizontal_lift_vector(const Point& p, const Vec& w) const = 0;

    /// Default blow-up bound for trajectories (exit from any compact domain).
    virtual double blowup_bound() const = 0;

    /// Whether integrator states need a per-step projection back onto the
    /// model (constraint manifolds).
    virtual bool projects_state() const { return false; }
    /// Projects a raw integrator state onto the model; no-op by default.
    virtual void project_state(Vec&) const {}
    virtual void orbit_project_state(Vec&) const {}

    Point make_point(const Vec& coords) const {
        Point p{id_, coords};
        return normalize(p);
    }
    OrbitPoint make_orbit_point(const Vec& coords) const { return orbit_normalize(OrbitPoint{id_, coords}); }

    static std::shared_ptr<const ManifoldModel> trivial(int k, ScalarField omega);
    static std::shared_ptr<const ManifoldModel> hopf(ScalarField omega);

protected:
    ManifoldModel(ModelId id, ScalarField omega, int dim, int coord_dim, int orbit_dim, int orbit_coord_dim)
        : id_(id),
          omega_(std::move(omega)),
          dim_(dim),
          coord_dim_(coord_dim),
          orbit_dim_(orbit_dim),
          orbit_coord_dim_(orbit_coord_dim) {}

    ModelId id_;
    ScalarField omega_;
    int dim_, coord_dim_, orbit_dim_, orbit_coord_dim_;
};

inline void check_model(const ManifoldModel& M, const Point& p, const char* where) {
    if (p.model != M.id()) throw Error(std::string(where) + ": point belongs to a different model");
}

inline void check_model(const ManifoldModel& M, const OrbitPoint& z, const char* where) {
    if (z.model != M.id()) throw Error(std::string(where) + ": orbit point belongs to a different model");
}

namespace detail {

class TrivialBundleModel final : public ManifoldModel {
public:
    TrivialBundleModel(int k, ScalarField omega)
        : ManifoldModel(ModelId{ModelKind::TrivialBundle, k}, std::move(omega), k + 1, k + 1, k, k) {
        if (k < 1 || k > 7) throw Error("trivial bundle supports 1 <= k <= 7");
    }

    Vec generator(const Point& p) const override {
        Vec g = Vec::Zero(coord_dim_);
        (void)p;
        g[0] = 1.0;
        return g;
    }

    Point action(const Point& p, double theta) const override {
        Point q = p;
        q.coords[0] = wrap_angle(p.coords[0] + theta);
        return q;
    }

    Vec action_push(double, const Vec& components) const override { return components; }

    OrbitPoint project(const Point& p) const override { return OrbitPoint{id_, p.coords.tail(id_.k)}; }

    Vec project_push(const Point&, const Vec& components) const override {
        return components.tail(id_.k);
    }

    Point section(const OrbitPoint& z) const override {
        Vec c(coord_dim_);
        c[0] = 0.0;
        c.tail(id_.k) = z.coords;
        return Point{id_, c};
    }

    double metric(const Point&, const Vec& u, const Vec& v) const override { return u.dot(v); }

    double orbit_metric(const OrbitPoint&, const Vec& u, const Vec& v) const override { return u.dot(v); }

    double distance(const Point& p, const Point& q) const override {
        double da = angle_distance(p.coords[0], q.coords[0]);
        double dx2 = (p.coords.tail(id_.k) - q.coords.tail(id_.k)).squaredNorm();
        return std::sqrt(da * da + dx2);
    }

    double orbit_distance(const OrbitPoint& z1, const OrbitPoint& z2) const override {
        return (z1.coords - z2.coords).norm();
    }

    Vec tangent_project(const Point&, const Vec& v) const override { return v; }

    Point normalize(const Point& p) const override {
        Point q = p;
        q.coords[0] = wrap_angle(p.coords[0]);
        return q;
    }

    Point nudge(const Point& p, const Vec& v, double t) const override {
        return Point{id_, p.coords + t * v};
    }

    OrbitPoint orbit_normalize(const OrbitPoint& z) const override { return z; }

    Vec orbit_tangent_project(const OrbitPoint&, const Vec& w) const override { return w; }

    OrbitPoint orbit_nudge(const OrbitPoint& z, const Vec& w, double t) const override {
        return OrbitPoint{id_, z.coords + t * w};
    }

    std::vector<Vec> tangent_frame(const Point&) const override {
        std::vector<Vec> f(coord_dim_);
        for (int i = 0; i < coord_dim_; ++i) {
            f[i] = Vec::Zero(coord_dim_);
            f[i][i] = 1.0;
        }
        return f;
    }

    std::vector<Vec> orbit_frame(const OrbitPoint&) const override {
        std::vector<Vec> f(id_.k);
        for (int i = 0; i < id_.k; ++i) {
            f[i] = Vec::Zero(id_.k);
            f[i][i] = 1.0;
        }
        return f;
    }

    Vec horizontal_lift_vector(const Point&, const Vec& w) const override {
        Vec u = Vec::Zero(coord_dim_);
        u.tail(id_.k) = w;
        return u;
    }

    double blowup_bound() const override { return 1e6; }
};

class HopfModel final : public ManifoldModel {
public:
    explicit HopfModel(ScalarField omega)
        : ManifoldModel(ModelId{ModelKind::Hopf, 0}, std::move(omega), 3, 4, 2, 3) {}

    // Left multiplication by the quaternion i gives the generator; together
    // with j and k it yields a global orthonormal frame on S^3.
    Vec generator(const Point& p) const override {
        const Vec& q = p.coords;
        Vec g(4);
        g << -q[1], q[0], -q[3], q[2];
        return g;
    }

    Point action(const Point& p, double theta) const override {
        const double c = std::cos(theta), s = std::sin(theta);
        const Vec& q = p.coords;
        Vec r(4);
        r << c * q[0] - s * q[1], s * q[0] + c * q[1], c * q[2] - s * q[3], s * q[2] + c * q[3];
        return Point{id_, r};
    }

    Vec action_push(double theta, const Vec& v) const override {
        const double c = std::cos(theta), s = std::sin(theta);
        Vec r(4);
        r << c * v[0] - s * v[1], s * v[0] + c * v[1], c * v[2] - s * v[3], s * v[2] + c * v[3];
        return r;
    }

    // rho(a,b,c,d) = (Re z1 conj(z2), Im z1 conj(z2), (|z1|^2-|z2|^2)/2),
    // landing on the radius-1/2 sphere.
    OrbitPoint project(const Point& p) const override {
        const Vec& q = p.coords;
        Vec z(3);
        z << q[0] * q[2] + q[1] * q[3], q[1] * q[2] - q[0] * q[3],
            0.5 * (q[0] * q[0] + q[1] * q[1] - q[2] * q[2] - q[3] * q[3]);
        return OrbitPoint{id_, z};
    }

    Vec project_push(const Point& p, const Vec& v) const override {
        const Vec& q = p.coords;
        Vec r(3);
        r << q[2] * v[0] + q[3] * v[1] + q[0] * v[2] + q[1] * v[3],
            -q[3] * v[0] + q[2] * v[1] + q[1] * v[2] - q[0] * v[3],
            q[0] * v[0] + q[1] * v[1] - q[2] * v[2] - q[3] * v[3];
        return r;
    }

    Point section(const OrbitPoint& z) const override {
        // 2z = (X, Y, Zc) on the unit sphere; pick the larger of |z1|, |z2|
        // real and positive.
        const double X = 2.0 * z.coords[0], Y = 2.0 * z.coords[1], Zc = 2.0 * z.coords[2];
        Vec c(4);
        if (Zc >= 0.0) {
            const double r1 = std::sqrt((1.0 + Zc) / 2.0);
            c << r1, 0.0, (X) / (2.0 * r1), (-Y) / (2.0 * r1);
        } else {
            const double r2 = std::sqrt((1.0 - Zc) / 2.0);
            c << X / (2.0 * r2), Y / (2.0 * r2), r2, 0.0;
        }
        return make_point(c);
    }

    double metric(const Point&, const Vec& u, const Vec& v) const override { return u.dot(v); }

    double orbit_metric(const OrbitPoint&, const Vec& u, const Vec& v) const override { return u.dot(v); }

    // Great-circle angles via atan2(|u-v|, |u+v|): the same function as
    // acos(<u,v>) but uniformly accurate near coincident and antipodal pairs.
    double distance(const Point& p, const Point& q) const override {
        if (std::fabs(p.coords.dot(q.coords)) > 1.0 + 1e-9)
            throw MathDomainError("hopf distance: points are off the unit sphere");
        const Vec u = p.coords / p.coords.norm(), v = q.coords / q.coords.norm();
        return 2.0 * std::atan2((u - v).norm(), (u + v).norm());
    }

    double orbit_distance(const OrbitPoint& z1, const OrbitPoint& z2) const override {
        if (std::fabs(z1.coords.dot(z2.coords) / 0.25) > 1.0 + 1e-9)
            throw MathDomainError("orbit distance: points are off the radius-1/2 sphere");
        const Vec u = z1.coords / z1.coords.norm(), v = z2.coords / z2.coords.norm();
        return std::atan2((u - v).norm(), (u + v).norm());
    }

    Vec tangent_project(const Point& p, const Vec& v) const override {
        const Vec n = p.coords / p.coords.norm();
        return v - v.dot(n) * n;
    }

    Point normalize(const Point& p) const override {
        return Point{id_, p.coords / p.coords.norm()};
    }

    Point nudge(const Point& p, const Vec& v, double t) const override {
        Vec c = p.coords + t * v;
        return Point{id_, c / c.norm()};
    }

    OrbitPoint orbit_normalize(const OrbitPoint& z) const override {
        return OrbitPoint{id_, 0.5 * z.coords / z.coords.norm()};
    }

    Vec orbit_tangent_project(const OrbitPoint& z, const Vec& w) const override {
        const Vec n = z.coords / z.coords.norm();
        return w - w.dot(n) * n;
    }

    OrbitPoint orbit_nudge(const OrbitPoint& z, const Vec& w, double t) const override {
        Vec c = z.coords + t * w;
        return OrbitPoint{id_, 0.5 * c / c.norm()};
    }

    std::vector<Vec> tangent_frame(const Point& p) const override {
        const Vec& q = p.coords;
        std::vector<Vec> f(3, Vec(4));
        f[0] << -q[1], q[0], -q[3], q[2]; // i*q (generator)
        f[1] << -q[2], q[3], q[0], -q[1]; // j*q
        f[2] << -q[3], -q[2], q[1], q[0]; // k*q
        return f;
    }

    std::vector<Vec> orbit_frame(const OrbitPoint& z) const override {
        const Vec n = z.coords / z.coords.norm();
        int imin = 0;
        for (int i = 1; i < 3; ++i)
            if (std::fabs(n[i]) < std::fabs(n[imin])) imin = i;
        Vec e = Vec::Zero(3);
        e[imin] = 1.0;
        Vec t1(3);
        t1 << e[1] * n[2] - e[2] * n[1], e[2] * n[0] - e[0] * n[2], e[0] * n[1] - e[1] * n[0];
        t1 /= t1.norm();
        Vec t2(3);
        t2 << n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2], n[0] * t1[1] - n[1] * t1[0];
        return {t1, t2};
    }

    Vec horizontal_lift_vector(const Point& p, const Vec& w) const override {
        auto h = horizontal_frame(p);
        const Vec d1 = project_push(p, h[0]);
        const Vec d2 = project_push(p, h[1]);
        // 2x2 Gram system; analytically the identity (rho is a Riemannian
        // submersion) but solved exactly for robustness.
        const double g11 = d1.dot(d1), g12 = d1.dot(d2), g22 = d2.dot(d2);
        const double b1 = w.dot(d1), b2 = w.dot(d2);
        const double det = g11 * g22 - g12 * g12;
        const double a1 = (b1 * g22 - b2 * g12) / det;
        const double a2 = (b2 * g11 - b1 * g12) / det;
        return a1 * h[0] + a2 * h[1];
    }

    double blowup_bound() const override { return 10.0; }

    bool projects_state() const override { return true; }
    void project_state(Vec& y) const override { y /= y.norm(); }
    void orbit_project_state(Vec& y) const override { y *= 0.5 / y.norm(); }
};

} // namespace detail

inline std::shared_ptr<const ManifoldModel> ManifoldModel::trivial(int k, ScalarField omega) {
    return std::make_shared<detail::TrivialBundleModel>(k, std::move(omega));
}

inline std::shared_ptr<const ManifoldModel> ManifoldModel::hopf(ScalarField omega) {
    return std::make_shared<detail::HopfModel>(std::move(omega));
}

/// Wraps a raw component function into a field whose outputs are tangent to
/// the model (projected on evaluation).
inline VectorField make_field(const ManifoldModel& M, std::function<Vec(const Point&)> raw) {
    const ManifoldModel* m = &M;
    return VectorField{M.id(), [m, raw = std::move(raw)](const Point& p) { return m->tangent_project(p, raw(p)); }};
}

/// The infinitesimal generator Upsilon = X0/omega as a field.
inline VectorField generator_field(const ManifoldModel& M) {
    const ManifoldModel* m = &M;
    return VectorField{M.id(), [m](const Point& p) { return m->generator(p); }};
}

/// X0 = omega * Upsilon, the unperturbed field with periodic flow.
inline VectorField periodic_field(const ManifoldModel& M) {
    const ManifoldModel* m = &M;
    return VectorField{M.id(), [m](const Point& p) { return m->omega(p) * m->generator(p); }};
}

// ---------------------------------------------------------------------------
// Pointwise geometry operations
// ---------------------------------------------------------------------------

inline Point s1_flow(const ManifoldModel& M, const Point& p, double theta) {
    check_model(M, p, "s1_flow");
    return M.action(p, theta);
}

inline OrbitPoint project_to_orbit(const ManifoldModel& M, const Point& p) {
    check_model(M, p, "project_to_orbit");
    return M.project(p);
}

inline double manifold_distance(const ManifoldModel& M, const Point& p, const Point& q) {
    check_model(M, p, "manifold_distance");
    check_model(M, q, "manifold_distance");
    return M.distance(p, q);
}

inline double orbit_distance(const ManifoldModel& M, const OrbitPoint& z1, const OrbitPoint& z2) {
    check_model(M, z1, "orbit_distance");
    check_model(M, z2, "orbit_distance");
    return M.orbit_distance(z1, z2);
}

/// Orthogonal splitting v = v_hor + v_vert with v_vert along the generator.
/// Returns (horizontal, vertical).
inline std::pair<TangentVector, TangentVector> split_vector(const ManifoldModel& M, const TangentVector& v) {
    check_model(M, v.base, "split_vector");
    const Vec u = M.generator(v.base);
    const double c = M.metric(v.base, v.components, u) / M.metric(v.base, u, u);
    TangentVector vert{v.base, c * u};
    TangentVector hor{v.base, v.components - vert.components};
    return {hor, vert};
}

inline Vec horizontal_part(const ManifoldModel& M, const Point& p, const Vec& v) {
    const Vec u = M.generator(p);
    return v - (v.dot(u) / u.dot(u)) * u;
}

/// Levi-Civita covariant derivative nabla_v X by a central finite difference
/// along a curve with velocity v, tangentially projected at m. Step
/// h = 1e-5 * (1 + |coords|); accuracy O(h^2).
inline TangentVector covariant_derivative(const ManifoldModel& M, const VectorField& X, const Point& m,
                                          const TangentVector& v) {
    check_model(M, m, "covariant_derivative");
    const double vn = v.components.norm();
    if (vn == 0.0) return TangentVector{m, Vec::Zero(M.coord_dim())};
    const Vec dir = v.components / vn;
    const double h = 1e-5 * (1.0 + m.coords.norm());
    const Vec xp = X.components(M.nudge(m, dir, h));
    const Vec xm = X.components(M.nudge(m, dir, -h));
    Vec d = (xp - xm) / (2.0 * h);
    return TangentVector{m, vn * M.tangent_project(m, d)};
}

/// Operator norm of the linear map v -> nabla_v X at m, assembled in an
/// orthonormal frame and measured by SVD.
inline double nabla_op_norm(const ManifoldModel& M, const VectorField& X, const Point& m) {
    check_model(M, m, "nabla_op_norm");
    const auto frame = M.tangent_frame(m);
    const int n = int(frame.size());
    Mat A(n, n);
    for (int j = 0; j < n; ++j) {
        const TangentVector dj = covariant_derivative(M, X, m, TangentVector{m, frame[j]});
        for (int i = 0; i < n; ++i) A(i, j) = dj.components.dot(frame[i]);
    }
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues()[0];
}

/// Time tau in [0, 2*pi) with s1_flow(p, tau) = q; p and q must lie in the
/// same fiber (orbit projections within 1e-7).
inline double fiber_phase(const ManifoldModel& M, const Point& p, const Point& q) {
    check_model(M, p, "fiber_phase");
    check_model(M, q, "fiber_phase");
    if (M.orbit_distance(M.project(p), M.project(q)) > 1e-7)
        throw NotSameFiber("fiber_phase: points do not lie in the same fiber");
    if (M.id().kind == ModelKind::TrivialBundle) {
        return wrap_angle(q.coords[0] - p.coords[0]);
    }
    // Hermitian pairing <q, p> = e^{i tau} for q = e^{i tau} p.
    const Vec& a = q.coords;
    const Vec& b = p.coords;
    const double re = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
    const double im = a[1] * b[0] - a[0] * b[1] + a[3] * b[2] - a[2] * b[3];
    return wrap_angle(std::atan2(im, re));
}

// ---------------------------------------------------------------------------
// Curve helpers
// ---------------------------------------------------------------------------

namespace detail {

inline Vec curve_velocity(const ManifoldModel& M, const PointCurve& c, double t) {
    if (c.velocity) return c.velocity(t);
    const double span = c.t1 - c.t0;
    double h = 1e-7 * (std::fabs(span) + 1.0);
    double lo = std::max(c.t0, t - h), hi = std::min(c.t1, t + h);
    Vec d = (c.at(hi).coords - c.at(lo).coords) / (hi - lo);
    return M.tangent_project(c.at(t), d);
}

inline Vec orbit_curve_velocity(const ManifoldModel& M, const OrbitCurve& c, double t) {
    if (c.velocity) return c.velocity(t);
    const double span = c.t1 - c.t0;
    double h = 1e-7 * (std::fabs(span) + 1.0);
    double lo = std::max(c.t0, t - h), hi = std::min(c.t1, t + h);
    Vec d = (c.at(hi).coords - c.at(lo).coords) / (hi - lo);
    return M.orbit_tangent_project(c.at(t), d);
}

/// Composite Simpson over [t0, t1] with n (even) intervals.
inline double simpson(double t0, double t1, int n, const std::function<double(double)>& f) {
    if (n % 2 != 0) ++n;
    const double h = (t1 - t0) / n;
    double s = f(t0) + f(t1);
    for (int i = 1; i < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(t0 + i * h);
    return s * h / 3.0;
}

} // namespace detail

inline double curve_length(const ManifoldModel& M, const PointCurve& c, int n = 512) {
    return detail::simpson(c.t0, c.t1, n,
                           [&](double t) { return M.norm(c.at(t), detail::curve_velocity(M, c, t)); });
}

inline double orbit_curve_length(const ManifoldModel& M, const OrbitCurve& c, int n = 512) {
    return detail::simpson(c.t0, c.t1, n, [&](double t) {
        return M.orbit_norm(c.at(t), detail::orbit_curve_velocity(M, c, t));
    });
}

/// Integral of the vertical part of the curve velocity.
inline double vertical_length(const ManifoldModel& M, const PointCurve& c, int n = 512) {
    return detail::simpson(c.t0, c.t1, n, [&](double t) {
        const Point p = c.at(t);
        const Vec v = detail::curve_velocity(M, c, t);
        const Vec u = M.generator(p);
        const double coef = M.metric(p, v, u) / M.metric(p, u, u);
        return M.norm(p, coef * u);
    });
}

inline OrbitCurve project_curve(const ManifoldModel& M, const PointCurve& c) {
    const ManifoldModel* m = &M;
    OrbitCurve oc;
    oc.t0 = c.t0;
    oc.t1 = c.t1;
    oc.at = [m, c](double t) { return m->project(c.at(t)); };
    oc.velocity = [m, c](double t) {
        const Point p = c.at(t);
        return m->project_push(p, detail::curve_velocity(*m, c, t));
    };
    return oc;
}

/// Fiber phases t -> tau(t) between a trajectory and its horizontal lift,
/// unwrapped to a continuous branch with tau(t0) in [0, 2*pi).
inline std::vector<double> fiber_phase_curve(const ManifoldModel& M, const PointCurve& gamma,
                                             const PointCurve& lift, const std::vector<double>& ts) {
    std::vector<double> tau(ts.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        double raw = fiber_phase(M, gamma.at(ts[i]), lift.at(ts[i]));
        if (i == 0) {
            tau[0] = raw;
        } else {
            double d = raw - wrap_angle(prev);
            if (d > two_pi / 2) d -= two_pi;
            if (d < -two_pi / 2) d += two_pi;
            tau[i] = prev + d;
        }
        prev = tau[i];
    }
    return tau;
}

} // namespace s1avg
