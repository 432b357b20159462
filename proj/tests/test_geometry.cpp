#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <random>

#include "s1avg/averaging.hpp"
#include "s1avg/flows.hpp"
#include "s1avg/geometry.hpp"

using namespace s1avg;

namespace {

std::shared_ptr<const ManifoldModel> trivial1() {
    return ManifoldModel::trivial(1, [](const Point&) { return 1.0; });
}

std::shared_ptr<const ManifoldModel> trivial2() {
    return ManifoldModel::trivial(2, [](const Point&) { return 1.0; });
}

std::shared_ptr<const ManifoldModel> hopf_unit() {
    return ManifoldModel::hopf([](const Point&) { return 1.0; });
}

// omega = 1 + z-coordinate of the orbit point: invariant and nonconstant
std::shared_ptr<const ManifoldModel> hopf_var() {
    return ManifoldModel::hopf([](const Point& p) {
        const Vec& q = p.coords;
        return 1.0 + 0.25 * (q[0] * q[0] + q[1] * q[1] - q[2] * q[2] - q[3] * q[3]);
    });
}

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Vec vec4(double a, double b, double c, double d) {
    Vec v(4);
    v << a, b, c, d;
    return v;
}

Point random_hopf_point(std::mt19937& rng) {
    std::normal_distribution<double> g;
    Vec c(4);
    for (int i = 0; i < 4; ++i) c[i] = g(rng);
    c /= c.norm();
    return Point{ModelId{ModelKind::Hopf, 0}, c};
}

Point random_trivial_point(std::mt19937& rng, int k) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> a(0.0, two_pi);
    Vec c(k + 1);
    c[0] = a(rng);
    for (int i = 1; i <= k; ++i) c[i] = u(rng);
    return Point{ModelId{ModelKind::TrivialBundle, k}, c};
}

Vec random_tangent(const ManifoldModel& M, const Point& p, std::mt19937& rng) {
    std::normal_distribution<double> g;
    Vec v(M.coord_dim());
    for (int i = 0; i < v.size(); ++i) v[i] = g(rng);
    return M.tangent_project(p, v);
}

} // namespace

TEST_CASE("circle action: periodicity, identity and the rotation oracle") {
    auto T1 = trivial1();
    const Point p{T1->id(), vec2(0.3, 1.0)};
    const Point q = s1_flow(*T1, p, two_pi);
    CHECK(q.coords[0] == Catch::Approx(0.3).margin(1e-14));
    CHECK(q.coords[1] == Catch::Approx(1.0).margin(1e-14));
    CHECK(s1_flow(*T1, p, 0.0).coords.isApprox(p.coords, 1e-15));

    auto H = hopf_unit();
    const Point h{H->id(), vec4(1, 0, 0, 0)};
    const Point hr = s1_flow(*H, h, two_pi / 4.0);
    CHECK((hr.coords - vec4(0, 1, 0, 0)).norm() < 1e-14);

    // complex multiplication oracle on random points and angles
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> th(-10.0, 10.0);
    for (int i = 0; i < 25; ++i) {
        const Point m = random_hopf_point(rng);
        const double t = th(rng);
        const std::complex<double> z1(m.coords[0], m.coords[1]), z2(m.coords[2], m.coords[3]);
        const std::complex<double> w = std::polar(1.0, t);
        const Point r = s1_flow(*H, m, t);
        CHECK((r.coords - vec4((w * z1).real(), (w * z1).imag(), (w * z2).real(), (w * z2).imag())).norm() <
              1e-13);
        // 2 pi periodicity
        CHECK((s1_flow(*H, m, t + two_pi).coords - r.coords).norm() < 1e-13);
    }
}

TEST_CASE("orbit projection: fiber invariance and the Hopf formula") {
    auto H = hopf_unit();
    const OrbitPoint north = project_to_orbit(*H, Point{H->id(), vec4(1, 0, 0, 0)});
    CHECK(north.coords[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(north.coords[1] == Catch::Approx(0.0).margin(1e-15));
    CHECK(north.coords[2] == Catch::Approx(0.5).margin(1e-15));

    auto T2 = trivial2();
    Vec c(3);
    c << 1.2, 1.5, -2.0;
    const OrbitPoint z = project_to_orbit(*T2, Point{T2->id(), c});
    CHECK(z.coords[0] == Catch::Approx(1.5));
    CHECK(z.coords[1] == Catch::Approx(-2.0));

    std::mt19937 rng(11);
    std::uniform_real_distribution<double> th(0.0, two_pi);
    for (int i = 0; i < 32; ++i) {
        const Point m = random_hopf_point(rng);
        const double t = th(rng);
        CHECK(orbit_distance(*H, project_to_orbit(*H, m), project_to_orbit(*H, s1_flow(*H, m, t))) <
              1e-10);
        const Point mt = random_trivial_point(rng, 2);
        CHECK(orbit_distance(*T2, project_to_orbit(*T2, mt),
                             project_to_orbit(*T2, s1_flow(*T2, mt, t))) < 1e-10);
    }

    // points land on the radius-1/2 sphere
    for (int i = 0; i < 16; ++i) {
        const Point m = random_hopf_point(rng);
        CHECK(std::fabs(project_to_orbit(*H, m).coords.norm() - 0.5) < 1e-12);
    }

    // the section inverts the projection
    for (int i = 0; i < 16; ++i) {
        const OrbitPoint z1 = project_to_orbit(*H, random_hopf_point(rng));
        CHECK(orbit_distance(*H, project_to_orbit(*H, H->section(z1)), z1) < 1e-12);
    }
}

TEST_CASE("frequency functions are constant along fibers") {
    auto H = hopf_var();
    std::mt19937 rng(97);
    std::uniform_real_distribution<double> th(0.0, two_pi);
    for (int i = 0; i < 32; ++i) {
        const Point p = random_hopf_point(rng);
        const double t = th(rng);
        CHECK(std::fabs(H->omega(s1_flow(*H, p, t)) - H->omega(p)) < 1e-10);
    }
}

TEST_CASE("horizontal/vertical splitting") {
    auto T1 = trivial1();
    auto H = hopf_var();
    std::mt19937 rng(13);

    const Point p{T1->id(), vec2(0.7, -0.4)};
    // vertical input returns (0, input)
    const TangentVector ups{p, T1->generator(p)};
    auto [h0, v0] = split_vector(*T1, ups);
    CHECK(h0.components.norm() < 1e-15);
    CHECK((v0.components - ups.components).norm() < 1e-15);
    // product metric: d/dx is horizontal
    const TangentVector dx{p, vec2(0.0, 1.0)};
    auto [h1, v1] = split_vector(*T1, dx);
    CHECK((h1.components - dx.components).norm() < 1e-15);
    CHECK(v1.components.norm() < 1e-15);

    for (int i = 0; i < 100; ++i) {
        const Point m = random_hopf_point(rng);
        const TangentVector v{m, random_tangent(*H, m, rng)};
        auto [h, vv] = split_vector(*H, v);
        CHECK((h.components + vv.components - v.components).norm() < 1e-12);
        CHECK(std::fabs(H->metric(m, h.components, H->generator(m))) < 1e-12);
    }
}

TEST_CASE("distances: identities, oracles and metric axioms") {
    auto T1 = trivial1();
    auto H = hopf_unit();

    const Point a{T1->id(), vec2(0.0, 0.0)}, b{T1->id(), vec2(two_pi / 2.0, 0.0)};
    CHECK(manifold_distance(*T1, a, a) == 0.0);
    CHECK(manifold_distance(*T1, a, b) == Catch::Approx(two_pi / 2.0));

    const OrbitPoint zn{H->id(), Vec(vec4(0, 0, 0.5, 0).head(3))};
    OrbitPoint zs = zn;
    zs.coords[2] = -0.5;
    CHECK(orbit_distance(*H, zn, zn) == 0.0);
    CHECK(orbit_distance(*H, zn, zs) == Catch::Approx(two_pi / 4.0)); // half circumference of S^2(1/2)

    std::mt19937 rng(17);
    for (int i = 0; i < 200; ++i) {
        const Point p = random_hopf_point(rng), q = random_hopf_point(rng), r = random_hopf_point(rng);
        CHECK(manifold_distance(*H, p, r) <=
              manifold_distance(*H, p, q) + manifold_distance(*H, q, r) + 1e-12);
        const Point pt = random_trivial_point(rng, 1), qt = random_trivial_point(rng, 1),
                    rt = random_trivial_point(rng, 1);
        CHECK(manifold_distance(*T1, pt, rt) <=
              manifold_distance(*T1, pt, qt) + manifold_distance(*T1, qt, rt) + 1e-12);
    }

    // orbit distance never exceeds manifold distance
    for (int i = 0; i < 100; ++i) {
        const Point p = random_hopf_point(rng), q = random_hopf_point(rng);
        CHECK(orbit_distance(*H, project_to_orbit(*H, p), project_to_orbit(*H, q)) <=
              manifold_distance(*H, p, q) + 1e-12);
        const Point pt = random_trivial_point(rng, 1), qt = random_trivial_point(rng, 1);
        CHECK(orbit_distance(*T1, project_to_orbit(*T1, pt), project_to_orbit(*T1, qt)) <=
              manifold_distance(*T1, pt, qt) + 1e-12);
    }
}

TEST_CASE("covariant derivative: flat and round oracles") {
    auto T1 = trivial1();
    const Point m{T1->id(), vec2(1.1, 0.8)};

    const VectorField constant{T1->id(), [](const Point&) { return vec2(0.4, -0.7); }};
    const TangentVector v{m, vec2(0.3, 0.9)};
    CHECK(covariant_derivative(*T1, constant, m, v).components.norm() < 1e-8);

    // X = x d/dx: nabla_{d/dx} X = d/dx
    const VectorField xdx{T1->id(), [](const Point& p) { return vec2(0.0, p.coords[1]); }};
    const TangentVector dx{m, vec2(0.0, 1.0)};
    const TangentVector d = covariant_derivative(*T1, xdx, m, dx);
    CHECK(d.components[0] == Catch::Approx(0.0).margin(1e-9));
    CHECK(d.components[1] == Catch::Approx(1.0).margin(1e-9));

    // metric compatibility d/dt g(X,X) = 2 g(nabla_{gamma'} X, X) along the
    // flow of a reference field, by a centered difference in t
    auto H = hopf_var();
    std::mt19937 rng(23);
    for (int i = 0; i < 10; ++i) {
        const Point p = random_hopf_point(rng);
        const VectorField X = make_field(*H, [](const Point& q) {
            return vec4(q.coords[1] * q.coords[2], 0.3 - q.coords[3], q.coords[0], 0.2 * q.coords[1]);
        });
        const VectorField W = make_field(*H, [](const Point& q) {
            return vec4(0.1, q.coords[2], -q.coords[1] * q.coords[1], 0.4 * q.coords[0]);
        });
        FlowSpec spec{H.get(), W, 1.0, 1e-12, 1e-12};
        Trajectory tr = integrate_flow(spec, p);
        const double dt = 1e-5;
        auto gXX = [&](double t) {
            const Point q = tr.at(t);
            const Vec x = X.components(q);
            return H->metric(q, x, x);
        };
        const double lhs = (gXX(0.5 + dt) - gXX(0.5 - dt)) / (2 * dt);
        const Point q = tr.at(0.5);
        const TangentVector gp = tr.velocity(0.5);
        const TangentVector nx = covariant_derivative(*H, X, q, gp);
        const double rhs = 2.0 * H->metric(q, nx.components, X.components(q));
        CHECK(lhs == Catch::Approx(rhs).margin(1e-6));
    }
}

TEST_CASE("covariant operator norm") {
    auto T1 = trivial1();
    const Point m{T1->id(), vec2(0.2, 1.4)};
    const VectorField constant{T1->id(), [](const Point&) { return vec2(1.0, 2.0); }};
    CHECK(nabla_op_norm(*T1, constant, m) < 1e-8);

    const VectorField twox{T1->id(), [](const Point& p) { return vec2(0.0, 2.0 * p.coords[1]); }};
    CHECK(nabla_op_norm(*T1, twox, m) == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("norms and covariant norms are invariant under the isometric action") {
    // |phi_* X|_m = |X|_{phi^{-1}(m)} and |nabla(phi_* X)|_m = |nabla X|_{phi^{-1}(m)}
    auto H = hopf_var();
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> th(0.0, two_pi);
    const VectorField X = make_field(*H, [](const Point& q) {
        return vec4(q.coords[2] * q.coords[2], 0.4 * q.coords[0], -q.coords[1], 0.7 * q.coords[3] + 0.1);
    });
    for (int i = 0; i < 12; ++i) {
        const Point m = random_hopf_point(rng);
        const double t = th(rng);
        const ManifoldModel* Mp = H.get();
        const VectorField pushed{H->id(), [Mp, &X, t](const Point& p) {
                                     const Point pre = Mp->action(p, -t);
                                     return Mp->action_push(t, X.components(pre));
                                 }};
        const Point pre = H->action(m, -t);
        CHECK(H->norm(m, pushed.components(m)) ==
              Catch::Approx(H->norm(pre, X.components(pre))).margin(1e-8));
        CHECK(nabla_op_norm(*H, pushed, m) == Catch::Approx(nabla_op_norm(*H, X, pre)).margin(1e-6));
    }
}

TEST_CASE("Riemannian submersion: horizontal norms are preserved") {
    std::mt19937 rng(31);
    auto H = hopf_var();
    auto T2 = trivial2();
    for (int i = 0; i < 200; ++i) {
        const Point m = random_hopf_point(rng);
        const Vec v = horizontal_part(*H, m, random_tangent(*H, m, rng));
        const Vec dv = H->project_push(m, v);
        CHECK(H->orbit_norm(H->project(m), dv) == Catch::Approx(H->norm(m, v)).margin(1e-8));

        const Point mt = random_trivial_point(rng, 2);
        const Vec vt = horizontal_part(*T2, mt, random_tangent(*T2, mt, rng));
        CHECK(T2->orbit_norm(T2->project(mt), T2->project_push(mt, vt)) ==
              Catch::Approx(T2->norm(mt, vt)).margin(1e-8));
    }
}

TEST_CASE("fiber phase") {
    auto T1 = trivial1();
    auto H = hopf_unit();
    std::mt19937 rng(37);

    const Point p{T1->id(), vec2(1.0, 0.5)};
    CHECK(fiber_phase(*T1, p, p) == Catch::Approx(0.0).margin(1e-15));
    CHECK(fiber_phase(*T1, p, s1_flow(*T1, p, 1.3)) == Catch::Approx(1.3).margin(1e-9));

    for (int i = 0; i < 20; ++i) {
        const Point m = random_hopf_point(rng);
        const double t = std::uniform_real_distribution<double>(0.0, two_pi)(rng);
        CHECK(fiber_phase(*H, m, s1_flow(*H, m, t)) == Catch::Approx(t).margin(1e-9));
    }

    const Point off{H->id(), vec4(0, 0, 1, 0)};
    CHECK_THROWS_AS(fiber_phase(*H, Point{H->id(), vec4(1, 0, 0, 0)}, off), NotSameFiber);
}

TEST_CASE("horizontal lift: product bundle is trivial, lengths match, loops hold fiber") {
    auto T1 = trivial1();
    // lift of an x-curve keeps phi constant
    OrbitCurve alpha;
    alpha.t0 = 0.0;
    alpha.t1 = 1.0;
    alpha.at = [T1](double t) { return OrbitPoint{T1->id(), Vec::Constant(1, 1.0 + 0.5 * t * t)}; };
    const Point m0{T1->id(), vec2(0.77, 1.0)};
    PointCurve lift = horizontal_lift_curve(*T1, alpha, m0, 64);
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
        CHECK(lift.at(t).coords[0] == Catch::Approx(0.77).margin(1e-9));
        CHECK(lift.at(t).coords[1] == Catch::Approx(1.0 + 0.5 * t * t).margin(1e-9));
    }

    // Hopf: lift projects back onto the curve, velocity is horizontal, and
    // the arc lengths agree
    auto H = hopf_unit();
    const Point h0 = H->make_point(vec4(1, 0, 0, 0));
    OrbitCurve circ;
    circ.t0 = 0.0;
    circ.t1 = 1.0;
    const double lat = 0.2; // z-level of a closed latitude circle
    circ.at = [H, lat](double t) {
        const double r = std::sqrt(0.25 - lat * lat);
        Vec c(3);
        c << r * std::cos(two_pi * t), r * std::sin(two_pi * t), lat;
        return OrbitPoint{H->id(), c};
    };
    const Point start = H->section(circ.at(0.0));
    PointCurve hlift = horizontal_lift_curve(*H, circ, start, 256);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        CHECK(orbit_distance(*H, project_to_orbit(*H, hlift.at(t)), circ.at(t)) < 1e-7);
        const Point p = hlift.at(t);
        const Vec vel = detail::curve_velocity(*H, hlift, t);
        CHECK(std::fabs(H->metric(p, vel, H->generator(p))) < 1e-7);
    }
    const double lalpha = orbit_curve_length(*H, circ, 512);
    const double llift = curve_length(*H, hlift, 512);
    CHECK(llift == Catch::Approx(lalpha).margin(1e-6));

    // holonomy: a closed latitude lifts to a non-closed curve in the same fiber
    const Point end = hlift.at(1.0);
    CHECK(orbit_distance(*H, project_to_orbit(*H, end), project_to_orbit(*H, start)) < 1e-7);
    CHECK(manifold_distance(*H, end, start) > 1e-2);
}

TEST_CASE("projected and lifted curves: length inequalities") {
    // L(alpha) <= L(gamma) and L(gamma) <= L(alpha) + integral of the
    // vertical speed <= sqrt(2) L(gamma), on random smooth curves
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto H = hopf_var();
    auto T2 = trivial2();

    for (int i = 0; i < 25; ++i) {
        // trivial bundle curve from random Fourier data
        const double a0 = u(rng), a1 = u(rng), b1 = u(rng), c0 = u(rng), c1 = u(rng), d1 = u(rng);
        PointCurve g;
        g.t0 = 0.0;
        g.t1 = 1.0;
        g.at = [=, T2 = T2](double t) {
            Vec c(3);
            c << a0 + a1 * std::sin(two_pi * t), c0 + c1 * std::cos(two_pi * t),
                b1 * t + d1 * std::sin(two_pi * t);
            return Point{T2->id(), c};
        };
        const double lg = curve_length(*T2, g, 512);
        const double la = orbit_curve_length(*T2, project_curve(*T2, g), 512);
        const double lv = vertical_length(*T2, g, 512);
        CHECK(la <= lg + 1e-6);
        CHECK(lg <= la + lv + 1e-6);
        CHECK(la + lv <= std::sqrt(2.0) * lg + 1e-6);
    }

    for (int i = 0; i < 25; ++i) {
        Vec base(4), amp(4);
        for (int j = 0; j < 4; ++j) {
            base[j] = u(rng);
            amp[j] = 0.5 * u(rng);
        }
        if (base.norm() < 0.3) base[0] += 1.0;
        PointCurve g;
        g.t0 = 0.0;
        g.t1 = 1.0;
        g.at = [=, H = H](double t) {
            Vec c = base + amp * std::sin(two_pi * t) + 0.2 * amp.reverse().eval() * t;
            return H->make_point(c);
        };
        const double lg = curve_length(*H, g, 1024);
        const double la = orbit_curve_length(*H, project_curve(*H, g), 1024);
        const double lv = vertical_length(*H, g, 1024);
        CHECK(la <= lg + 1e-6);
        CHECK(lg <= la + lv + 1e-6);
        CHECK(la + lv <= std::sqrt(2.0) * lg + 1e-6);
    }
}

TEST_CASE("trajectory lift reconstruction via fiber phases") {
    // gamma = flow of X, alpha = rho(gamma), lift = horizontal lift of alpha;
    // then lift(t) = Fl_Upsilon^{tau(t)}(gamma(t)) with tau from fiber_phase,
    // and the lifted velocity matches the pushed horizontal part of X.
    auto H = hopf_var();
    const VectorField X = make_field(*H, [](const Point& q) {
        return vec4(0.8 - q.coords[1], 0.3 * q.coords[2], q.coords[0] * q.coords[3], -0.25);
    });
    const Point m0 = H->make_point(vec4(0.5, 0.5, 0.5, 0.5));
    const double T = two_pi / H->omega(m0);
    FlowSpec spec{H.get(), X, T, 1e-11, 1e-11};
    Trajectory gamma = integrate_flow(spec, m0);
    PointCurve gc = gamma.curve();
    PointCurve lift = horizontal_lift_curve(*H, project_curve(*H, gc), m0, 512);

    std::vector<double> ts;
    for (int i = 0; i <= 64; ++i) ts.push_back(T * i / 64.0);
    const auto tau = fiber_phase_curve(*H, gc, lift, ts);
    double defect = 0.0, key4 = 0.0, key5 = 0.0;
    std::mt19937 rng(43);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const Point g = gc.at(ts[i]);
        const Point l = lift.at(ts[i]);
        defect = std::max(defect, manifold_distance(*H, s1_flow(*H, g, tau[i]), l));

        // |Xt|_{lift(t)} = |X^hor|_{gamma(t)}
        const Vec xh = horizontal_part(*H, g, X.components(g));
        const ManifoldModel* Mp = H.get();
        const double t_i = tau[i];
        const VectorField Xt{H->id(), [Mp, &X, t_i](const Point& p) {
                                 const Point pre = Mp->action(p, -t_i);
                                 return Mp->action_push(t_i,
                                                        horizontal_part(*Mp, pre, X.components(pre)));
                             }};
        key4 = std::max(key4, std::fabs(H->norm(l, Xt.components(l)) - H->norm(g, xh)));

        // |nabla_v Xt| <= |nabla X^hor| |v|
        const VectorField Xhor{H->id(), [Mp, &X](const Point& p) {
                                   return horizontal_part(*Mp, p, X.components(p));
                               }};
        const double nx = nabla_op_norm(*H, Xhor, g);
        const Vec v = random_tangent(*H, l, rng);
        const double nv = H->norm(l, covariant_derivative(*H, Xt, l, TangentVector{l, v}).components);
        key5 = std::max(key5, nv - nx * H->norm(l, v));
    }
    CHECK(defect < 1e-6);
    CHECK(key4 < 1e-6);
    CHECK(key5 < 1e-6);
}
