#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "s1avg/s1avg.hpp"

using namespace s1avg;

namespace {

const std::string cfg_dir = std::string(S1AVG_SOURCE_DIR) + "/configs/";

// smaller sweep and sampler for unit-test turnaround
dsl::SystemConfig quick(dsl::SystemConfig cfg, std::vector<double> eps = {0.1, 0.05, 0.02}) {
    cfg.eps = std::move(eps);
    cfg.eps0 = cfg.eps.front();
    cfg.grid_res = 3;
    cfg.fiber_res = 4;
    cfg.topup = 8;
    return cfg;
}

} // namespace

TEST_CASE("system building validates the fields") {
    auto cfg = dsl::load_config(cfg_dir + "one_frequency.cfg");
    System sys = build_system(cfg);
    CHECK(sys.model->id().kind == ModelKind::TrivialBundle);
    CHECK(sys.m0.coords[1] == 1.0);

    // explicit x0 must match omega * generator
    auto bad = cfg;
    bad.x0 = {dsl::parse_expr("2"), dsl::parse_expr("0")};
    CHECK_THROWS_AS(build_system(bad), ConfigError);
    auto good = cfg;
    good.x0 = {dsl::parse_expr("1 + 0.5*x1^2"), dsl::parse_expr("0")};
    CHECK_NOTHROW(build_system(good));

    // a phi-dependent omega violates fiber invariance
    auto rot = cfg;
    rot.omega = dsl::parse_expr("1 + 0.1*sin(phi)");
    CHECK_THROWS_AS(build_system(rot), ConfigError);
}

TEST_CASE("unperturbed sweep stays at the integrator noise floor") {
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency.cfg"), {0.1, 0.03});
    cfg.x1 = {dsl::parse_expr("0"), dsl::parse_expr("0")};
    SweepResult res = verify_theorem(build_system(cfg));
    for (const auto& row : res.rows) {
        CHECK(row.sup_error < 1e-7);
        CHECK(row.term1 < 1e-7);
        CHECK(row.term2 < 1e-7);
    }
    CHECK(res.pass);
}

TEST_CASE("verify sweep on the one-frequency system (reduced size)") {
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency.cfg"), {0.1, 0.05, 0.02, 0.01});
    System sys = build_system(cfg);
    SweepResult res = verify_theorem(sys);
    REQUIRE(res.rows.size() == 4);
    CHECK(res.pass);
    CHECK(res.slope > 0.8);
    CHECK(res.slope < 1.2);
    for (const auto& row : res.rows) {
        CHECK(row.sup_error > 0.0);
        CHECK(row.sup_error <= row.c_eps_bound);
        // triangle inequality: the two terms together dominate the error
        CHECK(row.term1 + row.term2 >= row.sup_error * (1.0 - 1e-6) - 1e-10);
        // first term obeys the near-identity displacement bound
        CHECK(row.term1 <= res.constants.kappa0 * row.epsilon * 1.02 + 1e-9);
    }
    // rows are sorted by epsilon, descending
    for (std::size_t i = 1; i < res.rows.size(); ++i)
        CHECK(res.rows[i].epsilon < res.rows[i - 1].epsilon);
}

TEST_CASE("normalized trajectory equals the conjugated perturbed trajectory") {
    // Fl_{Xt_{eps,1}}^t(m_eps) = Phi_eps^{-1}(Fl_{X_eps}^t(m0)): integrate the
    // remainder-corrected field directly over a short horizon and compare.
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency_flat.cfg"));
    System sys = build_system(cfg);
    const ManifoldModel& M = *sys.model;
    const double eps = 0.08, T = 5.0;

    const VectorField Z = homological_Z(M, sys.X0, sys.X1, sys.quad);
    const VectorField R = remainder_field(M, sys.X0, sys.X1, Z, eps, sys.quad);
    const VectorField avg = average_field(M, sys.X1, sys.quad);
    const VectorField X0 = sys.X0;
    const VectorField xt1{M.id(), [&](const Point& p) {
                              return Vec(X0.components(p) + eps * avg.components(p) +
                                         (eps * eps) * R.components(p));
                          }};
    NearIdentityMap ni{sys.model.get(), Z, eps};
    const Point m_eps = near_identity_apply(ni, sys.m0, MapDirection::Inverse);
    Trajectory direct = integrate_flow(FlowSpec{sys.model.get(), xt1, T, 1e-10, 1e-10}, m_eps);
    Trajectory pert = integrate_flow(FlowSpec{sys.model.get(), perturbed_field(sys, eps), T}, sys.m0);
    for (double t : {0.0, 1.7, 3.1, 5.0}) {
        const Point via_phi = near_identity_apply(ni, pert.at(t), MapDirection::Inverse);
        CHECK(manifold_distance(M, direct.at(t), via_phi) < 5e-6);
    }
}

TEST_CASE("triangle decomposition shrinks with epsilon") {
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency.cfg"));
    System sys = build_system(cfg);
    VerifyContext ctx = make_verify_context(sys, false);
    auto [t1a, t2a] = triangle_decomposition(ctx, 0.05);
    auto [t1b, t2b] = triangle_decomposition(ctx, 0.01);
    CHECK(t1b < t1a);
    CHECK(t2b < t2a);
    CHECK(t1b < 0.05);
    CHECK(t2b < 0.05);
}

TEST_CASE("triangle terms vanish in the unperturbed limit") {
    // at eps = 1e-4 over the full horizon L0/eps both terms stay below 1e-3
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency_flat.cfg"));
    cfg.rel_tol = cfg.abs_tol = 1e-8;
    System sys = build_system(cfg);
    VerifyContext ctx = make_verify_context(sys, false);
    auto [t1, t2] = triangle_decomposition(ctx, 1e-4);
    CHECK(t1 <= 1e-3);
    CHECK(t2 <= 1e-3);
    CHECK(t1 > 0.0);
}

TEST_CASE("adiabatic drift on the rotation system (reduced size)") {
    auto cfg = quick(dsl::load_config(cfg_dir + "adiabatic.cfg"), {0.1, 0.05, 0.02, 0.01});
    System sys = build_system(cfg);
    AdiabaticResult res = adiabatic_drift(sys);
    CHECK(res.pass);
    CHECK(res.lambda_J > 0.0);
    CHECK(res.slope > 0.85);
    for (const auto& row : res.rows) CHECK(row.max_drift <= row.bound);

    // a non-integral J_O is rejected
    auto bad = cfg;
    bad.j_o = dsl::parse_expr("x1");
    CHECK_THROWS_AS(adiabatic_drift(build_system(bad)), FirstIntegralViolated);
}

TEST_CASE("vanishing reduced average admits any invariant") {
    // g = sin(phi): <X1>_O = 0, so every J_O is a first integral and the
    // drift is first order in eps
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency_flat.cfg"), {0.1, 0.05, 0.02, 0.01});
    cfg.x1 = {dsl::parse_expr("0"), dsl::parse_expr("sin(phi)")};
    cfg.j_o = dsl::parse_expr("x1 + 0.2*x1^2");
    AdiabaticResult res = adiabatic_drift(build_system(cfg));
    CHECK(res.pass);
    CHECK(res.slope > 0.85);
    CHECK(res.slope < 1.15);

    // X1 = 0: the drift sits at the integrator noise floor
    auto zero = cfg;
    zero.x1 = {dsl::parse_expr("0"), dsl::parse_expr("0")};
    zero.eps = {0.1, 0.02};
    AdiabaticResult rz = adiabatic_drift(build_system(zero));
    for (const auto& row : rz.rows) CHECK(row.max_drift < 1e-8);
}

TEST_CASE("surface instance obeys both length bounds (reduced size)") {
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency_flat.cfg"));
    System sys = build_system(cfg);
    SurfaceInstanceResult res = surface_instance(sys, 0.1, 5, 12);
    CHECK(res.sweep.pass);
    CHECK(res.kappa_bound_pass);
    CHECK(res.sweep.lengths.back() > 0.0);
}

TEST_CASE("CSV emission") {
    SweepResult empty;
    empty.slope = 0.0;
    const std::string csv = render_csv(empty);
    CHECK(csv == "epsilon,sup_error,c_eps_bound,term1,term2,kappa0,kappa1,kappa2,c,wall_ms\n# slope=0\n");

    SweepResult r;
    r.slope = 1.0125;
    r.constants.kappa0 = 0.5;
    r.constants.kappa1 = 1.25;
    r.constants.kappa2 = 1.0 / 3.0;
    r.constants.c = 2.75;
    SweepRow row;
    row.epsilon = 0.1;
    row.sup_error = 0.0123456789012345678;
    row.c_eps_bound = 0.275;
    row.term1 = 0.01;
    row.term2 = 0.02;
    row.wall_ms = 12.5;
    r.rows.push_back(row);

    // deterministic byte output for identical inputs
    CHECK(render_csv(r) == render_csv(r));

    // re-parsing and re-rendering the decimal fields is bitwise stable
    const std::string body = render_csv(r);
    std::istringstream is(body);
    std::string header, line;
    std::getline(is, header);
    std::getline(is, line);
    std::string rebuilt;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) comma = line.size();
        const double v = std::stod(line.substr(start, comma - start));
        rebuilt += detail::fmt17(v);
        start = comma + 1;
        if (start <= line.size()) rebuilt += start == line.size() + 1 ? "" : ",";
        if (comma == line.size()) break;
    }
    CHECK(rebuilt == line);

    // file emission round trip
    const std::string path = "/tmp/s1avg_test_sweep.csv";
    emit_csv(r, path);
    std::ifstream in(path, std::ios::binary);
    std::string back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(back == body);
}

TEST_CASE("pipeline rows are reproducible modulo wall time") {
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency_flat.cfg"), {0.1, 0.04});
    System sys = build_system(cfg);
    SweepResult a = verify_theorem(sys);
    SweepResult b = verify_theorem(sys);
    for (auto* r : {&a, &b})
        for (auto& row : r->rows) row.wall_ms = 0.0;
    CHECK(render_csv(a) == render_csv(b));
}

TEST_CASE("shipped constants match the recorded values") {
    System sys = build_system(dsl::load_config(cfg_dir + "one_frequency.cfg"));
    const VectorField Z = homological_Z(*sys.model, sys.X0, sys.X1, sys.quad);
    TheoremConstants k = compute_constants(*sys.model, sys.X0, sys.X1, Z, sys.sampler, sys.cfg.eps0,
                                           sys.cfg.L0, sys.quad, sys.cfg.rel_tol, sys.cfg.abs_tol);
    std::ifstream in(std::string(S1AVG_SOURCE_DIR) + "/tests/data/one_frequency_constants.csv");
    REQUIRE(in.good());
    std::string header, line;
    std::getline(in, header);
    REQUIRE(std::getline(in, line));
    std::istringstream ls(line);
    std::string field;
    std::vector<double> want;
    while (std::getline(ls, field, ',')) want.push_back(std::stod(field));
    REQUIRE(want.size() == 6);
    CHECK(k.kappa0 == Catch::Approx(want[0]).epsilon(1e-9));
    CHECK(k.kappa1 == Catch::Approx(want[1]).epsilon(1e-6));
    CHECK(k.kappa2 == Catch::Approx(want[2]).epsilon(1e-6));
    CHECK(k.c == Catch::Approx(want[3]).epsilon(1e-6));
}

TEST_CASE("shipped golden sweep") {
    // reduced deterministic run, frozen at its first verified output
    auto cfg = quick(dsl::load_config(cfg_dir + "one_frequency_flat.cfg"), {0.1, 0.05});
    System sys = build_system(cfg);
    SweepResult res = verify_theorem(sys);
    for (auto& row : res.rows) row.wall_ms = 0.0;
    const std::string got = render_csv(res);

    const std::string golden_path = std::string(S1AVG_SOURCE_DIR) + "/tests/data/golden_verify.csv";
    std::ifstream in(golden_path, std::ios::binary);
    REQUIRE(in.good());
    const std::string want((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    // compare structure and values at tight tolerance (decimal renderings may
    // legitimately differ across libm builds)
    std::istringstream gs(got), ws(want);
    std::string gl, wl;
    while (std::getline(ws, wl)) {
        REQUIRE(std::getline(gs, gl));
        if (wl.empty() || wl[0] == '#' || wl[0] == 'e') {
            CHECK(gl == wl);
            continue;
        }
        std::istringstream gf(gl), wf(wl);
        std::string ga, wa;
        while (std::getline(wf, wa, ',')) {
            REQUIRE(std::getline(gf, ga, ','));
            CHECK(std::stod(ga) == Catch::Approx(std::stod(wa)).epsilon(1e-10).margin(1e-12));
        }
    }
}
