#pragma once

#include <chrono>

#include "s1avg/bounds.hpp"
#include "s1avg/vfdsl.hpp"

namespace s1avg {

// ---------------------------------------------------------------------------
// Config -> runnable system
// ---------------------------------------------------------------------------

struct System {
    std::shared_ptr<const ManifoldModel> model;
    VectorField X0; // omega * generator (verified against the config when explicit)
    VectorField X1;
    Point m0;
    QuadratureRule quad;
    DomainSampler sampler;
    std::function<double(const OrbitPoint&)> j_o; // empty when not configured
    dsl::SystemConfig cfg;
};

namespace detail {

inline std::function<Vec(const Point&)> compile_components(const std::vector<dsl::Expr>& exprs,
                                                           const std::vector<std::string>& vars) {
    auto compiled = std::make_shared<std::vector<dsl::CompiledExpr>>();
    for (const auto& e : exprs) compiled->emplace_back(e, vars);
    return [compiled](const Point& p) {
        Vec out(compiled->size());
        for (std::size_t i = 0; i < compiled->size(); ++i) out[i] = (*compiled)[i](p.coords.data());
        return out;
    };
}

} // namespace detail

inline System build_system(const dsl::SystemConfig& cfg) {
    const auto vars = cfg.variables();
    auto om = std::make_shared<dsl::CompiledExpr>(cfg.omega, vars);
    ScalarField omega = [om](const Point& p) { return (*om)(p.coords.data()); };

    std::shared_ptr<const ManifoldModel> model = cfg.kind == ModelKind::Hopf
                                                     ? ManifoldModel::hopf(omega)
                                                     : ManifoldModel::trivial(cfg.k, omega);

    DomainSampler sampler =
        cfg.kind == ModelKind::Hopf
            ? DomainSampler::hopf_band(model, cfg.box_lo[0], cfg.box_hi[0], cfg.grid_res, cfg.fiber_res,
                                       cfg.topup, cfg.box0_lo[0], cfg.box0_hi[0], cfg.seed)
            : DomainSampler::box(model, cfg.box_lo, cfg.box_hi, cfg.grid_res, cfg.fiber_res, cfg.topup,
                                 &cfg.box0_lo, &cfg.box0_hi, cfg.seed);

    // omega must be invariant along the fibers for the operator calculus.
    for (std::size_t i = 0; i < sampler.points().size(); i += 7) {
        const Point& p = sampler.points()[i];
        const double w = model->omega(p);
        for (double th : {0.9, 2.7, 4.4}) {
            const double wt = model->omega(model->action(p, th));
            if (std::fabs(wt - w) > 1e-8 * (1.0 + std::fabs(w)))
                throw ConfigError(cfg.source_path + ": omega is not S^1-invariant (|delta| = " +
                                  std::to_string(std::fabs(wt - w)) + ")");
        }
    }

    System sys{model, periodic_field(*model), VectorField{}, Point{}, QuadratureRule::uniform(cfg.quad_nodes),
               sampler, {}, cfg};

    if (!cfg.x0.empty()) {
        VectorField given = make_field(*model, detail::compile_components(cfg.x0, vars));
        for (std::size_t i = 0; i < sampler.points().size(); i += 13) {
            const Point& p = sampler.points()[i];
            const Vec want = model->omega(p) * model->generator(p);
            const Vec got = given.components(p);
            if ((want - got).norm() > 1e-8 * (1.0 + want.norm()))
                throw ConfigError(cfg.source_path +
                                  ": x0 must equal omega * generator of the circle action (defect " +
                                  std::to_string((want - got).norm()) + ")");
        }
        sys.X0 = given;
    }
    sys.X1 = make_field(*model, detail::compile_components(cfg.x1, vars));

    if (cfg.m0.size() != model->coord_dim())
        throw ConfigError(cfg.source_path + ": m0 arity mismatch");
    if (cfg.kind == ModelKind::Hopf && std::fabs(cfg.m0.norm() - 1.0) > 1e-6)
        throw ConfigError(cfg.source_path + ": m0 must lie on the unit sphere in R^4");
    sys.m0 = model->make_point(cfg.m0);

    if (cfg.j_o) {
        const auto ovars = cfg.orbit_variables();
        auto cj = std::make_shared<dsl::CompiledExpr>(*cfg.j_o, ovars);
        sys.j_o = [cj](const OrbitPoint& z) { return (*cj)(z.coords.data()); };
    }
    return sys;
}

inline VectorField perturbed_field(const System& sys, double eps) {
    const VectorField X0 = sys.X0, X1 = sys.X1;
    return VectorField{sys.model->id(), [X0, X1, eps](const Point& p) {
                           return Vec(X0.components(p) + eps * X1.components(p));
                       }};
}

// ---------------------------------------------------------------------------
// Sup over a time grid
// ---------------------------------------------------------------------------

namespace detail {

/// Max over >= n_grid uniform samples, refined by golden-section search on
/// the bracket around the coarse argmax.
inline double sup_over_time(double t0, double t1, int n_grid, const std::function<double(double)>& f) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int i = 0; i <= n_grid; ++i) {
        const double t = t0 + (t1 - t0) * double(i) / double(n_grid);
        const double v = f(t);
        if (v > best) {
            best = v;
            arg = i;
        }
    }
    const double dt = (t1 - t0) / double(n_grid);
    double a = std::max(t0, t0 + (arg - 1) * dt);
    double b = std::min(t1, t0 + (arg + 1) * dt);
    const double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 40 && (b - a) > 1e-12 * (1.0 + std::fabs(b)); ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    return std::max({best, f1, f2});
}

inline double wall_ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Averaging-theorem verification
// ---------------------------------------------------------------------------

struct SweepRow {
    double epsilon = 0.0;
    double sup_error = 0.0;   // sup_t dist_O(rho Fl_{X_eps}^t(m0), Fl_{<X1>_O}^{eps t}(z0))
    double c_eps_bound = 0.0; // c * epsilon
    double term1 = 0.0;       // first triangle term
    double term2 = 0.0;       // second triangle term
    double wall_ms = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows; // sorted by epsilon, descending
    double slope = 0.0;         // log-log slope of sup_error vs epsilon
    TheoremConstants constants;
    bool pass = false; // sup_error <= c eps on every row
};

/// Shared per-run machinery: Z, the averaged field and its reduction, the
/// orbit trajectory of the averaged system, and the theorem constants.
struct VerifyContext {
    System sys;
    VectorField Z;
    VectorField averaged;     // <X1>
    ReducedField reduced;     // <X1>_O
    OrbitTrajectory averaged_trajectory; // flow of <X1>_O over [0, L0] from z0
    TheoremConstants constants;
};

inline VerifyContext make_verify_context(const System& sys, bool with_constants = true) {
    const ManifoldModel& M = *sys.model;
    const auto& cfg = sys.cfg;
    VectorField Z = homological_Z(M, sys.X0, sys.X1, sys.quad);
    VectorField avg = average_field(M, sys.X1, sys.quad);
    ReducedField red = reduce_field(M, avg, sys.quad);
    const OrbitPoint z0 = M.project(sys.m0);
    const DomainSampler& sampler = sys.sampler;
    auto domain_check = [&sampler](double, const OrbitPoint& z) {
        if (!sampler.contains_orbit(z, 1e-9))
            throw DomainExit("averaged trajectory left the configured domain");
    };
    // step cap keeps the dense cubic Hermite queries at tolerance level on
    // this smooth, slowly-varying flow
    OrbitTrajectory otraj = integrate_orbit(M, red.components, z0, cfg.L0, cfg.rel_tol, cfg.abs_tol,
                                            domain_check, cfg.L0 / 64.0);
    TheoremConstants constants;
    if (with_constants)
        constants = compute_constants(M, sys.X0, sys.X1, Z, sys.sampler, cfg.eps0, cfg.L0, sys.quad,
                                      cfg.rel_tol, cfg.abs_tol);
    return VerifyContext{sys, Z, avg, red, otraj, constants};
}

/// The two terms of the triangle decomposition at a single epsilon:
///   term1 = sup_t dist_O(rho Fl_{X_eps}^t(m0), rho Fl_{Xt_{eps,1}}^t(m_eps)),
///   term2 = sup_t dist_O(rho Fl_{Xt_{eps,1}}^t(m_eps), rho Fl_{Xt_{eps,0}}^t(m0)).
/// The normalized trajectory Fl_{Xt_{eps,1}}^t(m_eps) is evaluated through the
/// exact conjugation Phi_eps^{-1} (Fl_{X_eps}^t(m0)) rather than by integrating
/// the remainder field over the long horizon.
inline std::pair<double, double> triangle_decomposition(const VerifyContext& ctx, double eps,
                                                        const Trajectory* perturbed = nullptr,
                                                        int n_grid = 200) {
    const System& sys = ctx.sys;
    const ManifoldModel& M = *sys.model;
    const auto& cfg = sys.cfg;
    const double t_max = cfg.L0 / eps;

    Trajectory local = perturbed ? *perturbed
                                 : integrate_flow(FlowSpec{sys.model.get(), perturbed_field(sys, eps),
                                                           t_max, cfg.rel_tol, cfg.abs_tol},
                                                  sys.m0);
    const NearIdentityMap ni{sys.model.get(), ctx.Z, eps, cfg.rel_tol, cfg.abs_tol};
    const auto normalized_at = [&](double t) {
        return near_identity_apply(ni, local.at(t), MapDirection::Inverse);
    };

    const double term1 = detail::sup_over_time(0.0, t_max, n_grid, [&](double t) {
        const Point p = local.at(t);
        return M.orbit_distance(M.project(p), M.project(normalized_at(t)));
    });

    // flow of Xt_{eps,0} = X0 + eps <X1> from m0
    const VectorField avg = ctx.averaged;
    const VectorField X0 = sys.X0;
    VectorField xt0{M.id(), [X0, avg, eps](const Point& p) {
                        return Vec(X0.components(p) + eps * avg.components(p));
                    }};
    Trajectory q = integrate_flow(FlowSpec{sys.model.get(), xt0, t_max, cfg.rel_tol, cfg.abs_tol}, sys.m0);
    const double term2 = detail::sup_over_time(0.0, t_max, n_grid, [&](double t) {
        return M.orbit_distance(M.project(normalized_at(t)), M.project(q.at(t)));
    });
    return {term1, term2};
}

inline std::pair<double, double> triangle_decomposition(const System& sys, double eps) {
    return triangle_decomposition(make_verify_context(sys, false), eps);
}

/// Runs the averaging-theorem sweep: for each epsilon, integrates the
/// perturbed flow over [0, L0/eps], compares its orbit projection against the
/// averaged trajectory at rescaled time, records the triangle terms, computes
/// the constants and fits the error slope.
inline SweepResult verify_theorem(const System& sys, int n_grid = 200) {
    const ManifoldModel& M = *sys.model;
    const auto& cfg = sys.cfg;
    VerifyContext ctx = make_verify_context(sys);

    SweepResult out;
    out.constants = ctx.constants;
    const DomainSampler& sampler = sys.sampler;
    for (double eps : cfg.eps) {
        const auto t_start = std::chrono::steady_clock::now();
        SweepRow row;
        row.epsilon = eps;
        const double t_max = cfg.L0 / eps;
        auto domain_check = [&M, &sampler](double, const Point& p) {
            if (!sampler.contains_orbit(M.project(p), 1e-9))
                throw DomainExit("perturbed trajectory left the configured domain");
        };
        Trajectory traj = integrate_flow(
            FlowSpec{sys.model.get(), perturbed_field(sys, eps), t_max, cfg.rel_tol, cfg.abs_tol},
            sys.m0, domain_check);
        row.sup_error = detail::sup_over_time(0.0, t_max, n_grid, [&](double t) {
            return M.orbit_distance(M.project(traj.at(t)), ctx.averaged_trajectory.at(eps * t));
        });
        row.c_eps_bound = ctx.constants.c * eps;
        std::tie(row.term1, row.term2) = triangle_decomposition(ctx, eps, &traj, n_grid);
        row.wall_ms = detail::wall_ms_since(t_start);
        out.rows.push_back(row);
    }
    std::sort(out.rows.begin(), out.rows.end(),
              [](const SweepRow& a, const SweepRow& b) { return a.epsilon > b.epsilon; });
    std::vector<double> es, errs;
    bool degenerate = false;
    for (const auto& r : out.rows) {
        es.push_back(r.epsilon);
        errs.push_back(r.sup_error);
        degenerate = degenerate || !(r.sup_error > 0.0);
    }
    // an identically-zero error column (e.g. X1 = 0 on the product bundle)
    // has no meaningful slope
    out.slope = (degenerate || out.rows.size() < 2) ? 0.0 : fit_loglog_slope(es, errs);
    out.pass = true;
    for (const auto& r : out.rows)
        if (r.sup_error > r.c_eps_bound * (1.0 + 1e-9) + 1e-12) out.pass = false;
    return out;
}

inline SweepResult verify_theorem(const dsl::SystemConfig& cfg) { return verify_theorem(build_system(cfg)); }

// ---------------------------------------------------------------------------
// Adiabatic invariants
// ---------------------------------------------------------------------------

struct AdiabaticRow {
    double epsilon = 0.0;
    double max_drift = 0.0; // max_t |J(Fl_{X_eps}^t(m0)) - J(m0)|
    double bound = 0.0;     // lambda_J * c * eps
    double wall_ms = 0.0;
};

struct AdiabaticResult {
    std::vector<AdiabaticRow> rows;
    double slope = 0.0;
    double lambda_J = 0.0; // sampled Lipschitz constant of J_O on the domain
    TheoremConstants constants;
    bool pass = false;
};

namespace detail {

inline Vec orbit_gradient(const ManifoldModel& M, const std::function<double(const OrbitPoint&)>& f,
                          const OrbitPoint& z) {
    const int n = M.orbit_coord_dim();
    const double h = 1e-6 * (1.0 + z.coords.norm());
    Vec g(n);
    for (int i = 0; i < n; ++i) {
        Vec e = Vec::Zero(n);
        e[i] = 1.0;
        OrbitPoint zp{z.model, Vec(z.coords + h * e)}, zm{z.model, Vec(z.coords - h * e)};
        g[i] = (f(zp) - f(zm)) / (2.0 * h);
    }
    return M.orbit_tangent_project(z, g);
}

} // namespace detail

/// Drift of the first integral J = J_O o rho along perturbed trajectories
/// over [0, L0/eps], with its Lipschitz-constant bound lambda_J c eps.
inline AdiabaticResult adiabatic_drift(const System& sys, int n_grid = 200) {
    if (!sys.j_o) throw ConfigError(sys.cfg.source_path + ": adiabatic run needs [invariant] j_o");
    const ManifoldModel& M = *sys.model;
    const auto& cfg = sys.cfg;
    VerifyContext ctx = make_verify_context(sys);

    // precondition: J_O is a first integral of the reduced averaged field
    const auto& orbit_pts = sys.sampler.orbit_points();
    const std::size_t n_check = std::min<std::size_t>(100, orbit_pts.size());
    for (std::size_t i = 0; i < n_check; ++i) {
        const OrbitPoint& z = orbit_pts[i * orbit_pts.size() / n_check];
        const double lie = detail::orbit_gradient(M, sys.j_o, z).dot(ctx.reduced.components(z));
        if (std::fabs(lie) > 1e-8)
            throw FirstIntegralViolated("L_{<X1>_O} J_O = " + std::to_string(lie) +
                                        " at a sampled orbit point (needs <= 1e-8)");
    }

    AdiabaticResult out;
    out.constants = ctx.constants;
    out.lambda_J = orbit_sample_sup(sys.sampler, [&](const OrbitPoint& z) {
        return detail::orbit_gradient(M, sys.j_o, z).norm();
    });

    const double J0 = sys.j_o(M.project(sys.m0));
    for (double eps : cfg.eps) {
        const auto t_start = std::chrono::steady_clock::now();
        AdiabaticRow row;
        row.epsilon = eps;
        const double t_max = cfg.L0 / eps;
        Trajectory traj = integrate_flow(
            FlowSpec{sys.model.get(), perturbed_field(sys, eps), t_max, cfg.rel_tol, cfg.abs_tol},
            sys.m0);
        row.max_drift = detail::sup_over_time(0.0, t_max, n_grid, [&](double t) {
            return std::fabs(sys.j_o(M.project(traj.at(t))) - J0);
        });
        row.bound = out.lambda_J * ctx.constants.c * eps;
        row.wall_ms = detail::wall_ms_since(t_start);
        out.rows.push_back(row);
    }
    std::sort(out.rows.begin(), out.rows.end(),
              [](const AdiabaticRow& a, const AdiabaticRow& b) { return a.epsilon > b.epsilon; });
    std::vector<double> es, ds;
    bool degenerate = false;
    for (const auto& r : out.rows) {
        es.push_back(r.epsilon);
        ds.push_back(r.max_drift);
        degenerate = degenerate || !(r.max_drift > 0.0);
    }
    out.slope = (degenerate || out.rows.size() < 2) ? 0.0 : fit_loglog_slope(es, ds);
    out.pass = true;
    for (const auto& r : out.rows)
        if (r.max_drift > r.bound * (1.0 + 1e-9) + 1e-12) out.pass = false;
    return out;
}

inline AdiabaticResult adiabatic_drift(const dsl::SystemConfig& cfg) {
    return adiabatic_drift(build_system(cfg));
}

// ---------------------------------------------------------------------------
// The flow-surface instance of the length estimate
// ---------------------------------------------------------------------------

struct SurfaceInstanceResult {
    double eps = 0.0;
    SurfaceSweepResult sweep;
    TheoremConstants constants;
    bool kappa_bound_pass = false; // L(t) <= eps [(k2/k1 + k0) e^{eps k1 t} - k2/k1]
    std::vector<double> kappa_violations;
};

/// Builds the interpolation family Xt_{eps,s} = X0 + eps <X1> + s eps^2 R_eps
/// with base curve s -> m_{s eps} = Phi_{s eps}^{-1}(m0), runs the surface
/// sweep over [0, L0/eps], and checks the measured lengths against both the
/// sampled-constant bound and the kappa-constant bound.
inline SurfaceInstanceResult surface_instance(const System& sys, double eps, int n_s = 5, int n_t = 24,
                                              double traj_tol = 1e-9) {
    const ManifoldModel& M = *sys.model;
    const auto& cfg = sys.cfg;
    SurfaceInstanceResult out;
    out.eps = eps;

    const VectorField Z = homological_Z(M, sys.X0, sys.X1, sys.quad);
    const VectorField avg = average_field(M, sys.X1, sys.quad);
    const VectorField R = remainder_field(M, sys.X0, sys.X1, Z, eps, sys.quad, cfg.rel_tol, cfg.abs_tol);
    out.constants = compute_constants(M, sys.X0, sys.X1, Z, sys.sampler, cfg.eps0, cfg.L0, sys.quad,
                                      cfg.rel_tol, cfg.abs_tol);

    const VectorField X0 = sys.X0;
    auto family = [&M, X0, avg, R, eps](double s) {
        return VectorField{M.id(), [X0, avg, R, eps, s](const Point& p) {
                               return Vec(X0.components(p) + eps * avg.components(p) +
                                          (s * eps * eps) * R.components(p));
                           }};
    };
    const ManifoldModel* mp = sys.model.get();
    const Point m0 = sys.m0;
    PointCurve beta;
    beta.t0 = 0.0;
    beta.t1 = 1.0;
    beta.at = [mp, &Z, m0, eps, &cfg](double s) {
        NearIdentityMap ni{mp, Z, s * eps, cfg.rel_tol, cfg.abs_tol};
        return near_identity_apply(ni, m0, MapDirection::Inverse);
    };

    out.sweep = surface_sweep(M, family, beta, cfg.L0 / eps, n_s, n_t, traj_tol, traj_tol);

    out.kappa_bound_pass = true;
    const auto& k = out.constants;
    for (std::size_t j = 0; j < out.sweep.t_grid.size(); ++j) {
        const double mmn =
            eps * surface_length_bound(eps * k.kappa1, eps * k.kappa2, k.kappa0, out.sweep.t_grid[j]);
        if (out.sweep.lengths[j] > mmn * (1.0 + 1e-9) + 1e-12) {
            out.kappa_bound_pass = false;
            out.kappa_violations.push_back(out.sweep.t_grid[j]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Writes the sweep as CSV: one row per epsilon with 17-significant-digit
/// floats, a trailing `# slope=` comment line. Byte output is a pure function
/// of the result.
inline std::string render_csv(const SweepResult& r) {
    std::string out = "epsilon,sup_error,c_eps_bound,term1,term2,kappa0,kappa1,kappa2,c,wall_ms\n";
    for (const auto& row : r.rows) {
        out += detail::fmt17(row.epsilon) + "," + detail::fmt17(row.sup_error) + "," +
               detail::fmt17(row.c_eps_bound) + "," + detail::fmt17(row.term1) + "," +
               detail::fmt17(row.term2) + "," + detail::fmt17(r.constants.kappa0) + "," +
               detail::fmt17(r.constants.kappa1) + "," + detail::fmt17(r.constants.kappa2) + "," +
               detail::fmt17(r.constants.c) + "," + detail::fmt17(row.wall_ms) + "\n";
    }
    out += "# slope=" + detail::fmt17(r.slope) + "\n";
    return out;
}

inline std::string render_csv(const AdiabaticResult& r) {
    std::string out = "epsilon,max_drift,bound,lambda_J,c,wall_ms\n";
    for (const auto& row : r.rows) {
        out += detail::fmt17(row.epsilon) + "," + detail::fmt17(row.max_drift) + "," +
               detail::fmt17(row.bound) + "," + detail::fmt17(r.lambda_J) + "," +
               detail::fmt17(r.constants.c) + "," + detail::fmt17(row.wall_ms) + "\n";
    }
    out += "# slope=" + detail::fmt17(r.slope) + "\n";
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f << content;
    if (!f) throw Error("write to '" + path + "' failed");
}

inline void emit_csv(const SweepResult& r, const std::string& path) { write_file(path, render_csv(r)); }
inline void emit_csv(const AdiabaticResult& r, const std::string& path) { write_file(path, render_csv(r)); }

} // namespace s1avg
