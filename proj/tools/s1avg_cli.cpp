// Command-line front end: loads a system configuration and runs one of the
// toolkit pipelines. Exit codes: 0 = all verdicts pass, 2 = a bound or slope
// verdict failed, 1 = error.

#include <CLI11.hpp>
#include <iostream>

#include "s1avg/s1avg.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_path;
    double eps_min = 0.0, eps_max = 0.0;
    int eps_count = 0;
    int nodes = 0;
    double tol = 0.0;
    std::uint64_t seed = std::uint64_t(-1);
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "system configuration file")->required();
    cmd->add_option("--out", o.out_path, "output CSV path");
    cmd->add_option("--eps-min", o.eps_min, "override sweep eps_min");
    cmd->add_option("--eps-max", o.eps_max, "override sweep eps_max");
    cmd->add_option("--eps-count", o.eps_count, "override sweep eps_count");
    cmd->add_option("--nodes", o.nodes, "override quadrature node count");
    cmd->add_option("--tol", o.tol, "override rel/abs integration tolerance");
    cmd->add_option("--seed", o.seed, "override sampler seed");
}

s1avg::dsl::SystemConfig load_with_overrides(const CommonOpts& o) {
    auto cfg = s1avg::dsl::load_config(o.config_path);
    if (o.eps_min > 0.0 || o.eps_max > 0.0 || o.eps_count > 0) {
        double emin = o.eps_min > 0.0 ? o.eps_min : cfg.eps.back();
        double emax = o.eps_max > 0.0 ? o.eps_max : cfg.eps.front();
        int n = o.eps_count > 0 ? o.eps_count : int(cfg.eps.size());
        cfg.eps.clear();
        for (int i = 0; i < n; ++i)
            cfg.eps.push_back(n == 1 ? emax : emax * std::pow(emin / emax, double(i) / double(n - 1)));
        cfg.eps0 = emax;
    }
    if (o.nodes > 0) cfg.quad_nodes = o.nodes;
    if (o.tol > 0.0) cfg.rel_tol = cfg.abs_tol = o.tol;
    if (o.seed != std::uint64_t(-1)) cfg.seed = o.seed;
    return cfg;
}

std::string fmt(double v) { return s1avg::detail::fmt17(v); }

int run_average(const CommonOpts& o) {
    using namespace s1avg;
    System sys = build_system(load_with_overrides(o));
    const ManifoldModel& M = *sys.model;
    const VectorField avg = average_field(M, sys.X1, sys.quad);
    const VectorField S1 = integrating_op(M, sys.X1, sys.quad);
    const VectorField Z = homological_Z(M, sys.X0, sys.X1, sys.quad);
    const ReducedField red = reduce_field(M, avg, sys.quad);
    const OrbitPoint z0 = M.project(sys.m0);

    const Vec a = avg.components(sys.m0), s = S1.components(sys.m0), z = Z.components(sys.m0);
    const Vec r = red.components(z0);
    std::cout << "<X1>(m0)   = " << a.transpose() << "\n"
              << "S(X1)(m0)  = " << s.transpose() << "\n"
              << "Z(m0)      = " << z.transpose() << "\n"
              << "<X1>_O(z0) = " << r.transpose() << "\n";
    if (!o.out_path.empty()) {
        std::string csv = "field,component,value\n";
        const auto emit = [&csv](const char* name, const Vec& v) {
            for (int i = 0; i < v.size(); ++i)
                csv += std::string(name) + "," + std::to_string(i) + "," + fmt(v[i]) + "\n";
        };
        emit("avg_x1", a);
        emit("S_x1", s);
        emit("Z", z);
        emit("avg_x1_reduced", r);
        write_file(o.out_path, csv);
    }
    return 0;
}

int run_normal_form(const CommonOpts& o) {
    using namespace s1avg;
    System sys = build_system(load_with_overrides(o));
    NormalFormResult nf = compute_normal_form(*sys.model, sys.X0, sys.X1, sys.quad, sys.m0,
                                              defect_eps_ladder(), sys.cfg.rel_tol, sys.cfg.abs_tol);
    const VectorField Z = homological_Z(*sys.model, sys.X0, sys.X1, sys.quad);
    std::string csv = "epsilon,defect,remainder_norm\n";
    for (double eps : defect_eps_ladder()) {
        const double d = normal_form_defect(*sys.model, sys.X0, sys.X1, Z, eps, sys.m0, sys.quad,
                                            sys.cfg.rel_tol, sys.cfg.abs_tol);
        const TangentVector r = nf.remainder_at(eps, sys.m0);
        csv += fmt(eps) + "," + fmt(d) + "," + fmt(sys.model->norm(sys.m0, r.components)) + "\n";
    }
    csv += "# slope=" + fmt(nf.order2_slope) + "\n";
    if (!o.out_path.empty()) write_file(o.out_path, csv);
    std::cout << "normal-form defect slope = " << nf.order2_slope << " (want [1.8, 2.2])\n";
    return (nf.order2_slope >= 1.8 && nf.order2_slope <= 2.2) ? 0 : 2;
}

int run_verify(const CommonOpts& o) {
    using namespace s1avg;
    System sys = build_system(load_with_overrides(o));
    SweepResult res = verify_theorem(sys);
    if (!o.out_path.empty()) emit_csv(res, o.out_path);
    std::cout << "epsilon        sup_error      c*eps\n";
    for (const auto& r : res.rows)
        std::cout << fmt(r.epsilon) << "  " << fmt(r.sup_error) << "  " << fmt(r.c_eps_bound) << "\n";
    std::cout << "slope = " << res.slope << ", c = " << res.constants.c
              << (res.pass ? "  [bound holds]" : "  [BOUND VIOLATED]") << "\n";
    return res.pass ? 0 : 2;
}

int run_adiabatic(const CommonOpts& o) {
    using namespace s1avg;
    System sys = build_system(load_with_overrides(o));
    AdiabaticResult res = adiabatic_drift(sys);
    if (!o.out_path.empty()) emit_csv(res, o.out_path);
    std::cout << "epsilon        max_drift      lambda_J*c*eps\n";
    for (const auto& r : res.rows)
        std::cout << fmt(r.epsilon) << "  " << fmt(r.max_drift) << "  " << fmt(r.bound) << "\n";
    std::cout << "slope = " << res.slope << ", lambda_J = " << res.lambda_J
              << (res.pass ? "  [bound holds]" : "  [BOUND VIOLATED]") << "\n";
    return res.pass ? 0 : 2;
}

int run_bounds(const CommonOpts& o) {
    using namespace s1avg;
    System sys = build_system(load_with_overrides(o));
    const VectorField Z = homological_Z(*sys.model, sys.X0, sys.X1, sys.quad);
    TheoremConstants k = compute_constants(*sys.model, sys.X0, sys.X1, Z, sys.sampler, sys.cfg.eps0,
                                           sys.cfg.L0, sys.quad, sys.cfg.rel_tol, sys.cfg.abs_tol);
    std::cout << "kappa0 = " << fmt(k.kappa0) << "  at " << k.arg_kappa0.coords.transpose() << "\n"
              << "kappa1 = " << fmt(k.kappa1) << "  at " << k.arg_kappa1.coords.transpose() << "\n"
              << "kappa2 = " << fmt(k.kappa2) << "  at " << k.arg_kappa2.coords.transpose() << "\n"
              << "c      = " << fmt(k.c) << "  (eps0 = " << k.epsilon0 << ", L0 = " << k.L0 << ")\n"
              << "domain: " << sys.sampler.description() << "\n";
    if (!o.out_path.empty()) {
        std::string csv = "kappa0,kappa1,kappa2,c,eps0,L0\n";
        csv += fmt(k.kappa0) + "," + fmt(k.kappa1) + "," + fmt(k.kappa2) + "," + fmt(k.c) + "," +
               fmt(k.epsilon0) + "," + fmt(k.L0) + "\n";
        write_file(o.out_path, csv);
    }
    return 0;
}

int run_gronwall(const CommonOpts& o) {
    using namespace s1avg;
    System sys = build_system(load_with_overrides(o));
    const double eps = sys.cfg.eps.front();
    SurfaceInstanceResult res = surface_instance(sys, eps);
    std::string csv = "t,length,sampled_bound,kappa_bound\n";
    const auto& k = res.constants;
    for (std::size_t j = 0; j < res.sweep.t_grid.size(); ++j) {
        const double mmn =
            eps * surface_length_bound(eps * k.kappa1, eps * k.kappa2, k.kappa0, res.sweep.t_grid[j]);
        csv += fmt(res.sweep.t_grid[j]) + "," + fmt(res.sweep.lengths[j]) + "," +
               fmt(res.sweep.bound_values[j]) + "," + fmt(mmn) + "\n";
    }
    if (!o.out_path.empty()) write_file(o.out_path, csv);
    std::cout << "surface sweep at eps = " << eps << ": C1 = " << res.sweep.C1 << ", C2 = " << res.sweep.C2
              << "\n"
              << "sampled-constant bound: " << (res.sweep.pass ? "holds" : "VIOLATED") << "\n"
              << "kappa-constant bound:   " << (res.kappa_bound_pass ? "holds" : "VIOLATED") << "\n";
    return (res.sweep.pass && res.kappa_bound_pass) ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"averaging of perturbed flows on S^1-bundles"};
    app.require_subcommand(1);

    CommonOpts opts;
    auto* c_average = app.add_subcommand("average", "evaluate the averaging operators at m0");
    auto* c_nf = app.add_subcommand("normal-form", "first-order normal form defect sweep");
    auto* c_verify = app.add_subcommand("verify", "averaging-theorem error sweep");
    auto* c_adia = app.add_subcommand("adiabatic", "adiabatic-invariant drift sweep");
    auto* c_bounds = app.add_subcommand("bounds", "theorem constants kappa0..2 and c");
    auto* c_gron = app.add_subcommand("gronwall", "flow-surface length bound check");
    for (auto* c : {c_average, c_nf, c_verify, c_adia, c_bounds, c_gron}) add_common(c, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_average->parsed()) return run_average(opts);
        if (c_nf->parsed()) return run_normal_form(opts);
        if (c_verify->parsed()) return run_verify(opts);
        if (c_adia->parsed()) return run_adiabatic(opts);
        if (c_bounds->parsed()) return run_bounds(opts);
        if (c_gron->parsed()) return run_gronwall(opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
