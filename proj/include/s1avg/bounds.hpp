#pragma once

#include <sstream>

#include "s1avg/averaging.hpp"
#include "s1avg/flows.hpp"
#include "s1avg/normalform.hpp"

namespace s1avg {

struct GronwallParams {
    double delta1 = 1.0; // > 0
    double delta2 = 0.0; // >= 0
    double delta3 = 0.0; // >= 0
    double t0 = 0.0;
};

/// Gronwall bound (delta2/delta1 + delta3) e^{delta1 (t-t0)} - delta2/delta1.
inline double gronwall_bound(const GronwallParams& g, double t) {
    if (!(g.delta1 > 0.0)) throw MathDomainError("gronwall_bound: delta1 must be positive");
    if (t < g.t0) throw MathDomainError("gronwall_bound: t < t0");
    return (g.delta2 / g.delta1 + g.delta3) * std::exp(g.delta1 * (t - g.t0)) - g.delta2 / g.delta1;
}

/// Length bound (C2/C1 + L_init) e^{C1 t} - C2/C1 for s-curves on a flow
/// surface, evaluated in the form L_init e^{C1 t} + C2 t expm1(C1 t)/(C1 t)
/// so the C1 -> 0 limit (L_init + C2 t) is exact.
inline double surface_length_bound(double C1, double C2, double L_init, double t) {
    if (C1 < 0.0) throw MathDomainError("surface_length_bound: C1 must be nonnegative");
    const double z = C1 * t;
    const double phi1 = std::fabs(z) < 1e-12 ? 1.0 : std::expm1(z) / z;
    return L_init * std::exp(z) + C2 * t * phi1;
}

// ---------------------------------------------------------------------------
// Domain sampling
// ---------------------------------------------------------------------------

/// Deterministic sample set for the saturated domains N = rho^{-1}(D) (outer)
/// and N0 = rho^{-1}(D0) (inner): a base grid over D crossed with a fiber
/// grid, topped up with Halton points. Refinement doubles every resolution,
/// so refined sample sets contain their coarser versions and sampled sups are
/// monotone under refinement.
class DomainSampler {
public:
    /// Trivial bundle: boxes in the base coordinates.
    static DomainSampler box(std::shared_ptr<const ManifoldModel> M, const Vec& lo, const Vec& hi,
                             int grid_res = 8, int fiber_res = 8, int topup = 32, const Vec* lo0 = nullptr,
                             const Vec* hi0 = nullptr, std::uint64_t seed = 0) {
        if (M->id().kind != ModelKind::TrivialBundle)
            throw Error("DomainSampler::box is for the trivial bundle");
        DomainSampler s;
        s.model_ = std::move(M);
        s.lo_ = lo;
        s.hi_ = hi;
        s.lo0_ = lo0 ? *lo0 : lo;
        s.hi0_ = hi0 ? *hi0 : hi;
        s.grid_res_ = grid_res;
        s.fiber_res_ = fiber_res;
        s.topup_ = topup;
        s.seed_ = seed;
        s.build();
        return s;
    }

    /// Hopf bundle: whole sphere or a band zmin <= z <= zmax on the third
    /// orbit coordinate (range [-1/2, 1/2]).
    static DomainSampler hopf_band(std::shared_ptr<const ManifoldModel> M, double zmin = -0.5,
                                   double zmax = 0.5, int grid_res = 8, int fiber_res = 8, int topup = 32,
                                   double zmin0 = 2.0, double zmax0 = 2.0, std::uint64_t seed = 0) {
        if (M->id().kind != ModelKind::Hopf) throw Error("DomainSampler::hopf_band is for the Hopf bundle");
        DomainSampler s;
        s.model_ = std::move(M);
        s.lo_ = Vec::Constant(1, zmin);
        s.hi_ = Vec::Constant(1, zmax);
        s.lo0_ = Vec::Constant(1, zmin0 > 1.0 ? zmin : zmin0);
        s.hi0_ = Vec::Constant(1, zmax0 > 1.0 ? zmax : zmax0);
        s.grid_res_ = grid_res;
        s.fiber_res_ = fiber_res;
        s.topup_ = topup;
        s.seed_ = seed;
        s.build();
        return s;
    }

    const std::vector<Point>& points() const { return points_; }       // N (outer)
    const std::vector<Point>& inner_points() const { return inner_; }  // N0
    const std::vector<OrbitPoint>& orbit_points() const { return orbit_; }

    DomainSampler refined() const {
        DomainSampler s = *this;
        s.grid_res_ *= 2;
        s.fiber_res_ *= 2;
        s.topup_ *= 2;
        s.points_.clear();
        s.inner_.clear();
        s.orbit_.clear();
        s.build();
        return s;
    }

    const ManifoldModel& model() const { return *model_; }

    /// Whether an orbit point lies in the (outer) domain, with slack.
    bool contains_orbit(const OrbitPoint& z, double slack = 1e-9) const {
        if (model_->id().kind == ModelKind::TrivialBundle) {
            for (int i = 0; i < z.coords.size(); ++i)
                if (z.coords[i] < lo_[i] - slack || z.coords[i] > hi_[i] + slack) return false;
            return true;
        }
        return z.coords[2] >= lo_[0] - slack && z.coords[2] <= hi_[0] + slack;
    }

    std::string description() const {
        std::ostringstream os;
        if (model_->id().kind == ModelKind::TrivialBundle) {
            os << "box [";
            for (int i = 0; i < lo_.size(); ++i)
                os << (i ? " x [" : "") << lo_[i] << ", " << hi_[i] << "]";
        } else {
            os << "S^3 band z in [" << lo_[0] << ", " << hi_[0] << "]";
        }
        os << ", grid " << grid_res_ << "/axis, fiber " << fiber_res_ << ", halton top-up " << topup_;
        return os.str();
    }

private:
    void build() {
        if (model_->id().kind == ModelKind::TrivialBundle)
            build_trivial();
        else
            build_hopf();
    }

    void add_fibered(const Point& base, std::vector<Point>& dst) const {
        for (int j = 0; j < fiber_res_; ++j) dst.push_back(model_->action(base, two_pi * j / fiber_res_));
    }

    void build_trivial() {
        const int k = model_->id().k;
        build_box_grid(lo_, hi_, k, points_, &orbit_);
        build_box_grid(lo0_, hi0_, k, inner_, nullptr);
    }

    void build_box_grid(const Vec& lo, const Vec& hi, int k, std::vector<Point>& dst,
                        std::vector<OrbitPoint>* orbits) {
        std::vector<int> idx(k, 0);
        for (;;) {
            Vec c(k + 1);
            c[0] = 0.0;
            for (int i = 0; i < k; ++i)
                c[i + 1] = lo[i] + (hi[i] - lo[i]) * double(idx[i]) / double(grid_res_);
            const Point base{model_->id(), c};
            add_fibered(base, dst);
            if (orbits) orbits->push_back(model_->project(base));
            int d = 0;
            while (d < k && ++idx[d] > grid_res_) idx[d++] = 0;
            if (d == k) break;
        }
        for (int i = 0; i < topup_; ++i) {
            auto u = halton_point(seed_ + std::uint64_t(i), k + 1);
            Vec c(k + 1);
            c[0] = two_pi * u[k];
            for (int d = 0; d < k; ++d) c[d + 1] = lo[d] + (hi[d] - lo[d]) * u[d];
            const Point p{model_->id(), c};
            dst.push_back(p);
            if (orbits) orbits->push_back(model_->project(p));
        }
    }

    void build_hopf() {
        build_band_grid(lo_[0], hi_[0], points_, &orbit_);
        build_band_grid(lo0_[0], hi0_[0], inner_, nullptr);
    }

    void build_band_grid(double zlo, double zhi, std::vector<Point>& dst, std::vector<OrbitPoint>* orbits) {
        for (int it = 0; it <= grid_res_; ++it) {
            const double z = zlo + (zhi - zlo) * double(it) / double(grid_res_);
            for (int ip = 0; ip < grid_res_; ++ip) {
                const double psi = two_pi * ip / grid_res_;
                const Point base = section_at(z, psi);
                add_fibered(base, dst);
                if (orbits) orbits->push_back(model_->project(base));
            }
        }
        for (int i = 0; i < topup_; ++i) {
            auto u = halton_point(seed_ + std::uint64_t(i), 3);
            const double z = zlo + (zhi - zlo) * u[0];
            const Point p = model_->action(section_at(z, two_pi * u[1]), two_pi * u[2]);
            dst.push_back(p);
            if (orbits) orbits->push_back(model_->project(p));
        }
    }

    Point section_at(double z, double psi) const {
        const double r = std::sqrt(std::max(0.0, 0.25 - z * z));
        Vec oc(3);
        oc << r * std::cos(psi), r * std::sin(psi), z;
        return model_->section(OrbitPoint{model_->id(), oc});
    }

    std::shared_ptr<const ManifoldModel> model_;
    Vec lo_, hi_, lo0_, hi0_;
    int grid_res_ = 8, fiber_res_ = 8, topup_ = 32;
    std::uint64_t seed_ = 0;
    std::vector<Point> points_, inner_;
    std::vector<OrbitPoint> orbit_;
};

struct SupResult {
    double value = 0.0;
    Point arg;
};

/// Maximum of f over the sampler's outer point set; evaluations run in
/// parallel, the reduction is deterministic.
inline SupResult sample_sup(const DomainSampler& s, const std::function<double(const Point&)>& f) {
    const auto& pts = s.points();
    auto [v, i] = parallel_max_index(pts.size(), [&](std::size_t j) { return f(pts[j]); });
    return SupResult{v, pts[i]};
}

inline SupResult sample_sup_inner(const DomainSampler& s, const std::function<double(const Point&)>& f) {
    const auto& pts = s.inner_points();
    auto [v, i] = parallel_max_index(pts.size(), [&](std::size_t j) { return f(pts[j]); });
    return SupResult{v, pts[i]};
}

inline double orbit_sample_sup(const DomainSampler& s, const std::function<double(const OrbitPoint&)>& f) {
    const auto& pts = s.orbit_points();
    return parallel_max_index(pts.size(), [&](std::size_t j) { return f(pts[j]); }).first;
}

// ---------------------------------------------------------------------------
// Theorem constants
// ---------------------------------------------------------------------------

struct TheoremConstants {
    double kappa0 = 0.0; // sup_{N0} |Z|
    double kappa1 = 0.0; // sup_{N, eps} |nabla <X1>^hor| + eps |nabla R_eps^hor|
    double kappa2 = 0.0; // sup_{N, eps} |R_eps^hor|
    double c = 0.0;      // kappa0 + (kappa2/kappa1 + kappa0) e^{kappa1 L0} - kappa2/kappa1
    double epsilon0 = 0.0;
    double L0 = 0.0;
    Point arg_kappa0, arg_kappa1, arg_kappa2; // attaining samples
};

/// The epsilon-independent constant of the averaging estimate, assembled from
/// the three sups; the kappa1 -> 0 limit is taken smoothly.
inline double theorem_constant_c(double kappa0, double kappa1, double kappa2, double L0) {
    return kappa0 + surface_length_bound(kappa1, kappa2, kappa0, L0);
}

/// Computes kappa0, kappa1, kappa2 and c over the sampled domains. The
/// epsilon sup is taken over an 8-point geometric grid in (0, eps0].
inline TheoremConstants compute_constants(const ManifoldModel& M, const VectorField& X0,
                                          const VectorField& X1, const VectorField& Z,
                                          const DomainSampler& sampler, double eps0, double L0,
                                          const QuadratureRule& quad, double rel_tol = 1e-10,
                                          double abs_tol = 1e-10) {
    TheoremConstants out;
    out.epsilon0 = eps0;
    out.L0 = L0;

    auto k0 = sample_sup_inner(sampler, [&](const Point& p) { return M.norm(p, Z.components(p)); });
    out.kappa0 = k0.value;
    out.arg_kappa0 = k0.arg;

    const VectorField avg = average_field(M, X1, quad);
    const ManifoldModel* m = &M;
    const VectorField avg_hor{M.id(), [m, avg](const Point& p) {
                                  return horizontal_part(*m, p, avg.components(p));
                              }};
    // |nabla <X1>^hor| does not depend on eps; evaluate once per sample.
    const auto& pts = sampler.points();
    std::vector<double> grad_avg(pts.size());
    {
        std::vector<std::thread> pool;
        const int nt = std::min<int>(thread_count(), int(pts.size()) == 0 ? 1 : int(pts.size()));
        for (int t = 0; t < nt; ++t)
            pool.emplace_back([&, t]() {
                for (std::size_t i = t; i < pts.size(); i += std::size_t(nt))
                    grad_avg[i] = nabla_op_norm(*m, avg_hor, pts[i]);
            });
        for (auto& th : pool) th.join();
    }

    double k1 = 0.0, k2 = 0.0;
    std::size_t a1 = 0, a2 = 0;
    for (int g = 0; g < 8; ++g) {
        const double eps = eps0 * std::ldexp(1.0, -g);
        const VectorField R = remainder_field(M, X0, X1, Z, eps, quad, rel_tol, abs_tol);
        const VectorField R_hor{M.id(), [m, R](const Point& p) {
                                    return horizontal_part(*m, p, R.components(p));
                                }};
        auto [v1, i1] = parallel_max_index(pts.size(), [&](std::size_t i) {
            return grad_avg[i] + eps * nabla_op_norm(*m, R_hor, pts[i]);
        });
        auto [v2, i2] = parallel_max_index(
            pts.size(), [&](std::size_t i) { return M.norm(pts[i], R_hor.components(pts[i])); });
        if (v1 > k1) {
            k1 = v1;
            a1 = i1;
        }
        if (v2 > k2) {
            k2 = v2;
            a2 = i2;
        }
    }
    out.kappa1 = k1;
    out.kappa2 = k2;
    out.arg_kappa1 = pts[a1];
    out.arg_kappa2 = pts[a2];
    out.c = theorem_constant_c(out.kappa0, out.kappa1, out.kappa2, L0);
    return out;
}

// ---------------------------------------------------------------------------
// Flow-surface sweep
// ---------------------------------------------------------------------------

struct SurfaceSweepResult {
    std::vector<double> t_grid;
    std::vector<double> lengths;      // L(t) on the grid
    std::vector<double> bound_values; // surface_length_bound at the grid times
    double C1 = 0.0, C2 = 0.0;
    bool pass = false;
    std::vector<double> violations; // grid times where the bound failed
};

/// Builds the surface gamma(t, s) = Fl_{X_s}^t(beta(s)), measures the s-curve
/// lengths L(t) by Simpson quadrature over s (with d gamma/ds from paired
/// trajectories at s +- delta integrated as one stacked system), samples
/// C1 = sup |nabla X_s| and C2 = sup |d X_s / ds| on the surface, and checks
/// L(t) <= (C2/C1 + L(0)) e^{C1 t} - C2/C1 at every grid time.
inline SurfaceSweepResult surface_sweep(const ManifoldModel& M,
                                        const std::function<VectorField(double)>& family,
                                        const PointCurve& beta, double T, int n_s = 9, int n_t = 32,
                                        double rel_tol = 1e-9, double abs_tol = 1e-9) {
    if (n_s < 3) n_s = 3;
    if (n_s % 2 == 0) ++n_s; // Simpson needs an even interval count
    const int n = M.coord_dim();
    const double ds_fd = 1e-4;

    SurfaceSweepResult out;
    out.t_grid.resize(n_t + 1);
    for (int j = 0; j <= n_t; ++j) out.t_grid[j] = T * double(j) / double(n_t);

    struct SNode {
        double s, s_lo, s_hi;
        VectorField X, X_lo, X_hi;
        detail::DenseTrajectory pair; // stacked [y(s_lo); y(s_hi)]
    };
    std::vector<SNode> nodes(n_s);
    for (int i = 0; i < n_s; ++i) {
        SNode& nd = nodes[i];
        nd.s = double(i) / double(n_s - 1);
        nd.s_lo = std::max(0.0, nd.s - ds_fd);
        nd.s_hi = std::min(1.0, nd.s + ds_fd);
        nd.X = family(nd.s);
        nd.X_lo = family(nd.s_lo);
        nd.X_hi = family(nd.s_hi);
        detail::Rhs rhs = [&M, &nd, n](double, const Vec& y, Vec& dy) {
            dy.resize(2 * n);
            dy.segment(0, n) = nd.X_lo.components(Point{M.id(), y.segment(0, n)});
            dy.segment(n, n) = nd.X_hi.components(Point{M.id(), y.segment(n, n)});
        };
        detail::Project proj;
        if (M.projects_state()) {
            const ManifoldModel* mm = &M;
            proj = [mm, n](Vec& y) {
                Vec a = y.segment(0, n), b = y.segment(n, n);
                mm->project_state(a);
                mm->project_state(b);
                y.segment(0, n) = a;
                y.segment(n, n) = b;
            };
        }
        Vec y0(2 * n);
        y0.segment(0, n) = beta.at(nd.s_lo).coords;
        y0.segment(n, n) = beta.at(nd.s_hi).coords;
        nd.pair = detail::rk45_integrate(rhs, y0, 0.0, T,
                                         detail::rk_options(M, rel_tol, abs_tol,
                                                            std::numeric_limits<double>::infinity(), 0.0),
                                         proj);
    }

    // L(t) by Simpson in s; C1, C2 sampled on the same (t, s) grid.
    out.lengths.assign(n_t + 1, 0.0);
    double C1 = 0.0, C2 = 0.0;
    for (int j = 0; j <= n_t; ++j) {
        const double t = out.t_grid[j];
        double acc = 0.0;
        for (int i = 0; i < n_s; ++i) {
            const SNode& nd = nodes[i];
            const Vec y = nd.pair.state(t);
            const Vec y_lo = y.segment(0, n), y_hi = y.segment(n, n);
            Vec mid = 0.5 * (y_lo + y_hi);
            M.project_state(mid);
            const Point pm{M.id(), mid};
            const Vec dgds = (y_hi - y_lo) / (nd.s_hi - nd.s_lo);
            const double w = (i == 0 || i == n_s - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            acc += w * M.norm(pm, M.tangent_project(pm, dgds));
            C1 = std::max(C1, nabla_op_norm(M, nd.X, pm));
            const Vec dXds = (nd.X_hi.components(pm) - nd.X_lo.components(pm)) / (nd.s_hi - nd.s_lo);
            C2 = std::max(C2, M.norm(pm, dXds));
        }
        out.lengths[j] = acc / (3.0 * double(n_s - 1));
    }
    out.C1 = C1;
    out.C2 = C2;

    out.bound_values.resize(n_t + 1);
    out.pass = true;
    const double L0 = out.lengths[0];
    for (int j = 0; j <= n_t; ++j) {
        out.bound_values[j] = surface_length_bound(C1, C2, L0, out.t_grid[j]);
        if (out.lengths[j] > out.bound_values[j] * (1.0 + 1e-9) + 1e-12) {
            out.pass = false;
            out.violations.push_back(out.t_grid[j]);
        }
    }
    return out;
}

} // namespace s1avg
