#pragma once

#include <iostream>

#include "s1avg/averaging.hpp"
#include "s1avg/flows.hpp"

namespace s1avg {

enum class MapDirection { Forward, Inverse };

/// Near-identity transformation Phi_eps = time-eps flow of a generator field;
/// eps = 0 is the identity map. Defined on any open set with compact closure
/// where the generator flow stays defined (domain exit surfaces as BlowUp).
struct NearIdentityMap {
    const ManifoldModel* model = nullptr;
    VectorField generator;
    double epsilon = 0.0;
    double rel_tol = 1e-10;
    double abs_tol = 1e-10;
};

inline Point near_identity_apply(const NearIdentityMap& map, const Point& p, MapDirection dir) {
    check_model(*map.model, p, "near_identity_apply");
    const double t = (dir == MapDirection::Forward) ? map.epsilon : -map.epsilon;
    if (t == 0.0) return map.model->normalize(p);
    FlowSpec spec{map.model, map.generator, t, map.rel_tol, map.abs_tol};
    return integrate_flow(spec, p).at(t);
}

/// Pullback of the perturbed field X_eps = X0 + eps X1 by the near-identity
/// map generated by Z: m -> (d Phi_eps)^{-1} X_eps(Phi_eps(m)). With Z the
/// homological solution this equals X0 + eps <X1> + O(eps^2).
inline VectorField pullback_perturbed(const ManifoldModel& M, const VectorField& X0, const VectorField& X1,
                                      const VectorField& Z, double eps, double rel_tol = 1e-10,
                                      double abs_tol = 1e-10) {
    const ManifoldModel* m = &M;
    return VectorField{
        M.id(), [m, X0, X1, Z, eps, rel_tol, abs_tol](const Point& p) {
            FlowSpec zspec{m, Z, eps, rel_tol, abs_tol};
            if (eps == 0.0) return Vec(X0.components(p));
            Trajectory fwd = integrate_flow(zspec, p);
            const Point q = fwd.at(eps);
            const TangentVector w{q, Vec(X0.components(q) + eps * X1.components(q))};
            // (d_p Phi_eps)^{-1} = d_q Phi_eps^{-1}, the differential of the
            // time-(-eps) flow of Z at q.
            const TangentVector back = flow_differential(zspec, q, w, -eps);
            return m->tangent_project(p, back.components);
        }};
}

/// Second-order remainder R_eps(m) = (Phi_eps^* X_eps - X0 - eps <X1>)(m) / eps^2.
/// The quotient amplifies integrator noise below eps ~ 1e-4 (warned).
inline TangentVector extract_remainder(const ManifoldModel& M, const VectorField& X0, const VectorField& X1,
                                       const VectorField& Z, double eps, const Point& m,
                                       const QuadratureRule& quad, double rel_tol = 1e-10,
                                       double abs_tol = 1e-10) {
    if (!(eps > 0.0)) throw Error("extract_remainder: eps must be positive");
    if (eps < 1e-4)
        std::cerr << "[s1avg] warning: remainder extraction at eps = " << eps
                  << " is noise-amplifying (eps^-2 quotient)\n";
    const VectorField pb = pullback_perturbed(M, X0, X1, Z, eps, rel_tol, abs_tol);
    const Vec avg = detail::weighted_pullback_sum(M, X1, quad, quad.mean_w, m);
    Vec r = (pb.components(m) - X0.components(m) - eps * avg) / (eps * eps);
    return TangentVector{m, M.tangent_project(m, r)};
}

/// R_eps as a reusable field (the averaged field is built once).
inline VectorField remainder_field(const ManifoldModel& M, const VectorField& X0, const VectorField& X1,
                                   const VectorField& Z, double eps, const QuadratureRule& quad,
                                   double rel_tol = 1e-10, double abs_tol = 1e-10) {
    if (!(eps > 0.0)) throw Error("remainder_field: eps must be positive");
    const ManifoldModel* m = &M;
    const VectorField pb = pullback_perturbed(M, X0, X1, Z, eps, rel_tol, abs_tol);
    return VectorField{M.id(), [m, pb, X0, X1, quad, eps](const Point& p) {
                           const Vec avg = detail::weighted_pullback_sum(*m, X1, quad, quad.mean_w, p);
                           Vec r = (pb.components(p) - X0.components(p) - eps * avg) / (eps * eps);
                           return m->tangent_project(p, r);
                       }};
}

struct NormalFormResult {
    VectorField averaged;                                        // <X1>
    std::function<TangentVector(double, const Point&)> remainder_at; // (eps, m) -> R_eps(m)
    double order2_slope = 0.0; // log-log slope of the first-order defect
};

/// Default epsilon ladder 2^-3 .. 2^-9 for the defect slope.
inline std::vector<double> defect_eps_ladder() {
    std::vector<double> eps;
    for (int k = 3; k <= 9; ++k) eps.push_back(std::ldexp(1.0, -k));
    return eps;
}

/// First-order defect |Phi_eps^* X_eps - X0 - eps <X1>|_g at m; O(eps^2)
/// when Z solves the homological equation.
inline double normal_form_defect(const ManifoldModel& M, const VectorField& X0, const VectorField& X1,
                                 const VectorField& Z, double eps, const Point& m,
                                 const QuadratureRule& quad, double rel_tol = 1e-10,
                                 double abs_tol = 1e-10) {
    const VectorField pb = pullback_perturbed(M, X0, X1, Z, eps, rel_tol, abs_tol);
    const Vec avg = detail::weighted_pullback_sum(M, X1, quad, quad.mean_w, m);
    const Vec d = pb.components(m) - X0.components(m) - eps * avg;
    return M.norm(m, d);
}

/// Builds the first-order normal form data: the averaged field, the remainder
/// map, and the order-2 slope of the defect measured at probe over the
/// epsilon ladder.
inline NormalFormResult compute_normal_form(const ManifoldModel& M, const VectorField& X0,
                                            const VectorField& X1, const QuadratureRule& quad,
                                            const Point& probe,
                                            std::vector<double> eps_ladder = defect_eps_ladder(),
                                            double rel_tol = 1e-10, double abs_tol = 1e-10) {
    const ManifoldModel* m = &M;
    NormalFormResult out;
    out.averaged = average_field(M, X1, quad);
    const VectorField Z = homological_Z(M, X0, X1, quad);
    out.remainder_at = [m, X0, X1, Z, quad, rel_tol, abs_tol](double eps, const Point& p) {
        return extract_remainder(*m, X0, X1, Z, eps, p, quad, rel_tol, abs_tol);
    };
    std::vector<double> defects(eps_ladder.size());
    for (std::size_t i = 0; i < eps_ladder.size(); ++i)
        defects[i] = normal_form_defect(M, X0, X1, Z, eps_ladder[i], probe, quad, rel_tol, abs_tol);
    out.order2_slope = fit_loglog_slope(eps_ladder, defects);
    return out;
}

} // namespace s1avg
