#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "s1avg/geometry.hpp"

namespace s1avg {

/// Quadrature over one period of the circle action, with uniform nodes
/// t_j = 2 pi j / n. Three weight sets share the nodes:
///   mean_w  - the fiberwise mean (trapezoid on a periodic integrand, i.e.
///             equal weights; spectrally accurate for smooth fields);
///   int_w   - the integrating operator, i.e. the moment against the
///             sawtooth (t - pi)/(2 pi). Plain trapezoid weights pick up an
///             O(h^2) seam error from the jump of the sawtooth at 0, so the
///             weights used here integrate the trigonometric interpolant of
///             the samples exactly: w_j = -(2/n) sum_k sin(k t_j)/k;
///   int2_w  - weights of the iterated operator S(S(.)) on scalar samples,
///             the circular self-convolution of int_w (uniform nodes make
///             the composed action angles land back on the grid).
struct QuadratureRule {
    int n_nodes = 64;
    std::vector<double> nodes;
    std::vector<double> mean_w;
    std::vector<double> int_w;
    std::vector<double> int2_w;

    static QuadratureRule uniform(int n = 64) {
        if (n < 8) throw Error("QuadratureRule: need at least 8 nodes");
        QuadratureRule q;
        q.n_nodes = n;
        q.nodes.resize(n);
        q.mean_w.assign(n, 1.0 / n);
        q.int_w.assign(n, 0.0);
        for (int j = 0; j < n; ++j) q.nodes[j] = two_pi * j / n;
        const int kmax = (n - 1) / 2; // for even n the Nyquist mode contributes zero
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = kmax; k >= 1; --k) s += std::sin(k * q.nodes[j]) / k;
            q.int_w[j] = -2.0 * s / n;
        }
        q.int2_w.assign(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) q.int2_w[(i + j) % n] += q.int_w[i] * q.int_w[j];
        return q;
    }
};

namespace detail {

/// Weighted sum of action pullbacks of a vector field at m.
inline Vec weighted_pullback_sum(const ManifoldModel& M, const VectorField& R, const QuadratureRule& q,
                                 const std::vector<double>& w, const Point& m) {
    Vec acc = Vec::Zero(M.coord_dim());
    for (int j = 0; j < q.n_nodes; ++j) {
        if (w[j] == 0.0) continue;
        const Point pj = M.action(m, q.nodes[j]);
        acc += w[j] * M.action_push(-q.nodes[j], R.components(pj));
    }
    return acc;
}

inline double weighted_function_sum(const ManifoldModel& M, const ScalarField& f, const QuadratureRule& q,
                                    const std::vector<double>& w, const Point& m) {
    double acc = 0.0;
    for (int j = 0; j < q.n_nodes; ++j) {
        if (w[j] == 0.0) continue;
        acc += w[j] * f(M.action(m, q.nodes[j]));
    }
    return acc;
}

} // namespace detail

/// Averaging operator <R> for vector fields: the fiberwise mean of the
/// pullbacks along the circle action. The closed-form action differential is
/// used for the pullbacks.
inline VectorField average_field(const ManifoldModel& M, const VectorField& R, const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    return VectorField{M.id(), [m, R, quad](const Point& p) {
                           return detail::weighted_pullback_sum(*m, R, quad, quad.mean_w, p);
                       }};
}

/// Averaging operator for functions.
inline ScalarField average_function(const ManifoldModel& M, const ScalarField& f, const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    return [m, f, quad](const Point& p) {
        return detail::weighted_function_sum(*m, f, quad, quad.mean_w, p);
    };
}

/// Integrating operator S(R) for vector fields.
inline VectorField integrating_op(const ManifoldModel& M, const VectorField& R, const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    return VectorField{M.id(), [m, R, quad](const Point& p) {
                           return detail::weighted_pullback_sum(*m, R, quad, quad.int_w, p);
                       }};
}

/// Integrating operator S(f) for functions.
inline ScalarField integrating_op(const ManifoldModel& M, const ScalarField& f, const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    return [m, f, quad](const Point& p) {
        return detail::weighted_function_sum(*m, f, quad, quad.int_w, p);
    };
}

/// S(S(f)) evaluated with the convolved weights; identical to composing
/// integrating_op twice, at a single sweep of field evaluations.
inline ScalarField integrating_op_squared(const ManifoldModel& M, const ScalarField& f,
                                          const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    return [m, f, quad](const Point& p) {
        return detail::weighted_function_sum(*m, f, quad, quad.int2_w, p);
    };
}

/// Directional derivative of a function along a vector field, by a central
/// difference with step 1e-6 scaled by the point magnitude.
inline double lie_derivative_scalar(const ManifoldModel& M, const ScalarField& f, const VectorField& X,
                                    const Point& p) {
    const Vec v = X.components(p);
    const double vn = v.norm();
    if (vn == 0.0) return 0.0;
    const double h = 1e-6 * (1.0 + p.coords.norm());
    const Vec dir = v / vn;
    return vn * (f(M.nudge(p, dir, h)) - f(M.nudge(p, dir, -h))) / (2.0 * h);
}

/// Lie bracket [X, Y] via the torsion-free connection: nabla_X Y - nabla_Y X.
inline TangentVector lie_bracket(const ManifoldModel& M, const VectorField& X, const VectorField& Y,
                                 const Point& m) {
    const TangentVector dY = covariant_derivative(M, Y, m, TangentVector{m, X.components(m)});
    const TangentVector dX = covariant_derivative(M, X, m, TangentVector{m, Y.components(m)});
    return TangentVector{m, dY.components - dX.components};
}

/// Solution Z = (1/w) S(X1) + (1/w^3) S^2(L_{X1} w) X0 of the homological
/// equation L_{X0} Z = X1 - <X1>.
inline VectorField homological_Z(const ManifoldModel& M, const VectorField& X0, const VectorField& X1,
                                 const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    return VectorField{M.id(), [m, X0, X1, quad](const Point& p) {
                           const double w = m->omega(p);
                           Vec z = detail::weighted_pullback_sum(*m, X1, quad, quad.int_w, p) / w;
                           const ScalarField lw = [m, &X1](const Point& q) {
                               return lie_derivative_scalar(*m, m->omega_field(), X1, q);
                           };
                           const double s2 = detail::weighted_function_sum(*m, lw, quad, quad.int2_w, p);
                           z += (s2 / (w * w * w)) * X0.components(p);
                           return z;
                       }};
}

/// Wraps a field with a point-keyed value cache (exact coordinate bytes).
/// Repeated compositions (S applied to S, remainder fields probed on fixed
/// grids) hit identical points; the cache is mutex-guarded for concurrent
/// evaluation.
inline VectorField memoize_field(const VectorField& f) {
    struct Cache {
        std::mutex mu;
        std::unordered_map<std::string, Vec> map;
    };
    auto cache = std::make_shared<Cache>();
    return VectorField{f.model, [f, cache](const Point& p) {
                           std::string key(reinterpret_cast<const char*>(p.coords.data()),
                                           std::size_t(p.coords.size()) * sizeof(double));
                           {
                               std::lock_guard<std::mutex> lk(cache->mu);
                               auto it = cache->map.find(key);
                               if (it != cache->map.end()) return it->second;
                           }
                           Vec v = f.components(p);
                           std::lock_guard<std::mutex> lk(cache->mu);
                           return cache->map.emplace(std::move(key), std::move(v)).first->second;
                       }};
}

/// A vector field on the orbit space O = M / S^1.
struct ReducedField {
    ModelId model;
    std::function<Vec(const OrbitPoint&)> components;
};

/// Reduction of an S^1-invariant field Y to the orbit space,
/// Y_O(z) = d rho (Y(sigma(z))) for a section point sigma(z). The invariance
/// precondition (|<Y> - Y| <= 1e-6 fiberwise) is checked at the first
/// evaluation; a failure throws NotInvariant.
inline ReducedField reduce_field(const ManifoldModel& M, const VectorField& Y, const QuadratureRule& quad) {
    const ManifoldModel* m = &M;
    auto checked = std::make_shared<std::atomic<bool>>(false);
    return ReducedField{M.id(), [m, Y, quad, checked](const OrbitPoint& z) {
                            const Point p = m->section(z);
                            if (!checked->load(std::memory_order_relaxed)) {
                                for (double th : {0.0, 1.1, 2.9, 5.0}) {
                                    const Point q = m->action(p, th);
                                    const Vec yq = Y.components(q);
                                    const Vec avg =
                                        detail::weighted_pullback_sum(*m, Y, quad, quad.mean_w, q);
                                    if ((avg - yq).norm() > 1e-6 * (1.0 + yq.norm()))
                                        throw NotInvariant(
                                            "reduce_field: field is not S^1-invariant (|<Y>-Y| = " +
                                            std::to_string((avg - yq).norm()) + ")");
                                }
                                checked->store(true, std::memory_order_relaxed);
                            }
                            return m->orbit_tangent_project(z, m->project_push(p, Y.components(p)));
                        }};
}

} // namespace s1avg
