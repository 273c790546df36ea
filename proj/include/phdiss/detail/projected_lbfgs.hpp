/*
 Copyright 2026 The phdiss Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef PHDISS_DETAIL_PROJECTED_LBFGS_HPP
#define PHDISS_DETAIL_PROJECTED_LBFGS_HPP

#include <deque>

#include "phdiss/linalg.hpp"

namespace phdiss::detail {

struct LbfgsOptions {
    int max_iterations = 2000;
    int memory = 20;
    double tolerance = 1e-9;  // on the infinity norm of the projected gradient
};

struct LbfgsResult {
    Vector x;
    double f = 0.0;
    Vector g;
    int iterations = 0;
    double projected_gradient = 0.0;
    bool converged = false;
};

inline Vector project_box(Vector x, const Vector& lo, const Vector& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

inline double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& lo, const Vector& hi) {
    if (x.size() == 0) return 0.0;
    return (project_box(x - g, lo, hi) - x).lpNorm<Eigen::Infinity>();
}

/// Projected L-BFGS for box-constrained smooth minimization. Variables at an
/// active bound are frozen for the quasi-Newton direction; the step is
/// accepted by an Armijo test along the projection arc. `fun(x, grad)`
/// returns f(x) and writes the gradient when grad is non-null.
template <class F>
LbfgsResult minimize_box(F&& fun, Vector x, const Vector& lo, const Vector& hi, const LbfgsOptions& opt) {
    LbfgsResult res;
    x = project_box(std::move(x), lo, hi);
    Vector g(x.size());
    double f = fun(x, &g);
    std::deque<std::pair<Vector, Vector>> mem;
    int stall = 0;
    for (int it = 0;; ++it) {
        res.iterations = it;
        const double pg = projected_gradient_norm(x, g, lo, hi);
        if (pg <= opt.tolerance) {
            res.converged = true;
            break;
        }
        if (it >= opt.max_iterations || stall >= 3) break;

        Eigen::Array<bool, Eigen::Dynamic, 1> free(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            free(i) = !((x(i) <= lo(i) && g(i) > 0.0) || (x(i) >= hi(i) && g(i) < 0.0));
        }
        auto mask = [&](Vector v) {
            for (Eigen::Index i = 0; i < v.size(); ++i)
                if (!free(i)) v(i) = 0.0;
            return v;
        };

        Vector q = mask(g);
        std::vector<double> alpha(mem.size());
        for (std::size_t j = mem.size(); j-- > 0;) {
            const auto& [s, y] = mem[j];
            alpha[j] = s.dot(q) / y.dot(s);
            q -= alpha[j] * y;
        }
        double gamma = 1.0;
        if (!mem.empty()) {
            const auto& [s, y] = mem.back();
            gamma = s.dot(y) / y.dot(y);
        } else {
            const double gn = g.lpNorm<Eigen::Infinity>();
            gamma = gn > 1.0 ? 1.0 / gn : 1.0;
        }
        q *= gamma;
        for (std::size_t j = 0; j < mem.size(); ++j) {
            const auto& [s, y] = mem[j];
            const double beta = y.dot(q) / y.dot(s);
            q += (alpha[j] - beta) * s;
        }
        Vector d = -mask(q);
        if (!(g.dot(d) < 0.0)) {
            mem.clear();
            d = -mask(g) * gamma;
        }

        double t = 1.0;
        bool accepted = false;
        Vector xt, gt(x.size());
        double ft = f;
        for (int ls = 0; ls < 60; ++ls) {
            xt = project_box(x + t * d, lo, hi);
            ft = fun(xt, nullptr);
            if (std::isfinite(ft) && ft <= f + 1e-4 * g.dot(xt - x)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (!mem.empty()) {
                mem.clear();
                ++stall;
                continue;
            }
            break;
        }
        ft = fun(xt, &gt);
        const Vector s = xt - x;
        const Vector y = gt - g;
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            mem.emplace_back(s, y);
            if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
        }
        stall = (std::abs(f - ft) <= 1e-16 * std::max(1.0, std::abs(f)) &&
                 s.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>()))
                    ? stall + 1
                    : 0;
        x = std::move(xt);
        g = gt;
        f = ft;
    }
    res.x = std::move(x);
    res.f = f;
    res.g = std::move(g);
    res.projected_gradient = projected_gradient_norm(res.x, res.g, lo, hi);
    return res;
}

}  // namespace phdiss::detail

#endif  // PHDISS_DETAIL_PROJECTED_LBFGS_HPP
