// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

namespace prismgs {

double position_lr(const LearningRates &lr, int step, int max_steps, double extent) {
    if (lr.position_init == 0 && lr.position_final == 0) return 0;
    const double t = max_steps > 0 ? std::clamp(double(step) / max_steps, 0.0, 1.0) : 0.0;
    return extent * std::exp((1 - t) * std::log(lr.position_init) + t * std::log(lr.position_final));
}

namespace {

template <typename P, typename G>
void adam_update(P &&param, G &&grad, P &&m, P &&v, float lr, float b1, float b2, float c1, float c2, float eps) {
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad.square();
    param -= lr * (m / c1) / ((v / c2).sqrt() + eps);
}

} // namespace

void adam_step(Gaussians &params, const Gaussians &grads, AdamState &state, const GroupRates &rates,
               const AdamHyper &hyper) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractViolation("adam_step: parameter, gradient and moment counts differ");
    }
    ++state.step;
    const float b1  = static_cast<float>(hyper.beta1);
    const float b2  = static_cast<float>(hyper.beta2);
    const float c1  = static_cast<float>(1 - std::pow(hyper.beta1, double(state.step)));
    const float c2  = static_cast<float>(1 - std::pow(hyper.beta2, double(state.step)));
    const float eps = static_cast<float>(hyper.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto &p = params[i];
        const auto &g = grads[i];
        auto &m = state.m[i];
        auto &v = state.v[i];
        adam_update(p.position.array(), g.position.array(), m.position.array(), v.position.array(),
                    float(rates.position), b1, b2, c1, c2, eps);
        adam_update(p.log_scale.array(), g.log_scale.array(), m.log_scale.array(), v.log_scale.array(),
                    float(rates.log_scale), b1, b2, c1, c2, eps);
        adam_update(p.rotation.array(), g.rotation.array(), m.rotation.array(), v.rotation.array(),
                    float(rates.rotation), b1, b2, c1, c2, eps);

        Eigen::Array<float, 1, 1> po(p.opacity_logit), go(g.opacity_logit), mo(m.opacity_logit), vo(v.opacity_logit);
        adam_update(po, go, mo, vo, float(rates.opacity), b1, b2, c1, c2, eps);
        p.opacity_logit = po[0];
        m.opacity_logit = mo[0];
        v.opacity_logit = vo[0];

        const Eigen::Index rest = p.sh.rows() - 1;
        adam_update(p.sh.topRows(1).array(), g.sh.topRows(1).array(), m.sh.topRows(1).array(), v.sh.topRows(1).array(),
                    float(rates.sh_dc), b1, b2, c1, c2, eps);
        if (rest > 0) {
            adam_update(p.sh.bottomRows(rest).array(), g.sh.bottomRows(rest).array(), m.sh.bottomRows(rest).array(),
                        v.sh.bottomRows(rest).array(), float(rates.sh_rest), b1, b2, c1, c2, eps);
        }
    }
}

// ---- initialisation ------------------------------------------------------------

std::vector<double> mean_neighbor_distance(const SparsePointCloud &points, int k) {
    const std::size_t n = points.size();
    std::vector<double> out(n, 0.0);
    if (n < 2 || k < 1) return out;
    const int kk = std::min<int>(k, static_cast<int>(n) - 1);

    // Sweep outward along x from each point; stop once the x gap alone
    // exceeds the current k-th best distance.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double xa = points.points[a].position.x(), xb = points.points[b].position.x();
        return xa != xb ? xa < xb : a < b;
    });
    std::vector<double> best;
    for (std::size_t r = 0; r < n; ++r) {
        const Vec3<double> &p = points.points[order[r]].position;
        best.clear();
        auto consider = [&](std::size_t s) {
            const double d = (points.points[order[s]].position - p).norm();
            if (static_cast<int>(best.size()) < kk) {
                best.insert(std::upper_bound(best.begin(), best.end(), d), d);
            } else if (d < best.back()) {
                best.pop_back();
                best.insert(std::upper_bound(best.begin(), best.end(), d), d);
            }
        };
        auto bound = [&] { return static_cast<int>(best.size()) < kk ? INFINITY : best.back(); };
        std::size_t lo = r, hi = r + 1;
        bool go_lo = lo > 0, go_hi = hi < n;
        while (go_lo || go_hi) {
            if (go_lo) {
                --lo;
                if (std::abs(points.points[order[lo]].position.x() - p.x()) > bound()) go_lo = false;
                else consider(lo);
                if (lo == 0) go_lo = false;
            }
            if (go_hi) {
                if (std::abs(points.points[order[hi]].position.x() - p.x()) > bound()) go_hi = false;
                else consider(hi);
                ++hi;
                if (hi >= n) go_hi = false;
            }
        }
        out[order[r]] = std::accumulate(best.begin(), best.end(), 0.0) / best.size();
    }
    return out;
}

Gaussians init_gaussians(const SparsePointCloud &points, int sh_degree, std::optional<double> min_scale) {
    if (points.empty()) throw ConfigError("init_gaussians: the point cloud is empty");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidInput("init_gaussians: sh_degree must lie in [0, 3]");

    std::vector<double> scale;
    if (points.size() < 4) {
        const Aabb box  = point_bounds(points);
        double diagonal = (box.max - box.min).norm();
        if (!(diagonal > 0)) diagonal = 1.0;
        std::cerr << "warning: " << points.size()
                  << " initial points is too few for neighbour distances; using extent / 100 as the scale\n";
        scale.assign(points.size(), diagonal / 100);
    } else {
        scale = mean_neighbor_distance(points, 3);
    }

    Gaussians out(points.size());
    const int basis = sh_basis_count(sh_degree);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto &pt = points.points[i];
        double s       = std::max(scale[i], std::sqrt(1e-7));
        if (min_scale) s = std::max(s, *min_scale);
        auto &g         = out[i];
        g.position      = pt.position.cast<float>();
        float ls = static_cast<float>(std::log(s));
        // float rounding must not leave the scale just under the clamp
        while (min_scale && std::exp(ls) < static_cast<float>(*min_scale)) ls = std::nextafter(ls, 1.0f);
        g.log_scale     = Vec3<float>::Constant(ls);
        g.rotation      = Vec4<float>(1, 0, 0, 0);
        g.opacity_logit = static_cast<float>(logit(0.1));
        g.sh            = ShCoeffs<float>::Zero(basis, 3);
        for (int c = 0; c < 3; ++c) g.sh(0, c) = static_cast<float>((pt.color[c] / 255.0 - 0.5) / sh::kC0);
    }
    return out;
}

// ---- density control -------------------------------------------------------------

DensifyEvent densify_and_prune(Gaussians &gaussians, AdamState &adam, const DensifyStats &stats,
                               const TrainConfig &config, double tau_size, std::uint64_t seed, int iteration) {
    const std::size_t n = gaussians.size();
    if (stats.grad_sum.size() != n || stats.observations.size() != n || adam.m.size() != n || adam.v.size() != n) {
        throw ContractViolation("densify_and_prune: statistics or moments do not match the Gaussians");
    }
    DensifyEvent ev;
    ev.iteration = iteration;

    std::mt19937_64 rng(seed ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(iteration + 1)));
    std::normal_distribution<double> normal(0.0, 1.0);

    Gaussians next, next_m, next_v;
    next.reserve(n);
    std::vector<char> drop(n, 0);
    Gaussians born;
    const std::size_t cap = static_cast<std::size_t>(config.max_gaussians);
    std::size_t count     = n;
    const float shrink    = static_cast<float>(std::log(1.6));

    for (std::size_t i = 0; i < n; ++i) {
        if (stats.observations[i] == 0) continue;
        const double avg = stats.grad_sum[i] / stats.observations[i];
        if (!(avg > config.densify_grad_threshold)) continue;
        const auto &g        = gaussians[i];
        const Vec3<float> s  = g.scale();
        if (static_cast<double>(s.minCoeff()) < 2 * tau_size) {
            if (count + 1 > cap) continue;
            born.push_back(g);
            ++count;
            ++ev.cloned;
        } else {
            // two children replace the parent: net +1
            if (count + 1 > cap) continue;
            const Mat3<double> R = quat_to_rotation<double>(g.rotation.cast<double>());
            for (int child = 0; child < 2; ++child) {
                const Vec3<double> z(normal(rng), normal(rng), normal(rng));
                GaussianPrimitive<float> c = g;
                c.position  = (g.position.cast<double>() + R * (s.cast<double>().cwiseProduct(z))).cast<float>();
                c.log_scale = g.log_scale.array() - shrink;
                born.push_back(c);
            }
            drop[i] = 1;
            ++count;
            ++ev.split;
        }
    }

    auto keep = [&](const GaussianPrimitive<float> &g) {
        return !(static_cast<double>(g.opacity()) < config.prune_opacity_threshold);
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (drop[i]) continue;
        if (!keep(gaussians[i])) {
            ++ev.pruned;
            continue;
        }
        next.push_back(std::move(gaussians[i]));
        next_m.push_back(std::move(adam.m[i]));
        next_v.push_back(std::move(adam.v[i]));
    }
    for (auto &g : born) {
        if (!keep(g)) {
            ++ev.pruned;
            continue;
        }
        next_m.push_back(GaussianPrimitive<float>::zero(g.sh_degree()));
        next_v.push_back(GaussianPrimitive<float>::zero(g.sh_degree()));
        next.push_back(std::move(g));
    }
    gaussians = std::move(next);
    adam.m    = std::move(next_m);
    adam.v    = std::move(next_v);
    ev.count  = static_cast<int>(gaussians.size());
    return ev;
}

} // namespace prismgs
