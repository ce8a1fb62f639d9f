#pragma once

// State abstraction: dimensionality reduction (identity or LDA), Yeo-Johnson
// power transform, standard scaling, k-means clustering and labeling of
// trajectories into observation traces.

#include "castle/envsim.hpp"
#include "castle/log.hpp"
#include "castle/rng.hpp"
#include "castle/traj.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace castle {

/// Row-major point collection of fixed dimension.
struct Points {
    std::size_t dim = 0;
    std::vector<double> data;

    Points() = default;
    explicit Points(std::size_t d) : dim(d) {}
    Points(std::size_t d, std::vector<double> values) : dim(d), data(std::move(values)) {
        if (d == 0 || data.size() % d != 0) throw std::invalid_argument("Points: size is not a multiple of dim");
    }

    std::size_t size() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> row(std::size_t i) const noexcept { return {data.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) noexcept { return {data.data() + i * dim, dim}; }
    void push_back(std::span<const double> p) { data.insert(data.end(), p.begin(), p.end()); }

    friend bool operator==(const Points&, const Points&) = default;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Index of the closest centroid; ties go to the lowest index.
inline std::size_t nearest_centroid(const Points& centroids, std::span<const double> p) noexcept {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(centroids.row(c), p);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Yeo-Johnson power transform

inline double yeo_johnson(double y, double lambda) noexcept {
    constexpr double eps = 1e-12;
    if (y >= 0.0) {
        if (std::abs(lambda) < eps) return std::log1p(y);
        return std::expm1(lambda * std::log1p(y)) / lambda;
    }
    if (std::abs(2.0 - lambda) < eps) return -std::log1p(-y);
    return -std::expm1((2.0 - lambda) * std::log1p(-y)) / (2.0 - lambda);
}

/// Profile log-likelihood of lambda under a normal model of the transformed data.
inline double yeo_johnson_log_likelihood(std::span<const double> x, double lambda) {
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += yeo_johnson(v, lambda);
    mean /= n;
    double var = 0.0;
    double jacobian = 0.0;
    for (double v : x) {
        const double t = yeo_johnson(v, lambda) - mean;
        var += t * t;
        jacobian += std::copysign(std::log1p(std::abs(v)), v);
    }
    var /= n;
    if (!(var > std::numeric_limits<double>::min()) || !std::isfinite(var))
        return -std::numeric_limits<double>::infinity();
    return -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
}

/// Golden-section maximisation of the profile log-likelihood over [lo, hi].
inline double fit_yeo_johnson_lambda(std::span<const double> x, double lo = -5.0, double hi = 5.0, double tol = 1e-6) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = yeo_johnson_log_likelihood(x, c);
    double fd = yeo_johnson_log_likelihood(x, d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = yeo_johnson_log_likelihood(x, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = yeo_johnson_log_likelihood(x, d);
        }
    }
    return 0.5 * (a + b);
}

/// Per-dimension lambda. Constant dimensions get lambda = 1 (identity) with a warning.
inline std::vector<double> fit_power_transform(const Points& states) {
    std::vector<double> lambdas(states.dim, 1.0);
    std::vector<double> column(states.size());
    for (std::size_t j = 0; j < states.dim; ++j) {
        for (std::size_t i = 0; i < states.size(); ++i) column[i] = states.row(i)[j];
        const auto [mn, mx] = std::minmax_element(column.begin(), column.end());
        if (column.empty() || *mn == *mx) {
            warn("power transform: dimension " + std::to_string(j) + " is constant, using lambda = 1");
            continue;
        }
        lambdas[j] = fit_yeo_johnson_lambda(column);
    }
    return lambdas;
}

// ---------------------------------------------------------------------------
// Linear discriminant analysis

/// Projection matrix (h x d) onto the most discriminative axes for predicting
/// `classes` from `states`. d = min(h - 1, #classes - 1, requested).
inline Eigen::MatrixXd fit_lda(const Points& states, std::span<const std::uint32_t> classes, std::size_t requested) {
    if (states.size() != classes.size()) throw std::invalid_argument("fit_lda: states and classes differ in length");
    const std::size_t h = states.dim;
    std::vector<std::uint32_t> ids(classes.begin(), classes.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw std::invalid_argument("LDA undefined, use identity reducer");
    if (h < 2) throw std::invalid_argument("LDA needs at least two input dimensions, use identity reducer");
    const std::size_t d = std::min({h - 1, ids.size() - 1, requested});
    if (d == 0) throw std::invalid_argument("fit_lda: requested dimension must be positive");

    const std::size_t n = states.size();
    Eigen::VectorXd overall = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
    std::vector<Eigen::VectorXd> means(ids.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h)));
    std::vector<std::size_t> counts(ids.size(), 0);
    auto class_index = [&](std::uint32_t c) {
        return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), c) - ids.begin());
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = states.row(i);
        const Eigen::Map<const Eigen::VectorXd> x(r.data(), static_cast<Eigen::Index>(h));
        const auto c = class_index(classes[i]);
        means[c] += x;
        ++counts[c];
        overall += x;
    }
    for (std::size_t c = 0; c < ids.size(); ++c) {
        if (counts[c] < d + 1)
            throw std::invalid_argument("fit_lda: class " + std::to_string(ids[c]) + " has fewer than d+1 samples");
        means[c] /= static_cast<double>(counts[c]);
    }
    overall /= static_cast<double>(n);

    Eigen::MatrixXd within = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = states.row(i);
        const Eigen::Map<const Eigen::VectorXd> x(r.data(), static_cast<Eigen::Index>(h));
        const Eigen::VectorXd dev = x - means[class_index(classes[i])];
        within.noalias() += dev * dev.transpose();
    }
    within += 1e-6 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h));

    Eigen::MatrixXd between = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h));
    for (std::size_t c = 0; c < ids.size(); ++c) {
        const Eigen::VectorXd dev = means[c] - overall;
        between.noalias() += static_cast<double>(counts[c]) * dev * dev.transpose();
    }

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(between, within);
    if (solver.info() != Eigen::Success) throw std::runtime_error("fit_lda: generalized eigenproblem failed");
    // Eigenvalues ascend; take the top d and fix each axis' sign (largest |entry| positive).
    Eigen::MatrixXd w(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
        Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(h - 1 - j));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        w.col(static_cast<Eigen::Index>(j)) = v;
    }
    return w;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
    Points centroids;
    std::vector<std::size_t> assignment;
    double inertia = 0.0;
    std::size_t iterations = 0;
};

struct KMeansOptions {
    std::size_t max_iterations = 300;
    double tolerance = 1e-4; ///< stop once no centroid moves farther than this
};

inline std::size_t count_distinct(const Points& pts) {
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        auto ra = pts.row(a), rb = pts.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(idx.begin(), idx.end(), less);
    std::size_t distinct = idx.empty() ? 0 : 1;
    for (std::size_t i = 1; i < idx.size(); ++i) distinct += less(idx[i - 1], idx[i]);
    return distinct;
}

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are
/// re-seeded to the point farthest from its centroid.
inline KMeansResult fit_kmeans(const Points& pts, std::size_t k, std::uint64_t seed, const KMeansOptions& opt = {}) {
    if (k == 0) throw std::invalid_argument("fit_kmeans: k must be positive");
    const std::size_t n = pts.size();
    if (count_distinct(pts) < k)
        throw std::invalid_argument("fit_kmeans: fewer distinct points than k = " + std::to_string(k));

    Rng rng(seed);
    KMeansResult res;
    res.centroids = Points(pts.dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    auto add_center = [&](std::size_t i) {
        res.centroids.push_back(pts.row(i));
        const auto c = res.centroids.row(res.centroids.size() - 1);
        for (std::size_t p = 0; p < n; ++p) d2[p] = std::min(d2[p], squared_distance(pts.row(p), c));
    };
    add_center(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (res.centroids.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        const double target = unit(rng) * total;
        double acc = 0.0;
        std::size_t pick = n;
        for (std::size_t p = 0; p < n; ++p) {
            if (d2[p] <= 0.0) continue;
            acc += d2[p];
            pick = p;
            if (acc > target) break;
        }
        add_center(pick);
    }

    // Lloyd iterations with Hamerly's bounds: `upper` bounds the distance to
    // the assigned centroid, `lower` the distance to every other one. A point
    // is only rescanned when the bounds cannot prove its assignment, so the
    // result equals a plain nearest-centroid scan (lowest index on ties).
    constexpr double slack = 1e-9;
    res.assignment.assign(n, 0);
    std::vector<double> sums(k * pts.dim);
    std::vector<std::size_t> counts(k);
    std::vector<double> own(n);
    std::vector<double> upper(n, std::numeric_limits<double>::infinity());
    std::vector<double> lower(n, 0.0);
    std::vector<double> half_gap(k);
    std::vector<double> moved(k);
    auto full_scan = [&](std::size_t p) {
        const auto r = pts.row(p);
        double best = std::numeric_limits<double>::infinity(), second = best;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double d = squared_distance(res.centroids.row(c), r);
            if (d < best) {
                second = best;
                best = d;
                arg = c;
            } else if (d < second) {
                second = d;
            }
        }
        res.assignment[p] = arg;
        upper[p] = std::sqrt(best);
        lower[p] = std::sqrt(second);
    };
    for (res.iterations = 1; res.iterations <= opt.max_iterations; ++res.iterations) {
        for (std::size_t c = 0; c < k; ++c) {
            double nearest = std::numeric_limits<double>::infinity();
            for (std::size_t o = 0; o < k; ++o)
                if (o != c) nearest = std::min(nearest, squared_distance(res.centroids.row(c), res.centroids.row(o)));
            half_gap[c] = 0.5 * std::sqrt(nearest);
        }
        for (std::size_t p = 0; p < n; ++p) {
            const double bound = std::max(half_gap[res.assignment[p]], lower[p]) * (1.0 - slack);
            if (upper[p] * (1.0 + slack) < bound) continue;
            upper[p] = std::sqrt(squared_distance(pts.row(p), res.centroids.row(res.assignment[p])));
            if (upper[p] * (1.0 + slack) < bound) continue;
            full_scan(p);
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t p = 0; p < n; ++p) {
            const auto c = res.assignment[p];
            ++counts[c];
            const auto r = pts.row(p);
            for (std::size_t j = 0; j < pts.dim; ++j) sums[c * pts.dim + j] += r[j];
        }
        const bool any_empty = std::find(counts.begin(), counts.end(), 0) != counts.end();
        if (any_empty)
            for (std::size_t p = 0; p < n; ++p)
                own[p] = squared_distance(pts.row(p), res.centroids.row(res.assignment[p]));
        double shift = 0.0;
        std::vector<bool> taken(any_empty ? n : 0, false);
        for (std::size_t c = 0; c < k; ++c) {
            auto centre = res.centroids.row(c);
            std::vector<double> next(pts.dim);
            if (counts[c] == 0) {
                std::size_t far = n;
                for (std::size_t p = 0; p < n; ++p)
                    if (!taken[p] && (far == n || own[p] > own[far])) far = p;
                taken[far] = true;
                own[far] = 0.0;
                std::copy(pts.row(far).begin(), pts.row(far).end(), next.begin());
            } else {
                for (std::size_t j = 0; j < pts.dim; ++j)
                    next[j] = sums[c * pts.dim + j] / static_cast<double>(counts[c]);
            }
            moved[c] = std::sqrt(squared_distance(centre, next));
            shift = std::max(shift, moved[c]);
            std::copy(next.begin(), next.end(), centre.begin());
        }
        if (shift < opt.tolerance) break;

        // Re-seeded points may now belong elsewhere: drop their bounds.
        std::size_t top = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (moved[c] > moved[top]) top = c;
        double runner_up = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            if (c != top) runner_up = std::max(runner_up, moved[c]);
        for (std::size_t p = 0; p < n; ++p) {
            const auto a = res.assignment[p];
            if (any_empty && taken[p]) {
                upper[p] = std::numeric_limits<double>::infinity();
                lower[p] = 0.0;
                continue;
            }
            upper[p] += moved[a];
            lower[p] = std::max(0.0, lower[p] - (a == top ? runner_up : moved[top]));
        }
    }
    res.iterations = std::min(res.iterations, opt.max_iterations);

    res.inertia = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        res.assignment[p] = nearest_centroid(res.centroids, pts.row(p));
        res.inertia += squared_distance(pts.row(p), res.centroids.row(res.assignment[p]));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Fitted abstraction

enum class ReducerKind { identity, lda };

struct ReducerSpec {
    ReducerKind kind = ReducerKind::identity;
    std::size_t dim = 0; ///< requested LDA dimension

    static ReducerSpec identity() { return {}; }
    static ReducerSpec lda(std::size_t d) { return {ReducerKind::lda, d}; }

    /// "identity" or "lda:<d>".
    static ReducerSpec parse(std::string_view text) {
        if (text == "identity") return identity();
        if (text.starts_with("lda:")) {
            std::size_t d = 0;
            auto body = text.substr(4);
            auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), d);
            if (ec == std::errc{} && ptr == body.data() + body.size() && d > 0) return lda(d);
        }
        throw std::invalid_argument("bad reducer '" + std::string(text) + "', expected identity or lda:<d>");
    }
};

/// Frozen abstraction chain: project -> Yeo-Johnson -> standardise -> nearest centroid.
struct ClusterModel {
    ReducerKind reducer = ReducerKind::identity;
    std::size_t input_dim = 0;
    Eigen::MatrixXd projection;    ///< input_dim x reduced dim; empty for identity
    std::vector<double> lambdas;   ///< per reduced dim
    std::vector<double> mean;      ///< per reduced dim
    std::vector<double> stddev;    ///< per reduced dim
    std::vector<std::size_t> kept; ///< reduced dims with nonzero variance, in order
    Points centroids;              ///< in the scaled space, dimension kept.size()

    std::size_t k() const noexcept { return centroids.size(); }
    std::size_t reduced_dim() const noexcept { return lambdas.size(); }

    std::vector<double> reduce(std::span<const double> s) const {
        if (s.size() != input_dim)
            throw std::invalid_argument("ClusterModel: state has dimension " + std::to_string(s.size()) +
                                        ", expected " + std::to_string(input_dim));
        if (reducer == ReducerKind::identity) return {s.begin(), s.end()};
        std::vector<double> out(static_cast<std::size_t>(projection.cols()), 0.0);
        for (Eigen::Index j = 0; j < projection.cols(); ++j)
            for (Eigen::Index i = 0; i < projection.rows(); ++i)
                out[static_cast<std::size_t>(j)] += projection(i, j) * s[static_cast<std::size_t>(i)];
        return out;
    }

    /// Point in the clustering space.
    std::vector<double> embed(std::span<const double> s) const {
        const auto r = reduce(s);
        std::vector<double> out;
        out.reserve(kept.size());
        for (auto j : kept) out.push_back((yeo_johnson(r[j], lambdas[j]) - mean[j]) / stddev[j]);
        return out;
    }
    std::vector<double> embed(const EnvState& s) const { return embed(s.values()); }

    std::size_t assign(const EnvState& s) const { return nearest_centroid(centroids, embed(s)); }

    std::vector<double> centroid_distances(const EnvState& s) const {
        const auto e = embed(s);
        std::vector<double> out(k());
        for (std::size_t c = 0; c < k(); ++c) out[c] = std::sqrt(squared_distance(centroids.row(c), e));
        return out;
    }
};

struct ClusterFitOptions {
    ReducerSpec reducer;
    std::size_t k = 16;
    std::uint64_t seed = 0;
    bool power_transform = true;
    KMeansOptions kmeans;
};

/// Fits the preprocessing chain on every state of `demos`; LDA is trained on
/// (state, action taken in it) pairs.
inline ClusterModel fit_cluster_model(const std::vector<Trajectory>& demos, const ClusterFitOptions& opt) {
    if (demos.empty()) throw std::invalid_argument("fit_cluster_model: no trajectories");
    ClusterModel m;
    m.input_dim = demos.front().initial.size();
    Points raw(m.input_dim);
    for (const auto& t : demos) {
        if (t.initial.size() != m.input_dim) throw std::invalid_argument("fit_cluster_model: mixed state dimensions");
        raw.push_back(t.initial.values());
        for (const auto& s : t.steps) raw.push_back(s.state.values());
    }

    m.reducer = opt.reducer.kind;
    Points reduced = raw;
    if (opt.reducer.kind == ReducerKind::lda) {
        Points taken(m.input_dim);
        std::vector<std::uint32_t> actions;
        for (const auto& t : demos) {
            const EnvState* prev = &t.initial;
            for (const auto& s : t.steps) {
                taken.push_back(prev->values());
                actions.push_back(s.action.value);
                prev = &s.state;
            }
        }
        m.projection = fit_lda(taken, actions, opt.reducer.dim);
        reduced = Points(static_cast<std::size_t>(m.projection.cols()));
        for (std::size_t i = 0; i < raw.size(); ++i) reduced.push_back(m.reduce(raw.row(i)));
    }

    const std::size_t d = reduced.dim;
    m.lambdas = opt.power_transform ? fit_power_transform(reduced) : std::vector<double>(d, 1.0);
    for (auto& v : reduced.data) {
        const auto j = static_cast<std::size_t>(&v - reduced.data.data()) % d;
        v = yeo_johnson(v, m.lambdas[j]);
    }
    m.mean.assign(d, 0.0);
    m.stddev.assign(d, 0.0);
    const auto n = static_cast<double>(reduced.size());
    for (std::size_t i = 0; i < reduced.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) m.mean[j] += reduced.row(i)[j];
    for (auto& v : m.mean) v /= n;
    for (std::size_t i = 0; i < reduced.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = reduced.row(i)[j] - m.mean[j];
            m.stddev[j] += dev * dev;
        }
    for (std::size_t j = 0; j < d; ++j) {
        m.stddev[j] = std::sqrt(m.stddev[j] / n);
        if (m.stddev[j] > 0.0) {
            m.kept.push_back(j);
        } else {
            warn("scaler: dimension " + std::to_string(j) + " has zero variance and is dropped");
            m.stddev[j] = 1.0;
        }
    }
    if (m.kept.empty()) throw std::invalid_argument("fit_cluster_model: every dimension is constant");

    Points scaled(m.kept.size());
    scaled.data.reserve(reduced.size() * m.kept.size());
    for (std::size_t i = 0; i < reduced.size(); ++i)
        for (auto j : m.kept) scaled.data.push_back((reduced.row(i)[j] - m.mean[j]) / m.stddev[j]);

    m.centroids = fit_kmeans(scaled, opt.k, opt.seed, opt.kmeans).centroids;
    return m;
}

// ---------------------------------------------------------------------------
// Labeling

/// Extra domain labels for (state, index); empty by default.
using LabelHook = std::function<std::vector<std::string>(const EnvState&, std::size_t)>;

/// {init} at position 0; afterwards {c<k>} plus goal/bad per the task predicates.
inline ObservationTrace abstract_trajectory(const ClusterModel& model, const TaskSpec& task, const Trajectory& t,
                                            const LabelHook& extra = {}) {
    ObservationTrace trace;
    trace.initial = ObservationSymbol::init();
    trace.steps.reserve(t.steps.size());
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const auto& s = t.steps[i].state;
        const std::size_t index = i + 1;
        std::vector<std::string> parts{labels::cluster(model.assign(s))};
        if (task.goal(s, index)) parts.emplace_back(labels::goal);
        if (task.bad(s, index)) parts.emplace_back(labels::bad);
        if (extra)
            for (auto& l : extra(s, index)) parts.push_back(std::move(l));
        trace.steps.emplace_back(t.steps[i].action, ObservationSymbol::from_labels(std::move(parts)));
    }
    return trace;
}

inline std::vector<ObservationTrace> abstract_trajectories(const ClusterModel& model, const TaskSpec& task,
                                                           const std::vector<Trajectory>& ts) {
    std::vector<ObservationTrace> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(abstract_trajectory(model, task, t));
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const ClusterModel& m) {
    nlohmann::json proj = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.projection.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.projection.cols(); ++j) row.push_back(m.projection(i, j));
        proj.push_back(std::move(row));
    }
    nlohmann::json cents = nlohmann::json::array();
    for (std::size_t c = 0; c < m.k(); ++c)
        cents.push_back(std::vector<double>(m.centroids.row(c).begin(), m.centroids.row(c).end()));
    return {{"format", "castle-cluster-model/1"},
            {"reducer", m.reducer == ReducerKind::lda ? "lda" : "identity"},
            {"input_dim", m.input_dim},
            {"projection", std::move(proj)},
            {"lambdas", m.lambdas},
            {"mean", m.mean},
            {"stddev", m.stddev},
            {"kept", m.kept},
            {"centroids", std::move(cents)}};
}

inline ClusterModel cluster_model_from_json(const nlohmann::json& j) {
    ClusterModel m;
    m.reducer = j.at("reducer").get<std::string>() == "lda" ? ReducerKind::lda : ReducerKind::identity;
    m.input_dim = j.at("input_dim").get<std::size_t>();
    const auto& proj = j.at("projection");
    if (m.reducer == ReducerKind::lda) {
        const auto rows = static_cast<Eigen::Index>(proj.size());
        const auto cols = rows ? static_cast<Eigen::Index>(proj.at(0).size()) : 0;
        m.projection.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index jj = 0; jj < cols; ++jj)
                m.projection(i, jj) = proj.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(jj)).get<double>();
        if (static_cast<std::size_t>(rows) != m.input_dim)
            throw std::invalid_argument("cluster model: projection rows do not match input_dim");
    }
    m.lambdas = j.at("lambdas").get<std::vector<double>>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.stddev = j.at("stddev").get<std::vector<double>>();
    m.kept = j.at("kept").get<std::vector<std::size_t>>();
    m.centroids = Points(m.kept.size());
    for (const auto& c : j.at("centroids")) {
        auto v = c.get<std::vector<double>>();
        if (v.size() != m.kept.size()) throw std::invalid_argument("cluster model: centroid dimension mismatch");
        m.centroids.push_back(v);
    }
    const std::size_t d = m.reducer == ReducerKind::lda ? static_cast<std::size_t>(m.projection.cols()) : m.input_dim;
    if (m.lambdas.size() != d || m.mean.size() != d || m.stddev.size() != d)
        throw std::invalid_argument("cluster model: per-dimension parameter count mismatch");
    for (auto k : m.kept)
        if (k >= d) throw std::invalid_argument("cluster model: kept dimension out of range");
    return m;
}

inline void save_cluster_model(const std::string& path, const ClusterModel& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << to_json(m).dump(1) << '\n';
}

inline ClusterModel load_cluster_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return cluster_model_from_json(nlohmann::json::parse(in));
}

} // namespace castle
