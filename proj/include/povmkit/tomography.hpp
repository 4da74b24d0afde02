#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "povmkit/errors.hpp"
#include "povmkit/povm.hpp"
#include "povmkit/probes.hpp"

namespace povmkit {

struct ReconstructionConfig {
    /// Smoothing weight; negative selects the default 1e-3 * ||P||_F^2 / M.
    double gamma = -1.0;
    long long max_iter = 100000;
    /// Relative objective decrease below which iterations count as stalled.
    double tol = 1e-10;
    /// Reconstruction dimension; 0 selects the truncation adequacy bound of
    /// the largest probe.
    int dimension = 0;
};

struct ReconstructionResult {
    PovmSet povm;
    double residual = 0.0;
    long long iterations = 0;
    bool converged = false;
    double gamma = 0.0;
    /// Objective value after every iteration; non-increasing by construction.
    std::vector<double> objective_trace;
};

/// Euclidean projection onto the probability simplex by sort and threshold.
inline Eigen::VectorXd simplex_project(const Eigen::VectorXd& v) {
    const int k = static_cast<int>(v.size());
    if (k < 1) throw ShapeError("simplex_project needs at least one entry");
    std::vector<double> u(v.data(), v.data() + k);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, tau = 0.0;
    for (int j = 0; j < k; ++j) {
        css += u[j];
        const double cand = (1.0 - css) / (j + 1);
        if (u[j] + cand > 0.0) tau = cand;
    }
    return (v.array() + tau).cwiseMax(0.0);
}

namespace detail {

/// Project every column of a K x M iterate onto the simplex in place.
inline void simplex_project_columns(WeightMatrix<double>& z) {
    const int k = static_cast<int>(z.rows());
    const int m = static_cast<int>(z.cols());
    std::vector<double> u(k);
    for (int i = 0; i < m; ++i) {
        for (int n = 0; n < k; ++n) u[n] = z(n, i);
        std::sort(u.begin(), u.end(), std::greater<double>());
        double css = 0.0, tau = 0.0;
        for (int j = 0; j < k; ++j) {
            css += u[j];
            const double cand = (1.0 - css) / (j + 1);
            if (u[j] + cand > 0.0) tau = cand;
        }
        for (int n = 0; n < k; ++n) z(n, i) = std::max(z(n, i) + tau, 0.0);
    }
}

inline double largest_gram_eigenvalue(const Eigen::MatrixXd& f) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(f.cols()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd w = f.transpose() * (f * v);
        lambda = w.norm();
        if (lambda == 0.0) break;
        v = w / lambda;
    }
    return lambda;
}

}  // namespace detail

/// Frobenius norm of P - F * Pi^T at the stats' probe set.
inline double residual(const OutcomeStats& stats, const ProbeSet& probes,
                       const PovmSet& set) {
    if (static_cast<int>(stats.frequencies.rows()) != probes.size())
        throw ShapeError("stats rows do not match probe count");
    if (static_cast<int>(stats.frequencies.cols()) != set.outcome_count())
        throw ShapeError("stats columns do not match outcome count");
    const Eigen::MatrixXd f = probe_matrix(probes, set.dimension());
    return (stats.frequencies - f * set.weights.transpose()).norm();
}

/// Matrix-level reconstruction: minimize
///   ||P - F Pi^T||_F^2 + gamma * sum_n sum_i (theta_n(i+1) - theta_n(i))^2
/// over column-stochastic nonnegative Pi, using a monotone accelerated
/// projected-gradient method (FISTA with a non-increasing objective), a
/// backtracking line search seeded at 1/L from power iteration, and the
/// uniform initializer theta_n(i) = 1/K.
inline ReconstructionResult reconstruct(const Eigen::MatrixXd& p,
                                        const Eigen::MatrixXd& f,
                                        int k_outcomes,
                                        const ReconstructionConfig& config) {
    if (k_outcomes < 2) throw ParameterError("need at least 2 outcomes");
    if (p.rows() != f.rows())
        throw ShapeError("statistics rows do not match response matrix rows");
    if (static_cast<int>(p.cols()) != k_outcomes)
        throw ShapeError("statistics columns do not match outcome count");
    if (config.tol <= 0.0) throw ParameterError("tol must be positive");
    if (config.max_iter < 1) throw ParameterError("max_iter must be >= 1");

    const int m = static_cast<int>(f.cols());
    if (m < 2) throw DimensionError("reconstruction dimension below 2");
    const int k = k_outcomes;
    const double gamma = config.gamma >= 0.0
                             ? config.gamma
                             : 1e-3 * p.squaredNorm() / m;

    const double lambda_max = detail::largest_gram_eigenvalue(f);
    double step = 1.0 / (2.0 * (lambda_max + 4.0 * gamma));

    const auto objective = [&](const WeightMatrix<double>& w) {
        const double data = (p - f * w.transpose()).squaredNorm();
        const double smooth =
            (w.rightCols(m - 1) - w.leftCols(m - 1)).squaredNorm();
        return data + gamma * smooth;
    };

    WeightMatrix<double> x = WeightMatrix<double>::Constant(k, m, 1.0 / k);
    WeightMatrix<double> y = x, z = x, x_prev = x;
    WeightMatrix<double> grad(k, m), diff(k, m - 1);
    Eigen::MatrixXd err(p.rows(), k);

    ReconstructionResult result;
    result.gamma = gamma;
    result.objective_trace.reserve(
        static_cast<std::size_t>(std::min<long long>(config.max_iter, 1 << 20)));

    double fx = objective(x);
    double t = 1.0;
    int stall = 0;
    long long it = 0;
    for (it = 1; it <= config.max_iter; ++it) {
        err.noalias() = f * y.transpose();
        err -= p;
        grad.noalias() = 2.0 * (err.transpose() * f);
        diff.noalias() = y.rightCols(m - 1) - y.leftCols(m - 1);
        grad.leftCols(m - 1) -= 2.0 * gamma * diff;
        grad.rightCols(m - 1) += 2.0 * gamma * diff;

        const double fy = objective(y);
        double fz = 0.0;
        while (true) {
            z = y - step * grad;
            detail::simplex_project_columns(z);
            fz = objective(z);
            const WeightMatrix<double> d = z - y;
            const double bound = fy + grad.cwiseProduct(d).sum() +
                                 d.squaredNorm() / (2.0 * step) + 1e-15;
            if (fz <= bound) break;
            step *= 0.5;
        }

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        x_prev.swap(x);
        double fx_next = 0.0;
        if (fz <= fx) {
            x = z;
            fx_next = fz;
        } else {
            x = x_prev;
            fx_next = fx;
        }
        y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);

        const double rel = (fx - fx_next) / std::max(fx, 1e-300);
        const double dx = (x - x_prev).cwiseAbs().maxCoeff();
        fx = fx_next;
        t = t_next;
        step *= 1.3;
        result.objective_trace.push_back(fx);

        if (rel < config.tol && dx < 1e-9) {
            if (++stall >= 5) {
                result.converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }

    result.iterations = std::min(it, config.max_iter);
    result.povm = PovmSet{x};
    result.residual = (p - f * x.transpose()).norm();
    return result;
}

/// Reconstruct from probe outcome statistics; the response matrix is the
/// Poisson probe matrix at the configured dimension (the truncation adequacy
/// bound of the largest probe when unset).
inline ReconstructionResult reconstruct(const OutcomeStats& stats,
                                        const ProbeSet& probes, int k_outcomes,
                                        const ReconstructionConfig& config) {
    if (static_cast<int>(stats.frequencies.rows()) != probes.size())
        throw ShapeError("stats rows do not match probe count");
    const int m = config.dimension > 0
                      ? config.dimension
                      : adequate_dimension(probes.max_mean());
    return reconstruct(stats.frequencies, probe_matrix(probes, m), k_outcomes,
                       config);
}

}  // namespace povmkit
