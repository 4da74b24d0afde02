#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>

#include "povmkit/errors.hpp"
#include "povmkit/povm.hpp"
#include "povmkit/rng.hpp"

namespace povmkit {

/// Coherent-state probe amplitudes, stored as mean photon numbers.
struct ProbeSet {
    Eigen::VectorXd means;

    int size() const { return static_cast<int>(means.size()); }
    double max_mean() const { return means.size() ? means.maxCoeff() : 0.0; }
};

/// Empirical outcome frequencies, one row per probe.
struct OutcomeStats {
    Eigen::MatrixXd frequencies;
    long long shots = 0;
};

/// Smallest truncation dimension with Poisson tail mass below 1e-6 for a
/// probe of mean mu.
inline int adequate_dimension(double mu) {
    if (mu < 0.0) throw ParameterError("mean photon number must be >= 0");
    return static_cast<int>(std::ceil(mu + 10.0 * std::sqrt(mu) + 20.0));
}

/// Probe means mu_m = mu_max * (m/(count-1))^2, m = 0..count-1. The
/// quadratic spacing gives near-uniform coverage in amplitude.
inline ProbeSet quadratic_probe_set(double mu_max, int count) {
    if (mu_max <= 0.0) throw ParameterError("mu_max must be positive");
    if (count < 3) throw ParameterError("probe count must be at least 3");
    ProbeSet probes;
    probes.means.resize(count);
    for (int m = 0; m < count; ++m) {
        const double frac = static_cast<double>(m) / (count - 1);
        probes.means(m) = mu_max * frac * frac;
    }
    return probes;
}

/// Poisson photon-number distributions of the probes: F(m, i) =
/// exp(-mu_m) mu_m^i / i!, evaluated in log space.
inline Eigen::MatrixXd probe_matrix(const ProbeSet& probes, int m_dim) {
    if (m_dim < 2) throw DimensionError("dimension must be at least 2");
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(probes.size(), m_dim);
    for (int m = 0; m < probes.size(); ++m) {
        const double mu = probes.means(m);
        if (mu < 0.0) throw ParameterError("negative probe mean");
        if (mu == 0.0) {
            f(m, 0) = 1.0;
            continue;
        }
        const double log_mu = std::log(mu);
        for (int i = 0; i < m_dim; ++i) {
            f(m, i) = std::exp(-mu + i * log_mu - std::lgamma(i + 1.0));
        }
        if (f.row(m).sum() < 1.0 - 1e-6) {
            std::fprintf(stderr,
                         "warning: probe mean %g truncated at dimension %d "
                         "(row mass %.9f)\n",
                         mu, m_dim, f.row(m).sum());
        }
    }
    return f;
}

/// True whether every probe satisfies the truncation adequacy rule at the
/// given dimension.
inline bool truncation_adequate(const ProbeSet& probes, int m_dim) {
    return m_dim >= adequate_dimension(probes.max_mean());
}

/// Highest photon number with meaningful direct support from the probe set:
/// three standard deviations above the largest Poisson mean.
inline int data_support_limit(const ProbeSet& probes) {
    const double mu = probes.max_mean();
    return static_cast<int>(std::ceil(mu + 3.0 * std::sqrt(mu)));
}

/// Draw per-probe outcome histograms from the exact distribution
/// p(n | mu_m) = sum_i F(m, i) theta_n(i) and return frequencies.
/// Probe m uses its own seed-derived stream, so rows are independent.
inline OutcomeStats simulate_outcomes(const PovmSet& set,
                                      const ProbeSet& probes, long long shots,
                                      std::uint64_t seed) {
    if (shots < 1) throw ParameterError("shots must be positive");
    if (!truncation_adequate(probes, set.dimension())) {
        throw TruncationError(
            "POVM dimension " + std::to_string(set.dimension()) +
            " below adequacy bound " +
            std::to_string(adequate_dimension(probes.max_mean())) +
            " for the largest probe");
    }
    const int k = set.outcome_count();
    const Eigen::MatrixXd f = probe_matrix(probes, set.dimension());
    Eigen::MatrixXd p = f * set.weights.transpose();

    OutcomeStats stats;
    stats.shots = shots;
    stats.frequencies = Eigen::MatrixXd::Zero(probes.size(), k);
    std::vector<double> cumulative(k);
    for (int m = 0; m < probes.size(); ++m) {
        double total = 0.0;
        for (int n = 0; n < k; ++n) total += std::max(p(m, n), 0.0);
        double acc = 0.0;
        for (int n = 0; n < k; ++n) {
            acc += std::max(p(m, n), 0.0) / total;
            cumulative[n] = acc;
        }
        cumulative[k - 1] = 1.0;
        Xoshiro256pp rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (long long s = 0; s < shots; ++s) {
            const double u = rng.uniform();
            int n = 0;
            while (u >= cumulative[n]) ++n;
            counts(n) += 1.0;
        }
        stats.frequencies.row(m) = counts.transpose() / static_cast<double>(shots);
    }
    return stats;
}

}  // namespace povmkit
