#pragma once

// Independent oracles for the detector models and analysis metrics. These
// deliberately use different algorithms from the library (exhaustive
// enumeration, inclusion-exclusion, extended precision) so agreement is
// evidence of correctness rather than of shared bugs.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

inline long double binomial_ld(int n, int k) {
    if (k < 0 || k > n) return 0.0L;
    long double v = 1.0L;
    for (int j = 1; j <= k; ++j) v = v * (n - k + j) / j;
    return v;
}

/// Equal-split click distribution for exactly n photons by brute-force
/// enumeration of every photon assignment (lost, or one of `bins` bins).
inline std::vector<long double> enumerate_equal_split(int bins, long double eta,
                                                      int n) {
    std::vector<long double> dist(bins + 1, 0.0L);
    const int choices = bins + 1;
    long long total = 1;
    for (int i = 0; i < n; ++i) total *= choices;
    std::vector<int> digits(n, 0);
    for (long long a = 0; a < total; ++a) {
        long long rest = a;
        long double prob = 1.0L;
        unsigned mask = 0;
        for (int i = 0; i < n; ++i) {
            const int digit = static_cast<int>(rest % choices);
            rest /= choices;
            if (digit == 0) {
                prob *= 1.0L - eta;
            } else {
                prob *= eta / bins;
                mask |= 1u << (digit - 1);
            }
        }
        dist[static_cast<int>(__builtin_popcount(mask))] += prob;
    }
    return dist;
}

/// Equal-split click distribution from the alternating inclusion-exclusion
/// closed form; long double keeps the cancellation harmless for small bins.
inline std::vector<long double> inclusion_exclusion_equal_split(
    int bins, long double eta, int n) {
    std::vector<long double> dist(bins + 1, 0.0L);
    for (int k = 0; k <= bins; ++k) {
        long double sum = 0.0L;
        for (int j = 0; j <= k; ++j) {
            const long double base =
                1.0L - eta + eta * static_cast<long double>(k - j) / bins;
            const long double term =
                binomial_ld(k, j) * std::pow(base, static_cast<long double>(n));
            sum += (j % 2 == 0) ? term : -term;
        }
        dist[k] = binomial_ld(bins, k) * sum;
    }
    return dist;
}

/// Loop-detector click distribution by subset inclusion-exclusion:
/// P(occupied set is a subset of T) = (q0 + sum_{k in T} q_k)^n, inverted by
/// a Moebius sum over subsets. Practical for bins <= 4.
inline std::vector<long double> inclusion_exclusion_loop(
    const std::vector<long double>& q, int n) {
    const int bins = static_cast<int>(q.size());
    long double q0 = 1.0L;
    for (long double qk : q) q0 -= qk;
    const unsigned nstates = 1u << bins;
    std::vector<long double> subset_prob(nstates);
    for (unsigned mask = 0; mask < nstates; ++mask) {
        long double p = q0;
        for (int k = 0; k < bins; ++k) {
            if (mask & (1u << k)) p += q[k];
        }
        subset_prob[mask] = std::pow(p, static_cast<long double>(n));
    }
    std::vector<long double> dist(bins + 1, 0.0L);
    for (unsigned s = 0; s < nstates; ++s) {
        long double exact = 0.0L;
        for (unsigned t = s;; t = (t - 1) & s) {
            const int parity =
                __builtin_popcount(s) - __builtin_popcount(t);
            exact += (parity % 2 == 0) ? subset_prob[t] : -subset_prob[t];
            if (t == 0) break;
        }
        dist[__builtin_popcount(s)] += exact;
    }
    return dist;
}

inline long double purity_ld(const std::vector<long double>& w) {
    long double total = 0.0L, squares = 0.0L;
    for (long double v : w) {
        total += v;
        squares += v * v;
    }
    return squares / (total * total);
}

inline long double entropy_bits_ld(const std::vector<long double>& w) {
    long double total = 0.0L;
    for (long double v : w) total += v;
    long double h = 0.0L;
    for (long double v : w) {
        const long double p = v / total;
        if (p < 1e-300L) continue;
        h -= p * std::log2(p);
    }
    return h;
}

/// Agreement tolerance for an empirical frequency against a model value:
/// four standard errors of the less favorable of the two, plus a one-count
/// floor so zero-probability cells stay testable.
inline double mc_tolerance(double p_model, double p_hat, long long samples) {
    const double hi = std::max(p_model, p_hat);
    const double lo = std::min(p_model, p_hat);
    const double var = std::max(hi * (1.0 - lo), 0.0);
    return 4.0 * std::sqrt(var / static_cast<double>(samples)) +
           2.0 / static_cast<double>(samples);
}

}  // namespace oracles
