#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "povmkit/errors.hpp"
#include "povmkit/povm.hpp"
#include "povmkit/rng.hpp"

namespace povmkit {

/// Balanced N-way multiplexed click detector (spatial or time bins).
struct EqualSplitModel {
    int bins = 1;
    double efficiency = 1.0;
    double dark_prob = 0.0;
    double crosstalk_prob = 0.0;
};

/// Fiber-loop detector with logarithmic bin response.
struct LogLoopModel {
    int bins = 2;
    double out_coupling = 0.5;
    double loop_efficiency = 1.0;
    double detector_efficiency = 1.0;
    double dark_prob = 0.0;
};

inline void check_model(const EqualSplitModel& m) {
    if (m.bins < 1 || m.bins > 64)
        throw ParameterError("equal-split bins must be in [1, 64]");
    if (m.efficiency < 0.0 || m.efficiency > 1.0)
        throw ParameterError("efficiency must be in [0, 1]");
    if (m.dark_prob < 0.0 || m.dark_prob >= 1.0)
        throw ParameterError("dark_prob must be in [0, 1)");
    if (m.crosstalk_prob < 0.0 || m.crosstalk_prob >= 1.0)
        throw ParameterError("crosstalk_prob must be in [0, 1)");
}

inline void check_model(const LogLoopModel& m) {
    if (m.bins < 2 || m.bins > 20)
        throw ParameterError("loop bins must be in [2, 20]");
    if (m.out_coupling <= 0.0 || m.out_coupling > 1.0)
        throw ParameterError("out_coupling must be in (0, 1]");
    if (m.loop_efficiency <= 0.0 || m.loop_efficiency > 1.0)
        throw ParameterError("loop_efficiency must be in (0, 1]");
    if (m.detector_efficiency <= 0.0 || m.detector_efficiency > 1.0)
        throw ParameterError("detector_efficiency must be in (0, 1]");
    if (m.dark_prob < 0.0 || m.dark_prob >= 1.0)
        throw ParameterError("dark_prob must be in [0, 1)");
}

/// Noiseless equal-split click weights theta_k(n) for k = 0..bins,
/// n = 0..m-1, evaluated by the occupied-bin Markov chain: each surviving
/// photon lands in a uniformly random bin, so with s bins already occupied
/// the next photon opens a new bin with probability eta*(bins-s)/bins.
/// The chain is numerically stable for all n, unlike the alternating
/// inclusion-exclusion closed form, and agrees with it exactly.
template <typename Scalar>
WeightMatrix<Scalar> equal_split_weights(int bins, Scalar eta, int m) {
    WeightMatrix<Scalar> th = WeightMatrix<Scalar>::Zero(bins + 1, m);
    VectorX<Scalar> occ = VectorX<Scalar>::Zero(bins + 1);
    occ(0) = Scalar(1);
    th.col(0) = occ;
    for (int n = 1; n < m; ++n) {
        for (int s = bins; s >= 1; --s) {
            const Scalar open_prev = eta * Scalar(bins - s + 1) / Scalar(bins);
            const Scalar stay = Scalar(1) - eta * Scalar(bins - s) / Scalar(bins);
            occ(s) = occ(s) * stay + occ(s - 1) * open_prev;
        }
        occ(0) *= Scalar(1) - eta;
        th.col(n) = occ;
    }
    return th;
}

/// Per-photon probability that the loop detector produces a click attempt
/// in bin k = 1..bins.
template <typename Scalar>
VectorX<Scalar> loop_bin_probs(int bins, Scalar r, Scalar eta_loop,
                               Scalar eta_det) {
    VectorX<Scalar> q(bins);
    const Scalar ratio = (Scalar(1) - r) * eta_loop;
    Scalar acc = eta_det * r;
    for (int k = 0; k < bins; ++k) {
        q(k) = acc;
        acc *= ratio;
    }
    return q;
}

/// Noiseless loop click weights by dynamic programming over the set of
/// occupied bins: photons land independently in bin k with probability q(k)
/// or are lost, and the outcome is the number of distinct occupied bins.
template <typename Scalar>
WeightMatrix<Scalar> loop_weights(const VectorX<Scalar>& q, int m) {
    const int bins = static_cast<int>(q.size());
    const std::uint32_t nstates = 1u << bins;
    const Scalar q0 = Scalar(1) - q.sum();

    std::vector<Scalar> stay(nstates);
    stay[0] = q0;
    for (std::uint32_t mask = 1; mask < nstates; ++mask) {
        const int k = std::countr_zero(mask);
        stay[mask] = stay[mask & (mask - 1)] + q(k);
    }

    WeightMatrix<Scalar> th = WeightMatrix<Scalar>::Zero(bins + 1, m);
    std::vector<Scalar> prob(nstates, Scalar(0)), next(nstates);
    prob[0] = Scalar(1);
    th(0, 0) = Scalar(1);
    for (int n = 1; n < m; ++n) {
        for (std::uint32_t mask = 0; mask < nstates; ++mask) {
            next[mask] = prob[mask] * stay[mask];
        }
        for (int k = 0; k < bins; ++k) {
            const std::uint32_t bit = 1u << k;
            for (std::uint32_t mask = bit; mask < nstates; ++mask) {
                if (mask & bit) next[mask] += prob[mask ^ bit] * q(k);
            }
        }
        prob.swap(next);
        for (std::uint32_t mask = 0; mask < nstates; ++mask) {
            th(std::popcount(mask), n) += prob[mask];
        }
    }
    return th;
}

namespace detail {

/// Exact outcome-space transition matrix for independent per-bin dark
/// firing: observed = min(K-1, true + Binomial(idle_bins, p_d)).
inline Eigen::MatrixXd dark_transition(int k_outcomes, double p_d, int bins) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k_outcomes, k_outcomes);
    for (int kt = 0; kt < k_outcomes; ++kt) {
        const int idle = std::max(bins - kt, 0);
        std::vector<double> pascal(idle + 1, 0.0);
        pascal[0] = 1.0;
        for (int row = 1; row <= idle; ++row) {
            for (int j = row; j >= 1; --j) pascal[j] += pascal[j - 1];
        }
        for (int kd = 0; kd <= idle; ++kd) {
            const int ko = std::min(k_outcomes - 1, kt + kd);
            d(ko, kt) += pascal[kd] * std::pow(p_d, kd) *
                         std::pow(1.0 - p_d, idle - kd);
        }
    }
    return d;
}

/// Exact outcome-space transition matrix for one crosstalk-induced extra
/// click with probability 1 - (1-p_x)^k, capped at the bin count.
inline Eigen::MatrixXd crosstalk_transition(int k_outcomes, double p_x,
                                            int bins) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Identity(k_outcomes, k_outcomes);
    for (int k = 0; k + 1 < k_outcomes && k + 1 <= bins; ++k) {
        const double gain = 1.0 - std::pow(1.0 - p_x, k);
        x(k, k) = 1.0 - gain;
        x(k + 1, k) = gain;
    }
    return x;
}

}  // namespace detail

/// Convolve a POVM set with independent per-bin dark counts.
inline PovmSet apply_dark_counts(const PovmSet& set, double p_d, int bins) {
    if (p_d < 0.0 || p_d >= 1.0)
        throw ParameterError("dark_prob must be in [0, 1)");
    if (bins < 1) throw ParameterError("bins must be positive");
    if (p_d == 0.0) return set;
    PovmSet out;
    out.weights =
        detail::dark_transition(set.outcome_count(), p_d, bins) * set.weights;
    return out;
}

/// Convolve a POVM set with the single-extra-click crosstalk map.
inline PovmSet apply_crosstalk(const PovmSet& set, double p_x, int bins) {
    if (p_x < 0.0 || p_x >= 1.0)
        throw ParameterError("crosstalk_prob must be in [0, 1)");
    if (bins < 1) throw ParameterError("bins must be positive");
    if (p_x == 0.0) return set;
    PovmSet out;
    out.weights =
        detail::crosstalk_transition(set.outcome_count(), p_x, bins) *
        set.weights;
    return out;
}

/// Full equal-split POVM with dark counts and crosstalk applied.
inline PovmSet equal_split_povm(const EqualSplitModel& model, int m) {
    check_model(model);
    if (m < 2) throw DimensionError("dimension must be at least 2");
    PovmSet set{equal_split_weights<double>(model.bins, model.efficiency, m)};
    if (model.dark_prob > 0.0)
        set = apply_dark_counts(set, model.dark_prob, model.bins);
    if (model.crosstalk_prob > 0.0)
        set = apply_crosstalk(set, model.crosstalk_prob, model.bins);
    return set;
}

/// Full loop POVM with dark counts applied.
inline PovmSet loop_povm(const LogLoopModel& model, int m) {
    check_model(model);
    if (m < 2) throw DimensionError("dimension must be at least 2");
    const VectorX<double> q =
        loop_bin_probs<double>(model.bins, model.out_coupling,
                               model.loop_efficiency, model.detector_efficiency);
    PovmSet set{loop_weights<double>(q, m)};
    if (model.dark_prob > 0.0)
        set = apply_dark_counts(set, model.dark_prob, model.bins);
    return set;
}

/// Detector efficiency that gives a loop detector the requested total
/// efficiency sum(q_k) = eta_total.
inline double loop_detector_efficiency(double eta_total, double r,
                                       double eta_loop, int bins) {
    const double ratio = (1.0 - r) * eta_loop;
    const double geom =
        (ratio == 1.0) ? static_cast<double>(bins)
                       : (1.0 - std::pow(ratio, bins)) / (1.0 - ratio);
    const double eta_det = eta_total / (r * geom);
    if (eta_det <= 0.0 || eta_det > 1.0)
        throw ParameterError("total efficiency unreachable for this loop");
    return eta_det;
}

namespace detail {

template <typename Outcome>
PovmSet run_monte_carlo(int k_outcomes, int m, long long samples,
                        std::uint64_t seed, Outcome&& advance_and_count) {
    Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts =
        Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(
            k_outcomes, m);
    Xoshiro256pp rng(seed);
    for (long long s = 0; s < samples; ++s) {
        std::uint64_t mask = 0;
        for (int n = 0; n < m; ++n) {
            counts(advance_and_count(rng, mask, n), n) += 1;
        }
    }
    PovmSet out;
    out.weights = counts.cast<double>() / static_cast<double>(samples);
    return out;
}

inline int add_noise_clicks(Xoshiro256pp& rng, int clicks, int bins,
                            double p_d, double p_x) {
    if (p_d > 0.0) {
        for (int idle = bins - clicks; idle > 0; --idle) {
            if (rng.uniform() < p_d) ++clicks;
        }
    }
    if (p_x > 0.0 && clicks > 0 && clicks < bins) {
        const double gain = 1.0 - std::pow(1.0 - p_x, clicks);
        if (rng.uniform() < gain) ++clicks;
    }
    return clicks;
}

}  // namespace detail

/// Empirical equal-split POVM from direct stochastic simulation. Photon
/// number n reuses the routing path of n-1 plus one fresh photon, which
/// leaves every row exactly distributed while keeping the cost linear in m.
inline PovmSet monte_carlo_povm(const EqualSplitModel& model, int m,
                                long long samples, std::uint64_t seed) {
    check_model(model);
    if (m < 2) throw DimensionError("dimension must be at least 2");
    if (samples < 1) throw ParameterError("samples must be positive");
    const int bins = model.bins;
    const double eta = model.efficiency;
    return detail::run_monte_carlo(
        bins + 1, m, samples, seed,
        [&](Xoshiro256pp& rng, std::uint64_t& mask, int n) {
            if (n > 0 && rng.uniform() < eta) {
                mask |= 1ull << rng.below(static_cast<std::uint32_t>(bins));
            }
            const int clicks = std::popcount(mask);
            return detail::add_noise_clicks(rng, clicks, bins, model.dark_prob,
                                            model.crosstalk_prob);
        });
}

/// Empirical loop POVM from direct stochastic simulation of bin routing.
inline PovmSet monte_carlo_povm(const LogLoopModel& model, int m,
                                long long samples, std::uint64_t seed) {
    check_model(model);
    if (m < 2) throw DimensionError("dimension must be at least 2");
    if (samples < 1) throw ParameterError("samples must be positive");
    const int bins = model.bins;
    const VectorX<double> q =
        loop_bin_probs<double>(bins, model.out_coupling, model.loop_efficiency,
                               model.detector_efficiency);
    std::vector<double> cumulative(bins);
    double acc = 0.0;
    for (int k = 0; k < bins; ++k) {
        acc += q(k);
        cumulative[k] = acc;
    }
    return detail::run_monte_carlo(
        bins + 1, m, samples, seed,
        [&](Xoshiro256pp& rng, std::uint64_t& mask, int n) {
            if (n > 0) {
                const double u = rng.uniform();
                for (int k = 0; k < bins; ++k) {
                    if (u < cumulative[k]) {
                        mask |= 1ull << k;
                        break;
                    }
                }
            }
            const int clicks = std::popcount(mask);
            return detail::add_noise_clicks(rng, clicks, bins, model.dark_prob,
                                            0.0);
        });
}

}  // namespace povmkit
