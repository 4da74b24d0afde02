#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "povmkit/errors.hpp"
#include "povmkit/models.hpp"
#include "povmkit/povm.hpp"
#include "povmkit/probes.hpp"
#include "povmkit/rng.hpp"
#include "povmkit/tomography.hpp"

namespace povmkit {

namespace detail {

/// Neumaier compensated accumulator; exact enough for 5000-term entropy sums.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + comp; }
};

template <typename Derived>
void require_vector(const Eigen::MatrixBase<Derived>& row) {
    if (row.rows() != 1 && row.cols() != 1)
        throw ShapeError("expected a vector of outcome weights");
}

}  // namespace detail

/// Purity sum_i theta(i)^2 / (sum_i theta(i))^2 of one outcome's weights.
template <typename Derived>
double purity(const Eigen::MatrixBase<Derived>& row) {
    detail::require_vector(row);
    detail::CompensatedSum total, squares;
    for (Eigen::Index i = 0; i < row.size(); ++i) {
        const double w = row(i);
        total.add(w);
        squares.add(w * w);
    }
    const double t = total.value();
    if (t <= 0.0) throw ZeroOutcomeError("outcome has zero total weight");
    return squares.value() / (t * t);
}

/// Number of photon-number states the outcome effectively responds to.
template <typename Derived>
double effective_states(const Eigen::MatrixBase<Derived>& row) {
    return 1.0 / purity(row);
}

/// Posterior over photon number after observing the outcome, for a flat
/// prior: the weights normalized to unit sum.
template <typename Derived>
Eigen::VectorXd posterior(const Eigen::MatrixBase<Derived>& row) {
    detail::require_vector(row);
    detail::CompensatedSum total;
    for (Eigen::Index i = 0; i < row.size(); ++i) total.add(row(i));
    const double t = total.value();
    if (t <= 0.0) throw ZeroOutcomeError("outcome has zero total weight");
    Eigen::VectorXd p(row.size());
    for (Eigen::Index i = 0; i < row.size(); ++i) p(i) = row(i) / t;
    return p;
}

/// Posterior over photon number after observing outcome n of a POVM set.
inline Eigen::VectorXd posterior(const PovmSet& set, int n) {
    if (n < 0 || n >= set.outcome_count())
        throw RangeError("outcome index out of range");
    return posterior(set.weights.row(n));
}

/// Shannon entropy (bits) of a posterior probability vector: the information
/// still missing about the photon number after seeing the outcome. The
/// convention 0*log(0) = 0 is applied by skipping entries below 1e-300.
template <typename Derived>
double missing_info(const Eigen::MatrixBase<Derived>& p) {
    detail::require_vector(p);
    detail::CompensatedSum h;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double v = p(i);
        if (v < 1e-300) continue;
        h.add(-v * std::log2(v));
    }
    return h.value();
}

/// Total information (bits) carried by a flat prior over m photon numbers.
inline double h_total(int m) {
    if (m < 1) throw ParameterError("dimension must be positive");
    return std::log2(static_cast<double>(m));
}

/// Information (bits) extracted about the photon number: log2(m) less the
/// missing information, clamped below at zero.
inline double extracted_info(double missing, int m) {
    const double total = h_total(m);
    if (missing < 0.0 || missing > total + 1e-9)
        throw RangeError("missing information outside [0, log2(m)]");
    return std::max(0.0, total - missing);
}

struct OutcomeMetrics {
    int n = 0;
    /// False when the outcome never fires on the supported photon numbers.
    bool defined = false;
    double purity = std::numeric_limits<double>::quiet_NaN();
    double effective_states = std::numeric_limits<double>::quiet_NaN();
    double missing_bits = std::numeric_limits<double>::quiet_NaN();
    double extracted_bits = std::numeric_limits<double>::quiet_NaN();
};

/// Per-outcome purity and information metrics for a whole POVM set.
inline std::vector<OutcomeMetrics> compute_metrics(const PovmSet& set) {
    std::vector<OutcomeMetrics> out(set.outcome_count());
    for (int n = 0; n < set.outcome_count(); ++n) {
        out[n].n = n;
        const auto row = set.weights.row(n);
        if (row.sum() <= 0.0) continue;
        out[n].defined = true;
        out[n].purity = purity(row);
        out[n].effective_states = 1.0 / out[n].purity;
        out[n].missing_bits = missing_info(posterior(row));
        out[n].extracted_bits =
            extracted_info(out[n].missing_bits, set.dimension());
    }
    return out;
}

/// Photon numbers the detector can still distinguish: one past the first
/// index where the top outcome saturates, or the full dimension if it never
/// does.
inline int dynamic_range(const PovmSet& set, double thresh = 0.99) {
    const int k = set.outcome_count();
    for (int i = 0; i < set.dimension(); ++i) {
        if (set.weights(k - 1, i) >= thresh) return i + 1;
    }
    return set.dimension();
}

enum class FitFamily { equal_split, log_loop };

struct FitOptions {
    FitFamily family = FitFamily::equal_split;
    /// Loop parameters assumed known when fitting the log_loop family.
    double out_coupling = 0.5;
    double loop_efficiency = 0.9;
    /// Cap on the fit window for reconstructed sets whose tail carries no
    /// direct probe data; 0 disables the cap.
    int fit_limit = 0;
    int range_cap = 1000;
    double saturation_thresh = 0.99;
    int sweeps = 60;
    int golden_iters = 60;
    double divergence_rms = 0.05;
};

struct FiguresOfMerit {
    double efficiency = 0.0;
    /// Device-level dark probability 1 - (1 - p_bin)^bins.
    double dark_prob = 0.0;
    double crosstalk_prob = 0.0;
    double efficiency_err = 0.0;
    double dark_err = 0.0;
    double crosstalk_err = 0.0;
    bool efficiency_one_sided = false;
    bool dark_one_sided = false;
    bool crosstalk_one_sided = false;
    double fit_rms = 0.0;
    int fit_range = 0;
};

namespace detail {

template <typename F>
double golden_minimize(F&& f, double a, double b, int iters) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters; ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// Cyclic coordinate minimization with per-round bracket shrinking, which
/// lets golden-section line searches resolve strongly coupled parameter
/// valleys to machine precision.
template <typename F>
std::pair<std::vector<double>, double> coordinate_search(
    F&& eval, std::vector<double> p, const std::vector<double>& lo,
    const std::vector<double>& hi, int sweeps, int golden_iters) {
    std::vector<double> width(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) width[c] = hi[c] - lo[c];
    double best = eval(p);
    for (int round = 0; round < sweeps; ++round) {
        for (std::size_t c = 0; c < p.size(); ++c) {
            const double a = std::max(lo[c], p[c] - width[c] / 2.0);
            const double b = std::min(hi[c], p[c] + width[c] / 2.0);
            p[c] = golden_minimize(
                [&](double v) {
                    std::vector<double> q = p;
                    q[c] = v;
                    return eval(q);
                },
                a, b, golden_iters);
        }
        for (double& w : width) w = std::max(w * 0.6, 1e-13);
        const double next = eval(p);
        if (best - next < 1e-30) {
            best = std::min(best, next);
            break;
        }
        best = next;
    }
    return {p, best};
}

struct FitBrackets {
    std::vector<double> p0, lo, hi;
};

inline FitBrackets fit_brackets(FitFamily family, int bins,
                                double out_coupling, double loop_efficiency) {
    if (family == FitFamily::equal_split) {
        return {{0.5, 0.0, 0.0}, {1e-3, 0.0, 0.0}, {1.0, 0.1, 0.5}};
    }
    const double ratio = (1.0 - out_coupling) * loop_efficiency;
    const double geom = (ratio == 1.0)
                            ? static_cast<double>(bins)
                            : (1.0 - std::pow(ratio, bins)) / (1.0 - ratio);
    const double eta_max = out_coupling * geom;
    return {{std::min(0.5, 0.5 * eta_max), 0.0},
            {1e-3, 0.0},
            {eta_max, 0.1}};
}

struct FitProblem {
    FitBrackets brackets;
    std::function<double(const std::vector<double>&)> sse;
    int window = 0;
};

inline FitProblem make_fit_problem(const PovmSet& set, int bins,
                                   const FitOptions& opts) {
    FitProblem prob;
    prob.brackets = fit_brackets(opts.family, bins, opts.out_coupling,
                                 opts.loop_efficiency);
    int window = std::min({dynamic_range(set, opts.saturation_thresh),
                           opts.range_cap, set.dimension()});
    if (opts.fit_limit > 0) window = std::min(window, opts.fit_limit);
    if (window < 2) throw ShapeError("fit window is too small");
    prob.window = window;
    const WeightMatrix<double> target = set.weights.leftCols(window);
    if (opts.family == FitFamily::equal_split) {
        prob.sse = [target, bins, window](const std::vector<double>& q) {
            PovmSet trial{equal_split_weights<double>(bins, q[0], window)};
            if (q[1] > 0.0) trial = apply_dark_counts(trial, q[1], bins);
            if (q[2] > 0.0) trial = apply_crosstalk(trial, q[2], bins);
            return (trial.weights - target).squaredNorm();
        };
    } else {
        const double r = opts.out_coupling;
        const double el = opts.loop_efficiency;
        prob.sse = [target, bins, window, r, el](const std::vector<double>& q) {
            const double eta_det = loop_detector_efficiency(q[0], r, el, bins);
            PovmSet trial{loop_weights<double>(
                loop_bin_probs<double>(bins, r, el, eta_det), window)};
            if (q[1] > 0.0) trial = apply_dark_counts(trial, q[1], bins);
            return (trial.weights - target).squaredNorm();
        };
    }
    return prob;
}

/// Sample standard deviation on deviations from the first value, which keeps
/// clustered inputs free of cancellation and identical inputs exactly at zero.
inline double sample_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double shifted_mean = 0.0;
    for (double x : v) shifted_mean += x - v.front();
    shifted_mean /= n;
    double ss = 0.0;
    for (double x : v) {
        const double d = x - v.front() - shifted_mean;
        ss += d * d;
    }
    return std::sqrt(ss / (n - 1.0));
}

inline bool at_bracket_edge(double v, double lo, double hi) {
    const double slack = 1e-9 * (hi - lo);
    return v <= lo + slack || v >= hi - slack;
}

}  // namespace detail

/// Fit a noise-model parameterization to a POVM set over its informative
/// window and report the recovered device parameters. The window excludes
/// the saturated tail and, when fit_limit is set, photon numbers beyond the
/// probe data's support. Throws FitDivergence when no parameter choice comes
/// close, which flags a set that the requested family cannot explain.
inline FiguresOfMerit figures_of_merit(const PovmSet& set, int bins,
                                       const FitOptions& opts = {}) {
    if (set.outcome_count() != bins + 1)
        throw ShapeError("outcome count does not match bins + 1");
    detail::FitProblem prob = detail::make_fit_problem(set, bins, opts);
    auto [p, sse] =
        detail::coordinate_search(prob.sse, prob.brackets.p0, prob.brackets.lo,
                                  prob.brackets.hi, opts.sweeps,
                                  opts.golden_iters);
    const double rms =
        std::sqrt(sse / (static_cast<double>(bins + 1) * prob.window));
    if (!(rms <= opts.divergence_rms))
        throw FitDivergence("fit rms " + std::to_string(rms) +
                            " exceeds divergence threshold");
    FiguresOfMerit fom;
    fom.efficiency = p[0];
    fom.dark_prob = 1.0 - std::pow(1.0 - p[1], bins);
    fom.crosstalk_prob = opts.family == FitFamily::equal_split ? p[2] : 0.0;
    fom.fit_rms = rms;
    fom.fit_range = prob.window;
    return fom;
}

/// Error bars on the figures of merit from the probe calibration
/// uncertainty: each trial draws one relative amplitude offset delta, scales
/// every probe mean by (1 + delta)^2 (a global, correlated miscalibration),
/// re-reconstructs and re-fits, and the bar is the sample standard deviation
/// across trials. Parameters whose base fit sits on a bracket boundary are
/// flagged one-sided. The base figures of merit are taken as given so a
/// caller that already fitted the unperturbed reconstruction does not repeat
/// the work.
inline FiguresOfMerit uncertainty_bars(const OutcomeStats& stats,
                                       const ProbeSet& probes, int k_outcomes,
                                       const ReconstructionConfig& config,
                                       double amp_uncertainty, int trials,
                                       std::uint64_t seed,
                                       const FitOptions& fit_opts,
                                       const FiguresOfMerit& base) {
    if (trials < 2) throw ParameterError("need at least 2 trials");
    if (amp_uncertainty < 0.0 || amp_uncertainty >= 0.5)
        throw ParameterError("amplitude uncertainty must be in [0, 0.5)");
    ReconstructionConfig pinned = config;
    if (pinned.dimension <= 0)
        pinned.dimension = adequate_dimension(probes.max_mean());
    const int bins = k_outcomes - 1;
    std::vector<double> etas(trials), darks(trials), talks(trials);
    for (int t = 0; t < trials; ++t) {
        Xoshiro256pp rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const double delta = amp_uncertainty * (2.0 * rng.uniform() - 1.0);
        ProbeSet shifted;
        shifted.means = probes.means * ((1.0 + delta) * (1.0 + delta));
        const ReconstructionResult recon =
            reconstruct(stats, shifted, k_outcomes, pinned);
        const FiguresOfMerit fom = figures_of_merit(recon.povm, bins, fit_opts);
        etas[t] = fom.efficiency;
        darks[t] = fom.dark_prob;
        talks[t] = fom.crosstalk_prob;
    }
    const detail::FitBrackets brackets = detail::fit_brackets(
        fit_opts.family, bins, fit_opts.out_coupling, fit_opts.loop_efficiency);
    FiguresOfMerit out = base;
    out.efficiency_err = detail::sample_std(etas);
    out.dark_err = detail::sample_std(darks);
    out.efficiency_one_sided =
        detail::at_bracket_edge(base.efficiency, brackets.lo[0], brackets.hi[0]);
    const double pd_bin = 1.0 - std::pow(1.0 - base.dark_prob, 1.0 / bins);
    out.dark_one_sided =
        detail::at_bracket_edge(pd_bin, brackets.lo[1], brackets.hi[1]);
    if (fit_opts.family == FitFamily::equal_split) {
        out.crosstalk_err = detail::sample_std(talks);
        out.crosstalk_one_sided = detail::at_bracket_edge(
            base.crosstalk_prob, brackets.lo[2], brackets.hi[2]);
    }
    return out;
}

/// Same propagation, but fitting the unperturbed reconstruction here to
/// produce the base point estimates.
inline FiguresOfMerit uncertainty_bars(const OutcomeStats& stats,
                                       const ProbeSet& probes, int k_outcomes,
                                       const ReconstructionConfig& config,
                                       double amp_uncertainty, int trials,
                                       std::uint64_t seed,
                                       const FitOptions& fit_opts = {}) {
    ReconstructionConfig pinned = config;
    if (pinned.dimension <= 0)
        pinned.dimension = adequate_dimension(probes.max_mean());
    const ReconstructionResult recon =
        reconstruct(stats, probes, k_outcomes, pinned);
    const FiguresOfMerit base =
        figures_of_merit(recon.povm, k_outcomes - 1, fit_opts);
    return uncertainty_bars(stats, probes, k_outcomes, pinned, amp_uncertainty,
                            trials, seed, fit_opts, base);
}

}  // namespace povmkit
