#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "povmkit/errors.hpp"

namespace povmkit {

template <typename Scalar>
using WeightMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Diagonal POVM of a phase-insensitive detector: row n holds the weights
/// theta_n(i) of outcome n over photon numbers i = 0..M-1.
struct PovmSet {
    WeightMatrix<double> weights;

    int outcome_count() const { return static_cast<int>(weights.rows()); }
    int dimension() const { return static_cast<int>(weights.cols()); }
};

/// Check nonnegativity, boundedness, finiteness, and per-photon-number
/// completeness; returns one message per violated invariant (empty = valid).
inline std::vector<std::string> validate(const PovmSet& set, double tol) {
    std::vector<std::string> report;
    const auto& w = set.weights;
    if (w.rows() < 2) report.push_back("outcome count below 2");
    if (!w.allFinite()) report.push_back("non-finite weight entries");
    if (w.size() > 0 && w.allFinite()) {
        const double lo = w.minCoeff();
        const double hi = w.maxCoeff();
        if (lo < -tol) {
            report.push_back("negative weight " + std::to_string(lo));
        }
        if (hi > 1.0 + tol) {
            report.push_back("weight above one: " + std::to_string(hi));
        }
        for (int i = 0; i < w.cols(); ++i) {
            const double colsum = w.col(i).sum();
            if (std::abs(colsum - 1.0) > tol) {
                report.push_back("completeness violated at photon number " +
                                 std::to_string(i) + ": column sum " +
                                 std::to_string(colsum));
                break;
            }
        }
    }
    return report;
}

/// Pad a saturated POVM set up to a larger dimension: beyond the original
/// range the largest outcome takes weight one and all others zero.
inline PovmSet extend_to(const PovmSet& set, int m_target, double eps = 0.01) {
    const int k = set.outcome_count();
    const int m = set.dimension();
    if (m_target < m) {
        throw DimensionError("extend_to target " + std::to_string(m_target) +
                             " below current dimension " + std::to_string(m));
    }
    const double edge = set.weights(k - 1, m - 1);
    if (edge < 1.0 - eps) {
        throw SaturationError(
            "largest outcome not saturated at truncation edge: theta = " +
            std::to_string(edge));
    }
    PovmSet out;
    out.weights = WeightMatrix<double>::Zero(k, m_target);
    out.weights.leftCols(m) = set.weights;
    out.weights.row(k - 1).tail(m_target - m).setOnes();
    return out;
}

/// Drop weights at photon numbers >= m_target.
inline PovmSet truncate_to(const PovmSet& set, int m_target) {
    if (m_target < 2) {
        throw DimensionError("truncation dimension must be at least 2");
    }
    if (m_target > set.dimension()) {
        throw DimensionError("truncate_to target exceeds current dimension");
    }
    PovmSet out;
    out.weights = set.weights.leftCols(m_target);
    return out;
}

}  // namespace povmkit
