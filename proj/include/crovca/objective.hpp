#pragma once

// Cross-view code alignment objective.
//
//   L_align = 1/2 [ BCE(y1, p2) + BCE(y2, p1) ],  y_v = 1{sigmoid(z_v) >= 0.5} held constant
//   R(C)    = 1/2 logdet(I + d/N C),  C = 1/N sum_i v_i v_i^T,  v_i = z_i / |z_i|
//   L_hash  = L_align - lambda R(C)
//
// BCE sums over bits and averages over rows. Gradients are returned with
// respect to the logits of each view.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "crovca/errors.hpp"
#include "crovca/hashcoder.hpp"
#include "crovca/numkit.hpp"

namespace crovca {

// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before taking logs.
inline constexpr double kProbFloor = 1e-7;
inline constexpr double kNormFloor = 1e-12;

inline double clamp_prob(double p) noexcept { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

inline double bce(const DenseMatrix& y_target, const DenseMatrix& p) {
    if (y_target.rows() != p.rows() || y_target.cols() != p.cols()) {
        throw ShapeError("bce: target " + detail::shape_str(y_target) + " vs probabilities " + detail::shape_str(p));
    }
    if (p.rows() == 0) throw ShapeError("bce: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double y = y_target(i, j);
            if (y != 0.0 && y != 1.0) throw ValidationError("bce: target must be binary");
            const double q = clamp_prob(p(i, j));
            row -= y == 1.0 ? std::log(q) : std::log(1.0 - q);
        }
        total += row;
    }
    return total / static_cast<double>(p.rows());
}

struct AlignmentResult {
    double value = 0.0;
    DenseMatrix grad_z1;
    DenseMatrix grad_z2;
};

// Teachers are supplied explicitly; they are constants, so each view's
// gradient comes only from its student role: (sigmoid(z_v) - y_other) / 2B.
inline AlignmentResult alignment_loss_with_teachers(const DenseMatrix& z1, const DenseMatrix& z2,
                                                    const DenseMatrix& teacher1, const DenseMatrix& teacher2) {
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) {
        throw ShapeError("alignment_loss: views are " + detail::shape_str(z1) + " and " + detail::shape_str(z2));
    }
    if (teacher1.rows() != z1.rows() || teacher1.cols() != z1.cols() || teacher2.rows() != z2.rows() ||
        teacher2.cols() != z2.cols()) {
        throw ShapeError("alignment_loss: teacher shape mismatch");
    }
    if (z1.rows() == 0) throw ShapeError("alignment_loss: empty batch");
    const DenseMatrix p1 = probabilities(z1);
    const DenseMatrix p2 = probabilities(z2);
    AlignmentResult out;
    out.value = 0.5 * (bce(teacher1, p2) + bce(teacher2, p1));
    const double scale = 1.0 / (2.0 * static_cast<double>(z1.rows()));
    out.grad_z1 = DenseMatrix(z1.rows(), z1.cols());
    out.grad_z2 = DenseMatrix(z2.rows(), z2.cols());
    for (std::size_t i = 0; i < z1.size(); ++i) {
        out.grad_z1.values()[i] = (p1.values()[i] - teacher2.values()[i]) * scale;
        out.grad_z2.values()[i] = (p2.values()[i] - teacher1.values()[i]) * scale;
    }
    return out;
}

inline AlignmentResult alignment_loss(const DenseMatrix& z1, const DenseMatrix& z2) {
    return alignment_loss_with_teachers(z1, z2, binarize(probabilities(z1)), binarize(probabilities(z2)));
}

struct CodingRateResult {
    double rate = 0.0;
    DenseMatrix grad;  // dR/dz, same shape as the pool
};

// R over the rows of `pool` with N = pool.rows() and scale constant d.
inline CodingRateResult coding_rate(const DenseMatrix& pool, double d) {
    const std::size_t n = pool.rows();
    const std::size_t b = pool.cols();
    if (n < 2) throw BatchSizeError("coding_rate: pool needs at least 2 rows");
    if (!(d > 0.0)) throw ConfigError("coding_rate: scale constant must be positive");
    if (!pool.all_finite()) throw NumericalError("coding_rate: non-finite logits");

    DenseMatrix v(n, b);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (double x : pool.row(i)) sq += x * x;
        norms[i] = std::max(std::sqrt(sq), kNormFloor);
        for (std::size_t j = 0; j < b; ++j) v(i, j) = pool(i, j) / norms[i];
    }
    const double nn = static_cast<double>(n);
    const double alpha = d / nn;
    DenseMatrix m = matmul_tn(v, v);  // N C
    for (double& x : m.values()) x *= alpha / nn;
    for (std::size_t j = 0; j < b; ++j) m(j, j) += 1.0;

    CodingRateResult out;
    out.rate = 0.5 * logdet_posdef(m);

    // dR/dv_i = (d / N^2) M^{-1} v_i, then project out the radial component.
    const DenseMatrix m_inv = spd_inverse(m);
    DenseMatrix gv = matmul(v, m_inv);
    const double gscale = d / (nn * nn);
    out.grad = DenseMatrix(n, b);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            gv(i, j) *= gscale;
            dot += gv(i, j) * v(i, j);
        }
        for (std::size_t j = 0; j < b; ++j) out.grad(i, j) = (gv(i, j) - v(i, j) * dot) / norms[i];
    }
    detail::require_finite(out.grad, "coding_rate");
    return out;
}

struct DiversityConfig {
    double lambda = 0.1;
    // Scale constant d in R(C). 0 selects d = b * N, so that d/N = b and R is
    // the classic rate 1/2 logdet(I + b/N sum_i v_i v_i^T) with unit distortion.
    double rate_scale_d = 0.0;
    // Pool both views' logits (N = 2B); otherwise only view 1 enters R.
    bool pool_both_views = true;
    // Permits lambda = 0 for ablation runs.
    bool ablation = false;

    void validate() const {
        if (!std::isfinite(lambda) || lambda < 0.0 || (lambda == 0.0 && !ablation)) {
            throw ConfigError("lambda must be > 0 (lambda = 0 requires the ablation flag)");
        }
        if (!(rate_scale_d >= 0.0) || !std::isfinite(rate_scale_d)) throw ConfigError("rate scale d must be >= 0");
    }
};

struct LossBreakdown {
    double align = 0.0;
    double div = 0.0;  // -R(C)
    double total = 0.0;
    DenseMatrix grad_z1;
    DenseMatrix grad_z2;
};

inline LossBreakdown crovca_loss_with_teachers(const DenseMatrix& z1, const DenseMatrix& z2,
                                               const DenseMatrix& teacher1, const DenseMatrix& teacher2,
                                               const DiversityConfig& cfg) {
    cfg.validate();
    AlignmentResult align = alignment_loss_with_teachers(z1, z2, teacher1, teacher2);
    const std::size_t rows = z1.rows();
    const std::size_t b = z1.cols();
    DenseMatrix pool(cfg.pool_both_views ? 2 * rows : rows, b);
    const double d = cfg.rate_scale_d > 0.0 ? cfg.rate_scale_d : static_cast<double>(b * pool.rows());
    std::copy(z1.values().begin(), z1.values().end(), pool.values().begin());
    if (cfg.pool_both_views) std::copy(z2.values().begin(), z2.values().end(), pool.values().begin() + z1.size());
    const CodingRateResult rate = coding_rate(pool, d);

    LossBreakdown out;
    out.align = align.value;
    out.div = -rate.rate;
    out.total = out.align + cfg.lambda * out.div;
    out.grad_z1 = std::move(align.grad_z1);
    out.grad_z2 = std::move(align.grad_z2);
    for (std::size_t i = 0; i < z1.size(); ++i) out.grad_z1.values()[i] -= cfg.lambda * rate.grad.values()[i];
    if (cfg.pool_both_views) {
        for (std::size_t i = 0; i < z2.size(); ++i) {
            out.grad_z2.values()[i] -= cfg.lambda * rate.grad.values()[z1.size() + i];
        }
    }
    return out;
}

inline LossBreakdown crovca_loss(const DenseMatrix& z1, const DenseMatrix& z2, const DiversityConfig& cfg) {
    return crovca_loss_with_teachers(z1, z2, binarize(probabilities(z1)), binarize(probabilities(z2)), cfg);
}

} // namespace crovca
