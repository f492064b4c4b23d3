#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "tolerantecg/error.hpp"
#include "tolerantecg/nn/param.hpp"

namespace tecg {

using nn::Mat;
using nn::Vec;

namespace detail {

inline Eigen::RowVectorXd row_softmax(const Eigen::RowVectorXd& x) {
    const double m = x.maxCoeff();
    Eigen::RowVectorXd e = (x.array() - m).exp().matrix();
    return e / e.sum();
}

inline Eigen::RowVectorXd row_log_softmax(const Eigen::RowVectorXd& x) {
    const double m = x.maxCoeff();
    const double lse = std::log((x.array() - m).exp().sum()) + m;
    return (x.array() - lse).matrix();
}

inline void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) fail(errc::non_finite, std::string(what) + ": non-finite input");
}

}  // namespace detail

struct ContrastiveConfig {
    double tau_init = 0.07;
    double tau_min = 0.01;
    double tau_max = 1.0;
};

// ---------------------------------------------------------------------------
// Symmetric signal-report contrastive loss (batch-mean InfoNCE over both
// directions). Rows of S and T are projected unit vectors.
// ---------------------------------------------------------------------------

struct ReportAlignResult {
    double loss = 0.0;
    Mat grad_s;       // dL/dS
    Mat grad_t;       // dL/dT
    double grad_tau = 0.0;
};

inline ReportAlignResult report_align_loss(const Mat& s, const Mat& t, double tau) {
    const int batch = static_cast<int>(s.rows());
    if (batch < 2) fail(errc::batch_too_small, "report_align_loss: batch must be >= 2");
    if (t.rows() != batch || t.cols() != s.cols())
        fail(errc::dimension_mismatch, "report_align_loss: S/T shape mismatch");
    if (tau <= 0.0) fail(errc::invalid_config, "report_align_loss: tau must be positive");
    detail::require_finite(s, "report_align_loss S");
    detail::require_finite(t, "report_align_loss T");

    const Mat logits = (s * t.transpose()) / tau;  // L_ij = S_i . T_j / tau
    Mat p_rows(batch, batch), p_cols(batch, batch);
    double loss = 0.0;
    for (int i = 0; i < batch; ++i) {
        const Eigen::RowVectorXd ls_row = detail::row_log_softmax(logits.row(i));
        const Eigen::RowVectorXd ls_col = detail::row_log_softmax(logits.col(i).transpose());
        loss -= 0.5 * (ls_row[i] + ls_col[i]);
        p_rows.row(i) = ls_row.array().exp().matrix();
        p_cols.row(i) = ls_col.array().exp().matrix();  // softmax over column i of logits
    }
    loss /= batch;

    // dL/d(logits) for the averaged two-direction form.
    Mat g_logits = p_rows + p_cols.transpose();
    for (int i = 0; i < batch; ++i) g_logits(i, i) -= 2.0;
    g_logits *= 1.0 / (2.0 * batch);

    ReportAlignResult out;
    out.loss = loss;
    out.grad_s = (g_logits * t) / tau;
    out.grad_t = (g_logits.transpose() * s) / tau;
    out.grad_tau = -(g_logits.cwiseProduct(logits)).sum() / tau;
    return out;
}

// ---------------------------------------------------------------------------
// Cross-view distillation loss with teacher centering. Mean over the
// K*(K+N-1) (teacher view i, student view j != i) pairs of the cross-entropy
// between the centered-sharpened teacher distribution and the student
// distribution. No gradient flows to the teacher or the center.
// ---------------------------------------------------------------------------

struct DuoDistillResult {
    double loss = 0.0;
    Mat grad_student;  // (K+N) x D
};

inline DuoDistillResult duodistill_loss(const Mat& teacher_logits, const Mat& student_logits,
                                        const Vec& center, double tau_t, double tau_s) {
    const int k = static_cast<int>(teacher_logits.rows());
    const int total = static_cast<int>(student_logits.rows());
    const int dim = static_cast<int>(teacher_logits.cols());
    if (k < 1 || total <= k || student_logits.cols() != dim || center.size() != dim)
        fail(errc::dimension_mismatch, "duodistill_loss: shape mismatch");
    if (tau_t <= 0.0 || tau_s <= 0.0)
        fail(errc::invalid_config, "duodistill_loss: temperatures must be positive");
    detail::require_finite(teacher_logits, "duodistill teacher");
    detail::require_finite(student_logits, "duodistill student");

    Mat teacher_probs(k, dim);
    for (int i = 0; i < k; ++i)
        teacher_probs.row(i) =
            detail::row_softmax((teacher_logits.row(i) - center.transpose()) / tau_t);

    Mat student_log_probs(total, dim), student_probs(total, dim);
    for (int j = 0; j < total; ++j) {
        student_log_probs.row(j) = detail::row_log_softmax(student_logits.row(j) / tau_s);
        student_probs.row(j) = student_log_probs.row(j).array().exp().matrix();
    }

    const int n_pairs = k * (total - 1);
    double loss = 0.0;
    Mat grad = Mat::Zero(total, dim);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < total; ++j) {
            if (j == i) continue;
            loss -= teacher_probs.row(i).dot(student_log_probs.row(j));
            grad.row(j) += (student_probs.row(j) - teacher_probs.row(i)) / tau_s;
        }

    DuoDistillResult out;
    out.loss = loss / n_pairs;
    out.grad_student = grad / n_pairs;
    return out;
}

// EMA of the teacher-logit batch mean.
inline Vec update_center(const Vec& center, const Mat& teacher_logits_batch, double momentum) {
    if (teacher_logits_batch.rows() == 0) fail(errc::empty_batch, "update_center: empty batch");
    if (momentum < 0.0 || momentum >= 1.0)
        fail(errc::invalid_config, "update_center: momentum must be in [0,1)");
    const Vec mean = teacher_logits_batch.colwise().mean().transpose();
    return momentum * center + (1.0 - momentum) * mean;
}

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;

    void validate() const {
        if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0))
            fail(errc::invalid_config, "loss weights must be >= 0 and not both zero");
    }
};

inline double total_loss(double l_report, double l_distill, const LossWeights& w) {
    if (!std::isfinite(l_report) || !std::isfinite(l_distill))
        fail(errc::non_finite, "total_loss: non-finite component");
    return w.alpha * l_report + w.beta * l_distill;
}

struct DistillConfig {
    double tau_teacher = 0.04;
    double tau_student = 0.1;
    double center_momentum = 0.9;
    int hidden = 512;
    int bottleneck = 64;
    int logit_dim = 1024;

    void validate() const {
        if (!(tau_teacher > 0.0 && tau_teacher < tau_student))
            fail(errc::invalid_config, "distill: need 0 < tau_teacher < tau_student");
        if (center_momentum < 0.0 || center_momentum >= 1.0)
            fail(errc::invalid_config, "distill: center momentum out of [0,1)");
        if (logit_dim < 2) fail(errc::invalid_config, "distill: logit dim must be >= 2");
    }
};

}  // namespace tecg
