#pragma once

// Independent brute-force reference implementations used to pin the library's
// numerics. Everything here is written scalar-first, without reusing the
// library's vectorized code paths.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric InfoNCE, computed pairwise with scalar loops.
inline double report_align_brute(const MatrixXd& s, const MatrixXd& t, double tau) {
    const int b = static_cast<int>(s.rows());
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        double denom_row = 0.0, denom_col = 0.0;
        for (int j = 0; j < b; ++j) {
            denom_row += std::exp(s.row(i).dot(t.row(j)) / tau);
            denom_col += std::exp(s.row(j).dot(t.row(i)) / tau);
        }
        const double pos = std::exp(s.row(i).dot(t.row(i)) / tau);
        loss -= 0.5 * (std::log(pos / denom_row) + std::log(pos / denom_col));
    }
    return loss / b;
}

// Teacher-centered cross-view distillation loss, scalar loops.
inline double duodistill_brute(const MatrixXd& teacher, const MatrixXd& student,
                               const VectorXd& center, double tau_t, double tau_s) {
    const int k = static_cast<int>(teacher.rows());
    const int total = static_cast<int>(student.rows());
    const int d = static_cast<int>(teacher.cols());
    double loss = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i) {
        std::vector<double> p(static_cast<size_t>(d));
        double zp = 0.0;
        for (int c = 0; c < d; ++c) {
            p[static_cast<size_t>(c)] = std::exp((teacher(i, c) - center[c]) / tau_t);
            zp += p[static_cast<size_t>(c)];
        }
        for (int c = 0; c < d; ++c) p[static_cast<size_t>(c)] /= zp;
        for (int j = 0; j < total; ++j) {
            if (j == i) continue;
            double zq = 0.0;
            for (int c = 0; c < d; ++c) zq += std::exp(student(j, c) / tau_s);
            for (int c = 0; c < d; ++c)
                loss -= p[static_cast<size_t>(c)] *
                        (student(j, c) / tau_s - std::log(zq));
            ++pairs;
        }
    }
    return loss / pairs;
}

// Pairwise Mann-Whitney AUROC with explicit tie halving.
inline double auroc_brute(const std::vector<int>& labels, const std::vector<double>& scores) {
    double wins = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// Rank-walk AP with tied groups credited at end-of-group precision.
inline double ap_brute(const std::vector<int>& labels, const std::vector<double>& scores) {
    std::vector<size_t> order(labels.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<size_t>(y);
    double ap = 0.0;
    size_t tp = 0, seen = 0, i = 0;
    while (i < order.size()) {
        size_t j = i, gp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            gp += static_cast<size_t>(labels[order[j]]);
            ++j;
        }
        seen += j - i;
        tp += gp;
        ap += static_cast<double>(gp) * static_cast<double>(tp) / static_cast<double>(seen);
        i = j;
    }
    return ap / static_cast<double>(n_pos);
}

// Central finite-difference gradient of a scalar functional of one matrix.
inline MatrixXd fd_grad(const std::function<double(const MatrixXd&)>& f, const MatrixXd& x,
                        double h = 1e-4) {
    MatrixXd g(x.rows(), x.cols());
    MatrixXd xp = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            xp(r, c) = x(r, c) + h;
            const double fp = f(xp);
            xp(r, c) = x(r, c) - h;
            const double fm = f(xp);
            xp(r, c) = x(r, c);
            g(r, c) = (fp - fm) / (2.0 * h);
        }
    return g;
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
    const double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
    return (a - b).norm() / denom;
}

}  // namespace oracle
