#pragma once

#include <cmath>
#include <string>

#include "tolerantecg/nn/param.hpp"

namespace tecg::nn {

// Feature maps are (time x channels) matrices; embeddings are row vectors.

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

struct Linear {
    Param w;  // in x out
    Param b;  // 1 x out
    bool has_bias = true;

    void init(int in, int out, Rng& rng, bool bias = true) {
        has_bias = bias;
        w.init_normal(in, out, 0.02, rng);
        if (has_bias) b.init_constant(1, out, 0.0);
    }

    struct Cache {
        Mat x;
    };

    Mat forward(const Mat& x, Cache& c) const {
        if (x.cols() != w.value.rows())
            fail(errc::dimension_mismatch, "linear: input width " + std::to_string(x.cols()) +
                                               " != " + std::to_string(w.value.rows()));
        c.x = x;
        Mat y = x * w.value;
        if (has_bias) y.rowwise() += b.value.row(0);
        return y;
    }

    Mat backward(const Mat& gy, const Cache& c) {
        w.grad.noalias() += c.x.transpose() * gy;
        if (has_bias) b.grad.row(0) += gy.colwise().sum();
        return gy * w.value.transpose();
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".w", w);
        if (has_bias) fn(prefix + ".b", b);
    }
};

// ---------------------------------------------------------------------------
// Strided convolution with kernel == stride tiling (stem and downsampling).
// No padding: L_out = (L - k) / s + 1.
// ---------------------------------------------------------------------------

struct ConvDown {
    Param w;  // (k*cin) x cout
    Param b;  // 1 x cout
    int kernel = 0, stride = 0, cin = 0, cout = 0;

    void init(int k, int s, int in_ch, int out_ch, Rng& rng) {
        kernel = k;
        stride = s;
        cin = in_ch;
        cout = out_ch;
        w.init_normal(k * in_ch, out_ch, 0.02, rng);
        b.init_constant(1, out_ch, 0.0);
    }

    struct Cache {
        Mat x_col;  // L_out x (k*cin)
        int in_len = 0;
    };

    Mat forward(const Mat& x, Cache& c) const {
        if (static_cast<int>(x.cols()) != cin)
            fail(errc::dimension_mismatch, "conv: channel mismatch");
        const int len = static_cast<int>(x.rows());
        if (len < kernel) fail(errc::dimension_mismatch, "conv: input shorter than kernel");
        const int out_len = (len - kernel) / stride + 1;
        c.in_len = len;
        c.x_col.resize(out_len, kernel * cin);
        for (int t = 0; t < out_len; ++t)
            for (int j = 0; j < kernel; ++j)
                c.x_col.block(t, j * cin, 1, cin) = x.row(t * stride + j);
        Mat y = c.x_col * w.value;
        y.rowwise() += b.value.row(0);
        return y;
    }

    Mat backward(const Mat& gy, const Cache& c) {
        w.grad.noalias() += c.x_col.transpose() * gy;
        b.grad.row(0) += gy.colwise().sum();
        Mat g_col = gy * w.value.transpose();
        Mat gx = Mat::Zero(c.in_len, cin);
        for (int t = 0; t < static_cast<int>(gy.rows()); ++t)
            for (int j = 0; j < kernel; ++j)
                gx.row(t * stride + j) += g_col.block(t, j * cin, 1, cin);
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", b);
    }
};

// ---------------------------------------------------------------------------
// Depthwise convolution, circular padding, length-preserving.
// ---------------------------------------------------------------------------

struct DepthwiseConv {
    Param w;  // kernel x channels
    Param b;  // 1 x channels
    int kernel = 0, channels = 0;

    void init(int k, int ch, Rng& rng) {
        if (k % 2 == 0) fail(errc::invalid_config, "depthwise kernel must be odd");
        kernel = k;
        channels = ch;
        w.init_normal(k, ch, 0.02, rng);
        b.init_constant(1, ch, 0.0);
    }

    struct Cache {
        Mat x;
    };

    Mat forward(const Mat& x, Cache& c) const {
        if (static_cast<int>(x.cols()) != channels)
            fail(errc::dimension_mismatch, "depthwise: channel mismatch");
        const int len = static_cast<int>(x.rows());
        const int half = kernel / 2;
        c.x = x;
        Mat y(len, channels);
        for (int t = 0; t < len; ++t)
            for (int ch = 0; ch < channels; ++ch) {
                double acc = b.value(0, ch);
                for (int j = 0; j < kernel; ++j) {
                    int src = t + j - half;
                    if (src < 0) src += len;
                    if (src >= len) src -= len;
                    acc += w.value(j, ch) * x(src, ch);
                }
                y(t, ch) = acc;
            }
        return y;
    }

    Mat backward(const Mat& gy, const Cache& c) {
        const int len = static_cast<int>(c.x.rows());
        const int half = kernel / 2;
        Mat gx = Mat::Zero(len, channels);
        for (int t = 0; t < len; ++t)
            for (int ch = 0; ch < channels; ++ch) {
                const double g = gy(t, ch);
                for (int j = 0; j < kernel; ++j) {
                    int src = t + j - half;
                    if (src < 0) src += len;
                    if (src >= len) src -= len;
                    w.grad(j, ch) += g * c.x(src, ch);
                    gx(src, ch) += g * w.value(j, ch);
                }
                b.grad(0, ch) += g;
            }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", b);
    }
};

// ---------------------------------------------------------------------------
// LayerNorm over channels, per time step.
// ---------------------------------------------------------------------------

struct LayerNorm {
    Param gamma;  // 1 x channels
    Param beta;   // 1 x channels
    double eps = 1e-6;

    void init(int channels) {
        gamma.init_constant(1, channels, 1.0);
        beta.init_constant(1, channels, 0.0);
    }

    struct Cache {
        Mat x_hat;
        Vec inv_std;
    };

    Mat forward(const Mat& x, Cache& c) const {
        const int rows = static_cast<int>(x.rows());
        const int ch = static_cast<int>(x.cols());
        c.x_hat.resize(rows, ch);
        c.inv_std.resize(rows);
        Mat y(rows, ch);
        for (int t = 0; t < rows; ++t) {
            const double mean = x.row(t).mean();
            const double var = (x.row(t).array() - mean).square().mean();
            const double inv = 1.0 / std::sqrt(var + eps);
            c.inv_std[t] = inv;
            c.x_hat.row(t) = (x.row(t).array() - mean) * inv;
            y.row(t) = c.x_hat.row(t).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
        }
        return y;
    }

    Mat backward(const Mat& gy, const Cache& c) {
        const int rows = static_cast<int>(gy.rows());
        const int ch = static_cast<int>(gy.cols());
        Mat gx(rows, ch);
        for (int t = 0; t < rows; ++t) {
            const Eigen::RowVectorXd gh = gy.row(t).cwiseProduct(gamma.value.row(0));
            const double gh_mean = gh.mean();
            const double ghx_mean = gh.cwiseProduct(c.x_hat.row(t)).mean();
            gx.row(t) =
                (c.inv_std[t] * (gh.array() - gh_mean - c.x_hat.row(t).array() * ghx_mean)).matrix();
            gamma.grad.row(0) += gy.row(t).cwiseProduct(c.x_hat.row(t));
            beta.grad.row(0) += gy.row(t);
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".gamma", gamma);
        fn(prefix + ".beta", beta);
    }
};

// ---------------------------------------------------------------------------
// GELU (exact erf form)
// ---------------------------------------------------------------------------

struct Gelu {
    struct Cache {
        Mat x;
    };

    static double cdf(double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); }

    Mat forward(const Mat& x, Cache& c) const {
        c.x = x;
        return x.unaryExpr([](double v) { return v * cdf(v); });
    }

    Mat backward(const Mat& gy, const Cache& c) const {
        const Mat local = c.x.unaryExpr([](double v) {
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
            return cdf(v) + v * pdf;
        });
        return gy.cwiseProduct(local);
    }
};

// ---------------------------------------------------------------------------
// Global response normalization (per-channel, over the length dimension).
// y = gamma * (x * nx) + beta + x with nx_c = ||x_c|| / mean_c ||x_c||.
// ---------------------------------------------------------------------------

struct Grn {
    Param gamma;  // 1 x channels
    Param beta;   // 1 x channels
    double eps = 1e-6;

    void init(int channels) {
        gamma.init_constant(1, channels, 0.0);
        beta.init_constant(1, channels, 0.0);
    }

    struct Cache {
        Mat x;
        Vec g;  // per-channel L2 norm
        Vec n;  // normalized response
        double m = 0.0;
    };

    Mat forward(const Mat& x, Cache& c) const {
        const int ch = static_cast<int>(x.cols());
        c.x = x;
        c.g.resize(ch);
        for (int j = 0; j < ch; ++j)
            c.g[j] = std::sqrt(x.col(j).squaredNorm() + 1e-12);
        c.m = c.g.mean();
        c.n = c.g / (c.m + eps);
        Mat y(x.rows(), ch);
        for (int j = 0; j < ch; ++j) {
            y.col(j) = (1.0 + gamma.value(0, j) * c.n[j]) * x.col(j);
            y.col(j).array() += beta.value(0, j);
        }
        return y;
    }

    Mat backward(const Mat& gy, const Cache& c) {
        const int ch = static_cast<int>(gy.cols());
        const int rows = static_cast<int>(gy.rows());
        Vec a(ch);  // sum_t gy[t,c] * x[t,c]
        for (int j = 0; j < ch; ++j) a[j] = gy.col(j).dot(c.x.col(j));

        double cross = 0.0;  // sum_c gamma_c * a_c * g_c
        for (int j = 0; j < ch; ++j) cross += gamma.value(0, j) * a[j] * c.g[j];

        const double denom = c.m + eps;
        Mat gx(rows, ch);
        for (int j = 0; j < ch; ++j) {
            const double k =
                gamma.value(0, j) * a[j] / denom - cross / (ch * denom * denom);
            gx.col(j) = (gamma.value(0, j) * c.n[j] + 1.0) * gy.col(j) + (k / c.g[j]) * c.x.col(j);
            gamma.grad(0, j) += a[j] * c.n[j];
            beta.grad(0, j) += gy.col(j).sum();
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".gamma", gamma);
        fn(prefix + ".beta", beta);
    }
};

// ---------------------------------------------------------------------------
// L2 normalization of a row vector with a deterministic degenerate fallback.
// ---------------------------------------------------------------------------

struct L2Normalize {
    struct Cache {
        Eigen::RowVectorXd y;
        double norm = 0.0;
        bool degenerate = false;
    };

    Eigen::RowVectorXd forward(const Eigen::RowVectorXd& x, Cache& c) const {
        c.norm = x.norm();
        if (c.norm < 1e-12) {
            c.degenerate = true;
            c.y = Eigen::RowVectorXd::Zero(x.cols());
            c.y[0] = 1.0;  // first basis vector on the zero-input path
            return c.y;
        }
        c.degenerate = false;
        c.y = x / c.norm;
        return c.y;
    }

    Eigen::RowVectorXd backward(const Eigen::RowVectorXd& gy, const Cache& c) const {
        if (c.degenerate) return Eigen::RowVectorXd::Zero(gy.cols());
        return (gy - c.y * gy.dot(c.y)) / c.norm;
    }
};

}  // namespace tecg::nn
