#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "tolerantecg/error.hpp"
#include "tolerantecg/signal.hpp"

namespace tecg {
namespace detail {

inline double bessel_i0(double x) {
    // Power series; converges quickly for the |x| <= beta range used here.
    double sum = 1.0, term = 1.0;
    const double half_x2 = 0.25 * x * x;
    for (int k = 1; k < 64; ++k) {
        term *= half_x2 / (static_cast<double>(k) * k);
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

inline double kaiser(double frac, double beta) {
    // frac in [-1, 1] across the kernel support.
    const double a = 1.0 - frac * frac;
    if (a <= 0.0) return 0.0;
    return bessel_i0(beta * std::sqrt(a)) / bessel_i0(beta);
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}

}  // namespace detail

// Band-limited resampling with a Kaiser-windowed sinc kernel (beta = 8,
// 32-tap half width at the source rate). Output length is
// round(n * target_hz / source_hz); equal rates return a copy.
inline Eigen::VectorXf resample_segment(const Eigen::Ref<const Eigen::VectorXf>& x, int source_hz,
                                        int target_hz) {
    if (source_hz <= 0 || target_hz <= 0) fail(errc::invalid_rate, "resample: non-positive rate");
    if (x.size() == 0) fail(errc::empty_input, "resample: empty input");
    if (source_hz == target_hz) return x;

    const double ratio = static_cast<double>(target_hz) / source_hz;
    const int n = static_cast<int>(x.size());
    const int out_n = static_cast<int>(std::llround(n * ratio));

    const double beta = 8.0;
    // When decimating, the kernel cutoff and support scale with the ratio.
    const double cutoff = 0.5 * std::min(1.0, ratio);
    const double stretch = std::max(1.0, 1.0 / ratio);
    const int half = static_cast<int>(std::ceil(32.0 * stretch));

    Eigen::VectorXf y(out_n);
    for (int i = 0; i < out_n; ++i) {
        const double t = static_cast<double>(i) / ratio;  // position in source samples
        const int k0 = static_cast<int>(std::ceil(t)) - half;
        const int k1 = static_cast<int>(std::floor(t)) + half;
        double acc = 0.0, wsum = 0.0;
        for (int k = k0; k <= k1; ++k) {
            const double d = t - k;
            const double w =
                2.0 * cutoff * detail::sinc(2.0 * cutoff * d) * detail::kaiser(d / half, beta);
            wsum += w;
            if (k >= 0 && k < n) acc += w * static_cast<double>(x[k]);
        }
        // DC-normalized so constant inputs stay constant.
        y[i] = static_cast<float>(wsum != 0.0 ? acc / wsum : 0.0);
    }
    return y;
}

inline EcgRecord resample(const EcgRecord& record, int target_hz) {
    if (target_hz <= 0) fail(errc::invalid_rate, "resample: non-positive target rate");
    if (record.sample_rate_hz == target_hz) return record;
    EcgRecord out = record;
    Eigen::VectorXf first =
        resample_segment(record.samples.row(0).transpose(), record.sample_rate_hz, target_hz);
    out.samples.resize(record.num_leads(), first.size());
    out.samples.row(0) = first.transpose();
    for (int l = 1; l < record.num_leads(); ++l)
        out.samples.row(l) =
            resample_segment(record.samples.row(l).transpose(), record.sample_rate_hz, target_hz)
                .transpose();
    out.sample_rate_hz = target_hz;
    return out;
}

}  // namespace tecg
