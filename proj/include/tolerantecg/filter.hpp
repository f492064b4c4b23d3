#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tolerantecg/error.hpp"
#include "tolerantecg/signal.hpp"

namespace tecg {
namespace detail {

// One second-order section, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

// Bilinear transform of an analog section
// (B2 s^2 + B1 s + B0) / (s^2 + A1 s + A0) at sampling rate fs.
inline Biquad bilinear(double B0, double B1, double B2, double A0, double A1, double fs) {
    const double K = 2.0 * fs;
    const double K2 = K * K;
    const double a0 = A0 + A1 * K + K2;
    Biquad q;
    q.b0 = (B0 + B1 * K + B2 * K2) / a0;
    q.b1 = (2.0 * B0 - 2.0 * B2 * K2) / a0;
    q.b2 = (B0 - B1 * K + B2 * K2) / a0;
    q.a1 = (2.0 * A0 - 2.0 * K2) / a0;
    q.a2 = (A0 - A1 * K + K2) / a0;
    return q;
}

// 4th-order Butterworth as two cascaded biquads. Prototype pole pairs have
// damping 2*zeta = 2*cos(pi/8) and 2*cos(3*pi/8).
inline std::array<Biquad, 2> butterworth4(double cutoff_hz, double fs, bool highpass) {
    const double wc = 2.0 * fs * std::tan(M_PI * cutoff_hz / fs);  // prewarped
    const std::array<double, 2> two_zeta = {2.0 * std::cos(M_PI / 8.0),
                                            2.0 * std::cos(3.0 * M_PI / 8.0)};
    std::array<Biquad, 2> sos;
    for (int i = 0; i < 2; ++i) {
        const double A0 = wc * wc;
        const double A1 = two_zeta[static_cast<size_t>(i)] * wc;
        if (highpass)
            sos[static_cast<size_t>(i)] = bilinear(0.0, 0.0, 1.0, A0, A1, fs);
        else
            sos[static_cast<size_t>(i)] = bilinear(A0, 0.0, 0.0, A0, A1, fs);
    }
    return sos;
}

// Steady-state DF2T state for a unit step, scaled by the first sample; this
// is what removes the start-up transient in filtfilt.
inline std::array<double, 2> steady_state_zi(const Biquad& q) {
    const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z1 = g - q.b0;
    const double z2 = z1 - q.b1 + q.a1 * g;
    return {z1, z2};
}

inline void sos_filter_inplace(std::vector<double>& x, const Biquad& q) {
    const auto zi = steady_state_zi(q);
    double z1 = zi[0] * x.front();
    double z2 = zi[1] * x.front();
    for (double& v : x) {
        const double y = q.b0 * v + z1;
        z1 = q.b1 * v - q.a1 * y + z2;
        z2 = q.b2 * v - q.a2 * y;
        v = y;
    }
}

// Zero-phase filtering: odd-reflection padding, forward pass, reversed pass.
template <size_t NSec>
inline std::vector<double> filtfilt(const std::vector<double>& x,
                                    const std::array<Biquad, NSec>& sos) {
    const int n = static_cast<int>(x.size());
    const int pad = std::min(n - 1, 96 * static_cast<int>(NSec));
    std::vector<double> ext;
    ext.reserve(static_cast<size_t>(n + 2 * pad));
    for (int i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[static_cast<size_t>(i)]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int i = 1; i <= pad; ++i)
        ext.push_back(2.0 * x.back() - x[static_cast<size_t>(n - 1 - i)]);

    for (const auto& q : sos) sos_filter_inplace(ext, q);
    std::reverse(ext.begin(), ext.end());
    for (const auto& q : sos) sos_filter_inplace(ext, q);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

}  // namespace detail

// Zero-phase band-pass of one lead: 4th-order Butterworth high-pass then
// low-pass, each applied forward-backward.
inline Eigen::VectorXf band_filter_segment(const Eigen::Ref<const Eigen::VectorXf>& x,
                                           double highpass_hz, double lowpass_hz, int sample_rate_hz) {
    if (!(highpass_hz > 0.0 && highpass_hz < lowpass_hz && lowpass_hz < sample_rate_hz / 2.0))
        fail(errc::invalid_band, "band_filter: need 0 < hp < lp < fs/2");
    if (x.size() < 2) fail(errc::empty_input, "band_filter: segment too short");

    std::vector<double> buf(static_cast<size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) buf[static_cast<size_t>(i)] = x[i];

    const auto hp = detail::butterworth4(highpass_hz, sample_rate_hz, /*highpass=*/true);
    const auto lp = detail::butterworth4(lowpass_hz, sample_rate_hz, /*highpass=*/false);
    buf = detail::filtfilt(buf, hp);
    buf = detail::filtfilt(buf, lp);

    Eigen::VectorXf y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = static_cast<float>(buf[static_cast<size_t>(i)]);
    return y;
}

inline EcgRecord band_filter(const EcgRecord& record, double highpass_hz, double lowpass_hz) {
    EcgRecord out = record;
    for (int l = 0; l < record.num_leads(); ++l)
        out.samples.row(l) = band_filter_segment(record.samples.row(l).transpose(), highpass_hz,
                                                 lowpass_hz, record.sample_rate_hz)
                                 .transpose();
    return out;
}

// Clinical ECG band used for the lightly-corrupted noise view.
inline constexpr double kEcgBandHighpassHz = 0.5;
inline constexpr double kEcgBandLowpassHz = 47.0;

}  // namespace tecg
