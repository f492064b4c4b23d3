#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tolerantecg/error.hpp"
#include "tolerantecg/filter.hpp"
#include "tolerantecg/rng.hpp"
#include "tolerantecg/signal.hpp"

namespace tecg {

struct CorruptionConfig {
    int n_major = 8;
    int k_minor = 2;
    int major_keep_min = 1;
    int major_keep_max = 6;
    int minor_keep_min = 6;
    int minor_keep_max = 12;
    double per_type_noise_p = 0.7;
    double per_lead_noise_p = 0.5;
    double snr_db_min = -10.0;
    double snr_db_max = 0.0;
    // Lightly-corrupted noise views beyond the original/filtered pair.
    double minor_snr_db_min = 10.0;
    double minor_snr_db_max = 20.0;
    double downstream_mask_p = 0.5;
    double downstream_noise_p = 0.5;

    void validate() const {
        if (n_major < 1) fail(errc::invalid_config, "corruption: n_major must be >= 1");
        if (k_minor < 2) fail(errc::invalid_config, "corruption: k_minor must be >= 2");
        for (double p : {per_type_noise_p, per_lead_noise_p, downstream_mask_p, downstream_noise_p})
            if (p < 0.0 || p > 1.0) fail(errc::invalid_config, "corruption: probability out of [0,1]");
        if (major_keep_min < 1 || major_keep_min > major_keep_max ||
            minor_keep_min > minor_keep_max)
            fail(errc::invalid_config, "corruption: bad keep ranges");
    }
};

enum class MaskLevel { major, minor };
enum class ViewMode { mask, noise };
enum class Variant { original, lead_missing, noisy, lead_missing_noisy };

inline std::string variant_name(Variant v) {
    switch (v) {
    case Variant::original: return "original";
    case Variant::lead_missing: return "lead_missing";
    case Variant::noisy: return "noisy";
    case Variant::lead_missing_noisy: return "lead_missing_noisy";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    for (Variant v : {Variant::original, Variant::lead_missing, Variant::noisy,
                      Variant::lead_missing_noisy})
        if (variant_name(v) == s) return v;
    fail(errc::invalid_config, "unknown variant: " + s);
}

struct LeadMask {
    std::vector<std::uint8_t> keep;

    int kept_count() const {
        int c = 0;
        for (auto k : keep) c += k ? 1 : 0;
        return c;
    }
};

struct ViewBatch {
    std::vector<EcgRecord> minor_views;  // teacher consumes these
    std::vector<EcgRecord> major_views;
    ViewMode mode = ViewMode::mask;
    std::string source_id;

    int total_views() const {
        return static_cast<int>(minor_views.size() + major_views.size());
    }
    // Canonical ordering: minor views first, then major.
    const EcgRecord& view(int i) const {
        const int k = static_cast<int>(minor_views.size());
        return i < k ? minor_views[static_cast<size_t>(i)]
                     : major_views[static_cast<size_t>(i - k)];
    }
};

// Keep-count drawn uniformly from the level's inclusive range, then that many
// kept leads chosen uniformly without replacement.
inline LeadMask sample_lead_mask(MaskLevel level, int num_leads, const CorruptionConfig& cfg,
                                 Rng& rng) {
    int lo, hi;
    if (level == MaskLevel::major) {
        lo = cfg.major_keep_min;
        hi = std::min(cfg.major_keep_max, num_leads);
    } else {
        lo = cfg.minor_keep_min;
        hi = cfg.minor_keep_max;
        if (num_leads < hi)
            fail(errc::unsupported_lead_count,
                 "minor mask range needs " + std::to_string(hi) + " leads, record has " +
                     std::to_string(num_leads));
    }
    const int k = static_cast<int>(rng.uniform_int(lo, hi));
    LeadMask mask;
    mask.keep.assign(static_cast<size_t>(num_leads), 0);
    for (int i : rng.sample_without_replacement(num_leads, k)) mask.keep[static_cast<size_t>(i)] = 1;
    return mask;
}

inline EcgRecord apply_lead_mask(const EcgRecord& record, const LeadMask& mask) {
    if (static_cast<int>(mask.keep.size()) != record.num_leads())
        fail(errc::length_mismatch, "lead mask length != num_leads");
    EcgRecord out = record;
    for (int l = 0; l < record.num_leads(); ++l)
        if (!mask.keep[static_cast<size_t>(l)]) out.samples.row(l).setZero();
    return out;
}

namespace detail {

// Sum of the drawn noise types' random windows, unscaled. Empty when no type
// is drawn. Draw order is fixed (bank enum order) for determinism.
inline Eigen::VectorXf draw_composite_noise(const NoiseBank& bank, int num_samples,
                                            double per_type_p, Rng& rng) {
    Eigen::VectorXf composite;
    for (NoiseType type : all_noise_types()) {
        const auto it = bank.segments.find(type);
        if (it == bank.segments.end()) continue;
        if (!rng.bernoulli(per_type_p)) continue;
        const Eigen::VectorXf& seg = it->second;
        if (static_cast<int>(seg.size()) < num_samples)
            fail(errc::bank_too_short, noise_type_name(type) + " segment shorter than record");
        const int start =
            static_cast<int>(rng.uniform_int(0, static_cast<int>(seg.size()) - num_samples));
        if (composite.size() == 0) composite = Eigen::VectorXf::Zero(num_samples);
        composite += seg.segment(start, num_samples);
    }
    return composite;
}

}  // namespace detail

struct NoiseDrawOverride {
    double snr_db_min;
    double snr_db_max;
    double per_lead_p;
};

// SNR-calibrated noise injection. One SNR draw per call; the composite noise
// is rescaled per affected lead so 10*log10(P_lead / P_scaled_noise) hits the
// drawn target. Leads whose Bernoulli(per_lead_p) misses, and zero-power
// leads, stay bit-identical to the input.
inline EcgRecord inject_noise(const EcgRecord& record, const NoiseBank& bank,
                              const CorruptionConfig& cfg, Rng& rng,
                              const NoiseDrawOverride* ovr = nullptr) {
    if (bank.sample_rate_hz != record.sample_rate_hz)
        fail(errc::invalid_rate, "noise bank not prepared at the record sample rate");
    const double snr_lo = ovr ? ovr->snr_db_min : cfg.snr_db_min;
    const double snr_hi = ovr ? ovr->snr_db_max : cfg.snr_db_max;
    const double lead_p = ovr ? ovr->per_lead_p : cfg.per_lead_noise_p;

    Eigen::VectorXf composite =
        detail::draw_composite_noise(bank, record.num_samples(), cfg.per_type_noise_p, rng);
    if (composite.size() == 0) return record;

    const double noise_power = signal_power(composite);
    const double snr_db = rng.uniform(snr_lo, snr_hi);

    EcgRecord out = record;
    for (int l = 0; l < record.num_leads(); ++l) {
        if (!rng.bernoulli(lead_p)) continue;
        const double p_signal = signal_power_row(record.samples, l);
        if (p_signal <= 0.0 || noise_power <= 0.0) continue;  // scale undefined; skip the lead
        const double scale = std::sqrt(p_signal / (noise_power * std::pow(10.0, snr_db / 10.0)));
        out.samples.row(l) += (static_cast<float>(scale) * composite).transpose();
    }
    return out;
}

// The K-minor + N-major corrupted views of one record for one distillation
// mode. Noise-mode minor views are [original, band-filtered original], plus
// high-SNR injections when k_minor > 2.
inline ViewBatch build_views(const EcgRecord& record, ViewMode mode, const NoiseBank* bank,
                             const CorruptionConfig& cfg, Rng& rng) {
    cfg.validate();
    ViewBatch batch;
    batch.mode = mode;
    batch.source_id = record.record_id;
    if (mode == ViewMode::mask) {
        for (int i = 0; i < cfg.k_minor; ++i)
            batch.minor_views.push_back(
                apply_lead_mask(record, sample_lead_mask(MaskLevel::minor, record.num_leads(), cfg, rng)));
        for (int i = 0; i < cfg.n_major; ++i)
            batch.major_views.push_back(
                apply_lead_mask(record, sample_lead_mask(MaskLevel::major, record.num_leads(), cfg, rng)));
    } else {
        if (!bank) fail(errc::invalid_config, "noise mode needs a noise bank");
        batch.minor_views.push_back(record);
        batch.minor_views.push_back(band_filter(record, kEcgBandHighpassHz, kEcgBandLowpassHz));
        NoiseDrawOverride high_snr{cfg.minor_snr_db_min, cfg.minor_snr_db_max, cfg.per_lead_noise_p};
        for (int i = 2; i < cfg.k_minor; ++i)
            batch.minor_views.push_back(inject_noise(record, *bank, cfg, rng, &high_snr));
        for (int i = 0; i < cfg.n_major; ++i)
            batch.major_views.push_back(inject_noise(record, *bank, cfg, rng));
    }
    return batch;
}

// Downstream variant construction. Combined corruption is noise first, then
// lead masking.
inline EcgRecord build_variant_record(const EcgRecord& record, Variant variant,
                                      const NoiseBank* bank, const CorruptionConfig& cfg,
                                      Rng& rng) {
    switch (variant) {
    case Variant::original:
        return record;
    case Variant::lead_missing: {
        LeadMask mask;
        do {
            mask.keep.assign(static_cast<size_t>(record.num_leads()), 0);
            for (int l = 0; l < record.num_leads(); ++l)
                if (!rng.bernoulli(cfg.downstream_mask_p)) mask.keep[static_cast<size_t>(l)] = 1;
        } while (mask.kept_count() == 0);  // at least one lead retained
        return apply_lead_mask(record, mask);
    }
    case Variant::noisy: {
        if (!bank) fail(errc::invalid_config, "noisy variant needs a noise bank");
        NoiseDrawOverride ovr{cfg.snr_db_min, cfg.snr_db_max, cfg.downstream_noise_p};
        return inject_noise(record, *bank, cfg, rng, &ovr);
    }
    case Variant::lead_missing_noisy: {
        EcgRecord noisy = build_variant_record(record, Variant::noisy, bank, cfg, rng);
        return build_variant_record(noisy, Variant::lead_missing, bank, cfg, rng);
    }
    }
    fail(errc::invalid_config, "unknown variant");
}

}  // namespace tecg
