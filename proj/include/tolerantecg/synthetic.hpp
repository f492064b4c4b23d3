#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tolerantecg/cfr.hpp"
#include "tolerantecg/evalkit.hpp"
#include "tolerantecg/signal.hpp"

namespace tecg {

// Two-class synthetic ECG-like corpus for desk-scale training and the trend
// checks. The classes differ by dominant tone frequency; per-lead amplitudes
// vary so that dropping leads genuinely removes information.

struct SyntheticConfig {
    int n_records = 256;
    int num_leads = 12;
    int num_samples = 1000;
    double sample_rate_hz = 100.0;
    double tone_hz_class0 = 2.5;
    double tone_hz_class1 = 12.0;
    double noise_std = 0.25;
    std::uint64_t seed = 7;
};

struct SyntheticDataset {
    std::vector<EcgRecord> records;
    std::vector<int> cls;               // 0/1 per record
    std::vector<std::string> reports;   // templated raw text per record
    std::vector<std::string> codes;     // diagnosis code per record
};

inline const std::vector<std::string>& synthetic_label_names() {
    static const std::vector<std::string> names{"SBRAD", "STACH"};
    return names;
}

inline SyntheticDataset make_synthetic_dataset(const SyntheticConfig& cfg) {
    SyntheticDataset ds;
    Rng rng = Rng(cfg.seed).split(0x5F17);
    for (int r = 0; r < cfg.n_records; ++r) {
        const int cls = r % 2;
        const double tone = cls == 0 ? cfg.tone_hz_class0 : cfg.tone_hz_class1;
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double beat_hz = rng.uniform(0.9, 1.4);

        EcgRecord rec;
        rec.record_id = "syn" + std::to_string(r);
        rec.sample_rate_hz = cfg.sample_rate_hz;
        rec.lead_names = standard_12_leads();
        rec.lead_names.resize(static_cast<size_t>(cfg.num_leads));
        rec.samples.resize(cfg.num_leads, cfg.num_samples);
        for (int l = 0; l < cfg.num_leads; ++l) {
            // Informative amplitude falls off across leads; late leads are
            // mostly noise, so low lead counts can miss the signal.
            const double amp = rng.uniform(0.2, 1.0) * std::exp(-0.25 * l);
            const double lead_phase = phase + 0.3 * l;
            for (int t = 0; t < cfg.num_samples; ++t) {
                const double ts = t / cfg.sample_rate_hz;
                double v = amp * std::sin(2.0 * M_PI * tone * ts + lead_phase);
                // Shared beat-like pulse train common to both classes.
                const double beat = std::sin(2.0 * M_PI * beat_hz * ts);
                v += 0.3 * beat * beat * beat;
                v += cfg.noise_std * rng.gaussian();
                rec.samples(l, t) = static_cast<float>(v);
            }
        }
        const int age = static_cast<int>(rng.uniform_int(30, 80));
        ds.records.push_back(std::move(rec));
        ds.cls.push_back(cls);
        ds.codes.push_back(synthetic_label_names()[static_cast<size_t>(cls)]);
        ds.reports.push_back(
            "Patient: " + std::to_string(age) + " year old. " +
            (cls == 0 ? "slow dominant rhythm, low frequency oscillation"
                      : "rapid dominant rhythm, high frequency oscillation"));
    }
    return ds;
}

// Matching knowledge base so the report-composition pipeline can run on the
// synthetic corpus.
inline std::vector<DiagnosisEntry> synthetic_diagnosis_entries() {
    return {
        {"sinus bradycardia", "heart rate below 60 bpm with regular P waves and slow RR intervals"},
        {"sinus tachycardia", "heart rate above 100 bpm with regular P waves and short RR intervals"},
        {"premature atrial complex", "early P wave with abnormal morphology followed by a pause"},
    };
}

inline AbbreviationTable synthetic_abbreviations() {
    return {
        {"SBRAD", "sinus bradycardia"},
        {"STACH", "sinus tachycardia"},
        {"PAC", "premature atrial complex"},
    };
}

// Labeled train/val/test splits with disjoint record ranges; class balance is
// preserved by the alternating class layout.
struct SyntheticSplits {
    LabeledDataset train, val, test;
};

inline SyntheticSplits split_synthetic(const SyntheticDataset& ds, double train_frac = 0.6,
                                       double val_frac = 0.2) {
    SyntheticSplits s;
    for (LabeledDataset* d : {&s.train, &s.val, &s.test}) d->label_names = synthetic_label_names();
    const size_t n = ds.records.size();
    const auto n_train = static_cast<size_t>(static_cast<double>(n) * train_frac);
    const auto n_val = static_cast<size_t>(static_cast<double>(n) * val_frac);
    for (size_t i = 0; i < n; ++i) {
        LabeledDataset& d = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
        d.records.push_back(ds.records[i]);
        std::vector<int> y(2, 0);
        y[static_cast<size_t>(ds.cls[i])] = 1;
        d.targets.push_back(std::move(y));
    }
    return s;
}

// Surrogate ambulatory noise bank: slow sinusoid drift (baseline wander),
// broadband high-frequency noise (muscle artifact), and smoothed step bursts
// (electrode motion).
inline NoiseBank make_synthetic_noise_bank(double sample_rate_hz, int num_samples,
                                           std::uint64_t seed) {
    NoiseBank bank;
    bank.sample_rate_hz = sample_rate_hz;
    Rng rng = Rng(seed).split(0xBA9C);

    Eigen::VectorXf bw(num_samples);
    const double f1 = rng.uniform(0.15, 0.3), f2 = rng.uniform(0.05, 0.12);
    const double p1 = rng.uniform(0.0, 2.0 * M_PI), p2 = rng.uniform(0.0, 2.0 * M_PI);
    for (int t = 0; t < num_samples; ++t) {
        const double ts = t / sample_rate_hz;
        bw[t] = static_cast<float>(std::sin(2.0 * M_PI * f1 * ts + p1) +
                                   0.6 * std::sin(2.0 * M_PI * f2 * ts + p2));
    }
    bank.segments[NoiseType::baseline_wander] = bw;

    Eigen::VectorXf ma(num_samples);
    double prev = 0.0;
    for (int t = 0; t < num_samples; ++t) {
        // First difference of white noise emphasizes high frequencies.
        const double g = rng.gaussian();
        ma[t] = static_cast<float>(g - 0.7 * prev);
        prev = g;
    }
    bank.segments[NoiseType::muscle_artifact] = ma;

    Eigen::VectorXf em = Eigen::VectorXf::Zero(num_samples);
    double level = 0.0;
    for (int t = 0; t < num_samples; ++t) {
        if (rng.bernoulli(0.01)) level = rng.uniform(-1.5, 1.5);
        level *= 0.995;
        em[t] = static_cast<float>(level + 0.05 * rng.gaussian());
    }
    bank.segments[NoiseType::electrode_motion] = em;
    return bank;
}

}  // namespace tecg
