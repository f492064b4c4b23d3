#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/error.hpp"

namespace tecg {

using SignalMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One multi-lead ECG recording in millivolts. Rows are leads, columns are
// samples; the canonical pretraining shape is 12 x 5000 at 500 Hz.
struct EcgRecord {
    SignalMatrix samples;               // num_leads x num_samples
    int sample_rate_hz = 0;
    std::vector<std::string> lead_names;
    std::string record_id;

    int num_leads() const { return static_cast<int>(samples.rows()); }
    int num_samples() const { return static_cast<int>(samples.cols()); }
    double duration_s() const { return static_cast<double>(num_samples()) / sample_rate_hz; }
};

inline const std::vector<std::string>& standard_12_leads() {
    static const std::vector<std::string> leads = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                                   "V1", "V2", "V3",  "V4",  "V5",  "V6"};
    return leads;
}

inline void validate_record(const EcgRecord& r) {
    if (r.num_leads() < 1 || r.num_samples() < 1)
        fail(errc::shape_mismatch, "record " + r.record_id + ": empty signal matrix");
    if (r.sample_rate_hz <= 0)
        fail(errc::invalid_rate, "record " + r.record_id + ": non-positive sample rate");
    if (static_cast<int>(r.lead_names.size()) != r.num_leads())
        fail(errc::shape_mismatch, "record " + r.record_id + ": lead name count mismatch");
    for (size_t i = 0; i < r.lead_names.size(); ++i)
        for (size_t j = i + 1; j < r.lead_names.size(); ++j)
            if (r.lead_names[i] == r.lead_names[j])
                fail(errc::shape_mismatch, "record " + r.record_id + ": duplicate lead name " + r.lead_names[i]);
    bool all_zero = true;
    for (int l = 0; l < r.num_leads(); ++l)
        for (int s = 0; s < r.num_samples(); ++s) {
            const float v = r.samples(l, s);
            if (!std::isfinite(v))
                fail(errc::invalid_samples, "record " + r.record_id + ": non-finite sample");
            if (v != 0.0f) all_zero = false;
        }
    if (all_zero) fail(errc::invalid_samples, "record " + r.record_id + ": all samples are zero");
}

// Mean of squares, in mV^2.
inline double signal_power(const Eigen::Ref<const Eigen::VectorXf>& x) {
    if (x.size() == 0) fail(errc::empty_input, "signal_power: empty input");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]) * x[i];
    return acc / static_cast<double>(x.size());
}

inline double signal_power_row(const SignalMatrix& m, int row) {
    Eigen::VectorXf v = m.row(row).transpose();
    return signal_power(v);
}

// ---------------------------------------------------------------------------
// Raw blob I/O: little-endian float32, lead-major, no header.
// ---------------------------------------------------------------------------

inline void write_blob(const std::filesystem::path& path, const SignalMatrix& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(errc::missing_file, "cannot open for write: " + path.string());
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float)) * m.size());
    if (!f) fail(errc::missing_file, "short write: " + path.string());
}

inline SignalMatrix read_blob(const std::filesystem::path& path, int num_leads, int num_samples) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) fail(errc::missing_file, "missing file: " + path.string());
    const auto bytes = static_cast<std::uint64_t>(f.tellg());
    const std::uint64_t expected = 4ULL * num_leads * num_samples;
    if (bytes != expected)
        fail(errc::shape_mismatch, path.string() + ": expected " + std::to_string(expected) +
                                       " bytes, got " + std::to_string(bytes));
    f.seekg(0);
    SignalMatrix m(num_leads, num_samples);
    f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(expected));
    if (!f) fail(errc::missing_file, "short read: " + path.string());
    return m;
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string record_id;
    std::string relative_path;
    int num_leads = 0;
    int num_samples = 0;
    int sample_rate_hz = 0;
    std::vector<std::string> labels;
    std::optional<double> age;
    std::optional<std::string> sex;
    std::vector<std::string> report_codes;
};

struct DatasetManifest {
    std::vector<ManifestEntry> records;
};

inline nlohmann::json to_json(const ManifestEntry& e) {
    nlohmann::json j{{"record_id", e.record_id},
                     {"relative_path", e.relative_path},
                     {"num_leads", e.num_leads},
                     {"num_samples", e.num_samples},
                     {"sample_rate_hz", e.sample_rate_hz},
                     {"labels", e.labels},
                     {"report_codes", e.report_codes}};
    nlohmann::json meta = nlohmann::json::object();
    if (e.age) meta["age"] = *e.age;
    if (e.sex) meta["sex"] = *e.sex;
    j["metadata"] = meta;
    return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.record_id = j.at("record_id").get<std::string>();
    e.relative_path = j.at("relative_path").get<std::string>();
    e.num_leads = j.at("num_leads").get<int>();
    e.num_samples = j.at("num_samples").get<int>();
    e.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    if (j.contains("labels")) e.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("report_codes"))
        e.report_codes = j.at("report_codes").get<std::vector<std::string>>();
    if (j.contains("metadata")) {
        const auto& meta = j.at("metadata");
        if (meta.contains("age")) e.age = meta.at("age").get<double>();
        if (meta.contains("sex")) e.sex = meta.at("sex").get<std::string>();
    }
    return e;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["records"] = nlohmann::json::array();
    for (const auto& e : m.records) j["records"].push_back(to_json(e));
    std::ofstream f(path);
    if (!f) fail(errc::missing_file, "cannot open for write: " + path.string());
    f << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(errc::missing_file, "missing manifest: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, "bad manifest JSON " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    for (const auto& rj : j.at("records")) m.records.push_back(manifest_entry_from_json(rj));
    return m;
}

inline EcgRecord load_record(const ManifestEntry& entry, const std::filesystem::path& base_dir) {
    EcgRecord r;
    r.samples = read_blob(base_dir / entry.relative_path, entry.num_leads, entry.num_samples);
    r.sample_rate_hz = entry.sample_rate_hz;
    r.record_id = entry.record_id;
    if (entry.num_leads == 12) {
        r.lead_names = standard_12_leads();
    } else {
        for (int i = 0; i < entry.num_leads; ++i) r.lead_names.push_back("L" + std::to_string(i));
    }
    validate_record(r);
    return r;
}

inline void write_record(const EcgRecord& r, const ManifestEntry& entry,
                         const std::filesystem::path& base_dir) {
    const auto path = base_dir / entry.relative_path;
    std::filesystem::create_directories(path.parent_path());
    write_blob(path, r.samples);
}

// ---------------------------------------------------------------------------
// Noise bank
// ---------------------------------------------------------------------------

enum class NoiseType { baseline_wander, muscle_artifact, electrode_motion };

inline const std::vector<NoiseType>& all_noise_types() {
    static const std::vector<NoiseType> t = {NoiseType::baseline_wander, NoiseType::muscle_artifact,
                                             NoiseType::electrode_motion};
    return t;
}

inline std::string noise_type_name(NoiseType t) {
    switch (t) {
    case NoiseType::baseline_wander: return "baseline_wander";
    case NoiseType::muscle_artifact: return "muscle_artifact";
    case NoiseType::electrode_motion: return "electrode_motion";
    }
    return "?";
}

inline NoiseType noise_type_from_name(const std::string& s) {
    for (NoiseType t : all_noise_types())
        if (noise_type_name(t) == s) return t;
    fail(errc::invalid_config, "unknown noise type: " + s);
}

// 1-D noise segments, one per ambulatory noise type. prepare_noise_bank
// resamples each segment to the target ECG rate before use.
struct NoiseBank {
    std::map<NoiseType, Eigen::VectorXf> segments;
    int sample_rate_hz = 0;
};

inline void save_noise_bank(const NoiseBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["sample_rate_hz"] = bank.sample_rate_hz;
    j["segments"] = nlohmann::json::object();
    for (const auto& [type, seg] : bank.segments) {
        const std::string name = noise_type_name(type) + ".f32";
        SignalMatrix row(1, seg.size());
        row.row(0) = seg.transpose();
        write_blob(dir / name, row);
        j["segments"][noise_type_name(type)] = {{"path", name}, {"num_samples", seg.size()}};
    }
    std::ofstream f(dir / "noise_manifest.json");
    if (!f) fail(errc::missing_file, "cannot write noise manifest in " + dir.string());
    f << j.dump(2) << "\n";
}

inline NoiseBank load_noise_bank(const std::filesystem::path& dir) {
    std::ifstream f(dir / "noise_manifest.json");
    if (!f) fail(errc::missing_file, "missing noise manifest in " + dir.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, std::string("bad noise manifest: ") + e.what());
    }
    NoiseBank bank;
    bank.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    for (const auto& [name, sj] : j.at("segments").items()) {
        const int n = sj.at("num_samples").get<int>();
        SignalMatrix row = read_blob(dir / sj.at("path").get<std::string>(), 1, n);
        bank.segments[noise_type_from_name(name)] = row.row(0).transpose();
    }
    return bank;
}

}  // namespace tecg
