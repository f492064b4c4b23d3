#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/error.hpp"

namespace tecg {

// ---------------------------------------------------------------------------
// Text embedder contract: any deterministic text -> fixed-dim vector map.
// ---------------------------------------------------------------------------

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    virtual Eigen::VectorXd embed(const std::string& text) const = 0;
    virtual std::string id() const = 0;
};

inline Eigen::VectorXd l2_normalize_or_basis(Eigen::VectorXd v) {
    const double n = v.norm();
    if (n < 1e-12) {
        v.setZero();
        v[0] = 1.0;  // deterministic fallback for degenerate inputs
        return v;
    }
    return v / n;
}

// Seeded hashed character-trigram embedder. Deterministic, no model download;
// the production sentence-embedding model plugs in behind the same contract.
class HashedNgramEmbedder : public TextEmbedder {
public:
    explicit HashedNgramEmbedder(int dim = 256, std::uint64_t seed = 0x5EED)
        : dim_(dim), seed_(seed) {}

    int dim() const override { return dim_; }

    std::string id() const override {
        return "hashed-ngram-" + std::to_string(dim_) + "-" + std::to_string(seed_);
    }

    Eigen::VectorXd embed(const std::string& text) const override {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
        const std::string padded = "^" + lowercase(text) + "$";
        if (padded.size() >= 3) {
            for (size_t i = 0; i + 3 <= padded.size(); ++i) {
                const std::uint64_t h = fnv1a(padded.data() + i, 3) ^ seed_;
                const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
                const double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
                v[bucket] += sign;
            }
        }
        return l2_normalize_or_basis(std::move(v));
    }

private:
    static std::string lowercase(std::string s) {
        for (char& c : s)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return s;
    }

    static std::uint64_t fnv1a(const char* p, size_t n) {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (size_t i = 0; i < n; ++i) {
            h ^= static_cast<std::uint8_t>(p[i]);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    int dim_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Diagnosis database
// ---------------------------------------------------------------------------

struct DiagnosisEntry {
    std::string key;       // disease name
    std::string criteria;  // waveform-feature description
};

struct DiagnosisDB {
    std::vector<DiagnosisEntry> entries;
    Eigen::MatrixXd key_embeddings;  // num_entries x dim, unit-norm rows
    std::string embedder_id;
    std::vector<std::string> build_warnings;
};

struct RetrievalConfig {
    double similarity_threshold = 0.5;
};

inline DiagnosisDB build_diagnosis_db(const std::vector<DiagnosisEntry>& entries,
                                      const TextEmbedder& embedder) {
    if (entries.empty()) fail(errc::empty_database, "diagnosis database has no entries");
    DiagnosisDB db;
    db.entries = entries;
    db.embedder_id = embedder.id();
    db.key_embeddings.resize(static_cast<Eigen::Index>(entries.size()), embedder.dim());
    std::map<std::string, int> seen;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].key.empty() || entries[i].criteria.empty())
            fail(errc::invalid_config, "diagnosis entry " + std::to_string(i) + " has empty field");
        if (++seen[entries[i].key] == 2)
            db.build_warnings.push_back("duplicate key: " + entries[i].key);
        db.key_embeddings.row(static_cast<Eigen::Index>(i)) =
            l2_normalize_or_basis(embedder.embed(entries[i].key)).transpose();
    }
    return db;
}

// JSONL ingestion: one {"key": ..., "criteria": ...} object per line.
inline std::vector<DiagnosisEntry> load_diagnosis_entries(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(errc::missing_file, "missing diagnosis file: " + path.string());
    std::vector<DiagnosisEntry> entries;
    std::string line;
    while (std::getline(f, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(errc::invalid_config, "bad diagnosis JSONL line: " + std::string(e.what()));
        }
        entries.push_back({j.at("key").get<std::string>(), j.at("criteria").get<std::string>()});
    }
    return entries;
}

// ---------------------------------------------------------------------------
// Abbreviation expansion
// ---------------------------------------------------------------------------

using AbbreviationTable = std::map<std::string, std::string>;

inline AbbreviationTable load_abbreviation_table(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(errc::missing_file, "missing abbreviation table: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, "bad abbreviation JSON: " + std::string(e.what()));
    }
    AbbreviationTable t;
    for (const auto& [k, v] : j.items()) t[k] = v.get<std::string>();
    return t;
}

struct Expansion {
    std::string phrase;
    bool hit = false;
};

inline Expansion expand_abbreviation(const std::string& code, const AbbreviationTable& table) {
    const auto it = table.find(code);
    if (it == table.end()) return {code, false};
    return {it->second, true};
}

// ---------------------------------------------------------------------------
// Retrieval and report composition
// ---------------------------------------------------------------------------

struct RetrievalResult {
    DiagnosisEntry entry;
    double similarity = 0.0;
};

// Argmax cosine similarity over the stored keys; absent when nothing clears
// the threshold. Ties break toward the lowest entry index.
inline std::optional<RetrievalResult> retrieve_criteria(const DiagnosisDB& db,
                                                        const std::string& phrase,
                                                        const TextEmbedder& embedder,
                                                        const RetrievalConfig& cfg) {
    if (db.entries.empty()) fail(errc::empty_database, "retrieve_criteria: empty database");
    const Eigen::VectorXd q = l2_normalize_or_basis(embedder.embed(phrase));
    Eigen::VectorXd sims = db.key_embeddings * q;
    int best = 0;
    for (int i = 1; i < sims.size(); ++i)
        if (sims[i] > sims[best]) best = i;
    if (!(sims[best] > cfg.similarity_threshold)) return std::nullopt;
    return RetrievalResult{db.entries[static_cast<size_t>(best)], sims[best]};
}

struct PatientMetadata {
    std::optional<double> age;
    std::optional<std::string> sex;
};

// Fixed report template: one demographics sentence, then one section per SCP
// code in input order. Codes that miss the database contribute their expanded
// name alone.
inline std::string compose_report(const PatientMetadata& metadata,
                                  const std::vector<std::string>& scp_codes,
                                  const AbbreviationTable& table, const DiagnosisDB& db,
                                  const TextEmbedder& embedder, const RetrievalConfig& cfg) {
    std::ostringstream out;
    out << "Patient:";
    if (metadata.age) out << " " << static_cast<long long>(std::llround(*metadata.age)) << " year old";
    if (metadata.sex) out << " " << *metadata.sex;
    if (!metadata.age && !metadata.sex) out << " demographics unavailable";
    out << ".";
    if (!scp_codes.empty()) {
        out << "\nDiagnoses and criteria:";
        for (const auto& code : scp_codes) {
            const Expansion exp = expand_abbreviation(code, table);
            out << "\n- " << exp.phrase;
            const auto hit = retrieve_criteria(db, exp.phrase, embedder, cfg);
            if (hit) out << ": " << hit->entry.criteria;
        }
    }
    return out.str();
}

}  // namespace tecg
