#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/checkpoint.hpp"
#include "tolerantecg/corruption.hpp"
#include "tolerantecg/metrics.hpp"
#include "tolerantecg/nn/encoder.hpp"
#include "tolerantecg/nn/optim.hpp"
#include "tolerantecg/trainer.hpp"

namespace tecg {

// ---------------------------------------------------------------------------
// Label handling
// ---------------------------------------------------------------------------

// Ordered label vocabulary at a chosen granularity. aggregation_map sends raw
// record codes to vocabulary codes; unmapped codes are dropped and counted.
struct LabelSet {
    std::string level = "all";
    std::vector<std::string> labels;
    std::map<std::string, std::string> aggregation_map;

    int index_of(const std::string& code) const {
        const auto it = std::find(labels.begin(), labels.end(), code);
        return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
    }

    // Multi-hot target for one record; increments dropped for unmapped codes.
    std::vector<int> encode(const std::vector<std::string>& codes, size_t* dropped = nullptr) const {
        std::vector<int> y(labels.size(), 0);
        for (const auto& code : codes) {
            std::string mapped = code;
            if (!aggregation_map.empty()) {
                const auto it = aggregation_map.find(code);
                if (it == aggregation_map.end()) {
                    if (dropped) ++*dropped;
                    continue;
                }
                mapped = it->second;
            }
            const int idx = index_of(mapped);
            if (idx >= 0)
                y[static_cast<size_t>(idx)] = 1;
            else if (dropped)
                ++*dropped;
        }
        return y;
    }

    static LabelSet from_json(const nlohmann::json& j) {
        LabelSet ls;
        if (j.contains("level")) ls.level = j.at("level").get<std::string>();
        ls.labels = j.at("labels").get<std::vector<std::string>>();
        if (j.contains("aggregation_map"))
            ls.aggregation_map = j.at("aggregation_map").get<std::map<std::string, std::string>>();
        if (ls.labels.empty()) fail(errc::invalid_config, "label set: empty vocabulary");
        return ls;
    }

    static LabelSet load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) fail(errc::missing_file, "cannot open label set: " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            fail(errc::parse_error, "bad label set json: " + std::string(e.what()));
        }
        return from_json(j);
    }
};

struct LabeledDataset {
    std::vector<EcgRecord> records;
    std::vector<std::vector<int>> targets;  // records x labels, 0/1
    std::vector<std::string> label_names;

    void check() const {
        if (records.size() != targets.size())
            fail(errc::dimension_mismatch, "labeled dataset: records/targets misaligned");
        for (const auto& y : targets)
            if (y.size() != label_names.size())
                fail(errc::dimension_mismatch, "labeled dataset: target width != label count");
    }
};

// ---------------------------------------------------------------------------
// Variant dataset assembly
// ---------------------------------------------------------------------------

// Deterministic variant redraw: each record's corruption stream depends only
// on (seed, variant, index), so a fixed-seed build is reproducible bit-exactly
// while per-epoch training redraws just change the seed.
inline std::vector<EcgRecord> build_variant_records(const std::vector<EcgRecord>& records,
                                                    Variant variant, const NoiseBank* bank,
                                                    const CorruptionConfig& cfg,
                                                    std::uint64_t seed) {
    std::vector<EcgRecord> out;
    out.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        Rng rng = Rng(seed)
                      .split(0x7A51 + static_cast<std::uint64_t>(variant))
                      .split(static_cast<std::uint64_t>(i));
        out.push_back(build_variant_record(records[i], variant, bank, cfg, rng));
        out.back().record_id = records[i].record_id + "#" + variant_name(variant);
    }
    return out;
}

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::original, Variant::lead_missing, Variant::noisy,
                                        Variant::lead_missing_noisy};
    return v;
}

// Persisted variant split (validation/test usage): writes blobs + manifest
// under out_dir with the corruption drawn once from `seed`.
inline DatasetManifest build_variant_dataset(const DatasetManifest& manifest,
                                             const std::filesystem::path& src_dir, Variant variant,
                                             const NoiseBank* bank, const CorruptionConfig& cfg,
                                             std::uint64_t seed,
                                             const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    DatasetManifest out = manifest;
    for (size_t i = 0; i < manifest.records.size(); ++i) {
        const EcgRecord rec = load_record(manifest.records[i], src_dir);
        Rng rng = Rng(seed)
                      .split(0x7A51 + static_cast<std::uint64_t>(variant))
                      .split(static_cast<std::uint64_t>(i));
        const EcgRecord corrupted = build_variant_record(rec, variant, bank, cfg, rng);
        out.records[i].relative_path = manifest.records[i].record_id + ".f32";
        write_blob(out_dir / out.records[i].relative_path, corrupted.samples);
    }
    save_manifest(out, out_dir / "manifest.json");
    return out;
}

// ---------------------------------------------------------------------------
// Fine-tuning: single linear head over the pooled embedding, per-label
// binary cross-entropy, model selection on validation macro-AUC.
// ---------------------------------------------------------------------------

struct FinetuneConfig {
    double lr = 1e-4;
    int epochs = 20;
    int batch_size = 32;
    bool freeze_encoder = false;
    bool aggregate_variants = false;  // train on all four variants per epoch
    CorruptionConfig corruption;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr <= 0.0 || epochs < 1 || batch_size < 1)
            fail(errc::invalid_config, "finetune: bad optimizer configuration");
    }
};

struct FinetunedModel {
    nn::EcgEncoder encoder;
    nn::Linear head;
    std::vector<std::string> label_names;

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) {
        encoder.visit(prefix + "enc.", fn);
        head.visit(prefix + "head", fn);
    }

    // Sigmoid scores per label.
    std::vector<double> score(const EcgRecord& record) const {
        nn::EcgEncoder::Cache ec;
        nn::Linear::Cache lc;
        const Eigen::RowVectorXd embed = encoder.forward(nn::to_time_major(record), ec);
        const nn::Mat logits = head.forward(embed, lc);
        std::vector<double> out(static_cast<size_t>(logits.cols()));
        for (Eigen::Index l = 0; l < logits.cols(); ++l)
            out[static_cast<size_t>(l)] = 1.0 / (1.0 + std::exp(-logits(0, l)));
        return out;
    }
};

inline void save_finetuned(FinetunedModel& model, const nn::EcgEncoderConfig& enc_cfg,
                           const std::filesystem::path& dir) {
    TensorArchive a;
    archive_module(model, a, "model.");
    nlohmann::json extra;
    extra["encoder"] = enc_cfg.to_json();
    extra["labels"] = model.label_names;
    a.save(dir, extra);
}

inline FinetunedModel load_finetuned(const std::filesystem::path& dir) {
    nlohmann::json extra;
    TensorArchive a = TensorArchive::load(dir, &extra);
    const auto cfg = nn::EcgEncoderConfig::from_json(extra.at("encoder"));
    FinetunedModel m;
    Rng rng(0);
    m.encoder = nn::EcgEncoder(cfg, rng);
    m.label_names = extra.at("labels").get<std::vector<std::string>>();
    m.head.init(cfg.embed_dim(), static_cast<int>(m.label_names.size()), rng);
    restore_module(m, a, "model.");
    return m;
}

inline MetricsReport evaluate_model(const FinetunedModel& model, const LabeledDataset& data) {
    data.check();
    if (data.records.empty()) fail(errc::empty_batch, "evaluate_model: empty dataset");
    const size_t n_labels = data.label_names.size();
    std::vector<std::vector<int>> labels(n_labels);
    std::vector<std::vector<double>> scores(n_labels);
    for (size_t i = 0; i < data.records.size(); ++i) {
        const std::vector<double> s = model.score(data.records[i]);
        if (s.size() != n_labels)
            fail(errc::config_mismatch, "evaluate_model: model label count != dataset label count");
        for (size_t l = 0; l < n_labels; ++l) {
            labels[l].push_back(data.targets[i][l]);
            scores[l].push_back(s[l]);
        }
    }
    return compute_metrics(data.label_names, labels, scores);
}

struct FinetuneResult {
    FinetunedModel model;  // best-on-validation weights
    MetricsReport val_report;
    std::vector<std::string> excluded_labels;  // zero positives in train
    std::vector<double> epoch_val_auc;
};

inline FinetuneResult finetune(const nn::EcgEncoder& pretrained_encoder,
                               const LabeledDataset& train, const LabeledDataset& val,
                               const FinetuneConfig& cfg, const NoiseBank* bank = nullptr) {
    cfg.validate();
    train.check();
    val.check();
    if (train.records.empty() || val.records.empty())
        fail(errc::empty_batch, "finetune: empty split");
    if (train.label_names != val.label_names)
        fail(errc::config_mismatch, "finetune: train/val label vocabularies differ");
    const size_t n_labels = train.label_names.size();

    FinetuneResult result;
    result.model.encoder = pretrained_encoder;
    result.model.label_names = train.label_names;
    Rng init_rng = Rng(cfg.seed).split(0xF17E);
    result.model.head.init(pretrained_encoder.config().embed_dim(), static_cast<int>(n_labels),
                           init_rng);

    // Labels with no positive training example carry no learning signal.
    std::vector<std::uint8_t> active(n_labels, 0);
    for (size_t l = 0; l < n_labels; ++l) {
        for (const auto& y : train.targets)
            if (y[l]) {
                active[l] = 1;
                break;
            }
        if (!active[l]) result.excluded_labels.push_back(train.label_names[l]);
    }
    size_t n_active = 0;
    for (auto a : active) n_active += a;
    if (n_active == 0) fail(errc::degenerate_labels, "finetune: no label has a positive example");

    nn::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, 0.0, 3.0});
    FinetunedModel& m = result.model;
    const auto trainable = [&] {
        std::vector<std::pair<std::string, nn::Param*>> out;
        const auto add = [&](const std::string& name, nn::Param& p) { out.emplace_back(name, &p); };
        if (!cfg.freeze_encoder) m.encoder.visit("enc.", add);
        m.head.visit("head", add);
        return out;
    };

    double best_auc = -1.0;
    std::optional<FinetunedModel> best;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Assemble this epoch's examples; corrupted variants are redrawn.
        std::vector<const EcgRecord*> pool;
        std::vector<std::vector<EcgRecord>> variant_storage;
        std::vector<size_t> pool_target;  // index into train.targets
        for (size_t i = 0; i < train.records.size(); ++i) {
            pool.push_back(&train.records[i]);
            pool_target.push_back(i);
        }
        if (cfg.aggregate_variants) {
            const auto epoch_seed =
                Rng(cfg.seed).split(0xE70C + static_cast<std::uint64_t>(epoch)).state();
            for (Variant v : {Variant::lead_missing, Variant::noisy, Variant::lead_missing_noisy}) {
                if ((v == Variant::noisy || v == Variant::lead_missing_noisy) && !bank) continue;
                variant_storage.push_back(
                    build_variant_records(train.records, v, bank, cfg.corruption, epoch_seed));
            }
            for (const auto& vs : variant_storage)
                for (size_t i = 0; i < vs.size(); ++i) {
                    pool.push_back(&vs[i]);
                    pool_target.push_back(i);
                }
        }

        std::vector<size_t> perm(pool.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        Rng order_rng = Rng(cfg.seed).split(0x0DE0 + static_cast<std::uint64_t>(epoch));
        order_rng.shuffle(perm);

        for (size_t begin = 0; begin < perm.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end =
                std::min(perm.size(), begin + static_cast<size_t>(cfg.batch_size));
            for (auto& [name, p] : trainable()) p->zero_grad();
            const double inv = 1.0 / static_cast<double>((end - begin) * n_active);
            for (size_t bi = begin; bi < end; ++bi) {
                const EcgRecord& rec = *pool[perm[bi]];
                const std::vector<int>& y = train.targets[pool_target[perm[bi]]];
                nn::EcgEncoder::Cache ec;
                nn::Linear::Cache lc;
                const Eigen::RowVectorXd embed = m.encoder.forward(nn::to_time_major(rec), ec);
                const nn::Mat logits = m.head.forward(embed, lc);
                Eigen::RowVectorXd g(static_cast<Eigen::Index>(n_labels));
                for (size_t l = 0; l < n_labels; ++l) {
                    if (!active[l]) {
                        g[static_cast<Eigen::Index>(l)] = 0.0;
                        continue;
                    }
                    const double p = 1.0 / (1.0 + std::exp(-logits(0, static_cast<Eigen::Index>(l))));
                    g[static_cast<Eigen::Index>(l)] = (p - static_cast<double>(y[l])) * inv;
                }
                const nn::Mat g_embed = m.head.backward(g, lc);
                if (!cfg.freeze_encoder) m.encoder.backward(g_embed.row(0), ec);
            }
            opt.step(trainable());
        }

        const MetricsReport val_report = evaluate_model(m, val);
        result.epoch_val_auc.push_back(val_report.macro_auroc);
        if (val_report.macro_auroc > best_auc) {
            best_auc = val_report.macro_auroc;
            best = m;
            result.val_report = val_report;
        }
    }
    if (best) result.model = std::move(*best);
    return result;
}

// ---------------------------------------------------------------------------
// Ablation sweeps (lead count / SNR) and the framework comparison table
// ---------------------------------------------------------------------------

enum class SweepAxis { lead_count, snr_db };

struct SweepTable {
    SweepAxis axis = SweepAxis::lead_count;
    std::vector<std::pair<double, double>> rows;  // (point, macro AUROC)

    std::string to_csv() const {
        std::string out = axis == SweepAxis::lead_count ? "lead_count,macro_auroc\n"
                                                        : "snr_db,macro_auroc\n";
        char buf[64];
        for (const auto& [x, y] : rows) {
            std::snprintf(buf, sizeof(buf), "%.6g,%.9g\n", x, y);
            out += buf;
        }
        return out;
    }
};

// For each sweep point, corrupt the fixed test set deterministically and
// score it. lead_count keeps exactly k uniformly chosen leads per record;
// snr_db injects the full composite at exactly that SNR on every lead.
inline SweepTable ablation_sweep(const FinetunedModel& model, const LabeledDataset& test,
                                 SweepAxis axis, const std::vector<double>& points,
                                 const NoiseBank* bank, const CorruptionConfig& cfg,
                                 std::uint64_t seed) {
    test.check();
    if (points.empty()) fail(errc::invalid_config, "ablation_sweep: no sweep points");
    SweepTable table;
    table.axis = axis;
    for (const double point : points) {
        LabeledDataset corrupted;
        corrupted.label_names = test.label_names;
        corrupted.targets = test.targets;
        for (size_t i = 0; i < test.records.size(); ++i) {
            const EcgRecord& rec = test.records[i];
            Rng rng = Rng(seed).split(static_cast<std::uint64_t>(i));
            if (axis == SweepAxis::lead_count) {
                const int k = static_cast<int>(point);
                if (k < 1 || k > rec.num_leads())
                    fail(errc::invalid_config, "ablation_sweep: lead count out of range");
                LeadMask mask;
                mask.keep.assign(static_cast<size_t>(rec.num_leads()), 0);
                for (int l : rng.sample_without_replacement(rec.num_leads(), k))
                    mask.keep[static_cast<size_t>(l)] = 1;
                corrupted.records.push_back(apply_lead_mask(rec, mask));
            } else {
                if (!bank) fail(errc::invalid_config, "ablation_sweep: snr axis needs a noise bank");
                CorruptionConfig exact = cfg;
                exact.per_type_noise_p = 1.0;  // composite always present
                NoiseDrawOverride ovr{point, point, 1.0};
                corrupted.records.push_back(inject_noise(rec, *bank, exact, rng, &ovr));
            }
        }
        table.rows.emplace_back(point, evaluate_model(model, corrupted).macro_auroc);
    }
    return table;
}

// Framework comparison harness: desk-scale variants trained by toggling
// config flags, each evaluated on the four variant test sets.
struct FrameworkRow {
    std::string name;
    std::map<std::string, double> auc_by_variant;  // variant name -> macro AUROC
};

struct FrameworkAblationInput {
    PretrainConfig base;
    PretrainDataset pretrain_raw;  // raw report text
    PretrainDataset pretrain_cfr;  // composed detailed reports
    LabeledDataset train, val, test;
    FinetuneConfig finetune_cfg;
    const NoiseBank* bank = nullptr;
    std::filesystem::path work_dir;
};

inline std::vector<FrameworkRow> ablation_frameworks(const FrameworkAblationInput& in) {
    struct Setup {
        std::string name;
        double alpha, beta;
        bool uni;
        const PretrainDataset* data;
    };
    const std::vector<Setup> setups = {
        {"report_align_raw", 1.0, 0.0, false, &in.pretrain_raw},
        {"report_align_cfr", 1.0, 0.0, false, &in.pretrain_cfr},
        {"uni_distill", 0.0, 1.0, true, &in.pretrain_cfr},
        {"duo_distill", 0.0, 1.0, false, &in.pretrain_cfr},
        {"full", 1.0, 1.0, false, &in.pretrain_cfr},
    };
    std::vector<FrameworkRow> rows;
    for (const auto& s : setups) {
        PretrainConfig cfg = in.base;
        cfg.weights.alpha = s.alpha;
        cfg.weights.beta = s.beta;
        cfg.uni_distill = s.uni;
        TrainState st = make_train_state(cfg);
        pretrain(st, *s.data, in.bank, in.work_dir / s.name);
        const FinetuneResult ft =
            finetune(st.student.encoder, in.train, in.val, in.finetune_cfg, in.bank);

        FrameworkRow row;
        row.name = s.name;
        for (Variant v : all_variants()) {
            LabeledDataset variant_test;
            variant_test.label_names = in.test.label_names;
            variant_test.targets = in.test.targets;
            variant_test.records = build_variant_records(in.test.records, v, in.bank,
                                                         in.finetune_cfg.corruption, cfg.seed);
            row.auc_by_variant[variant_name(v)] =
                evaluate_model(ft.model, variant_test).macro_auroc;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace tecg
