// Command-line entrypoint for the corruption-tolerant ECG training framework.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <tolerantecg/cfr.hpp>
#include <tolerantecg/evalkit.hpp>
#include <tolerantecg/synthetic.hpp>
#include <tolerantecg/trainer.hpp>

namespace fs = std::filesystem;
using namespace tecg;

namespace {

std::vector<EcgRecord> load_all_records(const DatasetManifest& manifest, const fs::path& dir) {
    std::vector<EcgRecord> out;
    out.reserve(manifest.records.size());
    for (const auto& entry : manifest.records) out.push_back(load_record(entry, dir));
    return out;
}

// reports.jsonl: one {"record_id": ..., "report": ...} object per line.
std::map<std::string, std::string> load_reports(const fs::path& path) {
    std::ifstream f(path);
    if (!f) fail(errc::missing_file, "missing reports file: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(errc::parse_error, "bad reports JSONL line: " + std::string(e.what()));
        }
        out[j.at("record_id").get<std::string>()] = j.at("report").get<std::string>();
    }
    return out;
}

std::vector<std::string> align_reports(const DatasetManifest& manifest,
                                       const std::map<std::string, std::string>& reports) {
    std::vector<std::string> out;
    for (const auto& entry : manifest.records) {
        const auto it = reports.find(entry.record_id);
        if (it == reports.end())
            fail(errc::missing_file, "no report for record " + entry.record_id);
        out.push_back(it->second);
    }
    return out;
}

LabeledDataset build_labeled_dataset(const DatasetManifest& manifest, const fs::path& dir,
                                     const LabelSet& labels, size_t* dropped) {
    LabeledDataset ds;
    ds.label_names = labels.labels;
    for (const auto& entry : manifest.records) {
        ds.records.push_back(load_record(entry, dir));
        ds.targets.push_back(labels.encode(entry.labels, dropped));
    }
    ds.check();
    return ds;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) fail(errc::missing_file, "cannot open for write: " + path.string());
    f << text;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth_data(const fs::path& out, int n_records, int n_samples, std::uint64_t seed) {
    SyntheticConfig sc;
    sc.n_records = n_records;
    sc.num_samples = n_samples;
    sc.seed = seed;
    const SyntheticDataset data = make_synthetic_dataset(sc);

    fs::create_directories(out / "records");
    DatasetManifest manifest;
    for (size_t i = 0; i < data.records.size(); ++i) {
        const EcgRecord& r = data.records[i];
        ManifestEntry e;
        e.record_id = r.record_id;
        e.relative_path = "records/" + r.record_id + ".f32";
        e.num_leads = r.num_leads();
        e.num_samples = r.num_samples();
        e.sample_rate_hz = static_cast<int>(r.sample_rate_hz);
        e.labels = {data.codes[i]};
        e.report_codes = {data.codes[i]};
        write_blob(out / e.relative_path, r.samples);
        manifest.records.push_back(std::move(e));
    }
    save_manifest(manifest, out / "manifest.json");

    std::string raw;
    for (size_t i = 0; i < data.records.size(); ++i) {
        nlohmann::json j{{"record_id", data.records[i].record_id}, {"report", data.reports[i]}};
        raw += j.dump() + "\n";
    }
    write_text(out / "reports_raw.jsonl", raw);

    std::string diag;
    for (const auto& e : synthetic_diagnosis_entries()) {
        nlohmann::json j{{"key", e.key}, {"criteria", e.criteria}};
        diag += j.dump() + "\n";
    }
    write_text(out / "diagnoses.jsonl", diag);

    nlohmann::json abbrev = nlohmann::json::object();
    for (const auto& [code, phrase] : synthetic_abbreviations()) abbrev[code] = phrase;
    write_text(out / "abbreviations.json", abbrev.dump(2) + "\n");

    nlohmann::json labels{{"level", "all"}, {"labels", synthetic_label_names()}};
    write_text(out / "labels.json", labels.dump(2) + "\n");

    const NoiseBank bank = make_synthetic_noise_bank(sc.sample_rate_hz, 4 * n_samples, seed + 1);
    save_noise_bank(bank, out / "noise_bank");

    std::cout << "wrote " << manifest.records.size() << " records under " << out.string() << "\n";
    return 0;
}

int cmd_build_reports(const fs::path& manifest_path, const fs::path& diagnoses,
                      const fs::path& abbrev, const fs::path& out) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    const HashedNgramEmbedder embedder(256);
    const DiagnosisDB db = build_diagnosis_db(load_diagnosis_entries(diagnoses), embedder);
    for (const auto& w : db.build_warnings) std::cerr << "warning: " << w << "\n";
    const AbbreviationTable table = load_abbreviation_table(abbrev);
    const RetrievalConfig rcfg;

    std::string lines;
    for (const auto& entry : manifest.records) {
        const PatientMetadata meta{entry.age, entry.sex};
        const std::string report =
            compose_report(meta, entry.report_codes, table, db, embedder, rcfg);
        nlohmann::json j{{"record_id", entry.record_id}, {"report", report}};
        lines += j.dump() + "\n";
    }
    write_text(out, lines);
    std::cout << "composed " << manifest.records.size() << " reports -> " << out.string() << "\n";
    return 0;
}

int cmd_pretrain(const fs::path& config_path, const fs::path& out, const std::string& resume) {
    std::ifstream f(config_path);
    if (!f) fail(errc::missing_file, "missing config: " + config_path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, "bad config JSON: " + std::string(e.what()));
    }
    if (!j.contains("data"))
        fail(errc::invalid_config, "config needs a data section {manifest, reports, noise_bank}");
    const auto& dj = j.at("data");
    const fs::path manifest_path = dj.at("manifest").get<std::string>();
    const DatasetManifest manifest = load_manifest(manifest_path);
    const fs::path data_dir = manifest_path.parent_path();

    PretrainDataset data;
    data.records = load_all_records(manifest, data_dir);
    data.reports = align_reports(manifest, load_reports(dj.at("reports").get<std::string>()));

    std::optional<NoiseBank> bank;
    if (dj.contains("noise_bank")) bank = load_noise_bank(dj.at("noise_bank").get<std::string>());

    const PretrainConfig cfg = PretrainConfig::from_json(j);
    TrainState st = resume.empty() ? make_train_state(cfg) : load_checkpoint(resume, cfg);
    std::vector<StepMetrics> metrics;
    const fs::path final_dir =
        pretrain(st, data, bank ? &*bank : nullptr, out, &metrics);
    if (!metrics.empty())
        std::cout << "step " << metrics.back().step << " l_total " << metrics.back().l_total
                  << "\n";
    std::cout << "final checkpoint: " << final_dir.string() << "\n";
    return 0;
}

int cmd_finetune(const fs::path& checkpoint, const fs::path& manifest_path,
                 const fs::path& labels_path, const std::string& level, const fs::path& out,
                 const std::string& bank_path, FinetuneConfig fc, double val_frac) {
    LabelSet labels = LabelSet::load(labels_path);
    if (!level.empty() && labels.level != level)
        fail(errc::invalid_config,
             "label set is level '" + labels.level + "', requested '" + level + "'");
    const DatasetManifest manifest = load_manifest(manifest_path);
    size_t dropped = 0;
    const LabeledDataset all =
        build_labeled_dataset(manifest, manifest_path.parent_path(), labels, &dropped);
    if (dropped > 0) std::cerr << "warning: dropped " << dropped << " unmapped label codes\n";
    if (val_frac <= 0.0 || val_frac >= 1.0)
        fail(errc::invalid_config, "val fraction must be in (0,1)");

    LabeledDataset train, val;
    train.label_names = val.label_names = all.label_names;
    const size_t n_train =
        static_cast<size_t>(static_cast<double>(all.records.size()) * (1.0 - val_frac));
    for (size_t i = 0; i < all.records.size(); ++i) {
        LabeledDataset& d = i < n_train ? train : val;
        d.records.push_back(all.records[i]);
        d.targets.push_back(all.targets[i]);
    }

    std::optional<NoiseBank> bank;
    if (!bank_path.empty()) bank = load_noise_bank(bank_path);

    TrainState st = load_checkpoint(checkpoint);
    FinetuneResult result =
        finetune(st.student.encoder, train, val, fc, bank ? &*bank : nullptr);

    save_finetuned(result.model, st.cfg.encoder, out / "model");
    nlohmann::json mj;
    mj["val"] = result.val_report.to_json();
    mj["excluded_labels"] = result.excluded_labels;
    mj["epoch_val_auroc"] = result.epoch_val_auc;
    write_text(out / "metrics.json", mj.dump(2) + "\n");
    std::cout << "val macro-AUROC " << result.val_report.macro_auroc << "\n";
    std::cout << "model: " << (out / "model").string() << "\n";
    return 0;
}

int cmd_eval(const fs::path& model_path, const fs::path& manifest_path,
             const std::string& variant_str, std::uint64_t seed, const fs::path& out,
             const std::string& bank_path) {
    const FinetunedModel model = load_finetuned(model_path);
    LabelSet labels;
    labels.labels = model.label_names;
    const DatasetManifest manifest = load_manifest(manifest_path);
    size_t dropped = 0;
    LabeledDataset ds =
        build_labeled_dataset(manifest, manifest_path.parent_path(), labels, &dropped);

    const Variant variant = variant_from_name(variant_str);
    std::optional<NoiseBank> bank;
    if (!bank_path.empty()) bank = load_noise_bank(bank_path);
    ds.records = build_variant_records(ds.records, variant, bank ? &*bank : nullptr,
                                       CorruptionConfig{}, seed);

    const MetricsReport report = evaluate_model(model, ds);
    nlohmann::json j = report.to_json();
    j["variant"] = variant_str;
    j["seed"] = seed;
    write_text(out, j.dump(2) + "\n");
    std::cout << variant_str << " macro-AUROC " << report.macro_auroc << " macro-AP "
              << report.macro_ap << "\n";
    return 0;
}

int cmd_ablate(const fs::path& model_path, const fs::path& manifest_path, const std::string& axis,
               const std::vector<double>& points, std::uint64_t seed, const fs::path& out,
               const std::string& bank_path) {
    const FinetunedModel model = load_finetuned(model_path);
    LabelSet labels;
    labels.labels = model.label_names;
    const DatasetManifest manifest = load_manifest(manifest_path);
    const LabeledDataset ds =
        build_labeled_dataset(manifest, manifest_path.parent_path(), labels, nullptr);

    SweepAxis sweep_axis;
    if (axis == "lead_count")
        sweep_axis = SweepAxis::lead_count;
    else if (axis == "snr_db")
        sweep_axis = SweepAxis::snr_db;
    else
        fail(errc::invalid_config, "axis must be lead_count or snr_db, got '" + axis + "'");

    std::optional<NoiseBank> bank;
    if (!bank_path.empty()) bank = load_noise_bank(bank_path);

    const SweepTable table = ablation_sweep(model, ds, sweep_axis, points,
                                            bank ? &*bank : nullptr, CorruptionConfig{}, seed);
    write_text(out, table.to_csv());
    std::cout << "wrote " << table.rows.size() << " sweep rows -> " << out.string() << "\n";
    return 0;
}

int cmd_plot_data(const fs::path& sweep_path, const fs::path& out) {
    std::ifstream f(sweep_path);
    if (!f) fail(errc::missing_file, "missing sweep csv: " + sweep_path.string());
    std::string header;
    if (!std::getline(f, header)) fail(errc::parse_error, "empty sweep csv");
    const auto comma = header.find(',');
    if (comma == std::string::npos) fail(errc::parse_error, "sweep csv header needs two columns");
    const std::string x_label = header.substr(0, comma);
    const std::string y_label = header.substr(comma + 1);

    std::vector<double> xs, ys;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto pos = line.find(',');
        if (pos == std::string::npos) fail(errc::parse_error, "bad sweep csv row: " + line);
        try {
            xs.push_back(std::stod(line.substr(0, pos)));
            ys.push_back(std::stod(line.substr(pos + 1)));
        } catch (const std::exception&) {
            fail(errc::parse_error, "non-numeric sweep csv row: " + line);
        }
    }
    nlohmann::json j{{"x_label", x_label}, {"y_label", y_label}, {"x", xs}, {"y", ys}};
    write_text(out, j.dump(2) + "\n");
    std::cout << "wrote plot series (" << xs.size() << " points) -> " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Corruption-tolerant ECG self-supervised training framework"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Generate the synthetic demo corpus");
    std::string synth_out;
    int synth_records = 256, synth_samples = 1000;
    std::uint64_t synth_seed = 7;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--records", synth_records, "Number of records");
    synth->add_option("--samples", synth_samples, "Samples per record");
    synth->add_option("--seed", synth_seed, "Generator seed");

    // build-reports
    auto* reports = app.add_subcommand("build-reports", "Compose detailed reports from codes");
    std::string rep_manifest, rep_diag, rep_abbrev, rep_out;
    reports->add_option("--manifest", rep_manifest, "Dataset manifest")->required();
    reports->add_option("--diagnoses", rep_diag, "Diagnosis criteria JSONL")->required();
    reports->add_option("--abbrev", rep_abbrev, "Abbreviation table JSON")->required();
    reports->add_option("--out", rep_out, "Output reports JSONL")->required();

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Run self-supervised pretraining");
    std::string pre_config, pre_out, pre_resume;
    pre->add_option("--config", pre_config, "Pretraining config JSON")->required();
    pre->add_option("--out", pre_out, "Run output directory")->required();
    pre->add_option("--resume", pre_resume, "Checkpoint directory to resume from");

    // finetune
    auto* ft = app.add_subcommand("finetune", "Fine-tune a pretrained encoder");
    std::string ft_ckpt, ft_manifest, ft_labels, ft_level, ft_out, ft_bank;
    FinetuneConfig ft_cfg;
    double ft_val_frac = 0.2;
    ft->add_option("--checkpoint", ft_ckpt, "Pretraining checkpoint directory")->required();
    ft->add_option("--manifest", ft_manifest, "Labeled dataset manifest")->required();
    ft->add_option("--labels", ft_labels, "Label set JSON")->required();
    ft->add_option("--level", ft_level, "Expected label granularity");
    ft->add_option("--out", ft_out, "Run output directory")->required();
    ft->add_option("--noise-bank", ft_bank, "Noise bank directory");
    ft->add_option("--lr", ft_cfg.lr, "Learning rate");
    ft->add_option("--epochs", ft_cfg.epochs, "Training epochs");
    ft->add_option("--batch-size", ft_cfg.batch_size, "Batch size");
    ft->add_option("--seed", ft_cfg.seed, "Seed");
    ft->add_option("--val-frac", ft_val_frac, "Validation fraction");
    ft->add_flag("--freeze-encoder", ft_cfg.freeze_encoder, "Train the linear head only");
    ft->add_flag("--aggregate-variants", ft_cfg.aggregate_variants,
                 "Train on all four corruption variants per epoch");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a fine-tuned model on a variant test set");
    std::string ev_model, ev_manifest, ev_variant = "original", ev_out, ev_bank;
    std::uint64_t ev_seed = 0;
    ev->add_option("--model", ev_model, "Fine-tuned model directory")->required();
    ev->add_option("--manifest", ev_manifest, "Labeled dataset manifest")->required();
    ev->add_option("--variant", ev_variant,
                   "original|lead_missing|noisy|lead_missing_noisy");
    ev->add_option("--seed", ev_seed, "Corruption seed");
    ev->add_option("--out", ev_out, "Output metrics JSON")->required();
    ev->add_option("--noise-bank", ev_bank, "Noise bank directory");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Sweep lead count or SNR on a fine-tuned model");
    std::string ab_model, ab_manifest, ab_axis, ab_out, ab_bank;
    std::vector<double> ab_points;
    std::uint64_t ab_seed = 0;
    ab->add_option("--model", ab_model, "Fine-tuned model directory")->required();
    ab->add_option("--manifest", ab_manifest, "Labeled dataset manifest")->required();
    ab->add_option("--axis", ab_axis, "lead_count|snr_db")->required();
    ab->add_option("--points", ab_points, "Sweep points")->required()->delimiter(',');
    ab->add_option("--seed", ab_seed, "Corruption seed");
    ab->add_option("--out", ab_out, "Output sweep CSV")->required();
    ab->add_option("--noise-bank", ab_bank, "Noise bank directory");

    // plot-data
    auto* plot = app.add_subcommand("plot-data", "Convert a sweep CSV to plot-ready JSON");
    std::string plot_sweep, plot_out;
    plot->add_option("--sweep", plot_sweep, "Sweep CSV from ablate")->required();
    plot->add_option("--out", plot_out, "Output series JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth_data(synth_out, synth_records, synth_samples, synth_seed);
        if (*reports) return cmd_build_reports(rep_manifest, rep_diag, rep_abbrev, rep_out);
        if (*pre) return cmd_pretrain(pre_config, pre_out, pre_resume);
        if (*ft)
            return cmd_finetune(ft_ckpt, ft_manifest, ft_labels, ft_level, ft_out, ft_bank,
                                ft_cfg, ft_val_frac);
        if (*ev) return cmd_eval(ev_model, ev_manifest, ev_variant, ev_seed, ev_out, ev_bank);
        if (*ab)
            return cmd_ablate(ab_model, ab_manifest, ab_axis, ab_points, ab_seed, ab_out,
                              ab_bank);
        if (*plot) return cmd_plot_data(plot_sweep, plot_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
