#include <gtest/gtest.h>

#include <filesystem>
#include <tolerantecg/evalkit.hpp>
#include <tolerantecg/synthetic.hpp>

using namespace tecg;

namespace {

nn::EcgEncoderConfig tiny_encoder_config() {
    nn::EcgEncoderConfig cfg;
    cfg.num_leads = 12;
    cfg.stage_depths = {1, 1};
    cfg.stage_widths = {8, 16};
    cfg.dw_kernel = 7;
    cfg.expansion = 2;
    return cfg;
}

struct Fixture {
    SyntheticDataset data;
    SyntheticSplits splits;
    NoiseBank bank;
    nn::EcgEncoder encoder;
    FinetuneResult ft;
    double clean_test_auc = 0.0;

    Fixture() {
        SyntheticConfig sc;
        sc.n_records = 80;
        sc.num_samples = 128;
        sc.seed = 11;
        data = make_synthetic_dataset(sc);
        splits = split_synthetic(data);
        bank = make_synthetic_noise_bank(100.0, 512, 29);
        Rng rng(5);
        encoder = nn::EcgEncoder(tiny_encoder_config(), rng);

        FinetuneConfig fc;
        fc.lr = 3e-3;
        fc.epochs = 40;
        fc.batch_size = 8;
        fc.seed = 3;
        ft = finetune(encoder, splits.train, splits.val, fc, &bank);
        clean_test_auc = evaluate_model(ft.model, splits.test).macro_auroc;
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST(LabelSet, EncodesMultiHotAndCountsDrops) {
    LabelSet ls;
    ls.labels = {"A", "B", "C"};
    size_t dropped = 0;
    EXPECT_EQ(ls.encode({"C", "A"}, &dropped), (std::vector<int>{1, 0, 1}));
    EXPECT_EQ(dropped, 0u);
    EXPECT_EQ(ls.encode({"A", "X", "Y"}, &dropped), (std::vector<int>{1, 0, 0}));
    EXPECT_EQ(dropped, 2u);
    // Aggregation maps raw codes onto the vocabulary; unmapped codes drop.
    ls.aggregation_map = {{"a1", "A"}, {"a2", "A"}, {"b1", "B"}};
    dropped = 0;
    EXPECT_EQ(ls.encode({"a1", "a2", "b1", "zz"}, &dropped), (std::vector<int>{1, 1, 0}));
    EXPECT_EQ(dropped, 1u);
    EXPECT_THROW(LabelSet::from_json({{"labels", nlohmann::json::array()}}), Error);
    const LabelSet parsed = LabelSet::from_json(
        {{"level", "super"}, {"labels", {"A"}}, {"aggregation_map", {{"a1", "A"}}}});
    EXPECT_EQ(parsed.level, "super");
    EXPECT_EQ(parsed.aggregation_map.at("a1"), "A");
}

TEST(Variants, OriginalIsIdentityWithTaggedId) {
    const Fixture& f = fixture();
    const auto out = build_variant_records(f.data.records, Variant::original, nullptr,
                                           CorruptionConfig{}, 9);
    ASSERT_EQ(out.size(), f.data.records.size());
    for (size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].samples, f.data.records[i].samples);
        EXPECT_EQ(out[i].record_id, f.data.records[i].record_id + "#original");
    }
}

TEST(Variants, FixedSeedRebuildIsBitIdentical) {
    const Fixture& f = fixture();
    for (Variant v : all_variants()) {
        const auto a = build_variant_records(f.data.records, v, &f.bank, CorruptionConfig{}, 13);
        const auto b = build_variant_records(f.data.records, v, &f.bank, CorruptionConfig{}, 13);
        ASSERT_EQ(a.size(), b.size());
        for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].samples, b[i].samples);
    }
    const auto a = build_variant_records(f.data.records, Variant::noisy, &f.bank,
                                         CorruptionConfig{}, 13);
    const auto c = build_variant_records(f.data.records, Variant::noisy, &f.bank,
                                         CorruptionConfig{}, 14);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i].samples != c[i].samples;
    EXPECT_TRUE(any_diff);
}

TEST(Variants, PersistedDatasetMatchesInMemoryBuild) {
    const Fixture& f = fixture();
    const auto base = std::filesystem::temp_directory_path() / "tecg_variants";
    std::filesystem::remove_all(base);
    std::filesystem::create_directories(base / "src");

    DatasetManifest manifest;
    for (size_t i = 0; i < 4; ++i) {
        const EcgRecord& r = f.data.records[i];
        ManifestEntry e;
        e.record_id = r.record_id;
        e.relative_path = r.record_id + ".f32";
        e.num_leads = r.num_leads();
        e.num_samples = r.num_samples();
        e.sample_rate_hz = static_cast<int>(r.sample_rate_hz);
        write_blob(base / "src" / e.relative_path, r.samples);
        manifest.records.push_back(std::move(e));
    }
    save_manifest(manifest, base / "src" / "manifest.json");

    const CorruptionConfig cc;
    build_variant_dataset(manifest, base / "src", Variant::lead_missing, &f.bank, cc, 21,
                          base / "out");
    const DatasetManifest out = load_manifest(base / "out" / "manifest.json");
    ASSERT_EQ(out.records.size(), 4u);

    std::vector<EcgRecord> src;
    for (size_t i = 0; i < 4; ++i) src.push_back(f.data.records[i]);
    const auto expected = build_variant_records(src, Variant::lead_missing, &f.bank, cc, 21);
    for (size_t i = 0; i < 4; ++i) {
        const EcgRecord loaded = load_record(out.records[i], base / "out");
        EXPECT_EQ(loaded.samples, expected[i].samples);
    }
}

TEST(Finetune, LearnsTheSeparableToyProblem) {
    const Fixture& f = fixture();
    EXPECT_TRUE(f.ft.excluded_labels.empty());
    EXPECT_GE(f.ft.val_report.macro_auroc, 0.9);
    EXPECT_GE(f.clean_test_auc, 0.9);
    // Best-on-validation selection reports the max of the epoch curve.
    double best = 0.0;
    for (double a : f.ft.epoch_val_auc) best = std::max(best, a);
    EXPECT_DOUBLE_EQ(f.ft.val_report.macro_auroc, best);
    EXPECT_EQ(f.ft.epoch_val_auc.size(), 40u);
}

TEST(Finetune, IsDeterministicForAFixedSeed) {
    const Fixture& f = fixture();
    FinetuneConfig fc;
    fc.lr = 3e-3;
    fc.epochs = 2;
    fc.batch_size = 8;
    fc.seed = 3;
    fc.aggregate_variants = true;
    const FinetuneResult a = finetune(f.encoder, f.splits.train, f.splits.val, fc, &f.bank);
    const FinetuneResult b = finetune(f.encoder, f.splits.train, f.splits.val, fc, &f.bank);
    ASSERT_EQ(a.epoch_val_auc.size(), b.epoch_val_auc.size());
    for (size_t i = 0; i < a.epoch_val_auc.size(); ++i)
        EXPECT_EQ(a.epoch_val_auc[i], b.epoch_val_auc[i]);
}

TEST(Finetune, FrozenEncoderStaysBitIdentical) {
    const Fixture& f = fixture();
    FinetuneConfig fc;
    fc.epochs = 2;
    fc.batch_size = 8;
    fc.freeze_encoder = true;
    fc.seed = 4;
    FinetuneResult r = finetune(f.encoder, f.splits.train, f.splits.val, fc, &f.bank);
    nn::EcgEncoder original = f.encoder;
    EXPECT_TRUE(nn::params_equal(r.model.encoder, original));
}

TEST(Finetune, ZeroPositiveLabelsAreExcludedAndReported) {
    const Fixture& f = fixture();
    LabeledDataset train = f.splits.train, val = f.splits.val;
    for (LabeledDataset* d : {&train, &val}) {
        d->label_names.push_back("PAC");
        for (auto& y : d->targets) y.push_back(0);
    }
    FinetuneConfig fc;
    fc.epochs = 1;
    fc.batch_size = 8;
    fc.seed = 5;
    const FinetuneResult r = finetune(f.encoder, train, val, fc, &f.bank);
    ASSERT_EQ(r.excluded_labels.size(), 1u);
    EXPECT_EQ(r.excluded_labels[0], "PAC");
    ASSERT_EQ(r.val_report.skipped.size(), 1u);
    EXPECT_EQ(r.val_report.skipped[0], "PAC");

    LabeledDataset empty = train;
    for (auto& y : empty.targets) std::fill(y.begin(), y.end(), 0);
    EXPECT_THROW(finetune(f.encoder, empty, val, fc, &f.bank), Error);
}

TEST(Finetune, ModelArchiveRoundTripsBitExactly) {
    const Fixture& f = fixture();
    const auto dir = std::filesystem::temp_directory_path() / "tecg_ft_model";
    std::filesystem::remove_all(dir);
    FinetunedModel m = f.ft.model;
    save_finetuned(m, tiny_encoder_config(), dir);
    FinetunedModel back = load_finetuned(dir);
    EXPECT_EQ(back.label_names, m.label_names);
    EXPECT_TRUE(nn::params_equal(back, m));
    const std::vector<double> a = m.score(f.splits.test.records[0]);
    const std::vector<double> b = back.score(f.splits.test.records[0]);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Evaluate, RejectsMismatchedLabelVocabulary) {
    const Fixture& f = fixture();
    LabeledDataset wide = f.splits.test;
    wide.label_names.push_back("extra");
    for (auto& y : wide.targets) y.push_back(0);
    EXPECT_THROW(evaluate_model(f.ft.model, wide), Error);
    LabeledDataset empty;
    empty.label_names = f.splits.test.label_names;
    EXPECT_THROW(evaluate_model(f.ft.model, empty), Error);
}

TEST(Sweep, KeepingAllLeadsMatchesCleanEvaluation) {
    const Fixture& f = fixture();
    const SweepTable t = ablation_sweep(f.ft.model, f.splits.test, SweepAxis::lead_count,
                                        {12.0}, &f.bank, CorruptionConfig{}, 41);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(t.rows[0].first, 12.0);
    EXPECT_NEAR(t.rows[0].second, f.clean_test_auc, 1e-12);
}

TEST(Sweep, HighSnrApproachesCleanAndBeatsHeavyNoise) {
    const Fixture& f = fixture();
    const SweepTable t = ablation_sweep(f.ft.model, f.splits.test, SweepAxis::snr_db,
                                        {-10.0, 40.0}, &f.bank, CorruptionConfig{}, 43);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_NEAR(t.rows[1].second, f.clean_test_auc, 0.05);
    EXPECT_GE(t.rows[1].second, t.rows[0].second - 1e-9);
}

TEST(Sweep, CsvAndErrorPaths) {
    const Fixture& f = fixture();
    SweepTable t;
    t.axis = SweepAxis::snr_db;
    t.rows = {{-10.0, 0.5}, {0.0, 0.75}};
    EXPECT_EQ(t.to_csv(), "snr_db,macro_auroc\n-10,0.5\n0,0.75\n");
    EXPECT_THROW(ablation_sweep(f.ft.model, f.splits.test, SweepAxis::lead_count, {},
                                &f.bank, CorruptionConfig{}, 1),
                 Error);
    EXPECT_THROW(ablation_sweep(f.ft.model, f.splits.test, SweepAxis::lead_count, {13.0},
                                &f.bank, CorruptionConfig{}, 1),
                 Error);
    EXPECT_THROW(ablation_sweep(f.ft.model, f.splits.test, SweepAxis::snr_db, {0.0}, nullptr,
                                CorruptionConfig{}, 1),
                 Error);
}
