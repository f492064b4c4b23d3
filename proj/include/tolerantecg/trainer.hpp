#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/checkpoint.hpp"
#include "tolerantecg/corruption.hpp"
#include "tolerantecg/losses.hpp"
#include "tolerantecg/nn/encoder.hpp"
#include "tolerantecg/nn/heads.hpp"
#include "tolerantecg/nn/optim.hpp"

namespace tecg {

struct PretrainConfig {
    nn::EcgEncoderConfig encoder;
    CorruptionConfig corruption;
    DistillConfig distill;
    ContrastiveConfig contrastive;
    LossWeights weights;
    double lr = 3e-5;
    double weight_decay = 0.04;
    double clip_norm = 3.0;
    int batch_size = 32;
    int epochs = 10;
    double ema_momentum_start = 0.996;  // cosine ramp to 1.0 over total steps
    int proj_dim = 64;
    int text_feature_dim = 256;
    bool uni_distill = false;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0: final checkpoint only

    void validate() const {
        encoder.validate();
        corruption.validate();
        distill.validate();
        weights.validate();
        if (lr <= 0.0 || batch_size < 2 || epochs < 1 || proj_dim < 1 || text_feature_dim < 1)
            fail(errc::invalid_config, "pretrain: bad optimizer/batch configuration");
        if (ema_momentum_start < 0.0 || ema_momentum_start > 1.0)
            fail(errc::invalid_config, "pretrain: ema momentum out of [0,1]");
    }

    nlohmann::json to_json() const {
        return {{"encoder", encoder.to_json()},
                {"corruption",
                 {{"n_major", corruption.n_major},
                  {"k_minor", corruption.k_minor},
                  {"major_keep_min", corruption.major_keep_min},
                  {"major_keep_max", corruption.major_keep_max},
                  {"minor_keep_min", corruption.minor_keep_min},
                  {"minor_keep_max", corruption.minor_keep_max},
                  {"per_type_noise_p", corruption.per_type_noise_p},
                  {"per_lead_noise_p", corruption.per_lead_noise_p},
                  {"snr_db_min", corruption.snr_db_min},
                  {"snr_db_max", corruption.snr_db_max},
                  {"minor_snr_db_min", corruption.minor_snr_db_min},
                  {"minor_snr_db_max", corruption.minor_snr_db_max},
                  {"downstream_mask_p", corruption.downstream_mask_p},
                  {"downstream_noise_p", corruption.downstream_noise_p}}},
                {"distill",
                 {{"tau_teacher", distill.tau_teacher},
                  {"tau_student", distill.tau_student},
                  {"center_momentum", distill.center_momentum},
                  {"hidden", distill.hidden},
                  {"bottleneck", distill.bottleneck},
                  {"logit_dim", distill.logit_dim}}},
                {"contrastive",
                 {{"tau_init", contrastive.tau_init},
                  {"tau_min", contrastive.tau_min},
                  {"tau_max", contrastive.tau_max}}},
                {"weights", {{"alpha", weights.alpha}, {"beta", weights.beta}}},
                {"optim",
                 {{"lr", lr},
                  {"weight_decay", weight_decay},
                  {"clip_norm", clip_norm},
                  {"batch_size", batch_size},
                  {"epochs", epochs},
                  {"ema_momentum_start", ema_momentum_start}}},
                {"proj_dim", proj_dim},
                {"text_feature_dim", text_feature_dim},
                {"uni_distill", uni_distill},
                {"seed", seed},
                {"checkpoint_every", checkpoint_every}};
    }

    static PretrainConfig from_json(const nlohmann::json& j) {
        PretrainConfig c;
        if (j.contains("encoder")) c.encoder = nn::EcgEncoderConfig::from_json(j.at("encoder"));
        if (j.contains("corruption")) {
            const auto& cj = j.at("corruption");
            auto get = [&](const char* k, auto& field) {
                if (cj.contains(k)) field = cj.at(k).get<std::decay_t<decltype(field)>>();
            };
            get("n_major", c.corruption.n_major);
            get("k_minor", c.corruption.k_minor);
            get("major_keep_min", c.corruption.major_keep_min);
            get("major_keep_max", c.corruption.major_keep_max);
            get("minor_keep_min", c.corruption.minor_keep_min);
            get("minor_keep_max", c.corruption.minor_keep_max);
            get("per_type_noise_p", c.corruption.per_type_noise_p);
            get("per_lead_noise_p", c.corruption.per_lead_noise_p);
            get("snr_db_min", c.corruption.snr_db_min);
            get("snr_db_max", c.corruption.snr_db_max);
            get("minor_snr_db_min", c.corruption.minor_snr_db_min);
            get("minor_snr_db_max", c.corruption.minor_snr_db_max);
            get("downstream_mask_p", c.corruption.downstream_mask_p);
            get("downstream_noise_p", c.corruption.downstream_noise_p);
        }
        if (j.contains("distill")) {
            const auto& dj = j.at("distill");
            if (dj.contains("tau_teacher")) c.distill.tau_teacher = dj.at("tau_teacher").get<double>();
            if (dj.contains("tau_student")) c.distill.tau_student = dj.at("tau_student").get<double>();
            if (dj.contains("center_momentum"))
                c.distill.center_momentum = dj.at("center_momentum").get<double>();
            if (dj.contains("hidden")) c.distill.hidden = dj.at("hidden").get<int>();
            if (dj.contains("bottleneck")) c.distill.bottleneck = dj.at("bottleneck").get<int>();
            if (dj.contains("logit_dim")) c.distill.logit_dim = dj.at("logit_dim").get<int>();
        }
        if (j.contains("contrastive")) {
            const auto& tj = j.at("contrastive");
            if (tj.contains("tau_init")) c.contrastive.tau_init = tj.at("tau_init").get<double>();
            if (tj.contains("tau_min")) c.contrastive.tau_min = tj.at("tau_min").get<double>();
            if (tj.contains("tau_max")) c.contrastive.tau_max = tj.at("tau_max").get<double>();
        }
        if (j.contains("weights")) {
            c.weights.alpha = j.at("weights").value("alpha", 1.0);
            c.weights.beta = j.at("weights").value("beta", 1.0);
        }
        if (j.contains("optim")) {
            const auto& oj = j.at("optim");
            if (oj.contains("lr")) c.lr = oj.at("lr").get<double>();
            if (oj.contains("weight_decay")) c.weight_decay = oj.at("weight_decay").get<double>();
            if (oj.contains("clip_norm")) c.clip_norm = oj.at("clip_norm").get<double>();
            if (oj.contains("batch_size")) c.batch_size = oj.at("batch_size").get<int>();
            if (oj.contains("epochs")) c.epochs = oj.at("epochs").get<int>();
            if (oj.contains("ema_momentum_start"))
                c.ema_momentum_start = oj.at("ema_momentum_start").get<double>();
        }
        if (j.contains("proj_dim")) c.proj_dim = j.at("proj_dim").get<int>();
        if (j.contains("text_feature_dim")) c.text_feature_dim = j.at("text_feature_dim").get<int>();
        if (j.contains("uni_distill")) c.uni_distill = j.at("uni_distill").get<bool>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Model bundles
// ---------------------------------------------------------------------------

struct StudentModel {
    nn::EcgEncoder encoder;
    nn::ProjectionHead proj;
    nn::DinoHead dino;

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) {
        encoder.visit(prefix + "enc.", fn);
        proj.visit(prefix + "proj", fn);
        dino.visit(prefix + "dino", fn);
    }
};

// Teachers mirror the student's encoder + distillation head; they receive no
// gradients and track the student by EMA only.
struct TeacherModel {
    nn::EcgEncoder encoder;
    nn::DinoHead dino;

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) {
        encoder.visit(prefix + "enc.", fn);
        dino.visit(prefix + "dino", fn);
    }
};

struct EmaSubset {
    nn::EcgEncoder* encoder;
    nn::DinoHead* dino;

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) {
        encoder->visit(prefix + "enc.", fn);
        dino->visit(prefix + "dino", fn);
    }
};

struct TextModel {
    nn::TextTower tower;
    nn::ProjectionHead proj;

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) {
        tower.visit(prefix + "tower", fn);
        proj.visit(prefix + "proj", fn);
    }
};

struct TrainState {
    PretrainConfig cfg;
    StudentModel student;
    std::vector<TeacherModel> teachers;  // duo: [mask, noise]; uni: [shared]
    std::vector<Vec> centers;            // one per teacher
    TextModel text;
    nn::Param log_tau;  // 1x1, contrastive temperature in log space
    nn::AdamW opt;
    Rng rng;
    std::int64_t step = 0;

    double tau() const { return std::exp(log_tau.value(0, 0)); }

    int teacher_index(ViewMode mode) const {
        if (cfg.uni_distill) return 0;
        return mode == ViewMode::mask ? 0 : 1;
    }

    // Everything that takes a gradient step.
    std::vector<std::pair<std::string, nn::Param*>> trainable_params() {
        std::vector<std::pair<std::string, nn::Param*>> out;
        const auto add = [&](const std::string& name, nn::Param& p) { out.emplace_back(name, &p); };
        student.visit("student.", add);
        text.visit("text.", add);
        add("log_tau", log_tau);
        return out;
    }

    void zero_grads() {
        for (auto& [name, p] : trainable_params()) p->zero_grad();
    }

    void clamp_tau() {
        const double lo = std::log(cfg.contrastive.tau_min);
        const double hi = std::log(cfg.contrastive.tau_max);
        log_tau.value(0, 0) = std::clamp(log_tau.value(0, 0), lo, hi);
    }
};

inline TrainState make_train_state(const PretrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    Rng init_rng = Rng(cfg.seed).split(0xA11C);
    st.student.encoder = nn::EcgEncoder(cfg.encoder, init_rng);
    st.student.proj.init(cfg.encoder.embed_dim(), cfg.proj_dim, init_rng);
    st.student.dino.init(cfg.encoder.embed_dim(), cfg.distill.hidden, cfg.distill.bottleneck,
                         cfg.distill.logit_dim, init_rng);
    const int n_teachers = cfg.uni_distill ? 1 : 2;
    for (int i = 0; i < n_teachers; ++i) {
        TeacherModel t;
        t.encoder = st.student.encoder;  // teachers start as exact copies
        t.dino = st.student.dino;
        st.teachers.push_back(std::move(t));
        st.centers.push_back(Vec::Zero(cfg.distill.logit_dim));
    }
    st.text.tower.init(std::make_shared<HashedNgramEmbedder>(cfg.text_feature_dim),
                       cfg.encoder.embed_dim(), init_rng);
    st.text.proj.init(cfg.encoder.embed_dim(), cfg.proj_dim, init_rng);
    st.log_tau.init_constant(1, 1, std::log(cfg.contrastive.tau_init));
    st.opt = nn::AdamW({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.clip_norm});
    st.rng = Rng(cfg.seed).split(0xD47A);
    return st;
}

// ---------------------------------------------------------------------------
// One training step
// ---------------------------------------------------------------------------

struct StepMetrics {
    std::int64_t step = 0;
    ViewMode mode = ViewMode::mask;
    double l_report = 0.0;
    double l_distill = 0.0;
    double l_total = 0.0;
    double tau = 0.0;
    double ema_momentum = 0.0;

    nlohmann::json to_json() const {
        return {{"step", step},
                {"mode", mode == ViewMode::mask ? "mask" : "noise"},
                {"l_report", l_report},
                {"l_distill", l_distill},
                {"l_total", l_total},
                {"tau", tau},
                {"ema_m", ema_momentum}};
    }
};

// Even steps run the lead-missing branch, odd steps the noise branch; the
// contrastive pipeline runs every step. Only the active teacher is EMA
// updated and only the active mode's center moves.
inline StepMetrics train_step(TrainState& st, const std::vector<const EcgRecord*>& records,
                              const std::vector<std::string>& reports, const NoiseBank* bank,
                              double ema_momentum) {
    const int batch = static_cast<int>(records.size());
    if (batch < 2) fail(errc::batch_too_small, "train_step: batch must be >= 2");
    if (static_cast<int>(reports.size()) != batch)
        fail(errc::dimension_mismatch, "train_step: reports not aligned with records");

    const ViewMode mode = (st.step % 2 == 0) ? ViewMode::mask : ViewMode::noise;
    TeacherModel& teacher = st.teachers[static_cast<size_t>(st.teacher_index(mode))];
    Vec& center = st.centers[static_cast<size_t>(st.teacher_index(mode))];
    const DistillConfig& dc = st.cfg.distill;

    struct ViewPass {
        nn::EcgEncoder::Cache enc;
        nn::DinoHead::Cache dino;
    };
    struct RecordPass {
        ViewBatch views;
        std::vector<ViewPass> student_views;
        Mat student_logits;  // (K+N) x D
        Mat teacher_logits;  // K x D
        nn::EcgEncoder::Cache orig_enc;
        nn::ProjectionHead::Cache orig_proj;
        nn::TextTower::Cache text_tower;
        nn::ProjectionHead::Cache text_proj;
        DuoDistillResult distill;
    };

    std::vector<RecordPass> passes(static_cast<size_t>(batch));
    Mat s_rows(batch, st.cfg.proj_dim), t_rows(batch, st.cfg.proj_dim);
    Mat all_teacher_logits(batch * st.cfg.corruption.k_minor, dc.logit_dim);
    double distill_sum = 0.0;

    for (int b = 0; b < batch; ++b) {
        RecordPass& rp = passes[static_cast<size_t>(b)];
        rp.views = build_views(*records[static_cast<size_t>(b)], mode, bank, st.cfg.corruption,
                               st.rng);

        const int total_views = rp.views.total_views();
        const int k_minor = static_cast<int>(rp.views.minor_views.size());
        rp.student_views.resize(static_cast<size_t>(total_views));
        rp.student_logits.resize(total_views, dc.logit_dim);
        for (int v = 0; v < total_views; ++v) {
            ViewPass& vp = rp.student_views[static_cast<size_t>(v)];
            const Eigen::RowVectorXd embed =
                st.student.encoder.forward(nn::to_time_major(rp.views.view(v)), vp.enc);
            rp.student_logits.row(v) = st.student.dino.forward(embed, vp.dino);
        }

        rp.teacher_logits.resize(k_minor, dc.logit_dim);
        for (int v = 0; v < k_minor; ++v) {
            nn::EcgEncoder::Cache tec;
            nn::DinoHead::Cache tdc;
            const Eigen::RowVectorXd embed =
                teacher.encoder.forward(nn::to_time_major(rp.views.view(v)), tec);
            rp.teacher_logits.row(v) = teacher.dino.forward(embed, tdc);
        }
        all_teacher_logits.middleRows(b * k_minor, k_minor) = rp.teacher_logits;

        rp.distill = duodistill_loss(rp.teacher_logits, rp.student_logits, center, dc.tau_teacher,
                                     dc.tau_student);
        distill_sum += rp.distill.loss;

        // Contrastive branch sees the uncorrupted signal and its report.
        const Eigen::RowVectorXd orig_embed = st.student.encoder.forward(
            nn::to_time_major(*records[static_cast<size_t>(b)]), rp.orig_enc);
        s_rows.row(b) = st.student.proj.forward(orig_embed, rp.orig_proj);
        const Eigen::RowVectorXd text_embed =
            st.text.tower.forward(reports[static_cast<size_t>(b)], rp.text_tower);
        t_rows.row(b) = st.text.proj.forward(text_embed, rp.text_proj);
    }

    const double tau = st.tau();
    const ReportAlignResult align = report_align_loss(s_rows, t_rows, tau);
    const double l_distill = distill_sum / batch;
    const double l_total = total_loss(align.loss, l_distill, st.cfg.weights);
    if (!std::isfinite(l_total))
        fail(errc::non_finite, "train_step: non-finite total loss at step " +
                                   std::to_string(st.step) + " (report=" +
                                   std::to_string(align.loss) +
                                   ", distill=" + std::to_string(l_distill) + ")");

    st.zero_grads();
    const double alpha = st.cfg.weights.alpha;
    const double beta = st.cfg.weights.beta;
    for (int b = 0; b < batch; ++b) {
        RecordPass& rp = passes[static_cast<size_t>(b)];
        if (alpha != 0.0) {
            const Eigen::RowVectorXd g_embed =
                st.student.proj.backward(alpha * align.grad_s.row(b), rp.orig_proj);
            st.student.encoder.backward(g_embed, rp.orig_enc);
            const Eigen::RowVectorXd g_text =
                st.text.proj.backward(alpha * align.grad_t.row(b), rp.text_proj);
            st.text.tower.backward(g_text, rp.text_tower);
        }
        if (beta != 0.0) {
            const double scale = beta / batch;
            for (int v = 0; v < rp.views.total_views(); ++v) {
                ViewPass& vp = rp.student_views[static_cast<size_t>(v)];
                const Eigen::RowVectorXd g_embed = st.student.dino.backward(
                    scale * rp.distill.grad_student.row(v), vp.dino);
                st.student.encoder.backward(g_embed, vp.enc);
            }
        }
    }
    if (alpha != 0.0) st.log_tau.grad(0, 0) += alpha * align.grad_tau * tau;

    st.opt.step(st.trainable_params());
    st.clamp_tau();

    EmaSubset teacher_view{&teacher.encoder, &teacher.dino};
    EmaSubset student_view{&st.student.encoder, &st.student.dino};
    nn::ema_update(teacher_view, student_view, ema_momentum);
    center = update_center(center, all_teacher_logits, dc.center_momentum);

    StepMetrics m;
    m.step = st.step;
    m.mode = mode;
    m.l_report = align.loss;
    m.l_distill = l_distill;
    m.l_total = l_total;
    m.tau = st.tau();
    m.ema_momentum = ema_momentum;
    ++st.step;
    return m;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline void save_checkpoint(TrainState& st, const std::filesystem::path& dir) {
    TensorArchive a;
    archive_module(st.student, a, "student.");
    for (size_t i = 0; i < st.teachers.size(); ++i) {
        archive_module(st.teachers[i], a, "teacher" + std::to_string(i) + ".");
        a.put("center" + std::to_string(i), st.centers[i]);
    }
    archive_module(st.text, a, "text.");
    a.put("log_tau", st.log_tau.value);
    for (const auto& [name, slot] : st.opt.state()) {
        a.put("opt.m." + name, slot.m);
        a.put("opt.v." + name, slot.v);
    }
    nlohmann::json extra;
    extra["config"] = st.cfg.to_json();
    extra["step"] = st.step;
    extra["opt_step"] = st.opt.step_count();
    extra["rng_state"] = std::to_string(st.rng.state());
    a.save(dir, extra);
}

inline TrainState load_checkpoint(const std::filesystem::path& dir,
                                  const std::optional<PretrainConfig>& override_cfg = std::nullopt) {
    nlohmann::json extra;
    TensorArchive a = TensorArchive::load(dir, &extra);
    PretrainConfig cfg =
        override_cfg ? *override_cfg : PretrainConfig::from_json(extra.at("config"));
    TrainState st = make_train_state(cfg);
    restore_module(st.student, a, "student.");
    for (size_t i = 0; i < st.teachers.size(); ++i) {
        restore_module(st.teachers[i], a, "teacher" + std::to_string(i) + ".");
        st.centers[i] = a.get("center" + std::to_string(i));
    }
    restore_module(st.text, a, "text.");
    st.log_tau.value = a.get("log_tau");
    for (auto& [name, p] : st.trainable_params()) {
        if (a.has("opt.m." + name)) {
            auto& slot = st.opt.state()[name];
            slot.m = a.get("opt.m." + name);
            slot.v = a.get("opt.v." + name);
        }
    }
    st.step = extra.at("step").get<std::int64_t>();
    st.opt.set_step_count(extra.at("opt_step").get<std::int64_t>());
    st.rng.set_state(std::stoull(extra.at("rng_state").get<std::string>()));
    return st;
}

// ---------------------------------------------------------------------------
// Full pretraining loop
// ---------------------------------------------------------------------------

inline double ema_momentum_at(double m_start, std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 1) return m_start;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return 1.0 - (1.0 - m_start) * 0.5 * (1.0 + std::cos(M_PI * t));
}

struct PretrainDataset {
    std::vector<EcgRecord> records;
    std::vector<std::string> reports;  // aligned with records
};

inline std::int64_t pretrain_total_steps(const PretrainConfig& cfg, size_t n_records) {
    const auto per_epoch =
        static_cast<std::int64_t>((n_records + static_cast<size_t>(cfg.batch_size) - 1) /
                                  static_cast<size_t>(cfg.batch_size));
    return per_epoch * cfg.epochs;
}

// Deterministic single-worker loop. The epoch order is derived from
// (seed, epoch) rather than the live RNG so a resumed run replays the exact
// schedule.
inline std::filesystem::path pretrain(TrainState& st, const PretrainDataset& data,
                                      const NoiseBank* bank, const std::filesystem::path& out_dir,
                                      std::vector<StepMetrics>* metrics_out = nullptr) {
    const size_t n = data.records.size();
    if (n < 2) fail(errc::batch_too_small, "pretrain: need at least 2 records");
    if (data.reports.size() != n)
        fail(errc::dimension_mismatch, "pretrain: reports not aligned with records");

    std::filesystem::create_directories(out_dir);
    std::ofstream metrics_file(out_dir / "metrics.jsonl", std::ios::app);

    const std::int64_t steps_per_epoch = pretrain_total_steps(st.cfg, n) / st.cfg.epochs;
    const std::int64_t total_steps = steps_per_epoch * st.cfg.epochs;

    while (st.step < total_steps) {
        const std::int64_t epoch = st.step / steps_per_epoch;
        const std::int64_t pos = st.step % steps_per_epoch;

        std::vector<size_t> perm(n);
        for (size_t i = 0; i < n; ++i) perm[i] = i;
        Rng order_rng = Rng(st.cfg.seed).split(0xE90C0000ULL + static_cast<std::uint64_t>(epoch));
        order_rng.shuffle(perm);

        const size_t begin = static_cast<size_t>(pos) * static_cast<size_t>(st.cfg.batch_size);
        const size_t end = std::min(n, begin + static_cast<size_t>(st.cfg.batch_size));
        std::vector<const EcgRecord*> records;
        std::vector<std::string> reports;
        for (size_t i = begin; i < end; ++i) {
            records.push_back(&data.records[perm[i]]);
            reports.push_back(data.reports[perm[i]]);
        }
        if (records.size() < 2) {  // a trailing singleton borrows the epoch's first record
            records.push_back(&data.records[perm[0]]);
            reports.push_back(data.reports[perm[0]]);
        }

        const double m = ema_momentum_at(st.cfg.ema_momentum_start, st.step, total_steps);
        const StepMetrics sm = train_step(st, records, reports, bank, m);
        if (metrics_file) metrics_file << sm.to_json().dump() << "\n";
        if (metrics_out) metrics_out->push_back(sm);

        if (st.cfg.checkpoint_every > 0 && st.step % st.cfg.checkpoint_every == 0 &&
            st.step < total_steps)
            save_checkpoint(st, out_dir / ("step_" + std::to_string(st.step)));
    }
    const auto final_dir = out_dir / "final";
    save_checkpoint(st, final_dir);
    return final_dir;
}

}  // namespace tecg
