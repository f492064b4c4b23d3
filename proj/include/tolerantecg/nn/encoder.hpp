#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/nn/layers.hpp"
#include "tolerantecg/signal.hpp"

namespace tecg::nn {

// 1-D ConvNeXt-V2-style encoder configuration. embed_dim is the last stage
// width; the stem and downsample kernels equal their strides so strided
// windows tile the input exactly.
struct EcgEncoderConfig {
    int num_leads = 12;
    std::vector<int> stage_depths = {2, 2, 2, 2};
    std::vector<int> stage_widths = {24, 48, 96, 192};
    int stem_kernel = 4;
    int stem_stride = 4;
    int dw_kernel = 7;
    int expansion = 4;

    int embed_dim() const { return stage_widths.back(); }

    int total_stride() const {
        int s = stem_stride;
        for (size_t i = 1; i < stage_widths.size(); ++i) s *= 2;
        return s;
    }

    void validate() const {
        if (stage_depths.size() != stage_widths.size() || stage_depths.empty())
            fail(errc::invalid_config, "encoder: depths/widths must be same nonempty length");
        for (int d : stage_depths)
            if (d < 1) fail(errc::invalid_config, "encoder: stage depth must be positive");
        for (int w : stage_widths)
            if (w < 1) fail(errc::invalid_config, "encoder: stage width must be positive");
        if (num_leads < 1 || stem_kernel < 1 || expansion < 1 || dw_kernel < 1 ||
            dw_kernel % 2 == 0)
            fail(errc::invalid_config, "encoder: bad stem/block parameters");
        if (stem_kernel != stem_stride)
            fail(errc::invalid_config, "encoder: stem kernel must equal stem stride");
    }

    nlohmann::json to_json() const {
        return {{"num_leads", num_leads},       {"stage_depths", stage_depths},
                {"stage_widths", stage_widths}, {"stem_kernel", stem_kernel},
                {"stem_stride", stem_stride},   {"dw_kernel", dw_kernel},
                {"expansion", expansion}};
    }

    static EcgEncoderConfig from_json(const nlohmann::json& j) {
        EcgEncoderConfig c;
        if (j.contains("num_leads")) c.num_leads = j.at("num_leads").get<int>();
        if (j.contains("stage_depths")) c.stage_depths = j.at("stage_depths").get<std::vector<int>>();
        if (j.contains("stage_widths")) c.stage_widths = j.at("stage_widths").get<std::vector<int>>();
        if (j.contains("stem_kernel")) c.stem_kernel = j.at("stem_kernel").get<int>();
        if (j.contains("stem_stride")) c.stem_stride = j.at("stem_stride").get<int>();
        if (j.contains("dw_kernel")) c.dw_kernel = j.at("dw_kernel").get<int>();
        if (j.contains("expansion")) c.expansion = j.at("expansion").get<int>();
        c.validate();
        return c;
    }

    bool operator==(const EcgEncoderConfig&) const = default;
};

struct ConvNextBlock {
    DepthwiseConv dw;
    LayerNorm ln;
    Linear pw1;
    Gelu act;
    Grn grn;
    Linear pw2;

    void init(int channels, int dw_kernel, int expansion, Rng& rng) {
        dw.init(dw_kernel, channels, rng);
        ln.init(channels);
        pw1.init(channels, channels * expansion, rng);
        grn.init(channels * expansion);
        pw2.init(channels * expansion, channels, rng);
    }

    struct Cache {
        DepthwiseConv::Cache dw;
        LayerNorm::Cache ln;
        Linear::Cache pw1;
        Gelu::Cache act;
        Grn::Cache grn;
        Linear::Cache pw2;
    };

    Mat forward(const Mat& x, Cache& c) const {
        Mat h = dw.forward(x, c.dw);
        h = ln.forward(h, c.ln);
        h = pw1.forward(h, c.pw1);
        h = act.forward(h, c.act);
        h = grn.forward(h, c.grn);
        h = pw2.forward(h, c.pw2);
        return x + h;
    }

    Mat backward(const Mat& gy, Cache& c) {
        Mat g = pw2.backward(gy, c.pw2);
        g = grn.backward(g, c.grn);
        g = act.backward(g, c.act);
        g = pw1.backward(g, c.pw1);
        g = ln.backward(g, c.ln);
        g = dw.backward(g, c.dw);
        return g + gy;  // residual path
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        dw.visit(prefix + ".dw", fn);
        ln.visit(prefix + ".ln", fn);
        pw1.visit(prefix + ".pw1", fn);
        grn.visit(prefix + ".grn", fn);
        pw2.visit(prefix + ".pw2", fn);
    }
};

class EcgEncoder {
public:
    EcgEncoder() = default;

    EcgEncoder(const EcgEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg.validate();
        stem_.init(cfg.stem_kernel, cfg.stem_stride, cfg.num_leads, cfg.stage_widths[0], rng);
        stem_ln_.init(cfg.stage_widths[0]);
        const int n_stages = static_cast<int>(cfg.stage_widths.size());
        down_ln_.resize(static_cast<size_t>(n_stages - 1));
        down_.resize(static_cast<size_t>(n_stages - 1));
        blocks_.resize(static_cast<size_t>(n_stages));
        for (int s = 0; s < n_stages; ++s) {
            if (s > 0) {
                down_ln_[static_cast<size_t>(s - 1)].init(cfg.stage_widths[static_cast<size_t>(s - 1)]);
                down_[static_cast<size_t>(s - 1)].init(
                    2, 2, cfg.stage_widths[static_cast<size_t>(s - 1)],
                    cfg.stage_widths[static_cast<size_t>(s)], rng);
            }
            blocks_[static_cast<size_t>(s)].resize(
                static_cast<size_t>(cfg.stage_depths[static_cast<size_t>(s)]));
            for (auto& b : blocks_[static_cast<size_t>(s)])
                b.init(cfg.stage_widths[static_cast<size_t>(s)], cfg.dw_kernel, cfg.expansion, rng);
        }
        final_ln_.init(cfg.embed_dim());
    }

    const EcgEncoderConfig& config() const { return cfg_; }

    struct Cache {
        ConvDown::Cache stem;
        LayerNorm::Cache stem_ln;
        std::vector<LayerNorm::Cache> down_ln;
        std::vector<ConvDown::Cache> down;
        std::vector<std::vector<ConvNextBlock::Cache>> blocks;
        LayerNorm::Cache final_ln;
        int pooled_len = 0;
    };

    // samples: time x leads, in millivolts.
    Eigen::RowVectorXd forward(const Mat& samples, Cache& c) const {
        if (static_cast<int>(samples.cols()) != cfg_.num_leads)
            fail(errc::dimension_mismatch, "encoder: lead count mismatch");
        if (static_cast<int>(samples.rows()) < min_input_len())
            fail(errc::dimension_mismatch, "encoder: input too short for the stride chain");
        const int n_stages = static_cast<int>(cfg_.stage_widths.size());
        c.down_ln.resize(static_cast<size_t>(n_stages - 1));
        c.down.resize(static_cast<size_t>(n_stages - 1));
        c.blocks.resize(static_cast<size_t>(n_stages));

        Mat h = stem_.forward(samples, c.stem);
        h = stem_ln_.forward(h, c.stem_ln);
        for (int s = 0; s < n_stages; ++s) {
            if (s > 0) {
                h = down_ln_[static_cast<size_t>(s - 1)].forward(h, c.down_ln[static_cast<size_t>(s - 1)]);
                h = down_[static_cast<size_t>(s - 1)].forward(h, c.down[static_cast<size_t>(s - 1)]);
            }
            auto& stage_blocks = blocks_[static_cast<size_t>(s)];
            c.blocks[static_cast<size_t>(s)].resize(stage_blocks.size());
            for (size_t b = 0; b < stage_blocks.size(); ++b)
                h = stage_blocks[b].forward(h, c.blocks[static_cast<size_t>(s)][b]);
        }
        c.pooled_len = static_cast<int>(h.rows());
        Mat pooled = h.colwise().mean();  // 1 x C average pool over length
        pooled = final_ln_.forward(pooled, c.final_ln);
        return pooled.row(0);
    }

    // Accumulates parameter gradients; returns the input gradient.
    Mat backward(const Eigen::RowVectorXd& g_embed, Cache& c) {
        Mat g = final_ln_.backward(g_embed, c.final_ln);
        Mat gh = (g.row(0) / static_cast<double>(c.pooled_len)).replicate(c.pooled_len, 1);
        const int n_stages = static_cast<int>(cfg_.stage_widths.size());
        for (int s = n_stages - 1; s >= 0; --s) {
            auto& stage_blocks = blocks_[static_cast<size_t>(s)];
            for (int b = static_cast<int>(stage_blocks.size()) - 1; b >= 0; --b)
                gh = stage_blocks[static_cast<size_t>(b)].backward(
                    gh, c.blocks[static_cast<size_t>(s)][static_cast<size_t>(b)]);
            if (s > 0) {
                gh = down_[static_cast<size_t>(s - 1)].backward(gh, c.down[static_cast<size_t>(s - 1)]);
                gh = down_ln_[static_cast<size_t>(s - 1)].backward(gh, c.down_ln[static_cast<size_t>(s - 1)]);
            }
        }
        gh = stem_ln_.backward(gh, c.stem_ln);
        return stem_.backward(gh, c.stem);
    }

    int min_input_len() const { return cfg_.total_stride(); }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        stem_.visit(prefix + "stem", fn);
        stem_ln_.visit(prefix + "stem_ln", fn);
        for (size_t s = 0; s < blocks_.size(); ++s) {
            if (s > 0) {
                down_ln_[s - 1].visit(prefix + "down" + std::to_string(s) + "_ln", fn);
                down_[s - 1].visit(prefix + "down" + std::to_string(s), fn);
            }
            for (size_t b = 0; b < blocks_[s].size(); ++b)
                blocks_[s][b].visit(
                    prefix + "stage" + std::to_string(s) + ".block" + std::to_string(b), fn);
        }
        final_ln_.visit(prefix + "final_ln", fn);
    }

private:
    EcgEncoderConfig cfg_;
    ConvDown stem_;
    LayerNorm stem_ln_;
    std::vector<LayerNorm> down_ln_;
    std::vector<ConvDown> down_;
    std::vector<std::vector<ConvNextBlock>> blocks_;
    LayerNorm final_ln_;
};

// Lead-major float record -> time-major double matrix for the encoder.
inline Mat to_time_major(const EcgRecord& record) {
    Mat x(record.num_samples(), record.num_leads());
    for (int t = 0; t < record.num_samples(); ++t)
        for (int l = 0; l < record.num_leads(); ++l)
            x(t, l) = static_cast<double>(record.samples(l, t));
    return x;
}

}  // namespace tecg::nn
