#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <tolerantecg/checkpoint.hpp>
#include <tolerantecg/nn/encoder.hpp>
#include <tolerantecg/nn/heads.hpp>
#include <tolerantecg/nn/optim.hpp>

#include "support/oracles.hpp"

using namespace tecg;
using nn::Mat;
using nn::Vec;

namespace {

Mat random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.gaussian();
    return m;
}

// Generic layer check: loss = sum(W .* forward(x)); validates the input
// gradient and every parameter gradient against central differences.
template <typename Module>
void check_layer(Module& layer, const Mat& x, Rng& rng, double tol = 1e-3) {
    typename Module::Cache cache;
    const Mat y0 = layer.forward(x, cache);
    const Mat w = random_mat(rng, static_cast<int>(y0.rows()), static_cast<int>(y0.cols()));

    nn::zero_grads(layer);
    const Mat gx = layer.backward(w, cache);

    const Mat fd_x = oracle::fd_grad(
        [&](const Mat& m) {
            typename Module::Cache c2;
            return layer.forward(m, c2).cwiseProduct(w).sum();
        },
        x);
    EXPECT_LT(oracle::rel_err(gx, fd_x), tol) << "input gradient";

    layer.visit("", [&](const std::string& name, nn::Param& p) {
        const Mat fd_p = oracle::fd_grad(
            [&](const Mat& pv) {
                const Mat saved = p.value;
                p.value = pv;
                typename Module::Cache c2;
                const double loss = layer.forward(x, c2).cwiseProduct(w).sum();
                p.value = saved;
                return loss;
            },
            p.value);
        EXPECT_LT(oracle::rel_err(p.grad, fd_p), tol) << "param " << name;
    });
}

nn::EcgEncoderConfig tiny_encoder_config() {
    nn::EcgEncoderConfig cfg;
    cfg.num_leads = 2;
    cfg.stage_depths = {1, 1};
    cfg.stage_widths = {4, 6};
    cfg.dw_kernel = 3;
    cfg.expansion = 2;
    return cfg;
}

}  // namespace

TEST(Layers, LinearGradients) {
    Rng rng(301);
    nn::Linear lin;
    lin.init(4, 3, rng);
    check_layer(lin, random_mat(rng, 5, 4), rng);
}

TEST(Layers, ConvDownGradients) {
    Rng rng(302);
    nn::ConvDown conv;
    conv.init(4, 4, 3, 5, rng);
    check_layer(conv, random_mat(rng, 12, 3), rng);
}

TEST(Layers, DepthwiseConvGradients) {
    Rng rng(303);
    nn::DepthwiseConv dw;
    dw.init(3, 4, rng);
    check_layer(dw, random_mat(rng, 9, 4), rng);
}

TEST(Layers, LayerNormGradients) {
    Rng rng(304);
    nn::LayerNorm ln;
    ln.init(6);
    // Non-trivial gamma/beta so their gradients matter.
    ln.gamma.value = random_mat(rng, 1, 6, 0.5).array() + 1.0;
    ln.beta.value = random_mat(rng, 1, 6, 0.5);
    check_layer(ln, random_mat(rng, 5, 6), rng);
}

TEST(Layers, GeluGradients) {
    Rng rng(305);
    nn::Gelu gelu;
    Mat x = random_mat(rng, 4, 5);
    nn::Gelu::Cache c;
    const Mat y = gelu.forward(x, c);
    const Mat w = random_mat(rng, 4, 5);
    const Mat gx = gelu.backward(w, c);
    const Mat fd = oracle::fd_grad(
        [&](const Mat& m) {
            nn::Gelu::Cache c2;
            return gelu.forward(m, c2).cwiseProduct(w).sum();
        },
        x);
    EXPECT_LT(oracle::rel_err(gx, fd), 1e-3);
    EXPECT_NEAR(y(0, 0), x(0, 0) * nn::Gelu::cdf(x(0, 0)), 1e-12);
}

TEST(Layers, GrnGradients) {
    Rng rng(306);
    nn::Grn grn;
    grn.init(5);
    grn.gamma.value = random_mat(rng, 1, 5, 0.3);
    grn.beta.value = random_mat(rng, 1, 5, 0.3);
    check_layer(grn, random_mat(rng, 7, 5), rng);
}

TEST(Layers, L2NormalizeGradientAndDegenerateFallback) {
    Rng rng(307);
    nn::L2Normalize norm;
    Eigen::RowVectorXd x = random_mat(rng, 1, 6).row(0);
    nn::L2Normalize::Cache c;
    const Eigen::RowVectorXd y = norm.forward(x, c);
    EXPECT_NEAR(y.norm(), 1.0, 1e-12);
    const Eigen::RowVectorXd w = random_mat(rng, 1, 6).row(0);
    const Eigen::RowVectorXd gx = norm.backward(w, c);
    const Mat fd = oracle::fd_grad(
        [&](const Mat& m) {
            nn::L2Normalize::Cache c2;
            return norm.forward(m.row(0), c2).cwiseProduct(w).sum();
        },
        x);
    EXPECT_LT(oracle::rel_err(gx, fd.row(0)), 1e-3);

    const Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(6);
    nn::L2Normalize::Cache cz;
    const Eigen::RowVectorXd yz = norm.forward(zero, cz);
    EXPECT_DOUBLE_EQ(yz[0], 1.0);
    EXPECT_DOUBLE_EQ(norm.backward(w, cz).norm(), 0.0);
}

TEST(Layers, ConvNextBlockGradients) {
    Rng rng(308);
    nn::ConvNextBlock block;
    block.init(4, 3, 2, rng);
    check_layer(block, random_mat(rng, 8, 4), rng, 2e-3);
}

TEST(Heads, DinoHeadGradientsAcrossSeeds) {
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(400 + static_cast<std::uint64_t>(seed));
        nn::DinoHead head;
        head.init(6, 8, 4, 10, rng);
        const Eigen::RowVectorXd x = random_mat(rng, 1, 6).row(0);
        nn::DinoHead::Cache c;
        const Eigen::RowVectorXd y = head.forward(x, c);
        const Eigen::RowVectorXd w = random_mat(rng, 1, 10).row(0);
        nn::zero_grads(head);
        const Eigen::RowVectorXd gx = head.backward(w, c);

        const Mat fd_x = oracle::fd_grad(
            [&](const Mat& m) {
                nn::DinoHead::Cache c2;
                return head.forward(m.row(0), c2).cwiseProduct(w).sum();
            },
            x);
        ASSERT_LT(oracle::rel_err(gx, fd_x.row(0)), 1e-3) << "seed " << seed;

        head.visit("", [&](const std::string& name, nn::Param& p) {
            const Mat fd_p = oracle::fd_grad(
                [&](const Mat& pv) {
                    const Mat saved = p.value;
                    p.value = pv;
                    nn::DinoHead::Cache c2;
                    const double loss = head.forward(x, c2).cwiseProduct(w).sum();
                    p.value = saved;
                    return loss;
                },
                p.value, 1e-5);  // normalization induces strong curvature here
            ASSERT_LT(oracle::rel_err(p.grad, fd_p), 1e-3) << name << " seed " << seed;
        });
        (void)y;
    }
}

TEST(Heads, ProjectionOutputsUnitVectorsWithValidGradient) {
    Rng rng(411);
    nn::ProjectionHead proj;
    proj.init(6, 4, rng);
    const Eigen::RowVectorXd x = random_mat(rng, 1, 6).row(0);
    nn::ProjectionHead::Cache c;
    const Eigen::RowVectorXd y = proj.forward(x, c);
    EXPECT_NEAR(y.norm(), 1.0, 1e-12);
    const Eigen::RowVectorXd w = random_mat(rng, 1, 4).row(0);
    nn::zero_grads(proj);
    const Eigen::RowVectorXd gx = proj.backward(w, c);
    const Mat fd = oracle::fd_grad(
        [&](const Mat& m) {
            nn::ProjectionHead::Cache c2;
            return proj.forward(m.row(0), c2).cwiseProduct(w).sum();
        },
        x);
    EXPECT_LT(oracle::rel_err(gx, fd.row(0)), 1e-3);
}

TEST(Encoder, InputGradientPassesFiniteDifference) {
    Rng rng(421);
    nn::EcgEncoder enc(tiny_encoder_config(), rng);
    const Mat x = random_mat(rng, 16, 2);
    nn::EcgEncoder::Cache c;
    enc.forward(x, c);
    const Eigen::RowVectorXd w = random_mat(rng, 1, 6).row(0);
    nn::zero_grads(enc);
    const Mat gx = enc.backward(w, c);
    const Mat fd = oracle::fd_grad(
        [&](const Mat& m) {
            nn::EcgEncoder::Cache c2;
            return enc.forward(m, c2).cwiseProduct(w).sum();
        },
        x);
    EXPECT_LT(oracle::rel_err(gx, fd), 2e-3);
}

TEST(Encoder, ParameterGradientsSpotChecked) {
    Rng rng(423);
    nn::EcgEncoder enc(tiny_encoder_config(), rng);
    const Mat x = random_mat(rng, 16, 2);
    nn::EcgEncoder::Cache c;
    enc.forward(x, c);
    const Eigen::RowVectorXd w = random_mat(rng, 1, 6).row(0);
    nn::zero_grads(enc);
    enc.backward(w, c);
    int checked = 0;
    enc.visit("", [&](const std::string& name, nn::Param& p) {
        if (name.find(".w") == std::string::npos && name.find("gamma") == std::string::npos)
            return;
        if (++checked > 6) return;  // a handful is enough at this cost
        const Mat fd_p = oracle::fd_grad(
            [&](const Mat& pv) {
                const Mat saved = p.value;
                p.value = pv;
                nn::EcgEncoder::Cache c2;
                const double loss = enc.forward(x, c2).cwiseProduct(w).sum();
                p.value = saved;
                return loss;
            },
            p.value);
        EXPECT_LT(oracle::rel_err(p.grad, fd_p), 2e-3) << name;
    });
    EXPECT_GT(checked, 0);
}

TEST(Encoder, CircularShiftEquivariance) {
    // Kernel==stride tiling plus circular depthwise padding make the embedding
    // exactly invariant to circular shifts by the total stride.
    Rng rng(431);
    nn::EcgEncoder enc(tiny_encoder_config(), rng);
    const int stride = tiny_encoder_config().total_stride();
    const Mat x = random_mat(rng, 4 * stride, 2);
    Mat shifted(x.rows(), x.cols());
    shifted.topRows(x.rows() - stride) = x.bottomRows(x.rows() - stride);
    shifted.bottomRows(stride) = x.topRows(stride);
    nn::EcgEncoder::Cache c1, c2;
    const Eigen::RowVectorXd e1 = enc.forward(x, c1);
    const Eigen::RowVectorXd e2 = enc.forward(shifted, c2);
    EXPECT_LT((e1 - e2).norm(), 1e-9);
}

TEST(Encoder, DeterministicInitAndShortInputRejected) {
    Rng a(5), b(5);
    nn::EcgEncoder e1(tiny_encoder_config(), a), e2(tiny_encoder_config(), b);
    EXPECT_TRUE(nn::params_equal(e1, e2));
    nn::EcgEncoder::Cache c;
    EXPECT_THROW(e1.forward(Mat::Zero(4, 2), c), Error);
    EXPECT_THROW(e1.forward(Mat::Zero(16, 3), c), Error);
}

TEST(Optim, AdamWDescendsAndDecaysDecoupled) {
    nn::Param p;
    p.init_constant(1, 1, 1.0);
    nn::AdamW opt({0.1, 0.9, 0.999, 1e-8, 0.0, 0.0});
    // Quadratic loss 0.5*v^2: repeated steps shrink |v|.
    for (int i = 0; i < 200; ++i) {
        p.zero_grad();
        p.grad(0, 0) = p.value(0, 0);
        opt.step({{"p", &p}});
    }
    EXPECT_LT(std::abs(p.value(0, 0)), 0.05);

    // Zero gradient + weight decay: pure multiplicative shrink.
    nn::Param q;
    q.init_constant(1, 1, 2.0);
    nn::AdamW opt2({0.5, 0.9, 0.999, 1e-8, 0.1, 0.0});
    q.zero_grad();
    opt2.step({{"q", &q}});
    EXPECT_NEAR(q.value(0, 0), 2.0 * (1.0 - 0.5 * 0.1), 1e-12);
}

TEST(Optim, GlobalNormClippingScalesUpdateDirection) {
    nn::Param a, b;
    a.init_constant(1, 1, 0.0);
    b.init_constant(1, 1, 0.0);
    nn::AdamW opt({1e-2, 0.9, 0.999, 1e-8, 0.0, 5.0});
    a.grad(0, 0) = 30.0;
    b.grad(0, 0) = 40.0;  // global norm 50 -> scale 0.1
    EXPECT_NEAR(opt.global_grad_norm({{"a", &a}, {"b", &b}}), 50.0, 1e-12);
    opt.step({{"a", &a}, {"b", &b}});
    // After clipping the effective grads are 3 and 4; the Adam update keeps
    // their ratio through the first-moment path.
    EXPECT_LT(a.value(0, 0), 0.0);
    EXPECT_LT(b.value(0, 0), 0.0);
    nn::Param c;
    c.init_constant(1, 1, 0.0);
    c.grad(0, 0) = std::nan("");
    EXPECT_THROW(opt.step({{"c", &c}}), Error);
}

TEST(Ema, UpdateInterpolatesTowardStudent) {
    Rng rng(441);
    nn::Linear teacher, student;
    teacher.init(3, 2, rng);
    student.init(3, 2, rng);
    const Mat t0 = teacher.w.value;
    const Mat s0 = student.w.value;
    nn::ema_update(teacher, student, 0.9);
    EXPECT_LT((teacher.w.value - (0.9 * t0 + 0.1 * s0)).norm(), 1e-12);
    nn::ema_update(teacher, student, 0.0);
    EXPECT_TRUE(nn::params_equal(teacher, student));
}

TEST(Checkpoint, ModuleRoundTripBitExact) {
    const auto dir = std::filesystem::temp_directory_path() / "tecg_ckpt_module";
    std::filesystem::remove_all(dir);
    Rng rng(451);
    nn::EcgEncoder enc(tiny_encoder_config(), rng);
    TensorArchive a;
    archive_module(enc, a, "enc.");
    a.save(dir, {{"note", "test"}});

    nlohmann::json extra;
    TensorArchive b = TensorArchive::load(dir, &extra);
    EXPECT_EQ(extra.at("note"), "test");
    Rng rng2(999);
    nn::EcgEncoder restored(tiny_encoder_config(), rng2);
    EXPECT_FALSE(nn::params_equal(enc, restored));
    restore_module(restored, b, "enc.");
    EXPECT_TRUE(nn::params_equal(enc, restored));
}

TEST(Checkpoint, ShapeMismatchNamesTensorAndIsConfigError) {
    const auto dir = std::filesystem::temp_directory_path() / "tecg_ckpt_shape";
    std::filesystem::remove_all(dir);
    Rng rng(453);
    nn::Linear small;
    small.init(3, 2, rng);
    TensorArchive a;
    archive_module(small, a, "m.");
    a.save(dir);

    nn::Linear big;
    big.init(4, 2, rng);
    TensorArchive b = TensorArchive::load(dir);
    try {
        restore_module(big, b, "m.");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::config_mismatch);
        EXPECT_EQ(e.exit_code(), 2);
        EXPECT_NE(std::string(e.what()).find("m..w"), std::string::npos);
    }
}

TEST(Checkpoint, CorruptionDetectedByChecksum) {
    const auto dir = std::filesystem::temp_directory_path() / "tecg_ckpt_crc";
    std::filesystem::remove_all(dir);
    TensorArchive a;
    Mat m(2, 2);
    m << 1, 2, 3, 4;
    a.put("t", m);
    a.save(dir);
    {
        std::fstream f(dir / "tensors.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(3);
        f.put('\x7f');
    }
    try {
        TensorArchive::load(dir);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::corrupt_checkpoint);
        EXPECT_EQ(e.exit_code(), 3);
    }
}

TEST(Params, VisitOrderIsDeterministicAndNamesUnique) {
    Rng rng(461);
    nn::EcgEncoder enc(tiny_encoder_config(), rng);
    std::vector<std::string> names1, names2;
    enc.visit("", [&](const std::string& n, nn::Param&) { names1.push_back(n); });
    enc.visit("", [&](const std::string& n, nn::Param&) { names2.push_back(n); });
    EXPECT_EQ(names1, names2);
    std::set<std::string> uniq(names1.begin(), names1.end());
    EXPECT_EQ(uniq.size(), names1.size());
}
