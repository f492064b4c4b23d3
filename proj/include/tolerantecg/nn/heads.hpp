#pragma once

#include <memory>
#include <string>

#include "tolerantecg/cfr.hpp"
#include "tolerantecg/nn/layers.hpp"

namespace tecg::nn {

// Single bias-free affine map followed by L2 normalization, so projected
// inner products are cosines. Temperature lives in the loss.
struct ProjectionHead {
    Linear lin;

    void init(int in_dim, int proj_dim, Rng& rng) { lin.init(in_dim, proj_dim, rng, /*bias=*/false); }

    struct Cache {
        Linear::Cache lin;
        L2Normalize::Cache norm;
    };

    Eigen::RowVectorXd forward(const Eigen::RowVectorXd& x, Cache& c) const {
        const Mat h = lin.forward(x, c.lin);
        return L2Normalize{}.forward(h.row(0), c.norm);
    }

    Eigen::RowVectorXd backward(const Eigen::RowVectorXd& gy, Cache& c) {
        const Eigen::RowVectorXd g = L2Normalize{}.backward(gy, c.norm);
        return lin.backward(g, c.lin).row(0);
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) { lin.visit(prefix + ".proj", fn); }
};

// DINO-style head: MLP to a bottleneck, L2 normalization, then a
// weight-normalized (unit row norm, fixed gain) linear map to D logits.
struct DinoHead {
    Linear fc1;
    Linear fc2;
    Param last_v;  // D x bottleneck, rows normalized in the forward pass
    int logit_dim = 0;

    void init(int in_dim, int hidden, int bottleneck, int out_logits, Rng& rng) {
        logit_dim = out_logits;
        fc1.init(in_dim, hidden, rng);
        fc2.init(hidden, bottleneck, rng);
        last_v.init_normal(out_logits, bottleneck, 0.02, rng);
    }

    struct Cache {
        Linear::Cache fc1;
        Gelu::Cache act;
        Linear::Cache fc2;
        L2Normalize::Cache norm;
        Eigen::RowVectorXd z;       // normalized bottleneck
        Eigen::VectorXd row_norms;  // per-row norms of last_v
    };

    Eigen::RowVectorXd forward(const Eigen::RowVectorXd& x, Cache& c) const {
        Mat h = fc1.forward(x, c.fc1);
        h = Gelu{}.forward(h, c.act);
        h = fc2.forward(h, c.fc2);
        c.z = L2Normalize{}.forward(h.row(0), c.norm);
        c.row_norms.resize(last_v.value.rows());
        Eigen::RowVectorXd logits(logit_dim);
        for (int d = 0; d < logit_dim; ++d) {
            const double n = std::max(last_v.value.row(d).norm(), 1e-12);
            c.row_norms[d] = n;
            logits[d] = last_v.value.row(d).dot(c.z) / n;
        }
        return logits;
    }

    Eigen::RowVectorXd backward(const Eigen::RowVectorXd& g_logits, Cache& c) {
        Eigen::RowVectorXd gz = Eigen::RowVectorXd::Zero(c.z.cols());
        for (int d = 0; d < logit_dim; ++d) {
            const double n = c.row_norms[d];
            const Eigen::RowVectorXd w = last_v.value.row(d) / n;
            const double y = w.dot(c.z);
            last_v.grad.row(d) += (g_logits[d] / n) * (c.z - y * w);
            gz += g_logits[d] * w;
        }
        const Eigen::RowVectorXd g = L2Normalize{}.backward(gz, c.norm);
        Mat gh = fc2.backward(g, c.fc2);
        gh = Gelu{}.backward(gh, c.act);
        return fc1.backward(gh, c.fc1).row(0);
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
        fn(prefix + ".last_v", last_v);
    }
};

// Text side: a deterministic featurizer behind the TextEmbedder contract plus
// a trainable linear map into the shared embedding width. This is what gets
// updated alongside the ECG encoder during pretraining.
struct TextTower {
    std::shared_ptr<const TextEmbedder> featurizer;
    Linear lin;

    void init(std::shared_ptr<const TextEmbedder> embedder, int out_dim, Rng& rng) {
        featurizer = std::move(embedder);
        lin.init(featurizer->dim(), out_dim, rng);
    }

    struct Cache {
        Linear::Cache lin;
    };

    Eigen::RowVectorXd forward(const std::string& text, Cache& c) const {
        const Eigen::RowVectorXd feats = featurizer->embed(text).transpose();
        return lin.forward(feats, c.lin).row(0);
    }

    void backward(const Eigen::RowVectorXd& gy, Cache& c) { lin.backward(gy, c.lin); }

    void visit(const std::string& prefix, const ParamVisitor& fn) { lin.visit(prefix + ".text", fn); }
};

}  // namespace tecg::nn
