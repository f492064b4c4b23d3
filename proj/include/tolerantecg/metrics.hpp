#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/error.hpp"

namespace tecg {

// Rank-based AUROC (Mann-Whitney). Tied scores contribute half wins, so the
// result is invariant to tie ordering.
inline double auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
    const size_t n = labels.size();
    if (scores.size() != n) fail(errc::dimension_mismatch, "auroc: labels/scores length mismatch");
    size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) fail(errc::invalid_config, "auroc: labels must be 0/1");
        n_pos += static_cast<size_t>(y);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        fail(errc::degenerate_labels, "auroc: need both positive and negative labels");
    for (double s : scores)
        if (!std::isfinite(s)) fail(errc::non_finite, "auroc: non-finite score");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks within tie groups, then sum positive ranks.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision over the descending-score ranking. Tied scores are
// processed as one group: every positive in the group is credited with the
// precision at the end of the group, which makes the value independent of
// the ordering within ties.
inline double average_precision(const std::vector<int>& labels, const std::vector<double>& scores) {
    const size_t n = labels.size();
    if (scores.size() != n)
        fail(errc::dimension_mismatch, "average_precision: labels/scores length mismatch");
    size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) fail(errc::invalid_config, "average_precision: labels must be 0/1");
        n_pos += static_cast<size_t>(y);
    }
    if (n_pos == 0) fail(errc::no_positives, "average_precision: no positive labels");
    for (double s : scores)
        if (!std::isfinite(s)) fail(errc::non_finite, "average_precision: non-finite score");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    size_t tp = 0, seen = 0, i = 0;
    while (i < n) {
        size_t j = i, group_pos = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            group_pos += static_cast<size_t>(labels[order[j]]);
            ++j;
        }
        seen += j - i;
        tp += group_pos;
        if (group_pos > 0)
            ap += static_cast<double>(group_pos) * static_cast<double>(tp) /
                  static_cast<double>(seen);
        i = j;
    }
    return ap / static_cast<double>(n_pos);
}

// Multi-label report: per-label AUROC/AP plus macro averages over the labels
// that have both classes present. Labels lacking a class are listed, not
// silently dropped.
struct LabelMetrics {
    std::string name;
    double auroc = 0.0;
    double ap = 0.0;
    size_t n_pos = 0;
    size_t n = 0;
};

struct MetricsReport {
    std::vector<LabelMetrics> labels;
    std::vector<std::string> skipped;  // degenerate labels excluded from macros
    double macro_auroc = 0.0;
    double macro_ap = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["macro_auroc"] = macro_auroc;
        j["macro_ap"] = macro_ap;
        j["skipped"] = skipped;
        j["labels"] = nlohmann::json::array();
        for (const auto& l : labels)
            j["labels"].push_back({{"name", l.name},
                                   {"auroc", l.auroc},
                                   {"ap", l.ap},
                                   {"n_pos", l.n_pos},
                                   {"n", l.n}});
        return j;
    }
};

inline MetricsReport compute_metrics(const std::vector<std::string>& label_names,
                                     const std::vector<std::vector<int>>& labels,
                                     const std::vector<std::vector<double>>& scores) {
    const size_t n_labels = label_names.size();
    if (labels.size() != n_labels || scores.size() != n_labels)
        fail(errc::dimension_mismatch, "compute_metrics: per-label arrays misaligned");
    MetricsReport report;
    double sum_auroc = 0.0, sum_ap = 0.0;
    size_t used = 0;
    for (size_t l = 0; l < n_labels; ++l) {
        size_t n_pos = 0;
        for (int y : labels[l]) n_pos += static_cast<size_t>(y != 0);
        if (n_pos == 0 || n_pos == labels[l].size()) {
            report.skipped.push_back(label_names[l]);
            continue;
        }
        LabelMetrics lm;
        lm.name = label_names[l];
        lm.auroc = auroc(labels[l], scores[l]);
        lm.ap = average_precision(labels[l], scores[l]);
        lm.n_pos = n_pos;
        lm.n = labels[l].size();
        sum_auroc += lm.auroc;
        sum_ap += lm.ap;
        ++used;
        report.labels.push_back(std::move(lm));
    }
    if (used == 0) fail(errc::degenerate_labels, "compute_metrics: every label is single-class");
    report.macro_auroc = sum_auroc / static_cast<double>(used);
    report.macro_ap = sum_ap / static_cast<double>(used);
    return report;
}

}  // namespace tecg
