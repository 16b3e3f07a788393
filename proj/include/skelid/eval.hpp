#pragma once

// Classification metrics over per-item class scores: exact-count accuracy,
// one-vs-rest average precision per class, their macro mean, confusion
// counts, and a deterministic structured-text report.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "skelid/common.hpp"
#include "skelid/json_write.hpp"

namespace skelid {

// The ranking-metric convention, embedded verbatim in every report so a
// report file is self-describing.
inline constexpr const char* kMapDefinitionText =
    "mean_average_precision is the macro mean over classes with at least one "
    "positive item of the one-vs-rest average precision; for each class, items "
    "are ranked by that class's score descending with ties broken by ascending "
    "item index, and AP is the sum over positive-ranked items of (positives so "
    "far / rank) divided by the total number of positives, i.e. the sum of "
    "recall increment times precision at each positive rank";

// Index of the largest value; ties resolve to the lowest index.
inline std::int64_t argmax_lowest(const std::vector<double>& row) {
    if (row.empty()) throw ValidationError("argmax of an empty score row");
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return static_cast<std::int64_t>(best);
}

// One-vs-rest average precision. `positive[i]` marks the items of the target
// class; there must be at least one. Items are ranked by score descending,
// ties by ascending item index (a stable sort on a descending key).
inline double average_precision(const std::vector<double>& scores, const std::vector<char>& positive) {
    if (scores.size() != positive.size())
        throw ValidationError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                              std::to_string(positive.size()) + " labels");
    const std::int64_t total_positive = std::count(positive.begin(), positive.end(), char(1));
    if (total_positive == 0)
        throw ValidationError("average_precision needs at least one positive item");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::int64_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (!positive[order[rank]]) continue;
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
    return ap / static_cast<double>(total_positive);
}

struct EvalReport {
    std::int64_t total_items = 0;
    std::int64_t correct_items = 0;
    double accuracy = 0.0;                 // correct_items / total_items, exactly
    double mean_average_precision = 0.0;   // per kMapDefinitionText
    std::vector<double> per_class_average_precision;  // -1 for classes with no positives
    std::vector<double> per_class_precision;  // confusion diagonal / column sum; 0 when never predicted
    std::vector<std::int64_t> class_support;  // true-label counts
    std::vector<std::vector<std::int64_t>> confusion;  // [true class][predicted class]
};

// Computes every report field from per-item class scores (higher = more
// likely) and integer labels. Scores need not be normalized; only their
// ranking and row-wise argmax matter.
inline EvalReport evaluate_rankings(const std::vector<std::vector<double>>& scores,
                                    const std::vector<std::int64_t>& labels,
                                    std::int64_t num_classes) {
    if (scores.empty()) throw ValidationError("cannot evaluate an empty item set");
    if (scores.size() != labels.size())
        throw ValidationError("evaluate_rankings: " + std::to_string(scores.size()) + " score rows vs " +
                              std::to_string(labels.size()) + " labels");
    if (num_classes < 2)
        throw ValidationError("evaluate_rankings needs at least 2 classes, got " +
                              std::to_string(num_classes));
    const auto k = static_cast<std::size_t>(num_classes);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].size() != k)
            throw ValidationError("score row " + std::to_string(i) + " has " +
                                  std::to_string(scores[i].size()) + " entries, expected " +
                                  std::to_string(num_classes));
        for (double s : scores[i])
            if (!std::isfinite(s))
                throw ValidationError("non-finite score in row " + std::to_string(i));
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValidationError("label " + std::to_string(labels[i]) + " out of range [0, " +
                                  std::to_string(num_classes) + ") at item " + std::to_string(i));
    }

    EvalReport out;
    out.total_items = static_cast<std::int64_t>(scores.size());
    out.confusion.assign(k, std::vector<std::int64_t>(k, 0));
    out.class_support.assign(k, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const std::int64_t predicted = argmax_lowest(scores[i]);
        out.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predicted)] += 1;
        out.class_support[static_cast<std::size_t>(labels[i])] += 1;
        if (predicted == labels[i]) out.correct_items += 1;
    }
    out.accuracy = static_cast<double>(out.correct_items) / static_cast<double>(out.total_items);

    out.per_class_average_precision.assign(k, -1.0);
    double ap_sum = 0.0;
    std::int64_t ap_classes = 0;
    std::vector<double> column(scores.size());
    std::vector<char> positive(scores.size());
    for (std::size_t c = 0; c < k; ++c) {
        if (out.class_support[c] == 0) continue;  // no positives: AP undefined, class skipped
        for (std::size_t i = 0; i < scores.size(); ++i) {
            column[i] = scores[i][c];
            positive[i] = labels[i] == static_cast<std::int64_t>(c) ? 1 : 0;
        }
        out.per_class_average_precision[c] = average_precision(column, positive);
        ap_sum += out.per_class_average_precision[c];
        ++ap_classes;
    }
    out.mean_average_precision = ap_sum / static_cast<double>(ap_classes);

    out.per_class_precision.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        std::int64_t predicted_c = 0;
        for (std::size_t r = 0; r < k; ++r) predicted_c += out.confusion[r][c];
        if (predicted_c > 0)
            out.per_class_precision[c] =
                static_cast<double>(out.confusion[c][c]) / static_cast<double>(predicted_c);
    }
    return out;
}

inline std::string serialize_eval_report(const EvalReport& r) {
    auto num_array = [](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += jsonw::num(v[i]);
        }
        return s + "]";
    };
    auto int_array = [](const std::vector<std::int64_t>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += jsonw::num(v[i]);
        }
        return s + "]";
    };
    std::string out = "{\n";
    out += "  \"kind\": \"evaluation-report\",\n";
    out += "  \"total_items\": " + jsonw::num(r.total_items) + ",\n";
    out += "  \"correct_items\": " + jsonw::num(r.correct_items) + ",\n";
    out += "  \"accuracy\": " + jsonw::num(r.accuracy) + ",\n";
    out += "  \"mean_average_precision\": " + jsonw::num(r.mean_average_precision) + ",\n";
    out += "  \"map_definition\": " + jsonw::str(kMapDefinitionText) + ",\n";
    out += "  \"per_class_average_precision\": " + num_array(r.per_class_average_precision) + ",\n";
    out += "  \"per_class_precision\": " + num_array(r.per_class_precision) + ",\n";
    out += "  \"class_support\": " + int_array(r.class_support) + ",\n";
    out += "  \"confusion\": [\n";
    for (std::size_t c = 0; c < r.confusion.size(); ++c) {
        out += "    " + int_array(r.confusion[c]);
        out += c + 1 < r.confusion.size() ? ",\n" : "\n";
    }
    out += "  ]\n}\n";
    return out;
}

}  // namespace skelid
