#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skelid/eval.hpp"
#include "skelid/rng.hpp"

using namespace skelid;

TEST_CASE("argmax picks the largest entry and resolves ties to the lowest index") {
    REQUIRE(argmax_lowest({0.1, 0.7, 0.2}) == 1);
    REQUIRE(argmax_lowest({0.4, 0.4, 0.2}) == 0);
    REQUIRE(argmax_lowest({0.2, 0.5, 0.5}) == 1);
    REQUIRE(argmax_lowest({3.0}) == 0);
    REQUIRE_THROWS_AS(argmax_lowest({}), ValidationError);
}

TEST_CASE("average precision matches the hand-worked four-item ranking") {
    // Ranked by score: positives land at ranks 1 and 3, so
    // AP = (1/1 + 2/3) / 2 = 5/6.
    const double ap = average_precision({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
    REQUIRE(std::fabs(ap - 5.0 / 6.0) < 1e-12);
}

TEST_CASE("average precision is exactly 1 iff every positive outranks every negative") {
    REQUIRE(average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    REQUIRE(average_precision({0.5, 0.4}, {1, 0}) == 1.0);
    REQUIRE(average_precision({0.5, 0.6, 0.7}, {1, 1, 1}) == 1.0);  // all positive
    // One negative above one positive drops AP below 1.
    REQUIRE(average_precision({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}) < 1.0);
}

TEST_CASE("average precision of a single positive at the bottom is 1/n") {
    const double ap = average_precision({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1});
    REQUIRE(std::fabs(ap - 0.25) < 1e-15);
}

TEST_CASE("score ties rank by ascending item index") {
    // All scores equal: the ranking is the item order, so the positive at
    // index 1 sits at rank 2.
    REQUIRE(std::fabs(average_precision({0.5, 0.5, 0.5}, {0, 1, 0}) - 0.5) < 1e-15);
    REQUIRE(average_precision({0.5, 0.5, 0.5}, {1, 0, 0}) == 1.0);
    // Mixed: item 2 shares its score with item 1 but ranks after it.
    const double ap = average_precision({0.9, 0.5, 0.5}, {0, 0, 1});
    REQUIRE(std::fabs(ap - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("average precision input validation") {
    REQUIRE_THROWS_AS(average_precision({0.5, 0.4}, {0, 0}), ValidationError);
    REQUIRE_THROWS_AS(average_precision({0.5, 0.4}, {1}), ValidationError);
}

TEST_CASE("full report on a hand-checked two-class set") {
    const std::vector<std::vector<double>> scores = {
        {0.9, 0.1},  // label 0, predicted 0
        {0.2, 0.8},  // label 1, predicted 1
        {0.6, 0.4},  // label 1, predicted 0
        {0.3, 0.7},  // label 0, predicted 1
    };
    const std::vector<std::int64_t> labels = {0, 1, 1, 0};
    const EvalReport r = evaluate_rankings(scores, labels, 2);

    REQUIRE(r.total_items == 4);
    REQUIRE(r.correct_items == 2);
    REQUIRE(r.accuracy == 0.5);
    REQUIRE(r.class_support == std::vector<std::int64_t>{2, 2});
    REQUIRE(r.confusion[0][0] == 1);
    REQUIRE(r.confusion[0][1] == 1);
    REQUIRE(r.confusion[1][0] == 1);
    REQUIRE(r.confusion[1][1] == 1);
    // Each class column has one hit out of two predictions.
    REQUIRE(r.per_class_precision == std::vector<double>{0.5, 0.5});
    // Both one-vs-rest rankings put the positives at ranks 1 and 3.
    REQUIRE(std::fabs(r.per_class_average_precision[0] - 5.0 / 6.0) < 1e-12);
    REQUIRE(std::fabs(r.per_class_average_precision[1] - 5.0 / 6.0) < 1e-12);
    REQUIRE(std::fabs(r.mean_average_precision - 5.0 / 6.0) < 1e-12);
}

TEST_CASE("perfect predictions give accuracy 1 and mAP 1") {
    std::vector<std::vector<double>> scores;
    std::vector<std::int64_t> labels;
    for (std::int64_t i = 0; i < 12; ++i) {
        const std::int64_t k = i % 3;
        std::vector<double> row(3, 0.1);
        row[static_cast<std::size_t>(k)] = 0.8 - 0.01 * static_cast<double>(i);
        scores.push_back(row);
        labels.push_back(k);
    }
    const EvalReport r = evaluate_rankings(scores, labels, 3);
    REQUIRE(r.accuracy == 1.0);
    REQUIRE(r.mean_average_precision == 1.0);
}

TEST_CASE("mAP is 1 exactly when every class ranks its positives above its negatives") {
    const std::vector<std::int64_t> labels = {0, 1, 1, 0};
    const std::vector<std::vector<double>> separated = {
        {0.60, 0.40},  // class-0 ranking: items 0, 3 on top; class-1: items 2, 1 on top
        {0.45, 0.55},
        {0.30, 0.70},
        {0.50, 0.50},
    };
    const EvalReport r = evaluate_rankings(separated, labels, 2);
    REQUIRE(r.accuracy == 1.0);
    REQUIRE(r.mean_average_precision == 1.0);

    // Lift item 1's class-0 score above item 0's: a class-0 negative now
    // outranks a positive, so mAP must drop below 1.
    const std::vector<std::vector<double>> crossed = {
        {0.60, 0.40},
        {0.65, 0.75},
        {0.30, 0.70},
        {0.50, 0.50},
    };
    const EvalReport r2 = evaluate_rankings(crossed, labels, 2);
    REQUIRE(r2.mean_average_precision < 1.0);
    REQUIRE(r2.mean_average_precision > 0.0);
}

TEST_CASE("classes absent from the labels are skipped by the macro mean") {
    const std::vector<std::vector<double>> scores = {
        {0.8, 0.1, 0.1},
        {0.2, 0.7, 0.1},
    };
    const std::vector<std::int64_t> labels = {0, 1};  // class 2 never appears
    const EvalReport r = evaluate_rankings(scores, labels, 3);
    REQUIRE(r.per_class_average_precision[2] == -1.0);
    REQUIRE(r.class_support[2] == 0);
    REQUIRE(std::fabs(r.mean_average_precision -
                      0.5 * (r.per_class_average_precision[0] + r.per_class_average_precision[1])) < 1e-15);
}

TEST_CASE("accuracy is an exact correct-count ratio on random scores") {
    CounterRng rng(771);
    const std::int64_t n = 40;
    const std::int64_t k = 5;
    std::vector<std::vector<double>> scores;
    std::vector<std::int64_t> labels;
    for (std::int64_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::int64_t c = 0; c < k; ++c) row.push_back(rng.next_uniform());
        scores.push_back(row);
        labels.push_back(static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(k))));
    }
    const EvalReport r = evaluate_rankings(scores, labels, k);

    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < static_cast<std::size_t>(k); ++c)
            if (scores[static_cast<std::size_t>(i)][c] > scores[static_cast<std::size_t>(i)][best]) best = c;
        if (static_cast<std::int64_t>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    REQUIRE(r.correct_items == correct);
    REQUIRE(r.accuracy == static_cast<double>(correct) / static_cast<double>(n));

    REQUIRE(r.accuracy >= 0.0);
    REQUIRE(r.accuracy <= 1.0);
    REQUIRE(r.mean_average_precision >= 0.0);
    REQUIRE(r.mean_average_precision <= 1.0);
    std::int64_t confusion_total = 0;
    for (std::int64_t c = 0; c < k; ++c) {
        std::int64_t row_sum = 0;
        for (std::int64_t p = 0; p < k; ++p) row_sum += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
        REQUIRE(row_sum == r.class_support[static_cast<std::size_t>(c)]);
        confusion_total += row_sum;
    }
    REQUIRE(confusion_total == n);
}

TEST_CASE("ranking evaluation input validation") {
    const std::vector<std::vector<double>> ok = {{0.6, 0.4}, {0.3, 0.7}};
    REQUIRE_THROWS_AS(evaluate_rankings({}, {}, 2), ValidationError);
    REQUIRE_THROWS_AS(evaluate_rankings(ok, {0}, 2), ValidationError);           // label count mismatch
    REQUIRE_THROWS_AS(evaluate_rankings(ok, {0, 2}, 2), ValidationError);        // label out of range
    REQUIRE_THROWS_AS(evaluate_rankings(ok, {0, -1}, 2), ValidationError);       // negative label
    REQUIRE_THROWS_AS(evaluate_rankings(ok, {0, 1}, 1), ValidationError);        // too few classes
    REQUIRE_THROWS_AS(evaluate_rankings({{0.6}, {0.3, 0.7}}, {0, 1}, 2), ValidationError);  // ragged row
    const std::vector<std::vector<double>> bad = {{0.6, 0.4}, {0.3, std::nan("")}};
    REQUIRE_THROWS_AS(evaluate_rankings(bad, {0, 1}, 2), ValidationError);
}

TEST_CASE("report serialization is deterministic and self-describing") {
    const std::vector<std::vector<double>> scores = {
        {0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}};
    const std::vector<std::int64_t> labels = {0, 1, 1, 0};
    const EvalReport r = evaluate_rankings(scores, labels, 2);
    const std::string text = serialize_eval_report(r);
    REQUIRE(text == serialize_eval_report(r));
    REQUIRE(text.find("\"kind\": \"evaluation-report\"") != std::string::npos);
    REQUIRE(text.find("\"accuracy\": 0.5") != std::string::npos);
    REQUIRE(text.find("\"map_definition\"") != std::string::npos);
    REQUIRE(text.find(kMapDefinitionText) != std::string::npos);
    REQUIRE(text.find("\"confusion\"") != std::string::npos);
    REQUIRE(text.find("\"total_items\": 4") != std::string::npos);
}
