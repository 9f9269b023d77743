#include "trimine/dataset.hpp"
#include "trimine/error.hpp"
#include "trimine/eval.hpp"
#include "trimine/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

using namespace trimine;

namespace {

std::vector<int> labels_for(const std::vector<std::size_t>& counts) {
    std::vector<int> labels;
    for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c) + 1);
    return labels;
}

} // namespace

TEST(Split, AwirTestCounts) {
    const std::vector<std::size_t> counts{116, 51, 73};
    // floor(0.2 * n_c) per class.
    EXPECT_EQ(stratified_test_counts(counts, 0.2), (std::vector<std::size_t>{23, 10, 14}));
    const auto split = stratified_split(labels_for(counts), 0.2, 0);
    EXPECT_EQ(split.test.size(), 47u);
    EXPECT_EQ(split.train.size(), 193u);
}

TEST(Split, ExactHalves) {
    const std::vector<std::size_t> counts{2, 2};
    EXPECT_EQ(stratified_test_counts(counts, 0.5), (std::vector<std::size_t>{1, 1}));
}

TEST(Split, PartitionStratifiedDeterministic) {
    const std::vector<std::size_t> counts{9, 14, 5};
    const auto labels = labels_for(counts);
    const auto a = stratified_split(labels, 0.3, 11);
    const auto b = stratified_split(labels, 0.3, 11);
    const auto c = stratified_split(labels, 0.3, 12);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.test, c.test);
    EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
    EXPECT_TRUE(std::is_sorted(a.test.begin(), a.test.end()));
    std::vector<std::size_t> all = a.train;
    all.insert(all.end(), a.test.begin(), a.test.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
    std::map<int, std::size_t> per_class;
    for (std::size_t i : a.test) ++per_class[labels[i]];
    EXPECT_EQ(per_class[1], 2u);
    EXPECT_EQ(per_class[2], 4u);
    EXPECT_EQ(per_class[3], 1u);
}

TEST(Split, Errors) {
    const std::vector<std::size_t> tiny{1, 4};
    EXPECT_THROW(stratified_test_counts(tiny, 0.2), ValidationError);
    const std::vector<std::size_t> ok{4, 4};
    EXPECT_THROW(stratified_test_counts(ok, 0.0), ConfigError);
    EXPECT_THROW(stratified_test_counts(ok, 1.0), ConfigError);
}

TEST(Classifier, SeparableToyFitsPerfectly) {
    Eigen::MatrixXd x(6, 2);
    x << 0, 0, 0.2, 0.1, 0.1, 0.3, 3, 3, 3.2, 2.9, 2.8, 3.1;
    const std::vector<int> y{1, 1, 1, 2, 2, 2};
    const auto clf = fit_classifier(x, y);
    EXPECT_EQ(accuracy(clf.predict(x), y), 1.0);
    EXPECT_EQ(clf.weights.rows(), 2);
}

TEST(Classifier, XorCapsAtThreeQuarters) {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 1, 1, 0, 1, 1, 0;
    const std::vector<int> y{1, 1, 2, 2};
    const auto clf = fit_classifier(x, y);
    EXPECT_LE(accuracy(clf.predict(x), y), 0.75);
}

TEST(Classifier, ShuffledLabelsNearChance) {
    Rng rng(21);
    const std::size_t n = 900;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 5);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) x(static_cast<Eigen::Index>(i), j) = rng.normal();
        y[i] = 1 + static_cast<int>(i % 3);
    }
    rng.shuffle(y.begin(), y.end());
    const Eigen::MatrixXd train = x.topRows(600);
    const Eigen::MatrixXd test = x.bottomRows(300);
    const std::vector<int> y_train(y.begin(), y.begin() + 600);
    const std::vector<int> y_test(y.begin() + 600, y.end());
    const auto clf = fit_classifier(train, y_train);
    EXPECT_NEAR(accuracy(clf.predict(test), y_test), 1.0 / 3.0, 0.09);
}

TEST(Classifier, ConvergenceFlag) {
    Eigen::MatrixXd x(4, 1);
    x << -1, -0.5, 0.5, 1;
    const std::vector<int> y{1, 1, 2, 2};
    EXPECT_TRUE(fit_classifier(x, y).converged);
    ClassifierConfig capped;
    capped.max_iterations = 1;
    capped.gradient_tolerance = 1e-14;
    const auto clf = fit_classifier(x, y, capped);
    EXPECT_FALSE(clf.converged);
    EXPECT_LE(clf.iterations, 1u);
}

TEST(Classifier, Errors) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
    const std::vector<int> one_class{1, 1, 1};
    EXPECT_THROW(fit_classifier(x, one_class), ValidationError);
    const std::vector<int> short_labels{1, 2};
    EXPECT_THROW(fit_classifier(x, short_labels), ValidationError);
}

TEST(Regressor, OneDimensionalNormalEquations) {
    Eigen::MatrixXd x(4, 1);
    x << 1, 2, 3, 4;
    Eigen::MatrixXd y(4, 1);
    y << 2.1, 3.9, 6.2, 7.8;
    const auto reg = fit_regressor(x, y, 1e-3);
    // Centred: Sxx = 5, Sxy = 9.7, means 2.5 and 5.
    const double slope = 9.7 / (5.0 + 1e-3);
    EXPECT_NEAR(reg.coefficients(0, 0), slope, 1e-12);
    EXPECT_NEAR(reg.intercept(0), 5.0 - slope * 2.5, 1e-12);
}

TEST(Regressor, ExactLinearTargets) {
    Rng rng(2);
    Eigen::MatrixXd x(30, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Eigen::MatrixXd y(30, 2);
    y.col(0) = 2.0 * x.col(0) - x.col(2) + Eigen::VectorXd::Constant(30, 0.5);
    y.col(1) = x.col(1);
    const auto reg = fit_regressor(x, y, 1e-10);
    const Eigen::MatrixXd pred = reg.predict(x);
    for (Eigen::Index t = 0; t < 2; ++t) {
        const Eigen::VectorXd p = pred.col(t);
        const Eigen::VectorXd v = y.col(t);
        EXPECT_NEAR(r_squared(std::span<const double>(p.data(), 30), std::span<const double>(v.data(), 30)).value, 1.0,
                    1e-9);
    }
}

TEST(Regressor, Errors) {
    EXPECT_THROW(fit_regressor(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 1)), ValidationError);
    EXPECT_THROW(fit_regressor(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 1)), ValidationError);
    EXPECT_THROW(fit_regressor(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 1), 0.0), ConfigError);
}

TEST(RSquared, Definitions) {
    const std::vector<double> t{1, 2, 3};
    EXPECT_EQ(r_squared(t, t).value, 1.0);
    const std::vector<double> mean(3, 2.0);
    EXPECT_EQ(r_squared(mean, t).value, 0.0);
    // SS_res = 8, SS_tot = 2.
    const std::vector<double> anti{3, 2, 1};
    EXPECT_DOUBLE_EQ(r_squared(anti, t).value, -3.0);
    const std::vector<double> flat(3, 5.0);
    const auto degenerate = r_squared(t, flat);
    EXPECT_EQ(degenerate.value, 0.0);
    EXPECT_TRUE(degenerate.zero_variance);
    const std::vector<double> one{1.0};
    EXPECT_THROW(r_squared(one, one), ValidationError);
}

TEST(Aggregate, HandArithmetic) {
    const std::vector<double> acc{0.9, 1.0};
    const auto s = summarize(acc);
    EXPECT_NEAR(s.mean, 0.95, 1e-15);
    EXPECT_NEAR(s.std, 0.07071067811865474, 1e-15);
    const std::vector<double> same{0.5, 0.5, 0.5};
    EXPECT_EQ(summarize(same).std, 0.0);
    const std::vector<double> single{0.7};
    EXPECT_EQ(summarize(single).std, 0.0);

    std::vector<ProbeResult> runs(2);
    runs[0].accuracy = 0.9;
    runs[1].accuracy = 1.0;
    runs[0].r2_per_feature = {0.1, 0.3};
    runs[1].r2_per_feature = {0.3, 0.5};
    runs[0].r2_mean = 0.2;
    runs[1].r2_mean = 0.4;
    const auto agg = aggregate(runs);
    EXPECT_EQ(agg.runs, 2u);
    EXPECT_NEAR(agg.accuracy.mean, 0.95, 1e-15);
    EXPECT_NEAR(agg.r2.mean, 0.3, 1e-15);
    ASSERT_EQ(agg.r2_per_feature.size(), 2u);
    EXPECT_NEAR(agg.r2_per_feature[1].mean, 0.4, 1e-15);
}

TEST(Probes, SeparatedGaussiansReachFullAccuracy) {
    SyntheticOptions opts;
    opts.modes_per_class = 1;
    opts.class_separation = 40.0;
    const std::vector<std::size_t> counts{40, 30, 30};
    const Dataset ds = generate_synthetic(counts, 16, 0.5, 5, opts);
    const auto split = stratified_split(ds.labels, 0.2, 0);
    const Dataset train = ds.subset(split.train);
    const Dataset test = ds.subset(split.test);
    const auto result = run_probes(train.embeddings, train.labels, derive_box_features(train).normalized,
                                   test.embeddings, test.labels, derive_box_features(test).normalized, {}, 0);
    EXPECT_EQ(result.accuracy, 1.0);
    EXPECT_EQ(result.r2_per_feature.size(), 4u);
    double mean = 0.0;
    for (double r : result.r2_per_feature) {
        EXPECT_LE(r, 1.0);
        mean += r / 4.0;
    }
    EXPECT_NEAR(result.r2_mean, mean, 1e-15);
}

TEST(Probes, DeterministicAndReadOnly) {
    const std::vector<std::size_t> counts{20, 20};
    const Dataset ds = generate_synthetic(counts, 6, 0.5, 1);
    const Eigen::MatrixXd before = ds.embeddings;
    const auto f = derive_box_features(ds).normalized;
    const auto split = stratified_split(ds.labels, 0.25, 3);
    auto run = [&] {
        return run_probes(ds.subset(split.train).embeddings, ds.subset(split.train).labels,
                          f(split.train, Eigen::all), ds.subset(split.test).embeddings, ds.subset(split.test).labels,
                          f(split.test, Eigen::all), {}, 3);
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.r2_per_feature, b.r2_per_feature);
    EXPECT_EQ(a.split_seed, 3u);
    EXPECT_TRUE(ds.embeddings == before);
}
