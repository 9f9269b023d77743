#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace trimine {

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Test rows per class: max(1, floor(test_fraction * n_c)). Every class keeps at least
// one training row; otherwise ValidationError.
std::vector<std::size_t> stratified_test_counts(std::span<const std::size_t> class_counts, double test_fraction);

// Labels in 1..C. Both index lists come back sorted ascending.
Split stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed);

struct ClassifierConfig {
    double l2 = 1e-3;
    std::size_t max_iterations = 1000;
    double gradient_tolerance = 1e-6;
};

// Multinomial logistic regression; classes are 1..C.
struct LinearClassifier {
    Eigen::MatrixXd weights; // C x k
    Eigen::VectorXd bias;    // C
    bool converged = false;
    std::size_t iterations = 0;
    double gradient_max_norm = 0.0;

    Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
    std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

// Minimises mean cross-entropy + (l2 / 2) * ||W||^2 with L-BFGS; the bias is unpenalised.
// `converged` is false when the iteration cap is hit before the gradient tolerance.
LinearClassifier fit_classifier(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                                const ClassifierConfig& config = {});

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct LinearRegressor {
    Eigen::MatrixXd coefficients; // k x targets
    Eigen::RowVectorXd intercept;

    Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
};

// Ridge with an unpenalised intercept, one head per target column, solved from the
// centred normal equations (X'X + l2 I) b = X'y.
LinearRegressor fit_regressor(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& targets, double l2 = 1e-3);

struct RSquared {
    double value = 0.0;
    bool zero_variance = false; // value forced to 0
};

RSquared r_squared(std::span<const double> predictions, std::span<const double> targets);

struct ProbeConfig {
    ClassifierConfig classifier;
    double regressor_l2 = 1e-3;
    // z-score inputs with training statistics before both heads.
    bool standardize = true;
};

struct ProbeResult {
    double accuracy = 0.0;
    std::vector<double> r2_per_feature;
    double r2_mean = 0.0;
    std::uint64_t split_seed = 0;
    bool classifier_converged = true;
    std::vector<bool> zero_variance_targets;
};

// Fits both linear heads on the training rows and scores them on the test rows.
// Never touches the embeddings beyond reading them.
ProbeResult run_probes(const Eigen::MatrixXd& train_embeddings, std::span<const int> train_labels,
                       const Eigen::MatrixXd& train_targets, const Eigen::MatrixXd& test_embeddings,
                       std::span<const int> test_labels, const Eigen::MatrixXd& test_targets,
                       const ProbeConfig& config, std::uint64_t split_seed);

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation; 0 for a single run
};

struct AggregateResult {
    std::size_t runs = 0;
    MetricSummary accuracy;
    MetricSummary r2;
    std::vector<MetricSummary> r2_per_feature;
};

MetricSummary summarize(std::span<const double> values);
AggregateResult aggregate(std::span<const ProbeResult> results);

} // namespace trimine
