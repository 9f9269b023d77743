#include "trimine/eval.hpp"

#include "trimine/csv.hpp"
#include "trimine/error.hpp"
#include "trimine/random.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>

namespace trimine {

std::vector<std::size_t> stratified_test_counts(std::span<const std::size_t> class_counts, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test fraction must lie in (0, 1), got " + csv::format(test_fraction));
    }
    std::vector<std::size_t> out;
    out.reserve(class_counts.size());
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        const std::size_t n = class_counts[c];
        const auto share = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 1e-9));
        const std::size_t test = std::max<std::size_t>(1, share);
        if (n < 2 || test >= n) {
            throw ValidationError("class " + std::to_string(c + 1) + " has " + std::to_string(n) +
                                  " samples, too few to stratify at test fraction " + csv::format(test_fraction));
        }
        out.push_back(test);
    }
    return out;
}

Split stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
    int max_label = 0;
    for (int label : labels) {
        if (label < 1) {
            throw ValidationError("split: class labels must be >= 1");
        }
        max_label = std::max(max_label, label);
    }
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_label));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[static_cast<std::size_t>(labels[i] - 1)].push_back(i);
    }
    std::vector<std::size_t> counts;
    for (const auto& m : members) {
        counts.push_back(m.size());
    }
    const std::vector<std::size_t> test_counts = stratified_test_counts(counts, test_fraction);

    Rng rng(seed, Stream::Split);
    Split split;
    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& m = members[c];
        rng.shuffle(m.begin(), m.end());
        split.test.insert(split.test.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(test_counts[c]));
        split.train.insert(split.train.end(), m.begin() + static_cast<std::ptrdiff_t>(test_counts[c]), m.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

namespace {

class SoftmaxObjective final : public ceres::FirstOrderFunction {
public:
    SoftmaxObjective(const Eigen::MatrixXd& x, Eigen::MatrixXd one_hot, double l2)
        : x_(x), one_hot_(std::move(one_hot)), l2_(l2) {}

    bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
        const Eigen::Index classes = one_hot_.cols();
        const Eigen::Index dim = x_.cols();
        const Eigen::Map<const Eigen::MatrixXd> w(parameters, classes, dim);
        const Eigen::Map<const Eigen::VectorXd> b(parameters + classes * dim, classes);

        Eigen::MatrixXd logits = x_ * w.transpose();
        logits.rowwise() += b.transpose();
        const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
        logits.colwise() -= row_max;
        Eigen::MatrixXd prob = logits.array().exp();
        const Eigen::VectorXd norm = prob.rowwise().sum();
        const double n = static_cast<double>(x_.rows());

        const double nll = -(one_hot_.array() * logits.array()).sum() + norm.array().log().sum();
        cost[0] = nll / n + 0.5 * l2_ * w.squaredNorm();
        if (gradient != nullptr) {
            prob.array().colwise() /= norm.array();
            const Eigen::MatrixXd residual = (prob - one_hot_) / n;
            Eigen::Map<Eigen::MatrixXd> gw(gradient, classes, dim);
            Eigen::Map<Eigen::VectorXd> gb(gradient + classes * dim, classes);
            gw = residual.transpose() * x_ + l2_ * w;
            gb = residual.colwise().sum().transpose();
        }
        return true;
    }

    int NumParameters() const override { return static_cast<int>(one_hot_.cols() * (x_.cols() + 1)); }

private:
    const Eigen::MatrixXd& x_;
    Eigen::MatrixXd one_hot_;
    double l2_;
};

} // namespace

Eigen::MatrixXd LinearClassifier::logits(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = x * weights.transpose();
    out.rowwise() += bias.transpose();
    return out;
}

std::vector<int> LinearClassifier::predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd scores = logits(x);
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        Eigen::Index best = 0;
        scores.row(r).maxCoeff(&best);
        out[static_cast<std::size_t>(r)] = static_cast<int>(best) + 1;
    }
    return out;
}

LinearClassifier fit_classifier(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                                const ClassifierConfig& config) {
    if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
        throw ValidationError("fit_classifier: embedding rows and label count differ");
    }
    int classes = 0;
    for (int label : labels) {
        if (label < 1) {
            throw ValidationError("fit_classifier: class labels must be >= 1");
        }
        classes = std::max(classes, label);
    }
    {
        std::vector<int> distinct(labels.begin(), labels.end());
        std::sort(distinct.begin(), distinct.end());
        if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2) {
            throw ValidationError("fit_classifier: training data needs at least two classes");
        }
    }

    Eigen::MatrixXd one_hot = Eigen::MatrixXd::Zero(embeddings.rows(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        one_hot(static_cast<Eigen::Index>(i), labels[i] - 1) = 1.0;
    }
    const Eigen::Index dim = embeddings.cols();
    auto* objective = new SoftmaxObjective(embeddings, std::move(one_hot), config.l2);
    ceres::GradientProblem problem(objective);

    Eigen::VectorXd params = Eigen::VectorXd::Zero(classes * (dim + 1));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = static_cast<int>(config.max_iterations);
    options.gradient_tolerance = config.gradient_tolerance;
    options.function_tolerance = 0.0;
    options.parameter_tolerance = 0.0;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, params.data(), &summary);

    double cost = 0.0;
    Eigen::VectorXd grad(params.size());
    problem.Evaluate(params.data(), &cost, grad.data());

    LinearClassifier out;
    out.weights = Eigen::Map<const Eigen::MatrixXd>(params.data(), classes, dim);
    out.bias = params.segment(classes * dim, classes);
    // Ceres records the starting point as iteration 0.
    out.iterations = summary.iterations.empty() ? 0 : summary.iterations.size() - 1;
    out.gradient_max_norm = grad.cwiseAbs().maxCoeff();
    out.converged = out.gradient_max_norm <= config.gradient_tolerance;
    return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size() || truth.empty()) {
        throw ValidationError("accuracy: prediction and truth lengths differ or are empty");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hits += predicted[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Eigen::MatrixXd LinearRegressor::predict(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = x * coefficients;
    out.rowwise() += intercept;
    return out;
}

LinearRegressor fit_regressor(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& targets, double l2) {
    if (embeddings.rows() != targets.rows()) {
        throw ValidationError("fit_regressor: embedding and target rows differ");
    }
    if (embeddings.rows() < 2) {
        throw ValidationError("fit_regressor: needs at least two training samples");
    }
    if (!(l2 > 0.0)) {
        throw ConfigError("fit_regressor: l2 must be positive");
    }
    const Eigen::RowVectorXd x_mean = embeddings.colwise().mean();
    const Eigen::RowVectorXd y_mean = targets.colwise().mean();
    const Eigen::MatrixXd xc = embeddings.rowwise() - x_mean;
    const Eigen::MatrixXd yc = targets.rowwise() - y_mean;

    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += l2;
    LinearRegressor out;
    out.coefficients = gram.ldlt().solve(xc.transpose() * yc);
    out.intercept = y_mean - x_mean * out.coefficients;
    return out;
}

RSquared r_squared(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size() || targets.size() < 2) {
        throw ValidationError("r_squared: needs equal-length vectors of at least two values");
    }
    double mean = 0.0;
    for (double t : targets) mean += t;
    mean /= static_cast<double>(targets.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ss_res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    if (!(ss_tot > 0.0)) {
        return RSquared{0.0, true};
    }
    return RSquared{1.0 - ss_res / ss_tot, false};
}

ProbeResult run_probes(const Eigen::MatrixXd& train_embeddings, std::span<const int> train_labels,
                       const Eigen::MatrixXd& train_targets, const Eigen::MatrixXd& test_embeddings,
                       std::span<const int> test_labels, const Eigen::MatrixXd& test_targets,
                       const ProbeConfig& config, std::uint64_t split_seed) {
    Eigen::MatrixXd train = train_embeddings;
    Eigen::MatrixXd test = test_embeddings;
    if (config.standardize) {
        const Eigen::RowVectorXd mean = train.colwise().mean();
        Eigen::RowVectorXd scale = ((train.rowwise() - mean).array().square().colwise().sum() /
                                    static_cast<double>(train.rows()))
                                       .sqrt();
        for (Eigen::Index j = 0; j < scale.size(); ++j) {
            if (!(scale[j] > 0.0)) scale[j] = 1.0;
        }
        train = (train.rowwise() - mean).array().rowwise() / scale.array();
        test = (test.rowwise() - mean).array().rowwise() / scale.array();
    }

    ProbeResult result;
    result.split_seed = split_seed;

    const LinearClassifier classifier = fit_classifier(train, train_labels, config.classifier);
    result.classifier_converged = classifier.converged;
    result.accuracy = accuracy(classifier.predict(test), test_labels);

    const LinearRegressor regressor = fit_regressor(train, train_targets, config.regressor_l2);
    const Eigen::MatrixXd predicted = regressor.predict(test);
    double sum = 0.0;
    for (Eigen::Index f = 0; f < test_targets.cols(); ++f) {
        const Eigen::VectorXd p = predicted.col(f);
        const Eigen::VectorXd t = test_targets.col(f);
        const RSquared r2 = r_squared(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                      std::span<const double>(t.data(), static_cast<std::size_t>(t.size())));
        result.r2_per_feature.push_back(r2.value);
        result.zero_variance_targets.push_back(r2.zero_variance);
        sum += r2.value;
    }
    result.r2_mean = test_targets.cols() > 0 ? sum / static_cast<double>(test_targets.cols()) : 0.0;
    return result;
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    if (values.empty()) {
        return s;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

AggregateResult aggregate(std::span<const ProbeResult> results) {
    AggregateResult out;
    out.runs = results.size();
    if (results.empty()) {
        return out;
    }
    std::vector<double> acc;
    std::vector<double> r2;
    for (const auto& r : results) {
        acc.push_back(r.accuracy);
        r2.push_back(r.r2_mean);
    }
    out.accuracy = summarize(acc);
    out.r2 = summarize(r2);
    const std::size_t features = results.front().r2_per_feature.size();
    for (std::size_t f = 0; f < features; ++f) {
        std::vector<double> column;
        for (const auto& r : results) {
            column.push_back(f < r.r2_per_feature.size() ? r.r2_per_feature[f] : 0.0);
        }
        out.r2_per_feature.push_back(summarize(column));
    }
    return out;
}

} // namespace trimine
