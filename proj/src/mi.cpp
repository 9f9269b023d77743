#include "trimine/mi.hpp"

#include "trimine/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace trimine {

namespace {

std::map<int, std::size_t> counts_of(std::span<const int> labels) {
    std::map<int, std::size_t> counts;
    for (int label : labels) {
        ++counts[label];
    }
    return counts;
}

double to_base(double nats, LogBase base) {
    return base == LogBase::Bits ? nats / std::numbers::ln2 : nats;
}

// Sum in ascending order so the result does not depend on how terms were enumerated.
double canonical_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double total = 0.0;
    for (double t : terms) {
        total += t;
    }
    return total;
}

} // namespace

double discrete_mi(std::span<const int> u_labels, std::span<const int> v_labels, LogBase base) {
    if (u_labels.size() != v_labels.size()) {
        throw ValidationError("discrete_mi: label vectors differ in length (" + std::to_string(u_labels.size()) +
                              " vs " + std::to_string(v_labels.size()) + ")");
    }
    const std::size_t n = u_labels.size();
    if (n == 0) {
        throw ValidationError("discrete_mi: empty label vectors");
    }
    const auto u_counts = counts_of(u_labels);
    const auto v_counts = counts_of(v_labels);
    std::map<std::pair<int, int>, std::size_t> joint;
    for (std::size_t i = 0; i < n; ++i) {
        ++joint[{u_labels[i], v_labels[i]}];
    }

    const double total = static_cast<double>(n);
    std::vector<double> terms;
    terms.reserve(joint.size());
    for (const auto& [cell, count] : joint) {
        const double n_uv = static_cast<double>(count);
        // n_u * n_v is an exact integer product, so the term is symmetric in (u, v).
        const double marginal = static_cast<double>(u_counts.at(cell.first)) * static_cast<double>(v_counts.at(cell.second));
        terms.push_back(n_uv / total * std::log(n_uv * total / marginal));
    }
    const double mi = canonical_sum(terms);
    return to_base(std::max(mi, 0.0), base);
}

double entropy(std::span<const int> labels, LogBase base) {
    if (labels.empty()) {
        throw ValidationError("entropy: empty label vector");
    }
    const double total = static_cast<double>(labels.size());
    std::vector<double> terms;
    for (const auto& [label, count] : counts_of(labels)) {
        const double p = static_cast<double>(count) / total;
        terms.push_back(-p * std::log(p));
    }
    return to_base(std::max(canonical_sum(terms), 0.0), base);
}

double continuous_mi(std::span<const double> feature, std::span<const int> class_labels, std::size_t bins,
                     LogBase base) {
    if (feature.size() != class_labels.size()) {
        throw ValidationError("continuous_mi: feature and label vectors differ in length");
    }
    const std::vector<int> binned = equal_frequency_bins(feature, bins);
    return discrete_mi(binned, class_labels, base);
}

RelevanceScores relevance_scores(const BoxFeatureMatrix& features, std::span<const int> class_labels,
                                 const MIEstimatorConfig& config) {
    if (features.rows() != class_labels.size()) {
        throw ValidationError("relevance_scores: feature rows and label count differ");
    }
    RelevanceScores out;
    out.mi.estimator_config = config;
    const auto num_features = features.values.cols();
    out.mi.per_feature_mi.resize(static_cast<std::size_t>(num_features));
    for (Eigen::Index f = 0; f < num_features; ++f) {
        const Eigen::VectorXd column = features.values.col(f);
        out.mi.per_feature_mi[static_cast<std::size_t>(f)] =
            continuous_mi(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())),
                          class_labels, config.bins, config.base);
    }
    out.scores.assign(features.rows(), 0.0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        double m = 0.0;
        for (Eigen::Index f = 0; f < num_features; ++f) {
            m += features.normalized(static_cast<Eigen::Index>(i), f) * out.mi.per_feature_mi[static_cast<std::size_t>(f)];
        }
        out.scores[i] = m;
    }
    return out;
}

std::vector<ClassSummary> per_class_mi_summary(const RelevanceScores& scores, std::span<const int> class_labels,
                                               StdKind std_kind) {
    if (scores.scores.size() != class_labels.size()) {
        throw ValidationError("per_class_mi_summary: score and label counts differ");
    }
    std::map<int, std::vector<double>> by_class;
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
        by_class[class_labels[i]].push_back(scores.scores[i]);
    }
    std::vector<ClassSummary> out;
    for (const auto& [label, values] : by_class) {
        ClassSummary s;
        s.class_label = label;
        s.count = values.size();
        double sum = 0.0;
        for (double v : values) sum += v;
        s.mean = sum / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        const double denom = std_kind == StdKind::Sample ? static_cast<double>(values.size()) - 1.0
                                                         : static_cast<double>(values.size());
        s.std = denom > 0.0 ? std::sqrt(ss / denom) : 0.0;
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        s.min = *lo;
        s.max = *hi;
        out.push_back(s);
    }
    return out;
}

} // namespace trimine
