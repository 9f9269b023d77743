#pragma once

#include "trimine/dataset.hpp"

#include <span>
#include <string>
#include <vector>

namespace trimine {

enum class LogBase { Nats, Bits };

struct MIEstimatorConfig {
    std::size_t bins = 8;
    LogBase base = LogBase::Nats;
    // Only equal-frequency binning is implemented; the name is echoed into reports.
    std::string scheme = "equal_frequency";
};

struct MIVector {
    std::vector<double> per_feature_mi;
    MIEstimatorConfig estimator_config;
};

struct RelevanceScores {
    std::vector<double> scores;
    MIVector mi;
};

// Plug-in mutual information of two label vectors from their empirical joint
// histogram. Labels may be arbitrary integers. Symmetric in its arguments bit for bit.
double discrete_mi(std::span<const int> u_labels, std::span<const int> v_labels, LogBase base = LogBase::Nats);

// Plug-in entropy of one label vector.
double entropy(std::span<const int> labels, LogBase base = LogBase::Nats);

// Equal-frequency bins the feature, then discrete_mi against the labels.
double continuous_mi(std::span<const double> feature, std::span<const int> class_labels, std::size_t bins,
                     LogBase base = LogBase::Nats);

// m_i = sum_f normalized(i, f) * MI(raw column f, class).
RelevanceScores relevance_scores(const BoxFeatureMatrix& features, std::span<const int> class_labels,
                                 const MIEstimatorConfig& config = {});

struct ClassSummary {
    int class_label = 0;
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
};

enum class StdKind { Population, Sample };

// One entry per class present in `class_labels`, ascending by label.
std::vector<ClassSummary> per_class_mi_summary(const RelevanceScores& scores, std::span<const int> class_labels,
                                               StdKind std_kind = StdKind::Population);

} // namespace trimine
