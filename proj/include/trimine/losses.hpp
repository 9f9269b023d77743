#pragma once

#include "trimine/dataset.hpp"
#include "trimine/mi.hpp"
#include "trimine/model.hpp"
#include "trimine/selection.hpp"

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace trimine {

enum class Strategy {
    WTL,       // no training; probes see the raw embeddings
    CLTL,      // class-label triplets
    CLTL_HARD, // class-label triplets, batch-hard mining
    MATL,      // class and box branches weighted by lambda
    TG_MATL,   // MATL with anchors/positives restricted to the relevance mask
};

inline constexpr std::array<Strategy, 5> kAllStrategies{Strategy::WTL, Strategy::CLTL, Strategy::CLTL_HARD,
                                                        Strategy::MATL, Strategy::TG_MATL};

std::string_view to_string(Strategy strategy) noexcept;
Strategy parse_strategy(std::string_view name);

struct LossConfig {
    Strategy strategy = Strategy::TG_MATL;
    double lambda = 0.5;
    double margin = 1.0;
    std::optional<SelectionConfig> selection; // TG_MATL only
    HardMining hard_mining = HardMining::BatchHard;

    void validate() const;
};

struct DerivedAnnotations {
    BoxFeatureMatrix features;
    DiscreteBoxLabels box_labels;
};

struct StepTriplets {
    std::vector<Triplet> triplets;
    std::size_t skipped_anchors = 0;
};

// Per-strategy triplet supplier and loss evaluator over one (training) dataset.
class Objective {
public:
    Objective(LossConfig config, const Dataset& dataset, const DerivedAnnotations& derived,
              const RelevanceScores* scores);

    const LossConfig& config() const noexcept { return config_; }
    bool trains() const noexcept { return config_.strategy != Strategy::WTL; }
    BranchWeights weights() const noexcept;
    const std::optional<SelectionMask>& mask() const noexcept { return mask_; }
    const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
    std::size_t size() const noexcept { return class_labels_.size(); }

    // Triplets for one optimisation step with anchors from `batch`. Random strategies
    // draw partners from `pool`; batch-hard mining stays inside `batch`.
    StepTriplets mine(const ProjectionModel& model, std::span<const std::size_t> batch,
                      std::span<const std::size_t> pool, Rng& rng) const;

    LossEvaluation evaluate(const ProjectionModel& model, std::span<const Triplet> triplets) const;

private:
    LossConfig config_;
    Eigen::MatrixXd inputs_;
    std::vector<int> class_labels_;
    std::vector<int> box_labels_;
    std::optional<SelectionMask> mask_;
};

// Throws ConfigError when TG_MATL is requested without relevance scores.
Objective build_objective(const LossConfig& config, const Dataset& dataset, const DerivedAnnotations& derived,
                          const RelevanceScores* scores);

struct TrainingConfig {
    std::size_t hidden_dim = 256;
    std::size_t output_dim = 128;
    AdamConfig adam;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
};

struct TrainingReport {
    std::vector<double> epoch_loss;
    std::size_t steps = 0;
    std::size_t empty_batches = 0;
    std::size_t skipped_anchors = 0;
};

struct TrainedProjection {
    std::optional<ProjectionModel> model; // empty for WTL
    TrainingReport report;

    // Identity when no model was trained.
    Eigen::MatrixXd project(const Eigen::MatrixXd& embeddings) const;
};

// Minibatch Adam over shuffled anchors. All randomness derives from `seed`.
TrainedProjection train_projection(const Objective& objective, const TrainingConfig& config, std::uint64_t seed);

} // namespace trimine
