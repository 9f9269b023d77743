#include "trimine/losses.hpp"

#include "trimine/csv.hpp"
#include "trimine/error.hpp"

#include <cmath>
#include <numeric>

namespace trimine {

std::string_view to_string(Strategy strategy) noexcept {
    switch (strategy) {
    case Strategy::WTL: return "wtl";
    case Strategy::CLTL: return "cltl";
    case Strategy::CLTL_HARD: return "cltl-hard";
    case Strategy::MATL: return "matl";
    case Strategy::TG_MATL: return "tg-matl";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : kAllStrategies) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "' (wtl|cltl|cltl-hard|matl|tg-matl)");
}

void LossConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("lambda must lie in [0, 1], got " + csv::format(lambda));
    }
    if (!(margin > 0.0)) {
        throw ConfigError("margin must be positive, got " + csv::format(margin));
    }
    if (strategy == Strategy::TG_MATL) {
        if (!selection) {
            throw ConfigError("tg-matl requires a selection config (p_top, p_rand, seed)");
        }
        selection->validate();
    }
}

Objective::Objective(LossConfig config, const Dataset& dataset, const DerivedAnnotations& derived,
                     const RelevanceScores* scores)
    : config_(std::move(config)), inputs_(dataset.embeddings), class_labels_(dataset.labels),
      box_labels_(derived.box_labels.labels) {
    config_.validate();
    if (box_labels_.size() != class_labels_.size()) {
        throw ValidationError("objective: box labels and dataset differ in length");
    }
    if (config_.strategy == Strategy::TG_MATL) {
        if (scores == nullptr) {
            throw ConfigError("tg-matl requires relevance scores");
        }
        mask_ = build_mask(*scores, class_labels_, *config_.selection);
    }
}

BranchWeights Objective::weights() const noexcept {
    switch (config_.strategy) {
    case Strategy::MATL:
    case Strategy::TG_MATL: return BranchWeights{1.0 - config_.lambda, config_.lambda};
    case Strategy::CLTL:
    case Strategy::CLTL_HARD: return BranchWeights{1.0, 0.0};
    case Strategy::WTL: break;
    }
    return BranchWeights{0.0, 0.0};
}

StepTriplets Objective::mine(const ProjectionModel& model, std::span<const std::size_t> batch,
                             std::span<const std::size_t> pool, Rng& rng) const {
    StepTriplets out;
    auto append = [&out](MiningResult&& r) {
        out.skipped_anchors += r.skipped_anchors;
        out.triplets.insert(out.triplets.end(), r.triplets.begin(), r.triplets.end());
    };
    const std::span<const std::uint8_t> mask =
        mask_ ? std::span<const std::uint8_t>(mask_->mask) : std::span<const std::uint8_t>();

    switch (config_.strategy) {
    case Strategy::WTL:
        break;
    case Strategy::CLTL:
        append(mine_triplets(class_labels_, {}, batch, pool, rng, Branch::Class));
        break;
    case Strategy::CLTL_HARD: {
        Eigen::MatrixXd rows(static_cast<Eigen::Index>(batch.size()), inputs_.cols());
        std::vector<int> labels(batch.size());
        std::vector<std::size_t> local(batch.size());
        for (std::size_t r = 0; r < batch.size(); ++r) {
            rows.row(static_cast<Eigen::Index>(r)) = inputs_.row(static_cast<Eigen::Index>(batch[r]));
            labels[r] = class_labels_[batch[r]];
            local[r] = r;
        }
        MiningResult mined = mine_hard_class_triplets(labels, model.forward_rows(rows), local, config_.hard_mining, &rng);
        for (auto& t : mined.triplets) {
            t.anchor = batch[t.anchor];
            t.positive = batch[t.positive];
            t.negative = batch[t.negative];
        }
        append(std::move(mined));
        break;
    }
    case Strategy::MATL:
    case Strategy::TG_MATL:
        append(mine_triplets(class_labels_, mask, batch, pool, rng, Branch::Class));
        append(mine_triplets(box_labels_, mask, batch, pool, rng, Branch::Box));
        break;
    }
    return out;
}

LossEvaluation Objective::evaluate(const ProjectionModel& model, std::span<const Triplet> triplets) const {
    return loss_and_gradients(model, triplets, inputs_, config_.margin, weights());
}

Objective build_objective(const LossConfig& config, const Dataset& dataset, const DerivedAnnotations& derived,
                          const RelevanceScores* scores) {
    return Objective(config, dataset, derived, scores);
}

Eigen::MatrixXd TrainedProjection::project(const Eigen::MatrixXd& embeddings) const {
    return model ? model->forward_rows(embeddings) : embeddings;
}

TrainedProjection train_projection(const Objective& objective, const TrainingConfig& config, std::uint64_t seed) {
    TrainedProjection result;
    if (!objective.trains()) {
        return result;
    }
    if (config.batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    const ModelConfig model_config{static_cast<std::size_t>(objective.inputs().cols()), config.hidden_dim,
                                   config.output_dim};
    ProjectionModel model(model_config, seed);
    OptimizerState state = OptimizerState::for_model(model, config.adam, seed);

    Rng shuffle_rng(seed, Stream::Shuffle);
    Rng mining_rng(seed, Stream::Mining);

    std::vector<std::size_t> pool(objective.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> order = pool;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t loss_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            StepTriplets mined = objective.mine(model, batch, pool, mining_rng);
            result.report.skipped_anchors += mined.skipped_anchors;
            if (mined.triplets.empty()) {
                ++result.report.empty_batches;
                continue;
            }
            const LossEvaluation eval = objective.evaluate(model, mined.triplets);
            if (!std::isfinite(eval.loss)) {
                throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch));
            }
            optimizer_step(model, eval.gradients, state);
            loss_sum += eval.loss;
            ++loss_steps;
            ++result.report.steps;
        }
        result.report.epoch_loss.push_back(loss_steps > 0 ? loss_sum / static_cast<double>(loss_steps) : 0.0);
    }
    result.model = std::move(model);
    return result;
}

} // namespace trimine
