#pragma once

// Randomized small gradient-check instances, shared by the unit tests and the
// acceptance binary.

#include "oracles.hpp"

#include "trimine/dataset.hpp"
#include "trimine/losses.hpp"
#include "trimine/mi.hpp"

#include <numeric>
#include <optional>
#include <string>

namespace trimine::test {

struct GradientCase {
    std::string name;
    Strategy strategy = Strategy::CLTL;
    double lambda = 0.5;
};

inline std::vector<GradientCase> gradient_cases() {
    return {
        {"cltl", Strategy::CLTL, 0.5},       {"cltl-hard", Strategy::CLTL_HARD, 0.5},
        {"matl(lambda=0)", Strategy::MATL, 0.0}, {"matl(lambda=0.5)", Strategy::MATL, 0.5},
        {"matl(lambda=1)", Strategy::MATL, 1.0}, {"tg-matl", Strategy::TG_MATL, 0.5},
    };
}

struct GradientCheck {
    bool ok = false;
    double mismatch = 0.0;   // worst error / allowance, <= 1 passes
    double loss_gap = 0.0;   // |library loss - reference loss|
    std::size_t triplets = 0;
    std::size_t active = 0;
};

// True when some hinge or hidden pre-activation sits within `eps` of its kink,
// where a central difference straddles two linear pieces.
inline bool near_kink(const ProjectionModel& model, std::span<const Triplet> triplets, const Eigen::MatrixXd& inputs,
                      double margin, double eps) {
    const auto& layers = model.layers();
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        Eigen::VectorXd a = inputs.row(r).transpose();
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
            const Eigen::VectorXd z = layers[l].weight * a + layers[l].bias;
            if ((z.array().abs() < eps).any()) {
                return true;
            }
            a = z.cwiseMax(0.0);
        }
    }
    for (const auto& t : triplets) {
        const Eigen::VectorXd fa = model.forward(inputs.row(static_cast<Eigen::Index>(t.anchor)).transpose());
        const Eigen::VectorXd fp = model.forward(inputs.row(static_cast<Eigen::Index>(t.positive)).transpose());
        const Eigen::VectorXd fn = model.forward(inputs.row(static_cast<Eigen::Index>(t.negative)).transpose());
        const double h = (fa - fp).squaredNorm() - (fa - fn).squaredNorm() + margin;
        if (std::abs(h) < eps) {
            return true;
        }
    }
    return false;
}

// One randomized instance: N <= 12 samples, k_in <= 6. Instances that land near a
// kink are redrawn from the next sub-seed.
inline GradientCheck run_gradient_case(const GradientCase& c, std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed * 1000 + attempt);
        const std::size_t k_in = 2 + rng.index(5);
        const std::size_t per_class = 2 + rng.index(3);
        const std::vector<std::size_t> counts{per_class, per_class, 12 - 2 * per_class};
        const Dataset ds = generate_synthetic(counts, k_in, 0.7, seed * 1000 + attempt);

        DerivedAnnotations derived;
        derived.features = derive_box_features(ds);
        derived.box_labels = discretize_box_labels(derived.features, BoxFeature::Area, 3);
        MIEstimatorConfig mi;
        mi.bins = 3;
        const RelevanceScores scores = relevance_scores(derived.features, ds.labels, mi);

        LossConfig config;
        config.strategy = c.strategy;
        config.lambda = c.lambda;
        config.margin = 0.5 + rng.uniform(0.0, 1.0);
        if (c.strategy == Strategy::TG_MATL) {
            config.selection = SelectionConfig{0.5, 0.25, seed};
        }
        const Objective objective(config, ds, derived, &scores);

        const std::size_t hidden = rng.index(2) == 0 ? 0 : 3 + rng.index(4);
        const ProjectionModel model({k_in, hidden, 2 + rng.index(3)}, seed * 7 + attempt);

        std::vector<std::size_t> all(ds.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        Rng mining(seed + attempt, Stream::Mining);
        const StepTriplets mined = objective.mine(model, all, all, mining);
        if (mined.triplets.empty() || near_kink(model, mined.triplets, ds.embeddings, config.margin, 1e-4)) {
            continue;
        }

        const LossEvaluation eval = objective.evaluate(model, mined.triplets);
        const auto reference = [&](const ProjectionModel& m) {
            return oracle::reference_loss(m, mined.triplets, ds.embeddings, config.margin, objective.weights());
        };
        const Eigen::VectorXd numeric = oracle::finite_difference_gradient(model, reference, 1e-5);

        GradientCheck out;
        out.mismatch = oracle::gradient_mismatch(flatten(eval.gradients), numeric, 1e-4, 1e-7);
        out.loss_gap = std::abs(eval.loss - reference(model));
        out.triplets = mined.triplets.size();
        out.active = eval.active_triplets;
        out.ok = out.mismatch <= 1.0 && out.loss_gap <= 1e-12 * std::max(1.0, std::abs(eval.loss));
        return out;
    }
}

} // namespace trimine::test
