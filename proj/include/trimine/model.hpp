#pragma once

#include "trimine/selection.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace trimine {

struct ModelConfig {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 256; // 0 = single linear layer
    std::size_t output_dim = 128;
};

struct DenseLayer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;
};

// Layer-shaped storage shared by parameters, gradients and optimizer moments.
using Parameters = std::vector<DenseLayer>;

Parameters zeros_like(const Parameters& params);

// MLP with a rectifier after every layer but the last.
class ProjectionModel {
public:
    ProjectionModel() = default;
    // Weights and biases uniform in +-1/sqrt(fan_in), drawn from `seed`.
    ProjectionModel(const ModelConfig& config, std::uint64_t seed);
    explicit ProjectionModel(Parameters layers);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;

    Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
    // Row-wise forward pass over a sample matrix.
    Eigen::MatrixXd forward_rows(const Eigen::MatrixXd& x) const;

    const Parameters& layers() const noexcept { return layers_; }
    Parameters& layers() noexcept { return layers_; }

    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);

private:
    Parameters layers_;
};

Eigen::VectorXd flatten(const Parameters& params);

// Squared Euclidean distance.
double distance(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v);

double triplet_hinge(double d_anchor_positive, double d_anchor_negative, double margin) noexcept;

struct BranchWeights {
    double class_weight = 1.0;
    double box_weight = 0.0;
};

struct LossEvaluation {
    double loss = 0.0;
    double class_loss = 0.0; // mean hinge over class-branch triplets
    double box_loss = 0.0;   // mean hinge over box-branch triplets
    std::size_t class_triplets = 0;
    std::size_t box_triplets = 0;
    std::size_t active_triplets = 0;
    Parameters gradients;
};

// loss = w_class * mean(class hinges) + w_box * mean(box hinges); a branch with no
// triplets contributes 0. Inactive hinges, including the kink at exactly 0, add no gradient.
// `inputs` holds the input embedding of every sample referenced by the triplets.
LossEvaluation loss_and_gradients(const ProjectionModel& model, std::span<const Triplet> triplets,
                                  const Eigen::MatrixXd& inputs, double margin, BranchWeights weights);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    Parameters first_moment;
    Parameters second_moment;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;

    static OptimizerState for_model(const ProjectionModel& model, const AdamConfig& config, std::uint64_t seed);
};

// Bias-corrected Adam update. Throws NonFiniteError before touching the model
// if any gradient entry is NaN or infinite.
void optimizer_step(ProjectionModel& model, const Parameters& gradients, OptimizerState& state);

// First line: JSON header with shapes and `metadata`; then one CSV line per tensor,
// `name,v0,v1,...`, row-major.
void save_checkpoint(const std::filesystem::path& path, const ProjectionModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());
ProjectionModel load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

} // namespace trimine
