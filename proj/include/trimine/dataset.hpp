#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trimine {

struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    bool valid() const noexcept { return x_max > x_min && y_max > y_min; }
};

struct Sample {
    std::string id;
    Eigen::VectorXd embedding;
    int class_label = 0;
    Box box;
};

// Frozen embeddings joined with their class and box annotations.
// Class labels are contiguous in 1..C; class_names[c - 1] is the original string.
struct Dataset {
    std::vector<std::string> ids;
    Eigen::MatrixXd embeddings; // one row per sample
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<Box> boxes;

    std::size_t size() const noexcept { return ids.size(); }
    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(embeddings.cols()); }
    std::size_t num_classes() const noexcept { return class_names.size(); }

    Sample sample(std::size_t i) const;
    std::vector<std::size_t> class_counts() const;

    // Rows in the given order; class ids and names are kept as-is.
    Dataset subset(std::span<const std::size_t> indices) const;

    // Throws ValidationError on shape mismatch, bad label or degenerate box.
    void validate() const;
};

Dataset load_dataset(const std::filesystem::path& embeddings_path,
                     const std::filesystem::path& annotations_path);

// Shortest round-trip float formatting, so load(write(d)) == d bit for bit.
void write_dataset(const Dataset& dataset,
                   const std::filesystem::path& embeddings_path,
                   const std::filesystem::path& annotations_path);

enum class BoxFeature : std::size_t { Width = 0, Height = 1, Area = 2, Squareness = 3 };
inline constexpr std::size_t kBoxFeatureCount = 4;

std::string_view to_string(BoxFeature feature) noexcept;
BoxFeature parse_box_feature(std::string_view name);

// Columns follow BoxFeature order. `values` are raw, `normalized` min-max scaled per column.
struct BoxFeatureMatrix {
    Eigen::MatrixXd values;
    Eigen::MatrixXd normalized;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
    BoxFeatureMatrix subset(std::span<const std::size_t> indices) const;
};

// Constant columns map to all zeros.
Eigen::VectorXd min_max_normalize(const Eigen::VectorXd& column);

BoxFeatureMatrix derive_box_features(const Dataset& dataset);
BoxFeatureMatrix box_features_from_raw(Eigen::MatrixXd raw);

// Equal-frequency binning into labels 1..bins. The edge after bin b is the value at
// sorted position ceil(b * N / bins) - 1; a value equal to an edge goes to the lower bin.
std::vector<int> equal_frequency_bins(std::span<const double> values, std::size_t bins,
                                      std::vector<double>* edges = nullptr);

struct DiscreteBoxLabels {
    std::vector<int> labels;
    std::size_t bins = 0;
    BoxFeature source_feature = BoxFeature::Area;
    std::vector<double> bin_edges;
};

DiscreteBoxLabels discretize_box_labels(const BoxFeatureMatrix& features, BoxFeature source_feature,
                                        std::size_t bins);

struct SyntheticOptions {
    // Radius of the circle carrying the class mode centres (unit within-mode spread).
    double class_separation = 2.5;
    // Modes per class, interleaved around the circle; >1 defeats a linear class boundary.
    std::size_t modes_per_class = 2;
    // Multiplier on the latent structure before it is mixed into the embedding space.
    double latent_scale = 3.0;
    double embedding_noise = 0.5;
    // Scale of the box size and aspect latents.
    double geometry_signal = 1.0;
};

// Class-conditional Gaussian mixtures in a low-rank latent space, mixed into k_in
// dimensions with isotropic noise. Box log-scale shifts with the class index in
// proportion to `geometry_class_coupling`; coupling 0 makes boxes independent of class.
Dataset generate_synthetic(std::span<const std::size_t> n_per_class, std::size_t k_in,
                           double geometry_class_coupling, std::uint64_t seed,
                           const SyntheticOptions& options = {});

} // namespace trimine
