#pragma once

#include "trimine/dataset.hpp"
#include "trimine/mi.hpp"
#include "trimine/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace trimine {

struct SelectionConfig {
    double p_top = 0.1;  // in (0, 1]
    double p_rand = 0.0; // in [0, 1]
    std::uint64_t seed = 0;

    void validate() const;
};

enum class SelectionKind : std::uint8_t { None, Top, Random };

// Per-class top/random selection. Class c is stored at index c - 1.
struct SelectionMask {
    std::vector<std::vector<std::size_t>> per_class_top;
    std::vector<std::vector<std::size_t>> per_class_rand;
    std::vector<std::uint8_t> mask;
    std::vector<SelectionKind> kind;

    std::size_t selected_count() const noexcept;
};

// Counts used for one class of size `class_size`.
std::size_t top_count(std::size_t class_size, double p_top);
std::size_t random_count(std::size_t class_size, std::size_t top_selected, double p_rand);

// Ranks each class by score descending (ties to the lower index), keeps the top
// share, then draws the random share without replacement from the rest.
SelectionMask build_mask(const RelevanceScores& scores, std::span<const int> class_labels,
                         const SelectionConfig& config);

void write_mask_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                    const RelevanceScores& scores, const SelectionMask& mask);

enum class Branch : std::uint8_t { Class, Box };

struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    Branch branch = Branch::Class;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct MiningResult {
    std::vector<Triplet> triplets;
    // Anchors that had no admissible positive or negative.
    std::size_t skipped_anchors = 0;
    // The candidate pool carried a single label, so no triplet exists.
    bool single_label = false;
};

// One triplet per admissible anchor. An empty `mask` means no restriction;
// otherwise anchors and positives need mask[i] != 0 while negatives are unrestricted.
// Positives and negatives are drawn uniformly from `pool`.
MiningResult mine_triplets(std::span<const int> labels, std::span<const std::uint8_t> mask,
                           std::span<const std::size_t> anchors, std::span<const std::size_t> pool, Rng& rng,
                           Branch branch);

MiningResult mine_class_triplets(std::span<const int> labels, std::span<const std::uint8_t> mask,
                                 std::span<const std::size_t> batch, std::uint64_t seed);

MiningResult mine_box_triplets(const DiscreteBoxLabels& box_labels, std::span<const std::uint8_t> mask,
                               std::span<const std::size_t> batch, std::uint64_t seed);

enum class HardMining {
    BatchHard,       // farthest positive, nearest negative
    HardestNegative, // random positive, nearest negative
};

// `projected` holds the current embedding of every sample, one row per index.
// Ties go to the lower sample index. HardestNegative needs `rng`.
MiningResult mine_hard_class_triplets(std::span<const int> labels, const Eigen::MatrixXd& projected,
                                      std::span<const std::size_t> batch, HardMining mode = HardMining::BatchHard,
                                      Rng* rng = nullptr);

} // namespace trimine
