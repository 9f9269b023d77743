#include "trimine/selection.hpp"

#include "trimine/csv.hpp"
#include "trimine/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace trimine {

namespace {

// Absorbs representation error so that e.g. 0.29 * 100 floors to 29.
constexpr double kFloorSlack = 1e-9;

std::size_t floor_share(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + kFloorSlack));
}

} // namespace

void SelectionConfig::validate() const {
    if (!(p_top > 0.0 && p_top <= 1.0)) {
        throw ConfigError("p_top must lie in (0, 1], got " + csv::format(p_top));
    }
    if (!(p_rand >= 0.0 && p_rand <= 1.0)) {
        throw ConfigError("p_rand must lie in [0, 1], got " + csv::format(p_rand));
    }
}

std::size_t SelectionMask::selected_count() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t top_count(std::size_t class_size, double p_top) {
    return std::min(class_size, std::max<std::size_t>(1, floor_share(p_top, class_size)));
}

std::size_t random_count(std::size_t class_size, std::size_t top_selected, double p_rand) {
    const std::size_t remaining = class_size - top_selected;
    return std::min(floor_share(p_rand, class_size), remaining);
}

SelectionMask build_mask(const RelevanceScores& scores, std::span<const int> class_labels,
                         const SelectionConfig& config) {
    config.validate();
    const std::size_t n = class_labels.size();
    if (scores.scores.size() != n) {
        throw ValidationError("build_mask: score and label counts differ");
    }
    int max_label = 0;
    for (int label : class_labels) {
        if (label < 1) {
            throw ValidationError("build_mask: class labels must be >= 1");
        }
        max_label = std::max(max_label, label);
    }
    const auto num_classes = static_cast<std::size_t>(max_label);
    std::vector<std::vector<std::size_t>> members(num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        members[static_cast<std::size_t>(class_labels[i] - 1)].push_back(i);
    }

    SelectionMask out;
    out.per_class_top.resize(num_classes);
    out.per_class_rand.resize(num_classes);
    out.mask.assign(n, 0);
    out.kind.assign(n, SelectionKind::None);

    Rng rng(config.seed, Stream::Mask);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> ranked = members[c];
        if (ranked.empty()) {
            throw ValidationError("build_mask: class " + std::to_string(c + 1) + " has no samples");
        }
        // members are in ascending index order, so a stable sort breaks ties low.
        std::stable_sort(ranked.begin(), ranked.end(),
                         [&](std::size_t a, std::size_t b) { return scores.scores[a] > scores.scores[b]; });

        const std::size_t n_top = top_count(ranked.size(), config.p_top);
        const std::size_t n_rand = random_count(ranked.size(), n_top, config.p_rand);

        out.per_class_top[c].assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n_top));

        std::vector<std::size_t> rest(ranked.begin() + static_cast<std::ptrdiff_t>(n_top), ranked.end());
        std::sort(rest.begin(), rest.end());
        // Partial Fisher-Yates: the first n_rand slots are a uniform draw without replacement.
        for (std::size_t k = 0; k < n_rand; ++k) {
            std::swap(rest[k], rest[k + rng.index(rest.size() - k)]);
        }
        out.per_class_rand[c].assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_rand));

        for (std::size_t i : out.per_class_top[c]) {
            out.mask[i] = 1;
            out.kind[i] = SelectionKind::Top;
        }
        for (std::size_t i : out.per_class_rand[c]) {
            out.mask[i] = 1;
            out.kind[i] = SelectionKind::Random;
        }
    }
    return out;
}

void write_mask_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                    const RelevanceScores& scores, const SelectionMask& mask) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << "id,m_i,selected,selection_kind\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const char* kind = mask.kind[i] == SelectionKind::Top ? "top"
                           : mask.kind[i] == SelectionKind::Random ? "rand"
                                                                   : "none";
        out << csv::escape(ids[i]) << ',' << csv::format(scores.scores[i]) << ',' << int(mask.mask[i]) << ','
            << kind << '\n';
    }
}

MiningResult mine_triplets(std::span<const int> labels, std::span<const std::uint8_t> mask,
                           std::span<const std::size_t> anchors, std::span<const std::size_t> pool, Rng& rng,
                           Branch branch) {
    const bool masked = !mask.empty();
    if (masked && mask.size() != labels.size()) {
        throw ValidationError("mine_triplets: mask length differs from label count");
    }

    // Pool members grouped by label, in pool order.
    std::map<int, std::vector<std::size_t>> groups;
    std::map<int, std::vector<std::size_t>> masked_groups;
    for (std::size_t i : pool) {
        groups[labels[i]].push_back(i);
        if (!masked || mask[i] != 0) {
            masked_groups[labels[i]].push_back(i);
        }
    }

    MiningResult result;
    if (groups.size() < 2) {
        result.single_label = true;
        return result;
    }

    for (std::size_t a : anchors) {
        if (masked && mask[a] == 0) {
            continue;
        }
        const int label = labels[a];

        const auto pos_it = masked_groups.find(label);
        const std::vector<std::size_t> empty;
        const std::vector<std::size_t>& positives = pos_it == masked_groups.end() ? empty : pos_it->second;
        const auto self = std::find(positives.begin(), positives.end(), a);
        const std::size_t pos_count = positives.size() - (self != positives.end() ? 1 : 0);

        const auto same = groups.find(label);
        const std::size_t neg_count = pool.size() - (same == groups.end() ? 0 : same->second.size());

        if (pos_count == 0 || neg_count == 0) {
            ++result.skipped_anchors;
            continue;
        }

        std::size_t j = rng.index(pos_count);
        if (self != positives.end() && j >= static_cast<std::size_t>(self - positives.begin())) {
            ++j;
        }
        const std::size_t positive = positives[j];

        std::size_t k = rng.index(neg_count);
        std::size_t negative = 0;
        for (const auto& [other, members] : groups) {
            if (other == label) {
                continue;
            }
            if (k < members.size()) {
                negative = members[k];
                break;
            }
            k -= members.size();
        }
        result.triplets.push_back(Triplet{a, positive, negative, branch});
    }
    return result;
}

MiningResult mine_class_triplets(std::span<const int> labels, std::span<const std::uint8_t> mask,
                                 std::span<const std::size_t> batch, std::uint64_t seed) {
    Rng rng(seed, Stream::Mining);
    return mine_triplets(labels, mask, batch, batch, rng, Branch::Class);
}

MiningResult mine_box_triplets(const DiscreteBoxLabels& box_labels, std::span<const std::uint8_t> mask,
                               std::span<const std::size_t> batch, std::uint64_t seed) {
    Rng rng(seed, Stream::Mining);
    return mine_triplets(box_labels.labels, mask, batch, batch, rng, Branch::Box);
}

MiningResult mine_hard_class_triplets(std::span<const int> labels, const Eigen::MatrixXd& projected,
                                      std::span<const std::size_t> batch, HardMining mode, Rng* rng) {
    if (mode == HardMining::HardestNegative && rng == nullptr) {
        throw ConfigError("hardest-negative mining needs a random generator for positives");
    }
    std::vector<std::size_t> sorted(batch.begin(), batch.end());
    std::sort(sorted.begin(), sorted.end());

    MiningResult result;
    {
        bool mixed = false;
        for (std::size_t i : sorted) {
            if (labels[i] != labels[sorted.front()]) {
                mixed = true;
                break;
            }
        }
        if (sorted.empty() || !mixed) {
            result.single_label = true;
            return result;
        }
    }

    for (std::size_t a : batch) {
        const auto anchor = projected.row(static_cast<Eigen::Index>(a));
        std::size_t best_pos = 0;
        std::size_t best_neg = 0;
        double far_pos = -1.0;
        double near_neg = 0.0;
        bool have_pos = false;
        bool have_neg = false;
        std::vector<std::size_t> positives;
        for (std::size_t i : sorted) {
            if (i == a) {
                continue;
            }
            const double d = (projected.row(static_cast<Eigen::Index>(i)) - anchor).squaredNorm();
            if (labels[i] == labels[a]) {
                positives.push_back(i);
                if (!have_pos || d > far_pos) {
                    far_pos = d;
                    best_pos = i;
                    have_pos = true;
                }
            } else if (!have_neg || d < near_neg) {
                near_neg = d;
                best_neg = i;
                have_neg = true;
            }
        }
        if (!have_pos || !have_neg) {
            ++result.skipped_anchors;
            continue;
        }
        if (mode == HardMining::HardestNegative) {
            best_pos = positives[rng->index(positives.size())];
        }
        result.triplets.push_back(Triplet{a, best_pos, best_neg, Branch::Class});
    }
    return result;
}

} // namespace trimine
