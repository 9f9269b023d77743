#include "test_util.hpp"

#include "trimine/error.hpp"
#include "trimine/selection.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace trimine;

namespace {

RelevanceScores scores_of(std::vector<double> values) {
    RelevanceScores r;
    r.scores = std::move(values);
    return r;
}

} // namespace

TEST(Counts, FloorArithmetic) {
    EXPECT_EQ(top_count(10, 0.25), 2u);
    EXPECT_EQ(random_count(10, 2, 0.2), 2u);
    EXPECT_EQ(top_count(3, 0.1), 1u);
    EXPECT_EQ(top_count(100, 0.29), 29u);
    EXPECT_EQ(random_count(5, 4, 0.9), 1u);
}

TEST(BuildMask, WholeClassWhenPTopIsOne) {
    const std::vector<int> labels{1, 2, 1, 3, 2, 1};
    const auto mask = build_mask(scores_of({0.1, 0.5, 0.3, 0.0, 0.2, 0.9}), labels, {1.0, 0.0, 4});
    EXPECT_EQ(mask.mask, std::vector<std::uint8_t>(6, 1));
    EXPECT_EQ(mask.selected_count(), 6u);
}

TEST(BuildMask, TenSampleClass) {
    std::vector<double> s(10);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i % 4);
    const std::vector<int> labels(10, 1);
    const auto mask = build_mask(scores_of(s), labels, {0.25, 0.2, 7});
    // Scores 3 at indices 3 and 7: stable ranking keeps 3 ahead of 7.
    EXPECT_EQ(mask.per_class_top[0], (std::vector<std::size_t>{3, 7}));
    EXPECT_EQ(mask.per_class_rand[0].size(), 2u);
    EXPECT_EQ(mask.selected_count(), 4u);
    for (std::size_t i : mask.per_class_rand[0]) {
        EXPECT_EQ(mask.kind[i], SelectionKind::Random);
        EXPECT_NE(i, 3u);
        EXPECT_NE(i, 7u);
    }
}

TEST(BuildMask, TiesGoToLowerIndex) {
    const std::vector<int> labels(5, 1);
    const auto mask = build_mask(scores_of({1, 1, 1, 1, 1}), labels, {0.4, 0.0, 0});
    EXPECT_EQ(mask.per_class_top[0], (std::vector<std::size_t>{0, 1}));
}

TEST(BuildMask, Errors) {
    const std::vector<int> labels{1, 3};
    EXPECT_THROW(build_mask(scores_of({1, 2}), labels, {0.5, 0.0, 0}), ValidationError);
    const std::vector<int> ok{1, 2};
    EXPECT_THROW(build_mask(scores_of({1, 2}), ok, {0.0, 0.0, 0}), ConfigError);
    EXPECT_THROW(build_mask(scores_of({1, 2}), ok, {0.5, 1.5, 0}), ConfigError);
    EXPECT_THROW(build_mask(scores_of({1}), ok, {0.5, 0.0, 0}), ValidationError);
}

TEST(BuildMask, DeterministicAndSeedSensitive) {
    std::vector<double> s(50);
    std::vector<int> labels(50);
    for (std::size_t i = 0; i < 50; ++i) {
        s[i] = static_cast<double>((i * 37) % 11);
        labels[i] = 1 + static_cast<int>(i % 2);
    }
    const auto a = build_mask(scores_of(s), labels, {0.1, 0.4, 3});
    const auto b = build_mask(scores_of(s), labels, {0.1, 0.4, 3});
    const auto c = build_mask(scores_of(s), labels, {0.1, 0.4, 4});
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.per_class_rand, b.per_class_rand);
    EXPECT_NE(a.per_class_rand, c.per_class_rand);
    EXPECT_EQ(a.per_class_top, c.per_class_top);
}

TEST(BuildMask, TopSetMonotoneInPTop) {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + gen() % 60;
        std::vector<double> s(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(gen() % 7);
            labels[i] = 1 + static_cast<int>(i % 2);
        }
        std::set<std::size_t> previous;
        for (int k = 1; k <= 10; ++k) {
            const auto m = build_mask(scores_of(s), labels, {k / 10.0, 0.2, 5});
            std::set<std::size_t> current;
            for (const auto& top : m.per_class_top) current.insert(top.begin(), top.end());
            EXPECT_TRUE(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
            previous = std::move(current);
        }
    }
}

TEST(MaskCsv, HeaderAndKinds) {
    const std::vector<int> labels{1, 1, 1};
    const RelevanceScores r = scores_of({0.5, 2.0, 0.25});
    const auto mask = build_mask(r, labels, {0.34, 0.0, 0});
    const std::vector<std::string> ids{"a", "b", "c"};
    const auto path = test::scratch_dir("mask") / "mask.csv";
    write_mask_csv(path, ids, r, mask);
    EXPECT_EQ(test::slurp(path), "id,m_i,selected,selection_kind\na,0.5,0,none\nb,2,1,top\nc,0.25,0,none\n");
}

TEST(Mining, ClassConstraintsHold) {
    const std::vector<int> labels{1, 1, 2, 2};
    const std::vector<std::size_t> batch{0, 1, 2, 3};
    const auto result = mine_class_triplets(labels, {}, batch, 9);
    EXPECT_EQ(result.triplets.size(), 4u);
    for (const auto& t : result.triplets) {
        EXPECT_EQ(labels[t.anchor], labels[t.positive]);
        EXPECT_NE(t.anchor, t.positive);
        EXPECT_NE(labels[t.anchor], labels[t.negative]);
        EXPECT_EQ(t.branch, Branch::Class);
    }
    EXPECT_EQ(result.triplets, mine_class_triplets(labels, {}, batch, 9).triplets);
}

TEST(Mining, LonelyMaskedAnchorIsSkipped) {
    const std::vector<int> labels{1, 1, 2, 2};
    const std::vector<std::uint8_t> mask{1, 0, 0, 0};
    const std::vector<std::size_t> batch{0, 1, 2, 3};
    const auto result = mine_class_triplets(labels, mask, batch, 1);
    EXPECT_TRUE(result.triplets.empty());
    EXPECT_EQ(result.skipped_anchors, 1u);
}

TEST(Mining, SingleLabelBatch) {
    const std::vector<int> labels{2, 2, 2};
    const std::vector<std::size_t> batch{0, 1, 2};
    const auto result = mine_class_triplets(labels, {}, batch, 1);
    EXPECT_TRUE(result.triplets.empty());
    EXPECT_TRUE(result.single_label);
}

TEST(Mining, BoxBranch) {
    DiscreteBoxLabels box;
    box.labels = {1, 1, 2, 2};
    box.bins = 2;
    const std::vector<std::size_t> batch{0, 1, 2, 3};
    const auto result = mine_box_triplets(box, {}, batch, 2);
    ASSERT_EQ(result.triplets.size(), 4u);
    for (const auto& t : result.triplets) {
        EXPECT_EQ(box.labels[t.anchor], box.labels[t.positive]);
        EXPECT_NE(box.labels[t.anchor], box.labels[t.negative]);
        EXPECT_EQ(t.branch, Branch::Box);
    }
    box.labels = {1, 1, 1, 1};
    EXPECT_TRUE(mine_box_triplets(box, {}, batch, 2).single_label);
}

TEST(Mining, MaskedRandomProperty) {
    std::mt19937_64 gen(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 4 + gen() % 30;
        std::vector<int> labels(n);
        std::vector<std::uint8_t> mask(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = 1 + static_cast<int>(gen() % 3);
            mask[i] = static_cast<std::uint8_t>(gen() % 2);
        }
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        const std::vector<std::size_t> anchors(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n / 2));
        Rng rng(static_cast<std::uint64_t>(trial));
        const auto result = mine_triplets(labels, mask, anchors, pool, rng, Branch::Class);
        bool saw_unmasked_negative = false;
        for (const auto& t : result.triplets) {
            EXPECT_EQ(mask[t.anchor], 1);
            EXPECT_EQ(mask[t.positive], 1);
            EXPECT_NE(t.anchor, t.positive);
            EXPECT_EQ(labels[t.anchor], labels[t.positive]);
            EXPECT_NE(labels[t.anchor], labels[t.negative]);
            saw_unmasked_negative = saw_unmasked_negative || mask[t.negative] == 0;
        }
        std::size_t masked_anchors = 0;
        for (std::size_t a : anchors) masked_anchors += mask[a];
        if (!result.single_label) {
            EXPECT_EQ(result.triplets.size() + result.skipped_anchors, masked_anchors);
        }
        (void)saw_unmasked_negative;
    }
}

TEST(Mining, NegativesIgnoreMask) {
    // Only class 2 member is unmasked; it must still serve as a negative.
    const std::vector<int> labels{1, 1, 2};
    const std::vector<std::uint8_t> mask{1, 1, 0};
    const std::vector<std::size_t> batch{0, 1, 2};
    const auto result = mine_class_triplets(labels, mask, batch, 3);
    ASSERT_EQ(result.triplets.size(), 2u);
    EXPECT_EQ(result.triplets[0].negative, 2u);
    EXPECT_EQ(result.triplets[1].negative, 2u);
}

TEST(HardMining, ArgmaxPositiveArgminNegative) {
    // Anchor 0 at the origin; positives at squared distances 0.5 and 2, negatives at 1 and 3.
    const std::vector<int> labels{1, 1, 1, 2, 2};
    Eigen::MatrixXd z(5, 1);
    z << 0.0, std::sqrt(0.5), std::sqrt(2.0), 1.0, std::sqrt(3.0);
    const std::vector<std::size_t> batch{0, 1, 2, 3, 4};
    const auto result = mine_hard_class_triplets(labels, z, batch);
    ASSERT_EQ(result.triplets.size(), 5u);
    EXPECT_EQ(result.triplets[0], (Triplet{0, 2, 3, Branch::Class}));
}

TEST(HardMining, EqualDistancesPickLowestIndex) {
    const std::vector<int> labels{2, 1, 2, 1, 2};
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(5, 3);
    const std::vector<std::size_t> batch{4, 2, 3, 1, 0};
    const auto result = mine_hard_class_triplets(labels, z, batch);
    ASSERT_EQ(result.triplets.size(), 5u);
    EXPECT_EQ(result.triplets[0], (Triplet{4, 0, 1, Branch::Class}));
    EXPECT_EQ(result.triplets[3], (Triplet{1, 3, 0, Branch::Class}));
}

TEST(HardMining, HardestNegativeNeedsRng) {
    const std::vector<int> labels{1, 1, 2};
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(3, 1);
    const std::vector<std::size_t> batch{0, 1, 2};
    EXPECT_THROW(mine_hard_class_triplets(labels, z, batch, HardMining::HardestNegative), ConfigError);
    Rng rng(0);
    const auto result = mine_hard_class_triplets(labels, z, batch, HardMining::HardestNegative, &rng);
    EXPECT_EQ(result.triplets.size(), 2u);
    EXPECT_EQ(result.skipped_anchors, 1u);
}
