#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

using namespace crovca;
using crovca::testing::random_matrix;

namespace {

std::vector<std::size_t> iota_idx(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

} // namespace

TEST(Pairing, ZeroNoiseZeroDropoutIsIdentity) {
    Rng rng(1);
    const auto x = random_matrix(10, 4, rng);
    PairingConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.dropout_rate = 0.0;
    const auto idx = iota_idx(10);
    Rng aug(2);
    const auto batch = make_unsupervised_batch(x, nullptr, idx, cfg, aug);
    EXPECT_EQ(batch.view1, x);
    EXPECT_EQ(batch.view2, x);
}

TEST(Pairing, ValidateRejectsNoAugmentationOnlyWhenExplicit) {
    PairingConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.dropout_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.dropout_rate = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.dropout_rate = 0.1;
    cfg.noise_sigma = -1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Pairing, EpochCoversEveryIndexOnce) {
    Rng rng(3);
    const auto batches = epoch_batches(100, 32, rng);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    ASSERT_EQ(seen.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(seen.count(i), 1u);
}

TEST(Pairing, TrailingSingletonBatchIsDropped) {
    Rng rng(3);
    const auto batches = epoch_batches(65, 32, rng);
    ASSERT_EQ(batches.size(), 2u);
    for (const auto& b : batches) EXPECT_EQ(b.size(), 32u);
}

TEST(Pairing, PrecomputedPairsFollowTheIndices) {
    Rng rng(4);
    const auto a = random_matrix(100, 3, rng);
    const auto b = random_matrix(100, 3, rng);
    PairingConfig cfg;
    cfg.mode = PairingMode::precomputed_pairs;
    Rng shuffle(5);
    for (const auto& idx : epoch_batches(100, 16, shuffle)) {
        const auto batch = make_unsupervised_batch(a, &b, idx, cfg, rng);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            EXPECT_EQ(batch.view1(i, 0), a(idx[i], 0));
            EXPECT_EQ(batch.view2(i, 2), b(idx[i], 2));
        }
    }
    const auto short_b = random_matrix(99, 3, rng);
    EXPECT_THROW(make_unsupervised_batch(a, &short_b, iota_idx(4), cfg, rng), ValidationError);
}

TEST(Pairing, AugmentationIsDeterministicPerSeed) {
    Rng rng(6);
    const auto x = random_matrix(40, 6, rng);
    PairingConfig cfg;
    cfg.noise_sigma = 0.1;
    auto run = [&] {
        Rng shuffle(11), aug(12);
        std::vector<PairBatch> out;
        for (const auto& idx : epoch_batches(40, 8, shuffle)) out.push_back(make_unsupervised_batch(x, nullptr, idx, cfg, aug));
        return out;
    };
    const auto first = run();
    const auto second = run();
    ASSERT_EQ(first.size(), second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_EQ(first[i].indices, second[i].indices);
        EXPECT_EQ(first[i].view1, second[i].view1);
        EXPECT_EQ(first[i].view2, second[i].view2);
    }
    EXPECT_NE(first[0].view1, first[0].view2);
}

TEST(Pairing, DefaultNoiseScalesWithRms) {
    const auto x = DenseMatrix::from_rows({{3, -3}, {3, 3}});
    PairingConfig cfg;
    EXPECT_DOUBLE_EQ(resolve_noise_sigma(cfg, x), 0.3);
    cfg.noise_sigma = 0.7;
    EXPECT_DOUBLE_EQ(resolve_noise_sigma(cfg, x), 0.7);
}

TEST(Pairing, ClassMeanTargets) {
    const auto x = DenseMatrix::from_rows({{1, 2}, {3, 6}, {10, 10}, {5, 5}});
    const auto labels = LabelSet::single({0, 0, 1, 2}, 3);
    PairingConfig cfg;
    cfg.mode = PairingMode::class_batch_mean;
    Rng rng(0);
    const auto batch = make_supervised_batch(x, &labels, iota_idx(4), cfg, rng);
    EXPECT_EQ(batch.view1, x);
    EXPECT_EQ(batch.view2, DenseMatrix::from_rows({{2, 4}, {2, 4}, {10, 10}, {5, 5}}));
    ASSERT_TRUE(batch.labels);
    EXPECT_EQ(*batch.labels, (std::vector<std::uint32_t>{0, 0, 1, 2}));
}

TEST(Pairing, ConstantClassMapsToItself) {
    const auto x = DenseMatrix::from_rows({{0.25, -1}, {0.25, -1}, {0.25, -1}});
    const auto labels = LabelSet::single({4, 4, 4}, 5);
    PairingConfig cfg;
    cfg.mode = PairingMode::class_batch_mean;
    Rng rng(0);
    EXPECT_EQ(make_supervised_batch(x, &labels, iota_idx(3), cfg, rng).view2, x);
}

TEST(Pairing, SupervisedGuards) {
    const auto x = DenseMatrix::from_rows({{1}, {2}});
    PairingConfig cfg;
    cfg.mode = PairingMode::class_batch_mean;
    Rng rng(0);
    EXPECT_THROW(make_supervised_batch(x, nullptr, iota_idx(2), cfg, rng), ConfigError);
    const LabelSet multi({{0, 1}, {1}}, 2);
    EXPECT_THROW(make_supervised_batch(x, &multi, iota_idx(2), cfg, rng), ConfigError);
}

TEST(Pairing, DualStreamShapesAndGuard) {
    Rng rng(8);
    const auto a = random_matrix(10, 8, rng);
    const auto b = random_matrix(10, 4, rng);
    PairingConfig cfg;
    cfg.mode = PairingMode::dual_stream;
    const auto batch = make_dualstream_batch(a, b, iota_idx(10), cfg, 2);
    EXPECT_EQ(batch.view1.cols(), 8u);
    EXPECT_EQ(batch.view2.cols(), 4u);
    EXPECT_EQ(batch.heads, (std::pair<int, int>{1, 2}));
    EXPECT_THROW(make_dualstream_batch(a, a, iota_idx(10), cfg, 1), ConfigError);
}

TEST(Pairing, ShufflesRepeatForFixedSeed) {
    Rng a(21), b(21);
    EXPECT_EQ(epoch_batches(57, 10, a), epoch_batches(57, 10, b));
}
