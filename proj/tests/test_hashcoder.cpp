#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace crovca;
using crovca::testing::max_relative_error;
using crovca::testing::random_matrix;

namespace {

double weighted_sum(const DenseMatrix& z, const DenseMatrix& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += z.values()[i] * c.values()[i];
    return s;
}

// Moves running statistics away from their init so eval mode is non-trivial.
HashCoder warmed_model(const HashCoderConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    auto model = HashCoder::init(cfg, rng);
    for (int i = 0; i < 5; ++i) model.forward_train(random_matrix(16, cfg.input_dim, rng, 2.0));
    return model;
}

} // namespace

TEST(HashCoder, InitIsDeterministic) {
    Rng a(7), b(7);
    EXPECT_EQ(HashCoder::init({8, 4, 2, 16}, a), HashCoder::init({8, 4, 2, 16}, b));
}

TEST(HashCoder, InitConventions) {
    Rng rng(7);
    const auto model = HashCoder::init({8, 4, 3, 16}, rng);
    ASSERT_EQ(model.blocks().size(), 3u);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& b = model.blocks()[l];
        const double bound = std::sqrt(6.0 / static_cast<double>(b.in_dim()));
        for (double w : b.weight.values()) {
            EXPECT_LE(std::abs(w), bound);
        }
        for (double g : b.gamma) EXPECT_EQ(g, 1.0);
        for (double v : b.bias) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(b.relu, l != 2);
    }
    EXPECT_EQ(model.blocks().back().out_dim(), 4u);
}

TEST(HashCoder, InitGuards) {
    Rng rng(1);
    EXPECT_THROW(HashCoder::init({8, 4, 1, 16}, rng), ConfigError);
    EXPECT_THROW(HashCoder::init({8, 0, 2, 16}, rng), ConfigError);
}

TEST(HashCoder, TrainForwardNeedsTwoRows) {
    Rng rng(1);
    auto model = HashCoder::init({3, 2, 2, 4}, rng);
    EXPECT_THROW(model.forward_train(DenseMatrix(1, 3)), BatchSizeError);
    EXPECT_THROW(model.forward_train(DenseMatrix(4, 5)), ShapeError);
}

TEST(HashCoder, EvalRowIndependentOfBatch) {
    const auto model = warmed_model({6, 5, 3, 12}, 3);
    Rng rng(4);
    const auto x = random_matrix(13, 6, rng);
    const auto full = model.forward_eval(x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        DenseMatrix one(1, 6);
        std::copy(x.row(r).begin(), x.row(r).end(), one.row(0).begin());
        const auto z = model.forward_eval(one);
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(z(0, j), full(r, j));
    }
}

TEST(HashCoder, BatchNormHandExample) {
    DenseBlock block;
    block.gamma = {1.0};
    block.beta = {0.0};
    block.running_mean = {0.0};
    block.running_var = {1.0};
    BlockCache cache;
    detail::batchnorm_train(DenseMatrix::from_rows({{1}, {-1}}), block, 1e-5, 0.1, true, cache);
    EXPECT_NEAR(cache.bn_out(0, 0), 0.9999950000374997, 1e-15);
    EXPECT_NEAR(cache.bn_out(1, 0), -0.9999950000374997, 1e-15);
    // population variance 1, unbiased 2
    EXPECT_DOUBLE_EQ(block.running_var[0], 0.9 + 0.1 * 2.0);
    EXPECT_DOUBLE_EQ(block.running_mean[0], 0.0);
}

TEST(HashCoder, ZeroVarianceColumnNormalizesToZero) {
    DenseBlock block;
    block.gamma = {1.0, 1.0};
    block.beta = {0.0, 0.0};
    block.running_mean = {0.0, 0.0};
    block.running_var = {1.0, 1.0};
    BlockCache cache;
    detail::batchnorm_train(DenseMatrix::from_rows({{3, 1}, {3, 2}, {3, 5}}), block, 1e-5, 0.1, false, cache);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(cache.xhat(i, 0), 0.0);
    EXPECT_EQ(block.running_var[0], 1.0);
}

TEST(HashCoder, ProbabilitiesAndTieRule) {
    const auto p = probabilities(DenseMatrix::from_rows({{0.0, 3.0, -3.0, 2.0}}));
    EXPECT_EQ(p(0, 0), 0.5);
    EXPECT_NEAR(p(0, 3), 0.8807970779778823, 1e-15);
    EXPECT_EQ(binarize(p), DenseMatrix::from_rows({{1, 1, 0, 1}}));
}

TEST(HashCoder, ZeroCotangentGivesZeroGradients) {
    auto model = warmed_model({5, 3, 2, 7}, 2);
    Rng rng(5);
    auto [z, cache] = model.forward_train(random_matrix(6, 5, rng), false);
    for (double g : HashCoder::flatten(model.backward(cache, DenseMatrix(6, 3)))) EXPECT_EQ(g, 0.0);
}

TEST(HashCoder, BackwardIsLinearInCotangent) {
    auto model = warmed_model({5, 3, 3, 7}, 2);
    Rng rng(5);
    auto [z, cache] = model.forward_train(random_matrix(6, 5, rng), false);
    const auto c = random_matrix(6, 3, rng);
    auto c2 = c;
    for (double& v : c2.values()) v *= 2.0;
    const auto g1 = HashCoder::flatten(model.backward(cache, c));
    const auto g2 = HashCoder::flatten(model.backward(cache, c2));
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g2[i], 2.0 * g1[i]);
}

TEST(HashCoder, GradientMatchesFiniteDifferences) {
    for (std::size_t layers : {2u, 3u}) {
        auto model = warmed_model({5, 3, layers, 6}, 10 + layers);
        Rng rng(20);
        const auto x = random_matrix(7, 5, rng);
        const auto c = random_matrix(7, 3, rng);
        auto [z, cache] = model.forward_train(x, false);
        const auto grads = model.backward(cache, c);

        const ScalarFunction f = [&](std::span<const double> params) {
            HashCoder m = model;
            m.set_flat_parameters(params);
            return weighted_sum(m.forward_train(x, false).first, c);
        };
        const auto numeric = finite_diff_grad(f, model.flat_parameters(), 1e-5);
        EXPECT_LE(max_relative_error(HashCoder::flatten(grads), numeric, 1e-4), 1e-5) << "layers=" << layers;

        const ScalarFunction fx = [&](std::span<const double> flat) {
            HashCoder m = model;
            return weighted_sum(m.forward_train(DenseMatrix(7, 5, {flat.begin(), flat.end()}), false).first, c);
        };
        const auto numeric_x = finite_diff_grad(fx, x.values(), 1e-5);
        EXPECT_LE(max_relative_error({grads.input.values().begin(), grads.input.values().end()}, numeric_x, 1e-4), 1e-5);
    }
}

TEST(HashCoder, StaleCacheIsRejected) {
    auto model = warmed_model({4, 2, 2, 4}, 1);
    Rng rng(2);
    auto [z, cache] = model.forward_train(random_matrix(5, 4, rng));
    model.set_flat_parameters(model.flat_parameters());
    EXPECT_THROW(model.backward(cache, DenseMatrix(5, 2)), StateError);

    HashCoder other = model;
    auto [z2, cache2] = model.forward_train(random_matrix(5, 4, rng));
    EXPECT_THROW(other.backward(cache2, DenseMatrix(5, 2)), StateError);
}

TEST(HashCoder, ParameterSlotsExcludeAffineFromDecay) {
    auto model = warmed_model({4, 2, 2, 4}, 1);
    const auto grads = model.zero_grads();
    const auto slots = model.parameter_slots(grads);
    ASSERT_EQ(slots.size(), 8u);
    for (const auto& s : slots) EXPECT_EQ(s.decay, s.name.ends_with("weight")) << s.name;
}
