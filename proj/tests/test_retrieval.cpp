#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace crovca;
using crovca::testing::BitVector;
using crovca::testing::naive_hamming;
using crovca::testing::pack_bits;
using crovca::testing::random_bits;
using crovca::testing::random_matrix;

namespace {

DenseMatrix bits_as_probabilities(const std::vector<BitVector>& rows, std::size_t bits) {
    DenseMatrix p(rows.size(), bits);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < bits; ++j) p(r, j) = rows[r][j] ? 1.0 : 0.0;
    return p;
}

} // namespace

TEST(Hamming, HandExamples) {
    const auto codes = pack_bits({{false, true, false, true}, {true, false, true, false}}, 4);
    EXPECT_EQ(hamming(codes.row(0), codes.row(1)), 4u);
    EXPECT_EQ(hamming(codes.row(0), codes.row(0)), 0u);
}

TEST(Hamming, MatchesNaiveComparison) {
    Rng rng(1);
    for (std::size_t b : {16u, 32u, 64u, 100u}) {
        for (int t = 0; t < 200; ++t) {
            const auto x = random_bits(b, rng);
            const auto y = random_bits(b, rng);
            const auto codes = pack_bits({x, y}, b);
            ASSERT_EQ(hamming(codes.row(0), codes.row(1)), naive_hamming(x, y));
        }
        BitVector x = random_bits(b, rng), nx(b);
        for (std::size_t j = 0; j < b; ++j) nx[j] = !x[j];
        const auto codes = pack_bits({x, nx}, b);
        EXPECT_EQ(hamming(codes.row(0), codes.row(1)), b);
    }
}

TEST(AsymHamming, HandExamples) {
    const auto code = pack_bits({{true, false, true}}, 3);
    EXPECT_NEAR(asym_hamming(std::vector<double>{0.9, 0.2, 0.7}, code.row(0)), 0.6, 1e-15);
    const std::vector<double> half(3, 0.5);
    EXPECT_EQ(asym_hamming(half, code.row(0)), 1.5);
}

TEST(AsymHamming, BinarizedQueriesReduceToHamming) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto q = random_bits(24, rng);
        const auto d = random_bits(24, rng);
        const auto codes = pack_bits({d}, 24);
        const auto p = bits_as_probabilities({q}, 24);
        ASSERT_EQ(asym_hamming(p.row(0), codes.row(0)), static_cast<double>(naive_hamming(q, d)));
    }
}

TEST(BceScore, HandExampleAndSymmetry) {
    const auto code = pack_bits({{true, false}}, 2);
    EXPECT_NEAR(bce_score(std::vector<double>{0.9, 0.1}, code.row(0)), 0.21072103131565256, 1e-14);

    Rng rng(3);
    const auto zq = random_matrix(1, 6, rng);
    const auto zd = random_matrix(1, 6, rng);
    const auto pq = probabilities(zq), pd = probabilities(zd);
    const auto cq = pack_signs(zq, false), cd = pack_signs(zd, false);
    EXPECT_EQ(symbce_score(pq.row(0), cq.row(0), pd.row(0), cd.row(0)),
              symbce_score(pd.row(0), cd.row(0), pq.row(0), cq.row(0)));
}

TEST(TopK, FullRankingAndTies) {
    const auto db = pack_bits({{true, true}, {false, false}, {true, true}, {false, true}}, 2);
    const CodeIndex index(db);
    const auto q = QueryBatch(DenseMatrix::from_rows({{1.0, 1.0}}));
    const auto ranks = index.topk(q, Measure::hamming, 10);
    ASSERT_EQ(ranks[0].size(), 4u);
    EXPECT_EQ(ranks[0][0].index, 0u);
    EXPECT_EQ(ranks[0][1].index, 2u);
    EXPECT_EQ(ranks[0][2].index, 3u);
    EXPECT_EQ(ranks[0][3].index, 1u);
    EXPECT_THROW(index.topk(q, Measure::hamming, 0), ConfigError);
}

TEST(TopK, HammingEqualsAsymHammingOnBinarizedQueries) {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        const std::size_t b = 8 + rng.below(40);
        std::vector<BitVector> db_bits, q_bits;
        for (int i = 0; i < 30; ++i) db_bits.push_back(random_bits(b, rng));
        for (int i = 0; i < 3; ++i) q_bits.push_back(random_bits(b, rng));
        const CodeIndex index(pack_bits(db_bits, b));
        const auto q = QueryBatch::from_probabilities(bits_as_probabilities(q_bits, b));
        ASSERT_EQ(index.topk(q, Measure::hamming, 10), index.topk(q, Measure::asym_hamming, 10));
    }
}

TEST(TopK, ShardsAndThreadsDoNotChangeResults) {
    Rng rng(5);
    const auto zd = random_matrix(257, 12, rng);
    const CodeIndex index(pack_signs(zd, true));
    const QueryBatch q(random_matrix(9, 12, rng));
    for (auto m : {Measure::hamming, Measure::asym_hamming, Measure::bce, Measure::symbce}) {
        const auto base = index.topk(q, m, 15);
        for (std::size_t shards : {2u, 7u, 300u}) EXPECT_EQ(index.topk(q, m, 15, {1, shards}), base);
        EXPECT_EQ(index.topk(q, m, 15, {4, 3}), base);
    }
}

TEST(TopK, ScoresAreConsistentWithPointwiseFunctions) {
    Rng rng(6);
    const auto zd = random_matrix(20, 10, rng);
    const CodeIndex index(pack_signs(zd, false));
    const QueryBatch q(random_matrix(2, 10, rng));
    const auto ranks = index.topk(q, Measure::bce, 20);
    for (const auto& n : ranks[1]) EXPECT_EQ(n.score, bce_score(q.probabilities().row(1), index.codes().row(n.index)));
    for (std::size_t i = 1; i < ranks[1].size(); ++i) EXPECT_TRUE(neighbor_less(ranks[1][i - 1], ranks[1][i]));
}

TEST(TopK, SymbceNeedsLogits) {
    Rng rng(7);
    const CodeIndex index(pack_signs(random_matrix(5, 8, rng), false));
    EXPECT_FALSE(index.supports(Measure::symbce));
    EXPECT_THROW(index.topk(QueryBatch(random_matrix(1, 8, rng)), Measure::symbce, 3), CapabilityError);
}

TEST(TopK, WidthMismatch) {
    Rng rng(8);
    const CodeIndex index(pack_signs(random_matrix(5, 8, rng), false));
    EXPECT_THROW(index.topk(QueryBatch(random_matrix(1, 9, rng)), Measure::hamming, 3), ShapeError);
}

TEST(Measure, Parse) {
    EXPECT_EQ(parse_measure("h"), Measure::hamming);
    EXPECT_EQ(parse_measure("ah"), Measure::asym_hamming);
    EXPECT_EQ(parse_measure("symbce"), Measure::symbce);
    EXPECT_THROW(parse_measure("cosine"), ConfigError);
}

TEST(Rankings, TextRoundTripIsExact) {
    Rng rng(9);
    const CodeIndex index(pack_signs(random_matrix(40, 16, rng), false));
    const auto ranks = index.topk(QueryBatch(random_matrix(5, 16, rng)), Measure::asym_hamming, 12);
    std::stringstream ss;
    write_rankings(ss, ranks);
    EXPECT_EQ(parse_rankings(ss), ranks);
    std::stringstream bad("0\t1:2 3\n");
    EXPECT_THROW(parse_rankings(bad), ValidationError);
}
