#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tolerantecg/rng.hpp>

using tecg::Rng;

TEST(Rng, DeterministicAcrossInstances) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiverge) {
    Rng a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i) equal += (a.next_u64() == b.next_u64());
    EXPECT_EQ(equal, 0);
}

TEST(Rng, SplitIsPureFunctionOfStateAndKey) {
    Rng base(7);
    Rng c1 = base.split(5);
    Rng c2 = base.split(5);
    EXPECT_EQ(c1.next_u64(), c2.next_u64());
    // Splitting does not consume parent state.
    Rng base2(7);
    EXPECT_EQ(base.next_u64(), base2.next_u64());
    // Different keys give independent-looking streams.
    EXPECT_NE(base.split(5).next_u64(), base.split(6).next_u64());
}

TEST(Rng, UniformIntBoundsInclusive) {
    Rng r(3);
    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 10000; ++i) {
        const auto v = r.uniform_int(2, 9);
        ASSERT_GE(v, 2);
        ASSERT_LE(v, 9);
        saw_lo |= (v == 2);
        saw_hi |= (v == 9);
    }
    EXPECT_TRUE(saw_lo);
    EXPECT_TRUE(saw_hi);
}

// Chi-squared goodness of fit over 16 bins; threshold is the p=0.01 critical
// value for 15 degrees of freedom.
TEST(Rng, UniformChiSquared) {
    Rng r(11);
    const int bins = 16, n = 160000;
    std::vector<int> counts(bins, 0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(r.uniform() * bins)];
    const double expected = static_cast<double>(n) / bins;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LT(chi2, 30.58);  // chi2_{0.99, 15}
}

TEST(Rng, GaussianMoments) {
    Rng r(13);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = r.gaussian();
        sum += g;
        sq += g * g;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, SampleWithoutReplacementDistinctAndInRange) {
    Rng r(17);
    for (int trial = 0; trial < 500; ++trial) {
        const auto idx = r.sample_without_replacement(12, 5);
        ASSERT_EQ(idx.size(), 5u);
        std::set<int> seen(idx.begin(), idx.end());
        EXPECT_EQ(seen.size(), 5u);
        for (int i : idx) {
            EXPECT_GE(i, 0);
            EXPECT_LT(i, 12);
        }
    }
}

TEST(Rng, ShuffleIsPermutation) {
    Rng r(19);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    auto sorted = v;
    r.shuffle(v);
    auto check = v;
    std::sort(check.begin(), check.end());
    EXPECT_EQ(check, sorted);
}

TEST(Rng, StateRoundTripResumesStream) {
    Rng r(23);
    r.next_u64();
    const auto saved = r.state();
    const auto expected = r.next_u64();
    Rng resumed(0);
    resumed.set_state(saved);
    EXPECT_EQ(resumed.next_u64(), expected);
}
