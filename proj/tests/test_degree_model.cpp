#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "pairnet/degree_model.hpp"
#include "test_support.hpp"

using namespace pairnet;
using pairnet::testing::random_distribution;
using pairnet::testing::raw_moment;
using pairnet::testing::rel_err;

TEST(Bimodal, TableRowsHaveExactMeanAndStd) {
  struct Row {
    double frac1, mean, std;
  };
  for (const Row r : {Row{0.1, 32, 9}, Row{0.5, 20, 15}, Row{0.9, 8, 9}}) {
    const Moments m = moments(make_bimodal(5, 35, r.frac1));
    EXPECT_NEAR(m.mean(), r.mean, 1e-12) << "frac1=" << r.frac1;
    EXPECT_NEAR(m.stddev(), r.std, 1e-12) << "frac1=" << r.frac1;
  }
}

TEST(Bimodal, RejectsDegenerateAndInvalidInput) {
  EXPECT_THROW(make_bimodal(5, 5, 0.5), DomainError);
  EXPECT_THROW(make_bimodal(35, 5, 0.5), DomainError);
  EXPECT_THROW(make_bimodal(0, 5, 0.5), DomainError);
  EXPECT_THROW(make_bimodal(5, 35, 0.0), DomainError);
  EXPECT_THROW(make_bimodal(5, 35, 1.0), DomainError);
}

TEST(Regular, SingleAtomMoments) {
  const Moments m = moments(make_regular(10));
  EXPECT_EQ(m.n1, 10.0);
  EXPECT_EQ(m.n2, 100.0);
  EXPECT_EQ(m.n3, 1000.0);
  const Moments one = moments(make_regular(1));
  EXPECT_EQ(one.n1, 1.0);
  EXPECT_EQ(one.n2, 1.0);
  for (int n : {1, 3, 7, 140}) EXPECT_EQ(moments(make_regular(n)).variance(), 0.0);
  EXPECT_THROW(make_regular(0), DomainError);
}

TEST(Moments, BimodalThirdMoment) {
  const Moments m = moments(make_bimodal(5, 35, 0.5));
  EXPECT_DOUBLE_EQ(m.n1, 20.0);
  EXPECT_DOUBLE_EQ(m.n2, 625.0);
  EXPECT_DOUBLE_EQ(m.n3, 0.5 * 125 + 0.5 * 42875);
  EXPECT_DOUBLE_EQ(m.n3, 21500.0);
}

TEST(PowerLaw, SparseMatchesTabulatedValues) {
  const Moments m = moments(make_truncated_powerlaw(5, 30, 2.0));
  EXPECT_NEAR(m.mean(), 10.1, 0.1);
  EXPECT_NEAR(m.stddev(), 5.9, 0.1);
}

TEST(PowerLaw, DenseAgreesWithDirectSummation) {
  // Oracle: C k^{1-a} and C k^{2-a} summed in extended precision.
  long double inv_c = 0, s1 = 0, s2 = 0;
  for (int k = 10; k <= 140; ++k) {
    inv_c += 1.0L / (static_cast<long double>(k) * k);
    s1 += 1.0L / k;
    s2 += 1.0L;
  }
  const double mean = static_cast<double>(s1 / inv_c);
  const double std = static_cast<double>(std::sqrt(s2 / inv_c - (s1 / inv_c) * (s1 / inv_c)));
  const Moments m = moments(make_truncated_powerlaw(10, 140, 2.0));
  EXPECT_LT(rel_err(m.mean(), mean), 1e-12);
  EXPECT_LT(rel_err(m.stddev(), std), 1e-11);
  // The exact distribution moments sit below the tabulated 28.4 / 26.01.
  EXPECT_NEAR(m.mean(), 27.4705, 1e-4);
  EXPECT_NEAR(m.stddev(), 24.1130, 1e-4);
}

TEST(PowerLaw, OneTermRangeIsRegular) {
  EXPECT_EQ(make_truncated_powerlaw(7, 7, 2.0), make_regular(7));
}

TEST(PowerLaw, NormalizationHoldsUnderIndependentSummation) {
  for (auto [kmin, kmax, alpha] : {std::tuple{1, 35, 2.0}, {5, 30, 2.0}, {10, 140, 2.0}, {2, 500, 2.7}, {1, 1000, 0.5}}) {
    const auto d = make_truncated_powerlaw(kmin, kmax, alpha);
    long double inv_c = 0;
    for (int k = kmin; k <= kmax; ++k) inv_c += std::pow(static_cast<long double>(k), -static_cast<long double>(alpha));
    long double total = 0;
    for (int k = kmin; k <= kmax; ++k) {
      total += std::pow(static_cast<long double>(k), -static_cast<long double>(alpha)) / inv_c;
      EXPECT_LT(rel_err(d.prob(static_cast<std::size_t>(k - kmin)),
                        static_cast<double>(std::pow(static_cast<long double>(k), -static_cast<long double>(alpha)) / inv_c)),
                1e-13);
    }
    EXPECT_NEAR(static_cast<double>(total), 1.0, 1e-12);
  }
  EXPECT_THROW(make_truncated_powerlaw(0, 5, 2.0), DomainError);
  EXPECT_THROW(make_truncated_powerlaw(6, 5, 2.0), DomainError);
  EXPECT_THROW(make_truncated_powerlaw(1, 5, 0.0), DomainError);
}

TEST(Distribution, ConstructorValidates) {
  EXPECT_THROW(DegreeDistribution({}, {}), DomainError);
  EXPECT_THROW(DegreeDistribution({3, 3}, {0.5, 0.5}), DomainError);
  EXPECT_THROW(DegreeDistribution({4, 3}, {0.5, 0.5}), DomainError);
  EXPECT_THROW(DegreeDistribution({3, 4}, {0.5, 0.6}), DomainError);
  EXPECT_THROW(DegreeDistribution({3, 4}, {1.5, -0.5}), DomainError);
  EXPECT_THROW(DegreeDistribution({3}, {1.0, 0.0}), DomainError);
  EXPECT_NO_THROW(DegreeDistribution({3, 4}, {0.25, 0.75}));
}

TEST(Moments, PropertyAgreesWithExtendedPrecisionOracle) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<std::size_t> pickK(1, 130);
  for (int trial = 0; trial < 500; ++trial) {
    const auto d = random_distribution(rng, pickK(rng));
    const Moments m = moments(d);
    EXPECT_LT(rel_err(m.n1, static_cast<double>(raw_moment(d, 1))), 1e-12);
    EXPECT_LT(rel_err(m.n2, static_cast<double>(raw_moment(d, 2))), 1e-12);
    EXPECT_LT(rel_err(m.n3, static_cast<double>(raw_moment(d, 3))), 1e-12);
    EXPECT_GE(m.n1, d.min_degree());
    EXPECT_GE(m.variance(), d.size() == 1 ? 0.0 : 1e-12 * m.n1 * m.n1);
    if (d.size() == 1) {
      EXPECT_EQ(m.variance(), 0.0);
    }
  }
}

TEST(TauCritical, Examples) {
  EXPECT_NEAR(tau_critical(make_bimodal(5, 35, 0.5), 1.0), 0.032, 1e-15);
  EXPECT_DOUBLE_EQ(tau_critical(make_regular(10), 1.0), 0.1);
  EXPECT_NEAR(tau_critical(make_bimodal(5, 35, 0.1), 2.0), 2.0 * 32.0 / 1105.0, 1e-15);
}

TEST(DefaultTau, Examples) {
  EXPECT_NEAR(default_tau(make_bimodal(5, 35, 0.5), 1.0, 3.0), 0.096, 1e-15);
  const auto pl = make_truncated_powerlaw(5, 30, 2.0);
  EXPECT_EQ(default_tau(pl, 1.7, 1.0), tau_critical(pl, 1.7));
  EXPECT_NEAR(default_tau(make_regular(10), 1.0), 0.3, 1e-15);
  EXPECT_THROW(default_tau(pl, 1.0, 0.0), DomainError);
}

TEST(SampleDegreeSequence, Examples) {
  auto seq = sample_degree_sequence(make_bimodal(5, 35, 0.5), 1000);
  EXPECT_EQ(std::count(seq.begin(), seq.end(), 5), 500);
  EXPECT_EQ(std::count(seq.begin(), seq.end(), 35), 500);
  EXPECT_EQ(sample_degree_sequence(make_regular(3), 4), (std::vector<int>{3, 3, 3, 3}));
  seq = sample_degree_sequence(make_bimodal(5, 35, 0.1), 1000);
  EXPECT_EQ(std::count(seq.begin(), seq.end(), 5), 100);
  EXPECT_EQ(std::count(seq.begin(), seq.end(), 35), 900);
}

TEST(SampleDegreeSequence, OddStubTotalWithoutParityMixIsRejected) {
  EXPECT_THROW(sample_degree_sequence(make_regular(3), 5), DomainError);
}

TEST(SampleDegreeSequence, ParityFixMovesOneNode) {
  // 0.5 * 7 = 3.5 nodes each: rounding gives an odd stub total that must be repaired.
  const auto d = make_bimodal(3, 4, 0.5);
  const auto counts = degree_class_counts(d, 7);
  EXPECT_EQ(counts[0] + counts[1], 7u);
  EXPECT_EQ((3 * counts[0] + 4 * counts[1]) % 2, 0u);
}

TEST(SampleDegreeSequence, PropertyCountsParityAndBounds) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pickK(2, 40);
  std::uniform_int_distribution<std::size_t> pickN(1, 5000);
  for (int trial = 0; trial < 400; ++trial) {
    const auto d = random_distribution(rng, pickK(rng), 120);
    const std::size_t N = pickN(rng);
    std::vector<std::size_t> counts;
    try {
      counts = degree_class_counts(d, N);
    } catch (const DomainError&) {
      // only possible when every degree has the same parity and N is odd
      bool all_odd = true;
      for (int deg : d.degrees()) all_odd = all_odd && deg % 2 == 1;
      EXPECT_TRUE(all_odd && N % 2 == 1);
      continue;
    }
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), N);
    unsigned long long stubs = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      EXPECT_LE(std::abs(static_cast<double>(counts[k]) - static_cast<double>(N) * d.prob(k)), static_cast<double>(d.size()));
      stubs += static_cast<unsigned long long>(d.degree(k)) * counts[k];
    }
    EXPECT_EQ(stubs % 2, 0u);
    const auto seq = sample_degree_sequence(d, N);
    EXPECT_TRUE(std::is_sorted(seq.begin(), seq.end()));
    EXPECT_EQ(seq.size(), N);
  }
}

TEST(EpidemicParams, Validates) {
  EXPECT_NO_THROW((EpidemicParams{0.0, 1.0, 1}.validate()));
  EXPECT_THROW((EpidemicParams{-0.1, 1.0, 10}.validate()), DomainError);
  EXPECT_THROW((EpidemicParams{0.1, 0.0, 10}.validate()), DomainError);
  EXPECT_THROW((EpidemicParams{0.1, 1.0, 0}.validate()), DomainError);
}
