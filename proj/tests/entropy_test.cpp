// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/entropy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "lhbvc/ops.hpp"
#include "lhbvc/range_coder.hpp"

namespace lhbvc {
namespace {

using testing::gradcheck;
using testing::random_tensor;

// --- rate estimates ------------------------------------------------------------

TEST(BitsGaussian, CenteredHalfSigma) {
  Tensor y({1}, {0.7}), mu({1}, {0.7}), s({1}, {0.5});
  const BitsResult r = bits_gaussian(y, mu, s);
  // Phi(1) - Phi(-1) from the closed form erf(1/sqrt(2)).
  const double p = std::erf(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(p, 0.682689, 1e-6);
  EXPECT_NEAR(r.elements[0], -std::log2(p), 1e-12);
  EXPECT_NEAR(r.elements[0], 0.5510, 5e-4);
}

TEST(BitsGaussian, MonotoneInScale) {
  double prev = -1.0;
  for (double s = 0.05; s < 1e5; s *= 1.7) {
    const double b = bits_gaussian(Tensor({1}, {0.0}), Tensor({1}, {0.0}), Tensor({1}, {s})).elements[0];
    EXPECT_GT(b, prev);
    prev = b;
  }
  EXPECT_GT(prev, 15.0);
}

TEST(BitsGaussian, TotalIsSumAndScaleIsClamped) {
  Rng rng(1);
  Tensor y = round_half_away(random_tensor({2, 4, 3, 3}, rng, -6, 6));
  Tensor mu = random_tensor({2, 4, 3, 3}, rng, -3, 3);
  Tensor s = random_tensor({2, 4, 3, 3}, rng, 0.01, 4);
  const BitsResult r = bits_gaussian(y, mu, s);
  double total = 0.0;
  for (std::size_t i = 0; i < r.elements.size(); ++i) {
    total += r.elements[i];
    EXPECT_GE(r.elements[i], 0.0);
    const double sig = std::max(s[i], kScaleFloor);
    EXPECT_NEAR(r.elements[i], -std::log2(std::max(gaussian_bin_probability(y[i], mu[i], sig), kMinLikelihood)), 1e-12);
  }
  EXPECT_NEAR(r.total.item(), total, 1e-9);
  Tensor tiny({1}, {1e-6});
  EXPECT_EQ(bits_gaussian(Tensor({1}), Tensor({1}), tiny).elements[0],
            bits_gaussian(Tensor({1}), Tensor({1}), Tensor({1}, {kScaleFloor})).elements[0]);
}

TEST(GradCheck, BitsGaussian) {
  Rng rng(2);
  Tensor y = random_tensor({2, 4, 4, 4}, rng, -3, 3);
  Tensor mu = random_tensor({2, 4, 4, 4}, rng, -2, 2);
  Tensor s = random_tensor({2, 4, 4, 4}, rng, 0.3, 3);
  auto r = gradcheck([&] { return bits_gaussian(y, mu, s).total; }, {y, mu, s}, 1e-6);
  EXPECT_LT(r.relative_error, 1e-4);
}

TEST(ScaleFromRaw, ZeroMapsToFloor) {
  Tensor s = scale_from_raw(Tensor({3}));
  for (double v : s.values()) EXPECT_EQ(v, kScaleFloor);
  Tensor big = scale_from_raw(Tensor({2}, {30.0, -30.0}));
  EXPECT_NEAR(big[0], kScaleFloor + 30.0 - std::log(2.0), 1e-12);
  EXPECT_EQ(big[0], big[1]);
}

TEST(GradCheck, ScaleFromRaw) {
  Rng rng(3);
  Tensor x = random_tensor({2, 3, 4, 4}, rng, -3, 3);
  Tensor w = random_tensor({2, 3, 4, 4}, rng);
  auto r = gradcheck([&] { return sum(mul(scale_from_raw(x), w)); }, {x});
  EXPECT_LT(r.relative_error, 1e-6);
}

TEST(BitsUnderCdf, UniformPriorCostsLog2Alphabet) {
  for (int k : {1, 3, 10, 100}) {
    auto cdf = [k](double x) { return std::clamp((x + k + 0.5) / (2.0 * k + 1.0), 0.0, 1.0); };
    for (int z = -k; z <= k; ++z) EXPECT_NEAR(bits_under_cdf(z, cdf), std::log2(2.0 * k + 1.0), 1e-12);
  }
}

FactorizedPrior random_prior(std::int64_t channels, std::uint64_t seed) {
  FactorizedPrior prior(channels, seed);
  Rng rng(seed + 1);
  for (Tensor* t : prior.parameters())
    for (double& v : t->mutable_values()) v += rng.uniform(-0.6, 0.6);
  return prior;
}

TEST(FactorizedPrior, CdfIsMonotoneInUnitInterval) {
  const FactorizedPrior prior = random_prior(4, 10);
  for (std::int64_t c = 0; c < 4; ++c) {
    double prev = 0.0;
    for (double x = -30; x <= 30; x += 0.25) {
      const double f = prior.cdf(c, x);
      EXPECT_GT(f, 0.0);
      EXPECT_LT(f, 1.0);
      EXPECT_GE(f, prev);
      prev = f;
    }
  }
}

TEST(BitsFactorized, MatchesCdfFormulaAndIsNonnegative) {
  const FactorizedPrior prior = random_prior(3, 11);
  Rng rng(12);
  Tensor z = round_half_away(random_tensor({2, 3, 2, 2}, rng, -8, 8));
  const BitsResult r = bits_factorized(z, prior);
  double total = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const std::int64_t c = static_cast<std::int64_t>((i / 4) % 3);
    EXPECT_NEAR(r.elements[i], bits_under_cdf(z[i], [&](double x) { return prior.cdf(c, x); }), 1e-8);
    EXPECT_GE(r.elements[i], 0.0);
    total += r.elements[i];
  }
  EXPECT_NEAR(r.total.item(), total, 1e-9);
}

TEST(BitsFactorized, MonteCarloEntropy) {
  const FactorizedPrior prior = random_prior(2, 13);
  Rng rng(14);
  for (std::int64_t c = 0; c < 2; ++c) {
    // Discrete distribution of the prior's integer bins, sampled by inversion.
    std::vector<double> p;
    for (int k = -200; k <= 200; ++k) p.push_back(prior.bin_probability(c, k));
    double entropy = 0.0;
    for (double q : p)
      if (q > 0) entropy -= q * std::log2(q);
    std::vector<double> cum(p.size());
    std::partial_sum(p.begin(), p.end(), cum.begin());
    const int n = 20000;
    Tensor z({1, 2, 1, n});
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform() * cum.back();
      const auto k = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
      z.mutable_values()[static_cast<std::size_t>(c * n + i)] = static_cast<double>(k - 200);
    }
    const BitsResult r = bits_factorized(z, prior);
    double bits = 0.0;
    for (int i = 0; i < n; ++i) bits += r.elements[static_cast<std::size_t>(c * n + i)];
    EXPECT_NEAR(bits / n, entropy, 0.02 * entropy) << "channel " << c;
  }
}

TEST(GradCheck, BitsFactorized) {
  FactorizedPrior prior = random_prior(3, 15);
  Rng rng(16);
  Tensor z = random_tensor({2, 3, 2, 2}, rng, -3, 3);
  std::vector<Tensor> inputs{z};
  for (Tensor* t : prior.parameters()) inputs.push_back(*t);
  auto r = gradcheck([&] { return bits_factorized(z, prior).total; }, inputs, 1e-6);
  EXPECT_LT(r.relative_error, 1e-4);
}

// --- tables and coder ------------------------------------------------------------------

TEST(CdfTable, ExactHalves) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_EQ(build_cdf_table(p).cdf, (std::vector<std::uint32_t>{0, 32768, 65536}));
}

TEST(CdfTable, EveryGapPositive) {
  Rng rng(20);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(3000);
    std::vector<double> p(n);
    for (double& v : p) v = rng.uniform() < 0.3 ? 0.0 : std::pow(rng.uniform(), 8.0);
    const CdfTable t = build_cdf_table(p);
    ASSERT_EQ(t.size(), n);
    EXPECT_EQ(t.cdf.front(), 0u);
    EXPECT_EQ(t.cdf.back(), kCdfTotal);
    for (std::size_t i = 0; i < n; ++i) EXPECT_GE(t.cdf[i + 1], t.cdf[i] + 1);
  }
}

TEST(CdfTable, Rejects) {
  EXPECT_THROW(build_cdf_table(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(build_cdf_table(std::vector<double>{0.5, -0.1}), std::invalid_argument);
  EXPECT_THROW(build_cdf_table(std::vector<double>(kCdfTotal + 1, 1.0)), std::invalid_argument);
}

TEST(RangeCoder, EmptySequence) {
  RangeEncoder enc;
  const auto bytes = enc.finish();
  EXPECT_TRUE(bytes.empty());
  RangeDecoder dec(bytes);
  EXPECT_NO_THROW(dec.finish());
}

TEST(RangeCoder, CertainSymbolCostsNothing) {
  const CdfTable t = build_cdf_table(std::vector<double>{1.0});
  RangeEncoder enc;
  for (int i = 0; i < 1000; ++i) enc.encode(t, 0);
  const auto bytes = enc.finish();
  EXPECT_TRUE(bytes.empty());
  RangeDecoder dec(bytes);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(dec.decode(t), 0u);
}

TEST(RangeCoder, ThousandRandomRoundTrips) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t alphabet = 1 + rng.below(1024);
    std::vector<double> p(alphabet);
    for (double& v : p) v = std::pow(rng.uniform(), 1.0 + 6.0 * rng.uniform());
    const CdfTable t = build_cdf_table(p);
    const std::size_t len = rng.below(600);
    std::vector<std::size_t> symbols(len);
    std::vector<std::uint32_t> raws(len);
    RangeEncoder enc;
    for (std::size_t i = 0; i < len; ++i) {
      symbols[i] = rng.below(alphabet);
      enc.encode(t, symbols[i]);
      if (i % 7 == 0) {
        raws[i] = static_cast<std::uint32_t>(rng.below(kCdfTotal));
        enc.encode_raw16(raws[i]);
      }
    }
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    for (std::size_t i = 0; i < len; ++i) {
      ASSERT_EQ(dec.decode(t), symbols[i]) << "trial " << trial << " symbol " << i;
      if (i % 7 == 0) {
        ASSERT_EQ(dec.decode_raw16(), raws[i]);
      }
    }
    EXPECT_NO_THROW(dec.finish());
  }
}

TEST(RangeCoder, NearShannonBound) {
  const std::vector<double> p{0.5, 0.25, 0.15, 0.1};
  const CdfTable t = build_cdf_table(p);
  Rng rng(22);
  RangeEncoder enc;
  double shannon = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    const std::size_t s = u < 0.5 ? 0 : u < 0.75 ? 1 : u < 0.9 ? 2 : 3;
    shannon -= std::log2(p[s]);
    enc.encode(t, s);
  }
  const double bits = 8.0 * static_cast<double>(enc.finish().size());
  EXPECT_LE(bits, 1.01 * shannon + 32.0);
  EXPECT_GE(bits, 0.99 * shannon - 32.0);
}

TEST(RangeCoder, TruncatedAndPaddedStreamsAreRejected) {
  const CdfTable t = build_cdf_table(std::vector<double>(256, 1.0));
  Rng rng(23);
  RangeEncoder enc;
  std::vector<std::size_t> symbols(400);
  for (auto& s : symbols) {
    s = rng.below(256);
    enc.encode(t, s);
  }
  auto bytes = enc.finish();
  ASSERT_GT(bytes.size(), 300u);
  {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 100);
    RangeDecoder dec(cut);
    try {
      for (std::size_t i = 0; i < symbols.size(); ++i) dec.decode(t);
      FAIL() << "truncated stream decoded";
    } catch (const DecodeError& e) {
      EXPECT_EQ(e.offset(), 100u);
    }
  }
  {
    auto padded = bytes;
    padded.insert(padded.end(), 6, 0x5A);
    RangeDecoder dec(padded);
    for (std::size_t i = 0; i < symbols.size(); ++i) dec.decode(t);
    EXPECT_THROW(dec.finish(), DecodeError);
  }
}

TEST(SymbolCoding, EscapeRoundTrip) {
  const SymbolTable t = gaussian_table(0.3, 1.2);
  const std::vector<std::int64_t> values{0, 1, -3, 50, -2000000000, 2147483647, -2147483648LL, 7};
  RangeEncoder enc;
  for (auto v : values) encode_symbol(enc, t, v);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto v : values) EXPECT_EQ(decode_symbol(dec, t), v);
  dec.finish();
  RangeEncoder bad;
  EXPECT_THROW(encode_symbol(bad, t, 1LL << 40), std::out_of_range);
}

TEST(GaussianTable, SupportCoversSixSigma) {
  const SymbolTable t = gaussian_table(2.4, 3.0);
  EXPECT_EQ(t.lo, static_cast<std::int64_t>(std::floor(2.4 - 18.0)));
  EXPECT_EQ(t.lo + static_cast<std::int64_t>(t.regular()) - 1, static_cast<std::int64_t>(std::ceil(2.4 + 18.0)));
  for (std::size_t i = 0; i < t.table.size(); ++i) EXPECT_GE(t.table.cdf[i + 1] - t.table.cdf[i], 1u);
  EXPECT_LE(gaussian_table(0.0, 1e6).regular(), static_cast<std::size_t>(kMaxSupport));
}

TEST(GaussianCoder, RoundTripAndRateMatchesEstimate) {
  Rng rng(24);
  const Shape shape{1, 16, 8, 8};
  Tensor mu = random_tensor(shape, rng, -4, 4);
  Tensor sigma = random_tensor(shape, rng, 0.05, 6);
  Tensor y(shape);
  for (std::size_t i = 0; i < y.numel(); ++i)
    y.mutable_values()[i] = round_half_away(mu[i] + sigma[i] * rng.normal());
  y.mutable_values()[5] = 1e6;  // forces an escape
  const auto bytes = encode_gaussian(y, mu, sigma);
  Tensor back = decode_gaussian(bytes, mu, sigma);
  for (std::size_t i = 0; i < y.numel(); ++i) ASSERT_EQ(back[i], y[i]);
  const double estimate = bits_gaussian(y, mu, sigma).total.item();
  const double actual = 8.0 * static_cast<double>(bytes.size());
  EXPECT_LE(std::abs(actual - estimate), 0.03 * estimate + 64.0) << actual << " vs " << estimate;
}

TEST(GaussianCoder, RejectsNonIntegers) {
  EXPECT_THROW(encode_gaussian(Tensor({2}, {0.5, 1.0}), Tensor({2}), Tensor({2}, 1.0)), std::invalid_argument);
}

TEST(FactorizedCoder, RoundTripAndTablesDeterministic) {
  const FactorizedPrior prior = random_prior(5, 30);
  FactorizedPrior copy(5, 999);
  {
    auto& src = const_cast<FactorizedPrior&>(prior);
    auto sp = src.parameters(), dp = copy.parameters();
    for (std::size_t i = 0; i < sp.size(); ++i) *dp[i] = sp[i]->clone();
  }
  const auto tables = factorized_tables(prior);
  const auto tables2 = factorized_tables(copy);
  ASSERT_EQ(tables.size(), tables2.size());
  for (std::size_t c = 0; c < tables.size(); ++c) {
    EXPECT_EQ(tables[c].lo, tables2[c].lo);
    EXPECT_EQ(tables[c].table, tables2[c].table);
  }
  Rng rng(31);
  Tensor z = round_half_away(random_tensor({2, 5, 3, 3}, rng, -10, 10));
  z.mutable_values()[3] = 5000;
  const auto bytes = encode_factorized(z, tables);
  Tensor back = decode_factorized(bytes, z.shape(), tables);
  for (std::size_t i = 0; i < z.numel(); ++i) ASSERT_EQ(back[i], z[i]);
}

}  // namespace
}  // namespace lhbvc
