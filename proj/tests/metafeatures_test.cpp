#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "snm/metafeatures.hpp"
#include "support.hpp"

namespace snm {
namespace {

// Goldens for the link [the quick brown] -> fox, produced by an independent
// reimplementation of the hashing scheme.
const std::vector<MetaFeature> kFull63 = {
    {0xba007b5432d0b3b1ULL, 1.0},
    {0x547fd1c71e6c7e46ULL, 1.0},
    {0x6a646d54e484ef9dULL, 0.4150374992788439},
    {0x4b69a64bd995a57cULL, 0.5849625007211561},
    {0xdcb28218fed9eb8eULL, 1.0},
    {0x05d75c0251f06090ULL, 1.0},
    {0xf7c4b5f77a982403ULL, 1.0},
    {0xf09d792bed0a6640ULL, 0.4150374992788439},
    {0xcd65934cd8071753ULL, 0.5849625007211561},
    {0xc74f3ee0486ec912ULL, 0.4150374992788439},
    {0xebca2c714f827b7fULL, 0.4150374992788439},
    {0xa11c3e2db535ad3cULL, 0.4150374992788439},
    {0x704aa91a8b8ea2e7ULL, 0.17225612580763638},
    {0x1ac8866ac85c2182ULL, 0.24278137347120754},
    {0xf51447427cef1bdaULL, 0.4150374992788439},
    {0xdb1a2b2061f6b359ULL, 0.4150374992788439},
    {0x128159cfd813055dULL, 0.4150374992788439},
    {0x8421b580dd2bf22bULL, 0.17225612580763638},
    {0x4837fcb5fe162c3eULL, 0.24278137347120754},
    {0xa85477d73d7f7ef1ULL, 0.5849625007211561},
    {0xceb1cb8a77c73b73ULL, 0.5849625007211561},
    {0x599dd1d9522ed3c9ULL, 0.5849625007211561},
    {0x93eee7da3388a406ULL, 0.24278137347120754},
    {0x22b63e7321cec5a7ULL, 0.34218112724994854},
    {0x00c48c5bd99dc66eULL, 0.5849625007211561},
    {0x6ba048ae7284d8e1ULL, 0.5849625007211561},
    {0x57096a463429f22fULL, 0.5849625007211561},
    {0x1db14b26c3daa399ULL, 0.24278137347120754},
    {0x6f85ebe66094bab7ULL, 0.34218112724994854},
};

const std::vector<MetaFeature> kUnlex63 = {
    {0x547fd1c71e6c7e46ULL, 1.0},
    {0x6a646d54e484ef9dULL, 0.4150374992788439},
    {0x4b69a64bd995a57cULL, 0.5849625007211561},
    {0xc74f3ee0486ec912ULL, 0.4150374992788439},
    {0xa11c3e2db535ad3cULL, 0.4150374992788439},
    {0x704aa91a8b8ea2e7ULL, 0.17225612580763638},
    {0x1ac8866ac85c2182ULL, 0.24278137347120754},
    {0xa85477d73d7f7ef1ULL, 0.5849625007211561},
    {0x599dd1d9522ed3c9ULL, 0.5849625007211561},
    {0x93eee7da3388a406ULL, 0.24278137347120754},
    {0x22b63e7321cec5a7ULL, 0.34218112724994854},
};

const std::vector<MetaFeature> kFull48 = {
    {0xba007b5432d0b3b1ULL, 1.0},
    {0x547fd1c71e6c7e46ULL, 1.0},
    {0x6a646d54e484ef9dULL, 1.0},
    {0xdcb28218fed9eb8eULL, 1.0},
    {0x05d75c0251f06090ULL, 1.0},
    {0xf7c4b5f77a982403ULL, 1.0},
    {0xf09d792bed0a6640ULL, 1.0},
    {0x8959b0ce329034d0ULL, 1.0},
    {0x1ce045875bf6e096ULL, 1.0},
    {0xc1511ea51d7505b5ULL, 1.0},
    {0xbbff4f464496d957ULL, 1.0},
    {0xfd803faa3a084d06ULL, 1.0},
    {0xbcac109ebb6be64aULL, 1.0},
    {0x6a70cd60af4d8cacULL, 1.0},
    {0x47c4b11c5e306603ULL, 1.0},
};

Vocabulary fox_vocab() { return build_vocab(std::vector<std::string>{"the", "quick", "brown", "fox"}, 1); }

Feature the_quick_brown(const Vocabulary& v) {
  return Feature::ngram({*v.find("the"), *v.find("quick"), *v.find("brown")});
}

void expect_same(const std::vector<MetaFeature>& got, const std::vector<MetaFeature>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].hash, want[i].hash) << "entry " << i;
    EXPECT_NEAR(got[i].weight, want[i].weight, 1e-15) << "entry " << i;
  }
}

TEST(Hash, FnvReferenceVectors) {
  EXPECT_EQ(fingerprint(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fingerprint("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fingerprint("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hash, IdentityTypeAndConjunctionGoldens) {
  EXPECT_EQ(fingerprint("[the quick brown]"), 0xba007b5432d0b3b1ULL);
  EXPECT_EQ(fingerprint("3-gram"), 0x547fd1c71e6c7e46ULL);
  EXPECT_EQ(fingerprint("fox"), 0xdcb28218fed9eb8eULL);
  EXPECT_EQ(conjoin(fingerprint("3-gram"), fingerprint("fox")), 0xf7c4b5f77a982403ULL);
  EXPECT_EQ(hash_integer(3), 0xc7c2bf3b330983e6ULL);
  EXPECT_EQ(feature_count_bucket_hash(3), 0x4b69a64bd995a57cULL);
}

TEST(Hash, ConjunctionIsOrderSensitive) {
  const auto a = fingerprint("a"), b = fingerprint("b");
  EXPECT_NE(conjoin(a, b), conjoin(b, a));
  EXPECT_NE(feature_count_bucket_hash(3), link_count_bucket_hash(3));
}

TEST(Buckets, PowersOfTwoAreSingleBuckets) {
  for (int k = 0; k < 63; ++k) {
    const auto b = buckets(std::uint64_t{1} << k);
    ASSERT_EQ(b.size, 1u);
    EXPECT_EQ(b[0].bucket, k);
    EXPECT_EQ(b[0].weight, 1.0);
  }
}

TEST(Buckets, SixSplitsBetweenTwoAndThree) {
  const auto b = buckets(6);
  ASSERT_EQ(b.size, 2u);
  EXPECT_EQ(b[0].bucket, 2);
  EXPECT_EQ(b[1].bucket, 3);
  EXPECT_NEAR(b[0].weight, 0.4150374992788439, 1e-15);
  EXPECT_NEAR(b[1].weight, 0.5849625007211561, 1e-15);
}

TEST(Buckets, WeightsInterpolateLog2) {
  for (std::uint64_t c = 1; c <= 5000; ++c) {
    const auto b = buckets(c);
    double total = 0.0, mean = 0.0;
    for (const auto& x : b) {
      EXPECT_GT(x.weight, 0.0);
      total += x.weight;
      mean += x.weight * x.bucket;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(mean, std::log2(static_cast<double>(c)), 1e-12) << c;
    if (b.size == 2) {
      EXPECT_EQ(b[1].bucket, b[0].bucket + 1);
    }
  }
  EXPECT_THROW(buckets(0), DataError);
}

TEST(MetaFeatures, FullModeGolden) {
  const auto v = fox_vocab();
  expect_same(compute_metafeatures(the_quick_brown(v), *v.find("fox"), v, 6, 3, MetaFeatureMode::Full), kFull63);
  expect_same(compute_metafeatures(the_quick_brown(v), *v.find("fox"), v, 4, 8, MetaFeatureMode::Full), kFull48);
}

TEST(MetaFeatures, UnlexicalizedGolden) {
  const auto v = fox_vocab();
  expect_same(compute_metafeatures(the_quick_brown(v), *v.find("fox"), v, 6, 3, MetaFeatureMode::Unlexicalized),
              kUnlex63);
}

TEST(MetaFeatures, FeatureOnlyIsTheFeatureSidePrefix) {
  const auto v = fox_vocab();
  const auto got = compute_metafeatures(the_quick_brown(v), *v.find("fox"), v, 6, 3, MetaFeatureMode::FeatureOnly);
  expect_same(got, std::vector<MetaFeature>(kFull63.begin(), kFull63.begin() + 4));
}

TEST(MetaFeatures, FullContainsIdentityByTargetConjunction) {
  const auto v = fox_vocab();
  const auto mfs = compute_metafeatures(the_quick_brown(v), *v.find("fox"), v, 6, 3, MetaFeatureMode::Full);
  const auto want = conjoin(fingerprint("[the quick brown]"), fingerprint("fox"));
  int hits = 0;
  for (const auto& m : mfs) hits += m.hash == want;
  EXPECT_EQ(hits, 1);
}

TEST(MetaFeatures, SizesAndModeProperties) {
  testing::Rng rng(17);
  const auto v = testing::numbered_vocab(50);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<WordId> ctx;
    const std::size_t n = rng.below(5);
    for (std::size_t i = 0; i < n; ++i) ctx.push_back(static_cast<WordId>(3 + rng.below(50)));
    const Feature f = Feature::ngram(ctx);
    const auto w = static_cast<WordId>(1 + rng.below(52));
    const std::uint64_t cf = 1 + rng.below(1000);
    const std::uint64_t cfw = 1 + rng.below(cf);
    const auto full = compute_metafeatures(f, w, v, cf, cfw, MetaFeatureMode::Full);
    const auto only = compute_metafeatures(f, w, v, cf, cfw, MetaFeatureMode::FeatureOnly);
    const auto unlex = compute_metafeatures(f, w, v, cf, cfw, MetaFeatureMode::Unlexicalized);

    // Size from the construction rule: L has 2 + |B(cf)| entries, the target
    // doubles it plus one, and each link bucket adds 1 + |L'|.
    const std::size_t l = 2 + buckets(cf).size;
    const std::size_t lt = 2 * l + 1;
    EXPECT_EQ(full.size(), lt + buckets(cfw).size * (1 + lt));
    EXPECT_LE(full.size(), 29u);
    EXPECT_EQ(only.size(), l);

    // Feature-only is a prefix of full.
    for (std::size_t i = 0; i < only.size(); ++i) EXPECT_EQ(only[i], full[i]);

    // Unlexicalized never touches the feature or target identity.
    const auto id = fingerprint(render_feature(f, v));
    const auto tgt = fingerprint(v.word(w));
    for (const auto& m : unlex) {
      EXPECT_NE(m.hash, id);
      EXPECT_NE(m.hash, tgt);
    }
    // Every unlexicalized meta-feature with no lexical ingredient also appears in full.
    std::set<std::uint64_t> full_hashes;
    for (const auto& m : full) full_hashes.insert(m.hash);
    EXPECT_TRUE(full_hashes.count(unlex[0].hash));
  }
}

TEST(MetaFeatures, UnlexicalizedDependsOnlyOnTypeAndCounts) {
  const auto v = testing::numbered_vocab(30);
  const auto a = compute_metafeatures(Feature::ngram({4, 5}), 7, v, 12, 5, MetaFeatureMode::Unlexicalized);
  const auto b = compute_metafeatures(Feature::ngram({9, 20}), 11, v, 12, 5, MetaFeatureMode::Unlexicalized);
  EXPECT_EQ(a, b);
  const auto c = compute_metafeatures(Feature::ngram({9}), 11, v, 12, 5, MetaFeatureMode::Unlexicalized);
  EXPECT_NE(a, c);
}

TEST(MetaFeatures, DescribedListMatchesPlainList) {
  const auto v = fox_vocab();
  const auto f = the_quick_brown(v);
  const auto plain = compute_metafeatures(f, *v.find("fox"), v, 6, 3, MetaFeatureMode::Full);
  const auto described = describe_metafeatures(f, *v.find("fox"), v, 6, 3, MetaFeatureMode::Full);
  ASSERT_EQ(described.size(), plain.size());
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(described[i].mf, plain[i]);
  EXPECT_EQ(described[0].label, "feature=[the quick brown]");
  EXPECT_EQ(described[1].label, "type=3-gram");
  EXPECT_EQ(described[4].label, "target=fox");
  EXPECT_EQ(described[6].label, "type=3-gram & target=fox");
}

TEST(MetaFeatures, ModeNames) {
  for (auto m : {MetaFeatureMode::Full, MetaFeatureMode::FeatureOnly, MetaFeatureMode::Unlexicalized})
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_THROW(parse_mode("lexical"), UsageError);
}

TEST(HashIndex, StaysInRange) {
  testing::Rng rng(5);
  for (std::size_t size : {std::size_t{1}, std::size_t{7}, std::size_t{1} << 20}) {
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t h = (static_cast<std::uint64_t>(rng.below(1u << 31)) << 33) ^ rng.below(1u << 30);
      EXPECT_LT(hash_index(h, size), size);
      EXPECT_EQ(hash_index(h, size), h % size);
    }
  }
}

}  // namespace
}  // namespace snm
