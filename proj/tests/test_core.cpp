#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "forge/backend.hpp"
#include "forge/core.hpp"
#include "forge/hash.hpp"

using namespace forge;

TEST(Hash, FnvMatchesPublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hash, SplitMixMatchesReferenceStream) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
}

TEST(Hash, MixAndPromptSeedMatchPythonReference) {
  EXPECT_EQ(mix(1, 2), 0xf2826f98653e9e57ULL);
  EXPECT_EQ(mix(1, 2, 3), 0xd892bcca058519c7ULL);
  EXPECT_EQ(prompt_seed(20240601, "r01"), 0x9c5626ded7fc8f82ULL);
  SplitMix64 rng(42);
  EXPECT_EQ(rng.uniform_pm1(), 0.4831297575436466);
  EXPECT_EQ(rng.below(7), 5u);
}

TEST(Hash, MixIsOrderSensitive) {
  EXPECT_NE(mix(1, 2), mix(2, 1));
  EXPECT_NE(prompt_seed(1, "a"), prompt_seed(1, "b"));
}

TEST(Hash, UniformRanges) {
  SplitMix64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = rng.uniform_pm1();
    ASSERT_GE(v, -1.0);
    ASSERT_LT(v, 1.0);
  }
}

TEST(Hash, ToHex) {
  EXPECT_EQ(to_hex(0), "0000000000000000");
  EXPECT_EQ(to_hex(0xdeadbeefULL), "00000000deadbeef");
}

TEST(Category, FourteenAspectsRoundTrip) {
  EXPECT_EQ(kCategoryNames.size(), 14u);
  for (auto c : kAllCategories) EXPECT_EQ(parse_category(category_name(c)), c);
}

TEST(Category, LenientLabels) {
  EXPECT_EQ(parse_category("Borderline_Pornography"), Category::borderline_pornography);
  EXPECT_EQ(parse_category("public-figures"), Category::public_figures);
  EXPECT_THROW(parse_category("weather"), UsageError);
}

TEST(Text, TokenizeLowercasesAndCollapsesWhitespace) {
  EXPECT_EQ(tokenize("  Hello,   WORLD\tfoo  "),
            (std::vector<std::string>{"hello,", "world", "foo"}));
  EXPECT_TRUE(tokenize(" \t\n").empty());
  EXPECT_EQ(normalize_text(" Red  FOX "), "red fox");
}

TEST(PromptRecord, Validation) {
  EXPECT_NO_THROW(validate(PromptRecord{"p1", Category::gore, "red fox"}));
  EXPECT_THROW(validate(PromptRecord{"", Category::gore, "red fox"}), UsageError);
  EXPECT_THROW(validate(PromptRecord{"p1", Category::gore, "   "}), UsageError);
}

TEST(Candidate, VariantIndexMatchesRole) {
  EXPECT_NO_THROW(CandidatePrompt::make("a", "x", Lineage{"", 0, 0, CandidateRole::seed}));
  EXPECT_NO_THROW(CandidatePrompt::make("b", "x", Lineage{"a", 1, 0, CandidateRole::main}));
  EXPECT_NO_THROW(CandidatePrompt::make("c", "x", Lineage{"b", 1, 3, CandidateRole::variant}));
  EXPECT_THROW(CandidatePrompt::make("d", "x", Lineage{"b", 1, 0, CandidateRole::variant}),
               UsageError);
  EXPECT_THROW(CandidatePrompt::make("e", "x", Lineage{"b", 1, 2, CandidateRole::main}),
               UsageError);
  const auto c = CandidatePrompt::make("f", "Red  Fox", Lineage{});
  EXPECT_EQ(c.tokens, (std::vector<std::string>{"red", "fox"}));
}

TEST(Vectors, CosineEdgeCases) {
  const std::vector<double> a{1, 0}, b{0, 1}, z{0, 0}, c{2, 0};
  EXPECT_EQ(cosine(a, b), 0.0);
  EXPECT_EQ(cosine(a, c), 1.0);
  EXPECT_EQ(cosine(a, z), 0.0);
  EXPECT_THROW(cosine(a, std::vector<double>{1, 0, 0}), UsageError);
}

TEST(Vectors, CosineStaysInRange) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> a(16), b(16);
    for (auto& x : a) x = n(rng);
    for (int i = 0; i < 16; ++i) b[i] = (t % 2) ? a[i] * 3.0 : n(rng);
    const double c = cosine(a, b);
    ASSERT_LE(c, 1.0);
    ASSERT_GE(c, -1.0);
  }
}

TEST(Vectors, NormalizeLeavesZeroAlone) {
  std::vector<double> z(4, 0.0);
  l2_normalize(z);
  EXPECT_EQ(squared_norm(z), 0.0);
  std::vector<double> v{3, 4};
  l2_normalize(v);
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

TEST(Generation, ValidateInvariants) {
  GenerationResult g;
  g.blocked = true;
  EXPECT_THROW(validate(g), ProtocolError);  // blocked without a stage
  g.block_stage = BlockStage::input;
  EXPECT_NO_THROW(validate(g));
  g.frames = black_frames(4, 2);
  EXPECT_THROW(validate(g), ProtocolError);  // input block carries no frames
  g.block_stage = BlockStage::output;
  EXPECT_NO_THROW(validate(g));
  g.blocked = false;
  g.block_stage.reset();
  EXPECT_NO_THROW(validate(g));
  g.frames[1].index = 5;
  EXPECT_THROW(validate(g), ProtocolError);
  g.frames.clear();
  EXPECT_THROW(validate(g), ProtocolError);
}

TEST(Weights, Validation) {
  ObjectiveWeights w;
  EXPECT_NO_THROW(w.validate());
  w.delta = 1.0;
  EXPECT_THROW(w.validate(), ConfigError);
  w = {};
  w.lambda = 0;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Config, Defaults) {
  CampaignConfig c;
  EXPECT_EQ(c.t_max, 20);
  EXPECT_EQ(c.k_variants, 5);
  EXPECT_EQ(c.weights.lambda, 3.0);
  EXPECT_EQ(c.weights.gamma, 1.0);
  EXPECT_EQ(c.weights.beta, 2.0);
  EXPECT_NO_THROW(c.validate());
  c.selection_mode = SelectionMode::robust;
  EXPECT_THROW(c.validate(), ConfigError);
  c.robust_subvariants = 2;
  EXPECT_NO_THROW(c.validate());
  c.t_max = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Budget, FailsBeforeDispatch) {
  QueryBudget b(3);
  b.acquire();
  b.acquire();
  b.acquire();
  EXPECT_THROW(b.acquire(), BudgetExceeded);
  EXPECT_EQ(b.spent(), 3u);
}

TEST(Budget, ConcurrentAcquireNeverOvershoots) {
  QueryBudget b(1000);
  std::atomic<int> granted{0};
  {
    std::vector<std::jthread> ts;
    for (int t = 0; t < 8; ++t) {
      ts.emplace_back([&] {
        for (int i = 0; i < 500; ++i) {
          try {
            b.acquire();
            ++granted;
          } catch (const BudgetExceeded&) {
          }
        }
      });
    }
  }
  EXPECT_EQ(granted.load(), 1000);
  EXPECT_EQ(b.spent(), 1000u);
}

TEST(Budget, UnlimitedCounts) {
  QueryBudget b;
  for (int i = 0; i < 50; ++i) b.acquire();
  EXPECT_EQ(b.spent(), 50u);
  EXPECT_FALSE(b.limit());
}
