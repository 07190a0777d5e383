#include <gtest/gtest.h>

#include <map>
#include <set>

#include "mmda/error.hpp"
#include "mmda/sampler.hpp"
#include "test_support.hpp"

namespace mmda {
namespace {

std::string domain_of(const std::string& sample_id) { return sample_id.substr(0, sample_id.find('/')); }

std::vector<DomainStore> sources(int k, int per_class = 6) {
  std::vector<DomainStore> out;
  for (int d = 0; d < k; ++d) {
    const std::string name = "s" + std::to_string(d);
    out.push_back(testing::shape_store(name, 3, per_class, 8, true, testing::plain_style(name),
                                       static_cast<std::uint64_t>(100 * d)));
  }
  return out;
}

std::vector<const DomainStore*> ptrs(const std::vector<DomainStore>& v) {
  std::vector<const DomainStore*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

TEST(Sampler, PlanValidation) {
  EXPECT_NO_THROW(CompositionPlan(CompositionMode::multi_source, 15, 3));
  EXPECT_THROW(CompositionPlan(CompositionMode::multi_source, 2, 3), ConfigError);
  EXPECT_THROW(CompositionPlan(CompositionMode::multi_source, 15, 0), ConfigError);
  EXPECT_THROW(CompositionPlan(CompositionMode::semi_supervised, 14), ConfigError);
  const CompositionPlan ss(CompositionMode::semi_supervised, 15);
  EXPECT_EQ(ss.semi_supervised_source_count(), 12);
  EXPECT_EQ(ss.semi_supervised_target_count(), 3);
}

TEST(Sampler, ModeNamesRoundTrip) {
  EXPECT_EQ(composition_mode_from_string("multi_source"), CompositionMode::multi_source);
  EXPECT_EQ(composition_mode_from_string(to_string(CompositionMode::semi_supervised)),
            CompositionMode::semi_supervised);
  EXPECT_THROW(composition_mode_from_string("both"), ConfigError);
}

TEST(Sampler, DivisibleCountsAreExact) {
  Rng rng(1);
  EXPECT_EQ(multisource_counts(15, 3, rng), (std::vector<int>{5, 5, 5}));
  EXPECT_EQ(multisource_counts(15, 1, rng), (std::vector<int>{15}));
  EXPECT_EQ(multisource_counts(12, 4, rng), (std::vector<int>{3, 3, 3, 3}));
}

TEST(Sampler, RemainderGoesToDistinctDomains) {
  Rng rng(2);
  std::vector<int> extra(4, 0);
  for (int trial = 0; trial < 4000; ++trial) {
    const auto counts = multisource_counts(15, 4, rng);  // 3 each plus 3 extra
    int total = 0, bumped = 0;
    for (std::size_t d = 0; d < counts.size(); ++d) {
      ASSERT_TRUE(counts[d] == 3 || counts[d] == 4);
      total += counts[d];
      if (counts[d] == 4) {
        ++bumped;
        ++extra[d];
      }
    }
    ASSERT_EQ(total, 15);
    ASSERT_EQ(bumped, 3);
  }
  for (int e : extra) EXPECT_NEAR(e / 4000.0, 0.75, 0.04);
}

TEST(Sampler, MultiSourceBatchHasPerDomainCounts) {
  const auto stores = sources(3);
  Sampler sampler;
  Rng rng(3);
  const CompositionPlan plan(CompositionMode::multi_source, 15, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const ComposedBatch batch = sampler.compose_labeled_multisource(ptrs(stores), plan, identity_augmenter(), rng);
    ASSERT_EQ(batch.size(), 15u);
    batch.check();
    std::map<std::string, int> per_domain;
    for (const auto& id : batch.sample_ids) ++per_domain[domain_of(id)];
    EXPECT_EQ(per_domain, (std::map<std::string, int>{{"s0", 5}, {"s1", 5}, {"s2", 5}}));
    EXPECT_EQ(batch.count(Origin::source), 15u);
    EXPECT_EQ(batch.count(LossKind::supervised), 15u);
  }
}

TEST(Sampler, SemiSupervisedBatchIsFourFifthsSource) {
  const auto src = sources(1);
  const DomainStore labeled_target = testing::shape_store("t", 3, 3, 8, true, testing::plain_style("t", true));
  Sampler sampler;
  Rng rng(4);
  const CompositionPlan plan(CompositionMode::semi_supervised, 15);
  const ComposedBatch batch =
      sampler.compose_labeled_semisupervised(src[0], labeled_target, plan, identity_augmenter(), rng);
  ASSERT_EQ(batch.size(), 15u);
  EXPECT_EQ(batch.count(Origin::source), 12u);
  EXPECT_EQ(batch.count(Origin::target), 3u);
  EXPECT_EQ(batch.count(LossKind::supervised), 15u);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t label = batch.targets[i].argmax();
    EXPECT_DOUBLE_EQ(batch.targets[i][label], 1.0);
  }
}

TEST(Sampler, UnlabeledViewsShareSamples) {
  const DomainStore target = testing::shape_store("t", 3, 10, 8, false, testing::plain_style("t", true));
  Sampler sampler;
  Rng rng(5);
  const CompositionPlan plan(CompositionMode::multi_source, 15, 1);
  const auto [a, b] = sampler.compose_unlabeled_pair(target, plan, make_augmenter(AugmentPolicy(10, 8)), rng);
  EXPECT_EQ(a.sample_ids, b.sample_ids);
  EXPECT_FALSE(a.has_targets());
  EXPECT_EQ(a.count(LossKind::consistency), 15u);
  EXPECT_EQ(a.count(Origin::target), 15u);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_difference |= !(a.images[i] == b.images[i]);
  EXPECT_TRUE(any_difference);
}

TEST(Sampler, NoDuplicatesWithinABatch) {
  const DomainStore target = testing::shape_store("t", 4, 5, 8, false, testing::plain_style("t"));
  Sampler sampler;
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto idx = sampler.draw(target, 15, rng);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 15u);
  }
}

TEST(Sampler, EpochCoversEveryIndexOnce) {
  const DomainStore store = testing::shape_store("t", 3, 5, 8, false, testing::plain_style("t"));
  Sampler sampler;
  Rng rng(7);
  std::multiset<std::size_t> seen;
  for (int b = 0; b < 3; ++b)
    for (auto i : sampler.draw(store, 5, rng)) seen.insert(i);
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_EQ(seen.count(i), 1u);
}

TEST(Sampler, CursorRestoreContinuesIdentically) {
  const DomainStore store = testing::shape_store("t", 3, 5, 8, false, testing::plain_style("t"));
  Sampler a;
  Rng ra(8);
  a.draw(store, 4, ra);
  Sampler b;
  b.restore_cursor(store, *a.cursor(store));
  Rng rb = ra;
  for (int i = 0; i < 6; ++i) EXPECT_EQ(a.draw(store, 4, ra), b.draw(store, 4, rb));
  EXPECT_THROW(b.restore_cursor(store, Sampler::Cursor{{0, 1}, 0}), DataError);
}

TEST(Sampler, ErrorsOnEmptyOrMismatchedInput) {
  Sampler sampler;
  Rng rng(9);
  const DomainStore empty("e", 2, {}, false);
  const CompositionPlan ms(CompositionMode::multi_source, 15, 1);
  EXPECT_THROW(sampler.compose_unlabeled_pair(empty, ms, identity_augmenter(), rng), DataError);
  const auto two = sources(2);
  EXPECT_THROW(sampler.compose_labeled_multisource(ptrs(two), ms, identity_augmenter(), rng), ConfigError);
}

}  // namespace
}  // namespace mmda
