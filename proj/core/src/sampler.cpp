#include "mmda/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "mmda/error.hpp"

namespace mmda {

const char* to_string(Origin origin) { return origin == Origin::source ? "source" : "target"; }
const char* to_string(LossKind kind) { return kind == LossKind::supervised ? "supervised" : "consistency"; }

const char* to_string(CompositionMode mode) {
  return mode == CompositionMode::multi_source ? "multi_source" : "semi_supervised";
}

CompositionMode composition_mode_from_string(const std::string& text) {
  if (text == "multi_source" || text == "ms") return CompositionMode::multi_source;
  if (text == "semi_supervised" || text == "ss") return CompositionMode::semi_supervised;
  throw ConfigError("plan.mode must be multi_source or semi_supervised (got '" + text + "')");
}

std::size_t ComposedBatch::count(Origin o) const {
  return static_cast<std::size_t>(std::count(origin.begin(), origin.end(), o));
}

std::size_t ComposedBatch::count(LossKind k) const {
  return static_cast<std::size_t>(std::count(loss_kind.begin(), loss_kind.end(), k));
}

void ComposedBatch::append(const ComposedBatch& other, std::size_t i) {
  images.push_back(other.images[i]);
  if (other.has_targets()) targets.push_back(other.targets[i]);
  origin.push_back(other.origin[i]);
  loss_kind.push_back(other.loss_kind[i]);
  sample_ids.push_back(other.sample_ids[i]);
}

void ComposedBatch::check() const {
  const std::size_t n = images.size();
  if (origin.size() != n || loss_kind.size() != n || sample_ids.size() != n)
    throw Error("ComposedBatch: tag arrays are not congruent with images");
  if (!targets.empty() && targets.size() != n) throw Error("ComposedBatch: targets not congruent with images");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!on_simplex(targets[i].values())) throw Error("ComposedBatch: target off the simplex at " + std::to_string(i));
  }
}

CompositionPlan::CompositionPlan(CompositionMode mode, int n, int k) : mode_(mode), n_(n), k_(k) {
  if (n_ < 1) throw ConfigError("plan.n must be >= 1 (got " + std::to_string(n_) + ")");
  if (mode_ == CompositionMode::multi_source) {
    if (k_ < 1) throw ConfigError("multi-source plan needs at least one source domain");
    if (n_ < k_)
      throw ConfigError("plan.n (" + std::to_string(n_) + ") must be >= the number of source domains (" +
                        std::to_string(k_) + ")");
  } else {
    if (n_ % 5 != 0)
      throw ConfigError("plan.n must be divisible by 5 for semi_supervised (got " + std::to_string(n_) + ")");
    k_ = 1;
  }
}

std::vector<int> multisource_counts(int n, int k, Rng& rng) {
  if (k < 1 || n < k) throw ConfigError("multisource_counts: need n >= k >= 1");
  std::vector<int> counts(static_cast<std::size_t>(k), n / k);
  const int remainder = n % k;
  if (remainder > 0) {
    std::vector<std::size_t> domains(static_cast<std::size_t>(k));
    std::iota(domains.begin(), domains.end(), std::size_t{0});
    rng.shuffle(domains.begin(), domains.end());
    for (int r = 0; r < remainder; ++r) ++counts[domains[static_cast<std::size_t>(r)]];
  }
  return counts;
}

std::optional<Sampler::Cursor> Sampler::cursor(const DomainStore& store) const {
  auto it = cursors_.find(&store);
  if (it == cursors_.end()) return std::nullopt;
  return it->second;
}

void Sampler::restore_cursor(const DomainStore& store, Cursor cursor) {
  if (cursor.order.size() != store.size() || cursor.position > cursor.order.size())
    throw DataError("sampler: cursor state does not match domain '" + store.domain_id() + "'");
  for (std::size_t idx : cursor.order)
    if (idx >= store.size()) throw DataError("sampler: cursor index out of range for '" + store.domain_id() + "'");
  cursors_[&store] = std::move(cursor);
}

std::vector<std::size_t> Sampler::draw(const DomainStore& store, std::size_t count, Rng& rng) {
  if (store.empty()) throw DataError("sampler: domain '" + store.domain_id() + "' has no samples");
  Cursor& cursor = cursors_[&store];
  const std::size_t size = store.size();
  auto reshuffle = [&] {
    cursor.order.resize(size);
    std::iota(cursor.order.begin(), cursor.order.end(), std::size_t{0});
    rng.shuffle(cursor.order.begin(), cursor.order.end());
    cursor.position = 0;
  };
  if (cursor.order.size() != size) reshuffle();

  std::vector<std::size_t> picked;
  picked.reserve(count);
  if (size < count) {
    // Too small for a duplicate-free batch: cycle through fresh permutations.
    while (picked.size() < count) {
      if (cursor.position == size) reshuffle();
      picked.push_back(cursor.order[cursor.position++]);
    }
    return picked;
  }

  while (picked.size() < count && cursor.position < size) picked.push_back(cursor.order[cursor.position++]);
  if (picked.size() < count) {
    // Epoch boundary inside the batch: take the rest from a new permutation,
    // skipping indices already in this batch, and keep them for later.
    std::unordered_set<std::size_t> taken(picked.begin(), picked.end());
    reshuffle();
    std::vector<std::size_t> head, tail;
    for (std::size_t idx : cursor.order) {
      if (head.size() + picked.size() < count && !taken.contains(idx)) {
        head.push_back(idx);
      } else {
        tail.push_back(idx);
      }
    }
    picked.insert(picked.end(), head.begin(), head.end());
    cursor.order = head;
    cursor.order.insert(cursor.order.end(), tail.begin(), tail.end());
    cursor.position = head.size();
  }
  return picked;
}

void Sampler::append_labeled(ComposedBatch& batch, const DomainStore& store, std::size_t count, Origin origin,
                             const Augmenter& augmenter, Rng& rng) {
  if (!store.labeled()) throw DataError("sampler: domain '" + store.domain_id() + "' is not labeled");
  if (store.empty()) throw DataError("sampler: domain '" + store.domain_id() + "' has no samples");
  const auto classes = static_cast<std::size_t>(store.class_count());
  for (std::size_t idx : draw(store, count, rng)) {
    const DomainSample& s = store[idx];
    batch.images.push_back(augmenter(s.image, rng));
    batch.targets.push_back(ProbDist::one_hot(classes, static_cast<std::size_t>(*s.label)));
    batch.origin.push_back(origin);
    batch.loss_kind.push_back(LossKind::supervised);
    batch.sample_ids.push_back(s.sample_id);
  }
}

ComposedBatch Sampler::compose_labeled_multisource(const std::vector<const DomainStore*>& sources,
                                                   const CompositionPlan& plan, const Augmenter& augmenter,
                                                   Rng& rng) {
  if (plan.mode() != CompositionMode::multi_source) throw ConfigError("compose_labeled_multisource: plan is not multi_source");
  if (static_cast<int>(sources.size()) != plan.k())
    throw ConfigError("compose_labeled_multisource: plan expects " + std::to_string(plan.k()) + " sources, got " +
                      std::to_string(sources.size()));
  for (const DomainStore* s : sources) {
    if (s->empty()) throw DataError("sampler: source domain '" + s->domain_id() + "' has no samples");
  }
  const auto counts = multisource_counts(plan.n(), plan.k(), rng);
  ComposedBatch batch;
  for (std::size_t d = 0; d < sources.size(); ++d) {
    append_labeled(batch, *sources[d], static_cast<std::size_t>(counts[d]), Origin::source, augmenter, rng);
  }
  return batch;
}

ComposedBatch Sampler::compose_labeled_semisupervised(const DomainStore& source, const DomainStore& labeled_target,
                                                      const CompositionPlan& plan, const Augmenter& augmenter,
                                                      Rng& rng) {
  if (plan.mode() != CompositionMode::semi_supervised)
    throw ConfigError("compose_labeled_semisupervised: plan is not semi_supervised");
  if (source.empty()) throw DataError("sampler: source domain '" + source.domain_id() + "' has no samples");
  if (labeled_target.empty())
    throw DataError("sampler: labeled target '" + labeled_target.domain_id() + "' has no samples");
  ComposedBatch batch;
  append_labeled(batch, source, static_cast<std::size_t>(plan.semi_supervised_source_count()), Origin::source,
                 augmenter, rng);
  append_labeled(batch, labeled_target, static_cast<std::size_t>(plan.semi_supervised_target_count()),
                 Origin::target, augmenter, rng);
  return batch;
}

std::pair<ComposedBatch, ComposedBatch> Sampler::compose_unlabeled_pair(const DomainStore& target,
                                                                        const CompositionPlan& plan,
                                                                        const Augmenter& augmenter, Rng& rng) {
  if (target.empty()) throw DataError("sampler: target domain '" + target.domain_id() + "' has no samples");
  const auto indices = draw(target, static_cast<std::size_t>(plan.n()), rng);
  std::pair<ComposedBatch, ComposedBatch> views;
  for (ComposedBatch* view : {&views.first, &views.second}) {
    for (std::size_t idx : indices) {
      const DomainSample& s = target[idx];
      view->images.push_back(augmenter(s.image, rng));
      view->origin.push_back(Origin::target);
      view->loss_kind.push_back(LossKind::consistency);
      view->sample_ids.push_back(s.sample_id);
    }
  }
  return views;
}

}  // namespace mmda
