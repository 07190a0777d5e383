#include "mmda/mixmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmda/error.hpp"

namespace mmda {

void MixParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("mix.alpha must be > 0 (got " + std::to_string(alpha) + ")");
  if (!(temperature > 0.0 && temperature <= 1.0))
    throw ConfigError("mix.T must lie in (0, 1] (got " + std::to_string(temperature) + ")");
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw ConfigError("mix.w must be >= 0 (got " + std::to_string(weight) + ")");
}

ProbDist sharpen(const ProbDist& p, double temperature) {
  if (!(temperature > 0.0 && temperature <= 1.0)) throw Error("sharpen: temperature must lie in (0, 1]");
  if (p.empty()) throw Error("sharpen: empty distribution");
  if (temperature == 1.0) return p;
  const double inv_t = 1.0 / temperature;
  std::vector<double> logw(p.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    logw[i] = p[i] > 0.0 ? inv_t * std::log(p[i]) : -std::numeric_limits<double>::infinity();
    max_log = std::max(max_log, logw[i]);
  }
  if (!std::isfinite(max_log)) throw Error("sharpen: all-zero distribution");
  for (double& w : logw) w = std::exp(w - max_log);
  return ProbDist::normalized(std::move(logw));
}

std::vector<ProbDist> guess_labels(const Predictor& predict, const ComposedBatch& view_a,
                                   const ComposedBatch& view_b, double temperature) {
  if (view_a.size() != view_b.size() || view_a.sample_ids != view_b.sample_ids)
    throw Error("guess_labels: views are not aligned on the same samples");
  const auto pa = predict(view_a.images);
  const auto pb = predict(view_b.images);
  if (pa.size() != view_a.size() || pb.size() != view_b.size())
    throw Error("guess_labels: predictor returned the wrong number of rows");
  std::vector<ProbDist> guesses;
  guesses.reserve(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].size() != pb[i].size()) throw Error("guess_labels: class count mismatch between views");
    std::vector<double> mean(pa[i].size());
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = (pa[i][c] + pb[i][c]) / 2.0;
    guesses.push_back(sharpen(ProbDist(std::move(mean)), temperature));
  }
  return guesses;
}

void assign_guesses(ComposedBatch& view_a, ComposedBatch& view_b, const std::vector<ProbDist>& guesses) {
  if (guesses.size() != view_a.size() || guesses.size() != view_b.size())
    throw Error("assign_guesses: size mismatch");
  view_a.targets = guesses;
  view_b.targets = guesses;
}

double sample_mix_coefficient(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw Error("sample_mix_coefficient: alpha must be > 0");
  return dominant_coefficient(rng.beta(alpha, alpha));
}

ComposedBatch mixup(const ComposedBatch& primary, const ComposedBatch& partner, std::span<const double> lambdas) {
  const std::size_t n = primary.size();
  if (partner.size() != n || lambdas.size() != n) throw Error("mixup: size mismatch");
  if (!primary.has_targets() || !partner.has_targets()) throw Error("mixup: targets must be defined on both batches");
  ComposedBatch out;
  out.images.reserve(n);
  out.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = lambdas[i];
    if (!(lam >= 0.5 && lam <= 1.0)) throw Error("mixup: coefficient outside [0.5, 1]");
    const Image& a = primary.images[i];
    const Image& b = partner.images[i];
    if (a.height != b.height || a.width != b.width) throw Error("mixup: image shape mismatch");
    Image mixed(a.height, a.width);
    const auto la = static_cast<float>(lam);
    const auto lb = static_cast<float>(1.0 - lam);
    for (std::size_t k = 0; k < mixed.pixels.size(); ++k) {
      mixed.pixels[k] = std::clamp(la * a.pixels[k] + lb * b.pixels[k], 0.0f, 1.0f);
    }
    const ProbDist& ta = primary.targets[i];
    const ProbDist& tb = partner.targets[i];
    if (ta.size() != tb.size()) throw Error("mixup: target class count mismatch");
    std::vector<double> t(ta.size());
    for (std::size_t c = 0; c < t.size(); ++c) t[c] = lam * ta[c] + (1.0 - lam) * tb[c];
    out.images.push_back(std::move(mixed));
    out.targets.emplace_back(std::move(t));
  }
  out.origin = primary.origin;
  out.loss_kind = primary.loss_kind;
  out.sample_ids = primary.sample_ids;
  return out;
}

MixPool build_mix_pool(const ComposedBatch& labeled, const ComposedBatch& view_a, const ComposedBatch& view_b,
                       double alpha, Rng& rng) {
  const std::size_t total = labeled.size() + view_a.size() + view_b.size();
  std::vector<std::size_t> permutation(total);
  std::iota(permutation.begin(), permutation.end(), std::size_t{0});
  rng.shuffle(permutation.begin(), permutation.end());
  std::vector<double> lambdas(total);
  for (double& l : lambdas) l = sample_mix_coefficient(alpha, rng);
  return build_mix_pool(labeled, view_a, view_b, permutation, lambdas);
}

MixPool build_mix_pool(const ComposedBatch& labeled, const ComposedBatch& view_a, const ComposedBatch& view_b,
                       std::span<const std::size_t> permutation, std::span<const double> lambdas) {
  const std::size_t n = labeled.size();
  if (view_a.size() != n || view_b.size() != n) throw Error("build_mix_pool: batches differ in size");
  if (!view_a.has_targets() || !view_b.has_targets())
    throw Error("build_mix_pool: unlabeled views need guessed targets first");
  const std::size_t total = 3 * n;
  if (permutation.size() != total || lambdas.size() != total) throw Error("build_mix_pool: wrong draw sizes");
  std::vector<bool> seen(total, false);
  for (std::size_t p : permutation) {
    if (p >= total || seen[p]) throw Error("build_mix_pool: not a permutation");
    seen[p] = true;
  }

  const std::array<const ComposedBatch*, 3> primaries{&labeled, &view_a, &view_b};
  auto pooled = [&](std::size_t idx) -> std::pair<const ComposedBatch*, std::size_t> {
    return {primaries[idx / n], idx % n};
  };

  MixPool pool;
  pool.permutation.assign(permutation.begin(), permutation.end());
  pool.lambdas.assign(lambdas.begin(), lambdas.end());
  for (std::size_t j = 0; j < 3; ++j) {
    ComposedBatch partner;
    for (std::size_t i = 0; i < n; ++i) {
      auto [batch, pos] = pooled(permutation[j * n + i]);
      partner.append(*batch, pos);
    }
    pool.mixed[j] = mixup(*primaries[j], partner, lambdas.subspan(j * n, n));
  }
  return pool;
}

std::array<ComposedBatch, 3> recompose_for_bn(const std::array<ComposedBatch, 3>& mixed, Rng& rng) {
  const std::size_t n = mixed[0].size();
  for (const auto& b : mixed) {
    if (b.size() != n) throw Error("recompose_for_bn: batch size mismatch");
    b.check();
  }
  const bool with_targets = mixed[0].has_targets();
  for (const auto& b : mixed)
    if (b.has_targets() != with_targets) throw Error("recompose_for_bn: targets defined on only some batches");

  using Ref = std::pair<std::size_t, std::size_t>;
  std::vector<Ref> sources, targets;
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < n; ++i) (mixed[j].origin[i] == Origin::source ? sources : targets).emplace_back(j, i);
  rng.shuffle(sources.begin(), sources.end());
  rng.shuffle(targets.begin(), targets.end());

  const std::size_t base = sources.size() / 3;
  const std::size_t extra = sources.size() % 3;
  std::array<std::size_t, 3> order{0, 1, 2};
  rng.shuffle(order.begin(), order.end());
  std::array<std::size_t, 3> source_count{base, base, base};
  for (std::size_t r = 0; r < extra; ++r) ++source_count[order[r]];

  std::array<ComposedBatch, 3> out;
  std::size_t next_source = 0;
  std::size_t next_target = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<Ref> members;
    for (std::size_t s = 0; s < source_count[j]; ++s) members.push_back(sources[next_source++]);
    for (std::size_t t = source_count[j]; t < n; ++t) members.push_back(targets[next_target++]);
    rng.shuffle(members.begin(), members.end());
    for (auto [b, i] : members) out[j].append(mixed[b], i);
  }
  return out;
}

Losses mixmatch_losses(std::span<const ProbDist> predictions, std::span<const ProbDist> targets,
                       std::span<const LossKind> loss_kinds, double weight) {
  if (predictions.size() != targets.size() || predictions.size() != loss_kinds.size())
    throw Error("mixmatch_losses: arrays are not congruent");
  double ce_sum = 0.0;
  double sq_sum = 0.0;
  std::size_t n_sup = 0;
  std::size_t n_con = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ProbDist& p = predictions[i];
    const ProbDist& t = targets[i];
    if (p.size() != t.size()) throw Error("mixmatch_losses: class count mismatch");
    if (loss_kinds[i] == LossKind::supervised) {
      ++n_sup;
      for (std::size_t c = 0; c < p.size(); ++c) {
        if (t[c] > 0.0) ce_sum -= t[c] * std::max(p[c] > 0.0 ? std::log(p[c]) : kLogClamp, kLogClamp);
      }
    } else {
      ++n_con;
      double sq = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) sq += (t[c] - p[c]) * (t[c] - p[c]);
      sq_sum += sq / static_cast<double>(p.size());
    }
  }
  if (n_sup == 0) throw Error("mixmatch_losses: at least one supervised example is required");
  Losses l;
  l.supervised = ce_sum / static_cast<double>(n_sup);
  l.consistency = n_con > 0 ? sq_sum / static_cast<double>(n_con) : 0.0;
  l.total = l.supervised + weight * l.consistency;
  return l;
}

template <class S>
Losses mixmatch_losses_from_logits(const Matrix<S>& logits, std::span<const ProbDist> targets,
                                   std::span<const LossKind> loss_kinds, double weight, std::size_t supervised_count,
                                   std::size_t consistency_count, Matrix<S>* grad_logits) {
  const auto classes = static_cast<std::size_t>(logits.rows());
  const auto examples = static_cast<std::size_t>(logits.cols());
  if (targets.size() != examples || loss_kinds.size() != examples)
    throw Error("mixmatch_losses_from_logits: arrays are not congruent with logits");
  if (supervised_count == 0) throw Error("mixmatch_losses_from_logits: at least one supervised example is required");
  if (grad_logits) grad_logits->setZero(logits.rows(), logits.cols());

  std::vector<double> logp(classes), p(classes), g(classes);
  double ce_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t j = 0; j < examples; ++j) {
    const ProbDist& t = targets[j];
    if (t.size() != classes) throw Error("mixmatch_losses_from_logits: class count mismatch");
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) zmax = std::max(zmax, static_cast<double>(logits(c, j)));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(logits(c, j)) - zmax);
    const double lse = zmax + std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) {
      logp[c] = static_cast<double>(logits(c, j)) - lse;
      p[c] = std::exp(logp[c]);
    }

    if (loss_kinds[j] == LossKind::supervised) {
      const double scale = 1.0 / static_cast<double>(supervised_count);
      double active_mass = 0.0;  // sum of target mass on unclamped classes
      for (std::size_t c = 0; c < classes; ++c) {
        if (t[c] <= 0.0) continue;
        if (logp[c] > kLogClamp) {
          ce_sum -= t[c] * logp[c];
          active_mass += t[c];
        } else {
          ce_sum -= t[c] * kLogClamp;
        }
      }
      if (grad_logits) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double own = (t[c] > 0.0 && logp[c] > kLogClamp) ? t[c] : 0.0;
          (*grad_logits)(c, j) = static_cast<S>(scale * (p[c] * active_mass - own));
        }
      }
    } else {
      const double inv_c = 1.0 / static_cast<double>(classes);
      double sq = 0.0;
      for (std::size_t c = 0; c < classes; ++c) sq += (t[c] - p[c]) * (t[c] - p[c]);
      sq_sum += sq * inv_c;
      if (grad_logits && consistency_count > 0) {
        const double scale = weight * inv_c / static_cast<double>(consistency_count);
        double pg = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          g[c] = -2.0 * (t[c] - p[c]) * scale;
          pg += p[c] * g[c];
        }
        for (std::size_t c = 0; c < classes; ++c) (*grad_logits)(c, j) = static_cast<S>(p[c] * (g[c] - pg));
      }
    }
  }
  Losses l;
  l.supervised = ce_sum / static_cast<double>(supervised_count);
  l.consistency = consistency_count > 0 ? sq_sum / static_cast<double>(consistency_count) : 0.0;
  l.total = l.supervised + weight * l.consistency;
  return l;
}

template <class S>
std::vector<ProbDist> softmax_columns(const Matrix<S>& logits) {
  std::vector<ProbDist> out;
  out.reserve(static_cast<std::size_t>(logits.cols()));
  std::vector<double> p(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double zmax = static_cast<double>(logits.col(j).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.rows(); ++c) {
      p[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(logits(c, j)) - zmax);
      sum += p[static_cast<std::size_t>(c)];
    }
    for (double& v : p) v /= sum;
    out.emplace_back(p);
  }
  return out;
}

template Losses mixmatch_losses_from_logits<float>(const Matrix<float>&, std::span<const ProbDist>,
                                                   std::span<const LossKind>, double, std::size_t, std::size_t,
                                                   Matrix<float>*);
template Losses mixmatch_losses_from_logits<double>(const Matrix<double>&, std::span<const ProbDist>,
                                                    std::span<const LossKind>, double, std::size_t, std::size_t,
                                                    Matrix<double>*);
template std::vector<ProbDist> softmax_columns<float>(const Matrix<float>&);
template std::vector<ProbDist> softmax_columns<double>(const Matrix<double>&);

}  // namespace mmda
