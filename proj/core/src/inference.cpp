#include "mmda/inference.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mmda/error.hpp"

namespace fs = std::filesystem;

namespace mmda {

namespace {

constexpr std::size_t kPredictChunk = 64;

std::vector<ProbDist> predict_images(const Model<float>& model, const std::vector<Image>& images) {
  std::vector<ProbDist> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kPredictChunk) {
    const std::size_t end = std::min(images.size(), start + kPredictChunk);
    const std::vector<Image> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                   images.begin() + static_cast<std::ptrdiff_t>(end));
    for (auto& p : model.predict_proba(chunk)) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void PredictionSet::validate() const {
  if (sample_ids.size() != probabilities.size()) throw Error("PredictionSet: ids and rows differ in length");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    if (!seen.insert(sample_ids[i]).second) throw Error("PredictionSet: duplicate sample id " + sample_ids[i]);
    if (!on_simplex(probabilities[i].values())) throw Error("PredictionSet: row off the simplex for " + sample_ids[i]);
  }
}

ProbDist predict_tta(const Model<float>& model, const Image& image, const AugmentPolicy& policy, int count, Rng& rng) {
  if (count < 1) throw Error("predict_tta: count must be >= 1");
  std::vector<Image> views;
  views.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) views.push_back(augment(image, policy, rng));
  const auto rows = model.predict_proba(views);
  std::vector<double> mean(rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += r[c];
  for (double& v : mean) v /= static_cast<double>(count);
  return ProbDist(std::move(mean));
}

PredictionSet predict_center(const Model<float>& model, const DomainStore& store, const AugmentPolicy& policy,
                             std::string model_id) {
  PredictionSet set;
  set.model_id = std::move(model_id);
  std::vector<Image> views;
  views.reserve(store.size());
  for (const auto& s : store.samples()) {
    set.sample_ids.push_back(s->sample_id);
    views.push_back(center_view(s->image, policy));
  }
  set.probabilities = predict_images(model, views);
  return set;
}

PredictionSet predict_store_tta(const Model<float>& model, const DomainStore& store, const AugmentPolicy& policy,
                                int count, Rng& rng, std::string model_id) {
  PredictionSet set;
  set.model_id = std::move(model_id);
  for (const auto& s : store.samples()) {
    set.sample_ids.push_back(s->sample_id);
    set.probabilities.push_back(predict_tta(model, s->image, policy, count, rng));
  }
  return set;
}

PredictionSet ensemble(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw Error("ensemble: no prediction sets");
  const PredictionSet& first = sets.front();
  for (const auto& s : sets) {
    if (s.sample_ids.size() != first.sample_ids.size() || s.probabilities.size() != first.sample_ids.size())
      throw Error("ensemble: prediction sets differ in length");
    for (std::size_t i = 0; i < first.sample_ids.size(); ++i) {
      if (s.sample_ids[i] != first.sample_ids[i])
        throw Error("ensemble: sample ids diverge at '" + s.sample_ids[i] + "' (expected '" + first.sample_ids[i] + "')");
    }
  }
  if (sets.size() == 1) return first;
  PredictionSet out;
  out.model_id = "ensemble(";
  for (std::size_t k = 0; k < sets.size(); ++k) out.model_id += (k ? "," : "") + sets[k].model_id;
  out.model_id += ")";
  out.sample_ids = first.sample_ids;
  // Extended-precision sums so that averaging identical rows returns them bit for bit.
  const auto count = static_cast<long double>(sets.size());
  for (std::size_t i = 0; i < first.sample_ids.size(); ++i) {
    const std::size_t classes = first.probabilities[i].size();
    std::vector<long double> sum(classes, 0.0L);
    for (const auto& s : sets) {
      if (s.probabilities[i].size() != classes) throw Error("ensemble: class count mismatch");
      for (std::size_t c = 0; c < classes; ++c) sum[c] += s.probabilities[i][c];
    }
    std::vector<double> mean(classes);
    for (std::size_t c = 0; c < classes; ++c) mean[c] = static_cast<double>(sum[c] / count);
    out.probabilities.emplace_back(std::move(mean));
  }
  return out;
}

PredictionSet concatenate(std::span<const PredictionSet> sets) {
  PredictionSet out;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    out.model_id += (k ? "+" : "") + sets[k].model_id;
    out.sample_ids.insert(out.sample_ids.end(), sets[k].sample_ids.begin(), sets[k].sample_ids.end());
    out.probabilities.insert(out.probabilities.end(), sets[k].probabilities.begin(), sets[k].probabilities.end());
  }
  out.validate();
  return out;
}

void export_predictions(const PredictionSet& set, const fs::path& path) {
  set.validate();
  std::ofstream out(path);
  if (!out) throw DataError("export_predictions: cannot write " + path.string());
  for (std::size_t i = 0; i < set.size(); ++i) out << set.sample_ids[i] << ' ' << set.probabilities[i].argmax() << '\n';
  out.flush();
  if (!out) throw DataError("export_predictions: write failed for " + path.string());
}

std::vector<std::pair<std::string, int>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_predictions: cannot open " + path.string());
  std::vector<std::pair<std::string, int>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.rfind(' ');
    int label = -1;
    if (space == std::string::npos ||
        std::from_chars(line.data() + space + 1, line.data() + line.size(), label).ec != std::errc{})
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": malformed prediction");
    rows.emplace_back(line.substr(0, space), label);
  }
  return rows;
}

void export_probabilities(const PredictionSet& set, const fs::path& path) {
  set.validate();
  std::ofstream out(path);
  if (!out) throw DataError("export_probabilities: cannot write " + path.string());
  out << "#mmda-probs model=" << set.model_id << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.sample_ids[i];
    for (double p : set.probabilities[i].values()) out << '\t' << p;
    out << '\n';
  }
  out.flush();
  if (!out) throw DataError("export_probabilities: write failed for " + path.string());
}

PredictionSet read_probabilities(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_probabilities: cannot open " + path.string());
  PredictionSet set;
  set.model_id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("#mmda-probs", 0) == 0) {
      const auto pos = line.find("model=");
      if (pos != std::string::npos) set.model_id = line.substr(pos + 6);
      continue;
    }
    std::istringstream row(line);
    std::string id;
    std::getline(row, id, '\t');
    std::vector<double> p;
    std::string field;
    while (std::getline(row, field, '\t')) {
      try {
        p.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": line " + std::to_string(line_no) + ": malformed probability '" + field + "'");
      }
    }
    if (id.empty() || p.empty()) throw DataError(path.string() + ": line " + std::to_string(line_no) + ": malformed row");
    try {
      set.probabilities.emplace_back(std::move(p));
    } catch (const Error& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    set.sample_ids.push_back(std::move(id));
  }
  set.validate();
  return set;
}

namespace {

std::unordered_map<std::string, int> label_index(const DomainStore& store) {
  if (!store.labeled()) throw Error("score: store '" + store.domain_id() + "' has no labels");
  std::unordered_map<std::string, int> labels;
  for (const auto& s : store.samples()) labels.emplace(s->sample_id, *s->label);
  return labels;
}

}  // namespace

double score(const std::vector<std::pair<std::string, int>>& predictions, const DomainStore& store) {
  if (predictions.empty()) throw Error("score: no predictions");
  const auto labels = label_index(store);
  std::size_t correct = 0;
  for (const auto& [id, cls] : predictions) {
    auto it = labels.find(id);
    if (it == labels.end()) throw Error("score: sample id '" + id + "' not present in store '" + store.domain_id() + "'");
    if (it->second == cls) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double score(const PredictionSet& set, const DomainStore& store) {
  std::vector<std::pair<std::string, int>> rows;
  rows.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    rows.emplace_back(set.sample_ids[i], static_cast<int>(set.probabilities[i].argmax()));
  return score(rows, store);
}

}  // namespace mmda
