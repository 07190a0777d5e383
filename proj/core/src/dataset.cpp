#include "mmda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mmda/error.hpp"
#include "mmda/rng.hpp"

namespace fs = std::filesystem;

namespace mmda {

// ---------------------------------------------------------------------------
// DomainStore

DomainStore::DomainStore(std::string domain_id, int class_count, std::vector<SamplePtr> samples, bool labeled)
    : domain_id_(std::move(domain_id)), class_count_(class_count), samples_(std::move(samples)), labeled_(labeled) {
  if (labeled_ && class_count_ < 1) throw DataError("DomainStore '" + domain_id_ + "': labeled store needs class_count >= 1");
  std::unordered_set<std::string> ids;
  ids.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!s) throw DataError("DomainStore '" + domain_id_ + "': null sample at index " + std::to_string(i));
    if (s->domain_id != domain_id_)
      throw DataError("DomainStore '" + domain_id_ + "': sample " + s->sample_id + " belongs to domain '" +
                      s->domain_id + "'");
    if (!ids.insert(s->sample_id).second)
      throw DataError("DomainStore '" + domain_id_ + "': duplicate sample id " + s->sample_id);
    if (labeled_) {
      if (!s->label || *s->label < 0 || *s->label >= class_count_)
        throw DataError("DomainStore '" + domain_id_ + "': sample " + s->sample_id + " lacks a label in [0, " +
                        std::to_string(class_count_) + ")");
    } else if (s->label) {
      throw DataError("DomainStore '" + domain_id_ + "': unlabeled store holds labeled sample " + s->sample_id);
    }
  }
}

DomainStore DomainStore::without_labels() const {
  std::vector<SamplePtr> stripped;
  stripped.reserve(samples_.size());
  for (const auto& s : samples_) {
    auto copy = std::make_shared<DomainSample>(*s);
    copy->label.reset();
    stripped.push_back(std::move(copy));
  }
  return DomainStore(domain_id_, class_count_, std::move(stripped), false);
}

// ---------------------------------------------------------------------------
// Synthetic domains

DomainStyle domain_style_preset(const std::string& name) {
  DomainStyle s;
  s.name = name;
  if (name == "clean") return s;
  if (name == "inverted_noise") {
    s.invert = true;
    s.noise_sigma = 0.2;
    return s;
  }
  if (name == "outline") {
    s.stroke = 2.0;
    return s;
  }
  if (name == "color") {
    s.background = {0.85f, 0.75f, 0.30f};
    s.foreground = {0.15f, 0.20f, 0.65f};
    return s;
  }
  if (name == "noisy") {
    s.noise_sigma = 0.15;
    return s;
  }
  throw ConfigError("unknown domain style preset '" + name + "'");
}

void ToySpec::validate() const {
  if (class_count < 2) throw ConfigError("toy.class_count must be >= 2 (got " + std::to_string(class_count) + ")");
  if (class_count > kMaxToyClasses)
    throw ConfigError("toy.class_count must be <= " + std::to_string(kMaxToyClasses) + " (got " +
                      std::to_string(class_count) + ")");
  if (samples_per_class_per_domain < 1)
    throw ConfigError("toy.samples_per_class must be >= 1 (got " + std::to_string(samples_per_class_per_domain) + ")");
  if (image_side < 8) throw ConfigError("toy.image_side must be >= 8 (got " + std::to_string(image_side) + ")");
  if (domains.empty()) throw ConfigError("toy.domains must name at least one domain");
  std::set<std::string> names;
  for (const auto& d : domains) {
    if (d.name.empty() || d.name.find_first_of("/\\\t ") != std::string::npos)
      throw ConfigError("toy.domains: invalid domain name '" + d.name + "'");
    if (!names.insert(d.name).second) throw ConfigError("toy.domains: duplicate domain '" + d.name + "'");
    if (!(d.noise_sigma >= 0.0)) throw ConfigError("toy.domain." + d.name + ".noise must be >= 0");
    if (!(d.stroke >= 0.0)) throw ConfigError("toy.domain." + d.name + ".stroke must be >= 0");
    for (float v : d.background)
      if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("toy.domain." + d.name + ".background must lie in [0,1]");
    for (float v : d.foreground)
      if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("toy.domain." + d.name + ".foreground must lie in [0,1]");
  }
}

namespace {

double box_distance(double u, double v, double half_u, double half_v) {
  return std::max(std::abs(u) - half_u, std::abs(v) - half_v);
}

// Signed distance (negative inside) in shape-local units where the shape spans ~[-1, 1].
double shape_distance(int class_index, double u, double v) {
  switch (class_index) {
    case 0:  // disk
      return std::hypot(u, v) - 1.0;
    case 1:  // square
      return box_distance(u, v, 0.8, 0.8);
    case 2: {  // triangle, apex up
      const double up = -v;
      return std::max(std::abs(u) * std::numbers::sqrt3 / 2.0 + up / 2.0, -up) - 0.5;
    }
    case 3:  // plus
      return std::min(box_distance(u, v, 1.0, 0.3), box_distance(u, v, 0.3, 1.0));
    case 4:  // diamond
      return (std::abs(u) + std::abs(v) - 1.0) / std::numbers::sqrt2;
    case 5:  // ring
      return std::abs(std::hypot(u, v) - 0.7) - 0.25;
    case 6:  // horizontal bar
      return box_distance(u, v, 1.0, 0.3);
    case 7: {  // x-shaped cross
      const double a = (u + v) / std::numbers::sqrt2;
      const double b = (u - v) / std::numbers::sqrt2;
      return std::min(box_distance(a, b, 1.0, 0.25), box_distance(a, b, 0.25, 1.0));
    }
    default:
      throw Error("shape_distance: unsupported class " + std::to_string(class_index));
  }
}

float quantize_unit(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

}  // namespace

Image render_toy_image(int class_index, const DomainStyle& style, int side, std::uint64_t seed) {
  if (class_index < 0 || class_index >= kMaxToyClasses) throw Error("render_toy_image: class out of range");
  Rng rng(seed);
  const double s = static_cast<double>(side);
  const double cx = s / 2.0 + (rng.uniform01() - 0.5) * 0.25 * s;
  const double cy = s / 2.0 + (rng.uniform01() - 0.5) * 0.25 * s;
  const double radius = (0.26 + 0.10 * rng.uniform01()) * s;
  const double angle = (rng.uniform01() - 0.5) * (std::numbers::pi / 6.0);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  constexpr int kSuper = 3;
  Image img(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      int inside = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper - cx;
          const double py = y + (sy + 0.5) / kSuper - cy;
          const double u = (ca * px + sa * py) / radius;
          const double v = (-sa * px + ca * py) / radius;
          const double d = shape_distance(class_index, u, v);
          const bool hit = style.stroke > 0.0 ? std::abs(d) * radius <= style.stroke / 2.0 : d <= 0.0;
          inside += hit ? 1 : 0;
        }
      }
      const double coverage = static_cast<double>(inside) / (kSuper * kSuper);
      for (int c = 0; c < Image::kChannels; ++c) {
        double value = style.background[c] * (1.0 - coverage) + style.foreground[c] * coverage;
        if (style.invert) value = 1.0 - value;
        img.at(c, y, x) = static_cast<float>(value);
      }
    }
  }
  if (style.noise_sigma > 0.0) {
    for (float& p : img.pixels) p = static_cast<float>(p + rng.normal(0.0, style.noise_sigma));
  }
  for (float& p : img.pixels) p = quantize_unit(p);
  return img;
}

std::size_t ManifestSummary::total() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.count;
  return n;
}

namespace {

std::string sample_file_name(int index) {
  std::ostringstream name;
  name << std::setw(6) << std::setfill('0') << index << ".png";
  return name.str();
}

std::uint64_t image_seed(std::uint64_t base, std::size_t domain, int cls, int index) {
  const std::uint64_t tag = (static_cast<std::uint64_t>(domain) << 40) ^ (static_cast<std::uint64_t>(cls) << 24) ^
                            static_cast<std::uint64_t>(index);
  return splitmix64(base) ^ splitmix64(tag + 0x51ed270b27aULL);
}

void write_manifest_header(std::ostream& out, const std::string& domain, int class_count, const std::string& root) {
  out << "#mmda-manifest domain=" << domain << " class_count=" << class_count;
  if (!root.empty()) out << " root=" << root;
  out << '\n';
}

}  // namespace

ManifestSummary generate_toy_dataset(const ToySpec& spec, const fs::path& out_root) {
  spec.validate();
  ManifestSummary summary;
  try {
    fs::create_directories(out_root);
  } catch (const fs::filesystem_error& e) {
    throw DataError("generate_toy_dataset: cannot create " + out_root.string() + ": " + e.what());
  }
  for (std::size_t d = 0; d < spec.domains.size(); ++d) {
    const DomainStyle& style = spec.domains[d];
    const fs::path manifest = out_root / (style.name + ".tsv");
    std::ofstream out(manifest);
    if (!out) throw DataError("generate_toy_dataset: cannot write " + manifest.string());
    write_manifest_header(out, style.name, spec.class_count, "");
    std::size_t count = 0;
    for (int cls = 0; cls < spec.class_count; ++cls) {
      const fs::path class_dir = out_root / style.name / std::to_string(cls);
      try {
        fs::create_directories(class_dir);
      } catch (const fs::filesystem_error& e) {
        throw DataError("generate_toy_dataset: cannot create " + class_dir.string() + ": " + e.what());
      }
      for (int i = 0; i < spec.samples_per_class_per_domain; ++i) {
        const std::string rel = style.name + "/" + std::to_string(cls) + "/" + sample_file_name(i);
        write_png(render_toy_image(cls, style, spec.image_side, image_seed(spec.seed, d, cls, i)), out_root / rel);
        out << rel << '\t' << cls << '\n';
        ++count;
      }
    }
    out.flush();
    if (!out) throw DataError("generate_toy_dataset: write failed for " + manifest.string());
    summary.domains.push_back({style.name, count, manifest});
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

std::map<std::string, std::string> parse_header(const std::string& line, const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(line.substr(std::string("#mmda-manifest").size()));
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": line 1: malformed header token '" + token + "'");
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return kv;
}

}  // namespace

DomainStore load_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("load_manifest: cannot open " + manifest_path.string());

  std::string domain = manifest_path.stem().string();
  std::optional<int> class_count;
  fs::path root = manifest_path.parent_path();

  struct Row {
    std::size_t line;
    std::string rel;
    std::optional<int> label;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#mmda-manifest", 0) == 0 && line_no == 1) {
      auto kv = parse_header(line, manifest_path);
      if (auto it = kv.find("domain"); it != kv.end()) domain = it->second;
      if (auto it = kv.find("root"); it != kv.end()) root = root / it->second;
      if (auto it = kv.find("class_count"); it != kv.end()) {
        try {
          class_count = std::stoi(it->second);
        } catch (const std::exception&) {
          throw DataError(manifest_path.string() + ": line 1: malformed class_count");
        }
      }
      continue;
    }
    if (line[0] == '#') continue;
    const auto tab = line.find('\t');
    Row row{line_no, line.substr(0, tab), std::nullopt};
    if (row.rel.empty()) throw DataError(manifest_path.string() + ": row " + std::to_string(line_no) + ": empty path");
    if (tab != std::string::npos) {
      const std::string label_text = line.substr(tab + 1);
      std::size_t used = 0;
      int label = 0;
      try {
        label = std::stoi(label_text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != label_text.size())
        throw DataError(manifest_path.string() + ": row " + std::to_string(line_no) + ": malformed label '" +
                        label_text + "'");
      row.label = label;
    }
    rows.push_back(std::move(row));
  }

  const bool labeled = !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.label; });
  if (!labeled) {
    for (const auto& r : rows)
      if (r.label)
        throw DataError(manifest_path.string() + ": row " + std::to_string(r.line) +
                        ": label present in a manifest whose other rows are unlabeled");
  }
  int classes = class_count.value_or(0);
  if (!class_count && labeled) {
    for (const auto& r : rows) classes = std::max(classes, *r.label + 1);
  }

  std::vector<SamplePtr> samples;
  samples.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.label && (*r.label < 0 || *r.label >= classes))
      throw DataError(manifest_path.string() + ": row " + std::to_string(r.line) + ": label " +
                      std::to_string(*r.label) + " outside [0, " + std::to_string(classes) + ")");
    const fs::path file = root / r.rel;
    if (!fs::exists(file))
      throw DataError(manifest_path.string() + ": row " + std::to_string(r.line) + ": missing image " + file.string());
    auto sample = std::make_shared<DomainSample>();
    try {
      sample->image = read_png(file);
    } catch (const DataError& e) {
      throw DataError(manifest_path.string() + ": row " + std::to_string(r.line) + ": " + e.what());
    }
    if (!sample->image.valid())
      throw DataError(manifest_path.string() + ": row " + std::to_string(r.line) + ": invalid image");
    sample->label = r.label;
    sample->domain_id = domain;
    sample->sample_id = r.rel;
    samples.push_back(std::move(sample));
  }
  try {
    return DomainStore(domain, classes, std::move(samples), labeled);
  } catch (const DataError& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
}

void write_manifest(const DomainStore& store, const fs::path& manifest_path, const fs::path& image_root,
                    bool hide_labels) {
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(manifest_path);
  if (!out) throw DataError("write_manifest: cannot write " + manifest_path.string());
  const fs::path rel_root = fs::relative(fs::absolute(image_root), fs::absolute(dir), ec);
  const std::string root = (ec || rel_root.empty()) ? fs::absolute(image_root).string() : rel_root.string();
  write_manifest_header(out, store.domain_id(), store.class_count(), root == "." ? "" : root);
  for (const auto& s : store.samples()) {
    out << s->sample_id;
    if (store.labeled() && !hide_labels) out << '\t' << *s->label;
    out << '\n';
  }
  out.flush();
  if (!out) throw DataError("write_manifest: write failed for " + manifest_path.string());
}

// ---------------------------------------------------------------------------
// Semi-supervised split

SemiSupervisedSplit split_semi_supervised(const DomainStore& store, int per_class, std::uint64_t seed) {
  if (!store.labeled()) throw DataError("split_semi_supervised: store '" + store.domain_id() + "' is unlabeled");
  if (per_class < 0) throw ConfigError("split_semi_supervised: per_class must be >= 0");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(store.class_count()));
  for (std::size_t i = 0; i < store.size(); ++i) by_class[static_cast<std::size_t>(*store[i].label)].push_back(i);

  Rng rng(seed);
  std::vector<bool> chosen(store.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < static_cast<std::size_t>(per_class))
      throw DataError("split_semi_supervised: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " samples, need " + std::to_string(per_class));
    rng.shuffle(members.begin(), members.end());
    for (int k = 0; k < per_class; ++k) chosen[members[static_cast<std::size_t>(k)]] = true;
  }

  std::vector<SamplePtr> labeled, unlabeled, evaluation;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (chosen[i]) {
      labeled.push_back(store.sample_ptr(i));
    } else {
      evaluation.push_back(store.sample_ptr(i));
      auto hidden = std::make_shared<DomainSample>(store[i]);
      hidden->label.reset();
      unlabeled.push_back(std::move(hidden));
    }
  }
  return SemiSupervisedSplit{
      DomainStore(store.domain_id(), store.class_count(), std::move(labeled), true),
      DomainStore(store.domain_id(), store.class_count(), std::move(unlabeled), false),
      DomainStore(store.domain_id(), store.class_count(), std::move(evaluation), true),
  };
}

}  // namespace mmda
