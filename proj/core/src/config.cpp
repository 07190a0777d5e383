#include "mmda/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mmda/error.hpp"

namespace mmda {

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
  ConfigMap map;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream tokens(line);
    std::string token;
    while (tokens >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos || eq == 0) {
        problems.push_back(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + token + "'");
        continue;
      }
      map[token.substr(0, eq)] = token.substr(eq + 1);
    }
  }
  if (!problems.empty()) {
    std::string msg = "config parse errors:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return map;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string());
}

ConfigMap merge(ConfigMap base, const ConfigMap& overrides) {
  for (const auto& [k, v] : overrides) base[k] = v;
  return base;
}

std::string format_config(const ConfigMap& map, bool one_line) {
  std::string out;
  for (const auto& [k, v] : map) {
    if (one_line && !out.empty()) out += ' ';
    out += k + "=" + v;
    if (!one_line) out += '\n';
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ",") + i;
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(parse_int<int>(key, item));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of integers");
  return out;
}

std::string join_ints(const std::vector<int>& items) {
  std::string out;
  for (int i : items) out += (out.empty() ? "" : ",") + std::to_string(i);
  return out;
}

struct Field {
  std::string key;
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

const std::vector<Field>& training_fields() {
  using C = TrainingConfig;
  using S = std::string;
  static const std::vector<Field> fields = {
      {"plan.mode", [](C& c, const S& v) { c.track = composition_mode_from_string(v); },
       [](const C& c) { return S(to_string(c.track)); }},
      {"plan.n", [](C& c, const S& v) { c.batch_size = parse_int<int>("plan.n", v); },
       [](const C& c) { return std::to_string(c.batch_size); }},
      {"plan.sources", [](C& c, const S& v) { c.sources = split_list(v); },
       [](const C& c) { return join_list(c.sources); }},
      {"plan.target", [](C& c, const S& v) { c.target = v; }, [](const C& c) { return c.target; }},
      {"data.root", [](C& c, const S& v) { c.data_root = v; }, [](const C& c) { return c.data_root; }},
      {"mix.alpha", [](C& c, const S& v) { c.mix.alpha = parse_double("mix.alpha", v); },
       [](const C& c) { return format_double(c.mix.alpha); }},
      {"mix.T", [](C& c, const S& v) { c.mix.temperature = parse_double("mix.T", v); },
       [](const C& c) { return format_double(c.mix.temperature); }},
      {"mix.w", [](C& c, const S& v) { c.mix.weight = parse_double("mix.w", v); },
       [](const C& c) { return format_double(c.mix.weight); }},
      {"augment.resize_side", [](C& c, const S& v) { c.resize_side = parse_int<int>("augment.resize_side", v); },
       [](const C& c) { return std::to_string(c.resize_side); }},
      {"augment.crop_side", [](C& c, const S& v) { c.crop_side = parse_int<int>("augment.crop_side", v); },
       [](const C& c) { return std::to_string(c.crop_side); }},
      {"model.channels", [](C& c, const S& v) { c.channels = parse_int_list("model.channels", v); },
       [](const C& c) { return join_ints(c.channels); }},
      {"model.bn_momentum", [](C& c, const S& v) { c.bn_momentum = parse_double("model.bn_momentum", v); },
       [](const C& c) { return format_double(c.bn_momentum); }},
      {"model.guess_updates_bn",
       [](C& c, const S& v) { c.guess_updates_bn = parse_bool("model.guess_updates_bn", v); },
       [](const C& c) { return S(c.guess_updates_bn ? "true" : "false"); }},
      {"train.mode", [](C& c, const S& v) { c.mode = train_mode_from_string(v); },
       [](const C& c) { return S(to_string(c.mode)); }},
      {"train.learning_rate", [](C& c, const S& v) { c.learning_rate = parse_double("train.learning_rate", v); },
       [](const C& c) { return format_double(c.learning_rate); }},
      {"train.epochs", [](C& c, const S& v) { c.epochs = parse_int<int>("train.epochs", v); },
       [](const C& c) { return std::to_string(c.epochs); }},
      {"train.steps_per_epoch",
       [](C& c, const S& v) { c.steps_per_epoch = parse_int<int>("train.steps_per_epoch", v); },
       [](const C& c) { return std::to_string(c.steps_per_epoch); }},
      {"train.seed", [](C& c, const S& v) { c.seed = parse_int<std::uint64_t>("train.seed", v); },
       [](const C& c) { return std::to_string(c.seed); }},
      {"train.use_labeled_target",
       [](C& c, const S& v) { c.use_labeled_target = parse_bool("train.use_labeled_target", v); },
       [](const C& c) { return S(c.use_labeled_target ? "true" : "false"); }},
      {"train.recompose_bn", [](C& c, const S& v) { c.recompose_bn = parse_bool("train.recompose_bn", v); },
       [](const C& c) { return S(c.recompose_bn ? "true" : "false"); }},
      {"train.init", [](C& c, const S& v) { c.init_checkpoint = v; }, [](const C& c) { return c.init_checkpoint; }},
      {"train.out_dir", [](C& c, const S& v) { c.out_dir = v; }, [](const C& c) { return c.out_dir; }},
      {"split.per_class", [](C& c, const S& v) { c.labeled_per_class = parse_int<int>("split.per_class", v); },
       [](const C& c) { return std::to_string(c.labeled_per_class); }},
      {"split.seed", [](C& c, const S& v) { c.split_seed = parse_int<std::uint64_t>("split.seed", v); },
       [](const C& c) { return std::to_string(c.split_seed); }},
  };
  return fields;
}

[[noreturn]] void throw_problems(const std::string& what, const std::vector<std::string>& problems) {
  std::string msg = what;
  for (const auto& p : problems) msg += "\n  " + p;
  throw ConfigError(msg);
}

}  // namespace

std::vector<std::string> training_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : training_fields()) keys.push_back(f.key);
  return keys;
}

TrainingConfig training_config_from(const ConfigMap& map) {
  TrainingConfig config;
  std::vector<std::string> problems;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : training_fields()) by_key[f.key] = &f;
  for (const auto& [key, value] : map) {
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second->set(config, value);
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  }
  if (!map.contains("train.epochs")) {
    config.epochs =
        config.mode == TrainMode::baseline ? TrainingConfig::kDefaultBaselineEpochs : TrainingConfig::kDefaultMixMatchEpochs;
  }
  if (problems.empty()) {
    try {
      config.validate();
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  }
  if (!problems.empty()) throw_problems("invalid configuration:", problems);
  return config;
}

ConfigMap to_config_map(const TrainingConfig& config) {
  ConfigMap map;
  for (const auto& f : training_fields()) map[f.key] = f.get(config);
  return map;
}

std::string config_text(const TrainingConfig& config) { return format_config(to_config_map(config)); }

// ---------------------------------------------------------------------------
// ToySpec

namespace {

Rgb parse_rgb(const std::string& key, const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ConfigError(key + ": expected r,g,b");
  Rgb rgb{};
  for (std::size_t i = 0; i < 3; ++i) rgb[i] = static_cast<float>(parse_double(key, parts[i]));
  return rgb;
}

std::string format_float(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_rgb(const Rgb& rgb) {
  return format_float(rgb[0]) + "," + format_float(rgb[1]) + "," + format_float(rgb[2]);
}

}  // namespace

ToySpec toy_spec_from(const ConfigMap& map) {
  ToySpec spec;
  std::vector<std::string> problems;
  auto guard = [&problems](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  };

  std::vector<std::string> names{"clean", "inverted_noise"};
  if (auto it = map.find("toy.domains"); it != map.end()) names = split_list(it->second);
  std::map<std::string, DomainStyle> styles;
  for (const auto& name : names) {
    guard([&] {
      DomainStyle style;
      try {
        style = domain_style_preset(name);
      } catch (const ConfigError&) {
        style.name = name;
      }
      styles[name] = style;
    });
  }

  for (const auto& [key, value] : map) {
    if (key == "toy.domains") continue;
    if (key == "toy.class_count") {
      guard([&] { spec.class_count = parse_int<int>(key, value); });
    } else if (key == "toy.samples_per_class") {
      guard([&] { spec.samples_per_class_per_domain = parse_int<int>(key, value); });
    } else if (key == "toy.image_side") {
      guard([&] { spec.image_side = parse_int<int>(key, value); });
    } else if (key == "toy.seed") {
      guard([&] { spec.seed = parse_int<std::uint64_t>(key, value); });
    } else if (key.rfind("toy.domain.", 0) == 0) {
      const std::string rest = key.substr(std::string("toy.domain.").size());
      const auto dot = rest.rfind('.');
      const std::string name = dot == std::string::npos ? "" : rest.substr(0, dot);
      const std::string field = dot == std::string::npos ? rest : rest.substr(dot + 1);
      auto it = styles.find(name);
      if (it == styles.end()) {
        problems.push_back("unknown key '" + key + "' (domain '" + name + "' is not listed in toy.domains)");
        continue;
      }
      DomainStyle& s = it->second;
      guard([&] {
        if (field == "background") s.background = parse_rgb(key, value);
        else if (field == "foreground") s.foreground = parse_rgb(key, value);
        else if (field == "noise") s.noise_sigma = parse_double(key, value);
        else if (field == "stroke") s.stroke = parse_double(key, value);
        else if (field == "invert") s.invert = parse_bool(key, value);
        else throw ConfigError("unknown key '" + key + "'");
      });
    } else {
      problems.push_back("unknown key '" + key + "'");
    }
  }
  for (const auto& name : names) {
    if (styles.contains(name)) spec.domains.push_back(styles[name]);
  }
  if (problems.empty()) guard([&] { spec.validate(); });
  if (!problems.empty()) throw_problems("invalid dataset configuration:", problems);
  return spec;
}

ConfigMap to_config_map(const ToySpec& spec) {
  ConfigMap map;
  map["toy.class_count"] = std::to_string(spec.class_count);
  map["toy.samples_per_class"] = std::to_string(spec.samples_per_class_per_domain);
  map["toy.image_side"] = std::to_string(spec.image_side);
  map["toy.seed"] = std::to_string(spec.seed);
  std::vector<std::string> names;
  for (const auto& d : spec.domains) {
    names.push_back(d.name);
    const std::string p = "toy.domain." + d.name + ".";
    map[p + "background"] = format_rgb(d.background);
    map[p + "foreground"] = format_rgb(d.foreground);
    map[p + "noise"] = format_double(d.noise_sigma);
    map[p + "stroke"] = format_double(d.stroke);
    map[p + "invert"] = d.invert ? "true" : "false";
  }
  map["toy.domains"] = join_list(names);
  return map;
}

}  // namespace mmda
