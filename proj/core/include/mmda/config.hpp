#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmda/dataset.hpp"
#include "mmda/trainer.hpp"

namespace mmda {

/// Flat `section.key -> value` map. Ordered so echoes are stable.
using ConfigMap = std::map<std::string, std::string>;

/// Parses `key=value` entries: one or more whitespace-separated entries per
/// line, `#` starts a comment line. `origin` prefixes error messages.
ConfigMap parse_config_text(const std::string& text, const std::string& origin = "config");
ConfigMap read_config_file(const std::filesystem::path& path);

/// Later maps win.
ConfigMap merge(ConfigMap base, const ConfigMap& overrides);

/// One `key=value` per line, or a single space-separated line.
std::string format_config(const ConfigMap& map, bool one_line = false);

/// Every key accepted by training_config_from().
std::vector<std::string> training_config_keys();

/// Builds a validated TrainingConfig. Unknown keys and bad values are
/// collected and reported together in one ConfigError. When train.epochs is
/// absent it defaults to 100 for mixmatch and 10 for baseline runs.
TrainingConfig training_config_from(const ConfigMap& map);
ConfigMap to_config_map(const TrainingConfig& config);

/// Keys: toy.class_count, toy.samples_per_class, toy.image_side, toy.seed,
/// toy.domains (comma list; preset names pick a preset style) and
/// toy.domain.<name>.{background,foreground,noise,stroke,invert}.
ToySpec toy_spec_from(const ConfigMap& map);
ConfigMap to_config_map(const ToySpec& spec);

}  // namespace mmda
