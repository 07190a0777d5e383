#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmda/model.hpp"

namespace mmda {

inline constexpr const char* kCheckpointMagic = "MMDA1";

/// Everything needed to evaluate or resume a run.
struct Checkpoint {
  ModelState<float> model;
  std::string config;                                              // resolved key=value text
  std::map<std::string, std::string> metadata;                     // e.g. generator states
  std::map<std::string, std::vector<float>> float_arrays;          // e.g. optimizer moments
  std::map<std::string, std::vector<std::uint64_t>> index_arrays;  // e.g. sampler cursors
};

/// Layout: the line "MMDA1", a decimal byte count, a JSON header of that many
/// bytes describing the spec and every array, then the little-endian payload.
/// Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmda
