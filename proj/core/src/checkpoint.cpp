#include "mmda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mmda/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmda {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

struct ArrayEntry {
  std::string name;
  std::string dtype;
  std::size_t count = 0;
  std::size_t offset = 0;
};

json spec_to_json(const BackboneSpec& spec) {
  return json{{"input_side", spec.input_side},
              {"channels", spec.channels},
              {"class_count", spec.class_count},
              {"bn_momentum", spec.bn_momentum},
              {"bn_epsilon", spec.bn_epsilon}};
}

BackboneSpec spec_from_json(const json& j) {
  BackboneSpec spec;
  spec.input_side = j.at("input_side").get<int>();
  spec.channels = j.at("channels").get<std::vector<int>>();
  spec.class_count = j.at("class_count").get<int>();
  spec.bn_momentum = j.at("bn_momentum").get<double>();
  spec.bn_epsilon = j.at("bn_epsilon").get<double>();
  spec.validate();
  return spec;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  std::vector<ArrayEntry> entries;
  std::string payload;
  auto add = [&](const std::string& name, const std::string& dtype, const void* data, std::size_t count,
                 std::size_t elem) {
    entries.push_back({name, dtype, count, payload.size()});
    payload.append(static_cast<const char*>(data), count * elem);
  };
  const auto& m = checkpoint.model;
  add("params", "f32", m.params.data(), static_cast<std::size_t>(m.params.size()), sizeof(float));
  for (std::size_t i = 0; i < m.running_mean.size(); ++i) {
    add("bn." + std::to_string(i) + ".mean", "f32", m.running_mean[i].data(),
        static_cast<std::size_t>(m.running_mean[i].size()), sizeof(float));
    add("bn." + std::to_string(i) + ".var", "f32", m.running_var[i].data(),
        static_cast<std::size_t>(m.running_var[i].size()), sizeof(float));
  }
  for (const auto& [name, values] : checkpoint.float_arrays)
    add("extra." + name, "f32", values.data(), values.size(), sizeof(float));
  for (const auto& [name, values] : checkpoint.index_arrays)
    add("index." + name, "u64", values.data(), values.size(), sizeof(std::uint64_t));

  json header;
  header["format"] = kCheckpointMagic;
  header["spec"] = spec_to_json(m.spec);
  header["step"] = m.step;
  header["config"] = checkpoint.config;
  header["metadata"] = checkpoint.metadata;
  header["arrays"] = json::array();
  for (const auto& e : entries)
    header["arrays"].push_back({{"name", e.name}, {"dtype", e.dtype}, {"count", e.count}, {"offset", e.offset}});
  const std::string header_text = header.dump();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("save_checkpoint: cannot write " + tmp.string());
    out << kCheckpointMagic << '\n' << header_text.size() << '\n' << header_text << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) throw DataError("save_checkpoint: write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("save_checkpoint: cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw DataError("load_checkpoint: " + path.string() + " is not an MMDA1 checkpoint");
  std::string length_line;
  std::getline(in, length_line);
  std::size_t header_size = 0;
  try {
    header_size = std::stoull(length_line);
  } catch (const std::exception&) {
    throw DataError("load_checkpoint: malformed header length in " + path.string());
  }
  std::string header_text(header_size, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_size));
  if (!in || in.get() != '\n') throw DataError("load_checkpoint: truncated header in " + path.string());
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    const json header = json::parse(header_text);
    if (header.at("format").get<std::string>() != kCheckpointMagic)
      throw DataError("load_checkpoint: format tag mismatch");
    ck.model.spec = spec_from_json(header.at("spec"));
    ck.model.step = header.at("step").get<std::int64_t>();
    ck.config = header.at("config").get<std::string>();
    ck.metadata = header.at("metadata").get<std::map<std::string, std::string>>();

    std::map<std::string, std::vector<float>> floats;
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto dtype = a.at("dtype").get<std::string>();
      const auto count = a.at("count").get<std::size_t>();
      const auto offset = a.at("offset").get<std::size_t>();
      const std::size_t elem = dtype == "f32" ? sizeof(float) : dtype == "u64" ? sizeof(std::uint64_t) : 0;
      if (elem == 0) throw DataError("load_checkpoint: unknown dtype " + dtype);
      if (offset + count * elem > payload.size()) throw DataError("load_checkpoint: array " + name + " out of bounds");
      if (dtype == "f32") {
        std::vector<float> v(count);
        if (count > 0) std::memcpy(v.data(), payload.data() + offset, count * elem);
        floats[name] = std::move(v);
      } else {
        std::vector<std::uint64_t> v(count);
        if (count > 0) std::memcpy(v.data(), payload.data() + offset, count * elem);
        if (name.rfind("index.", 0) == 0) ck.index_arrays[name.substr(6)] = std::move(v);
      }
    }
    auto take = [&](const std::string& name) {
      auto it = floats.find(name);
      if (it == floats.end()) throw DataError("load_checkpoint: missing array " + name);
      return Eigen::Map<const Vector<float>>(it->second.data(), static_cast<Eigen::Index>(it->second.size())).eval();
    };
    ck.model.params = take("params");
    const ParamLayout layout = ParamLayout::build(ck.model.spec);
    if (static_cast<std::size_t>(ck.model.params.size()) != layout.total)
      throw DataError("load_checkpoint: parameter count does not match spec");
    for (std::size_t i = 0; i < layout.stages.size(); ++i) {
      ck.model.running_mean.push_back(take("bn." + std::to_string(i) + ".mean"));
      ck.model.running_var.push_back(take("bn." + std::to_string(i) + ".var"));
    }
    for (auto& [name, values] : floats)
      if (name.rfind("extra.", 0) == 0) ck.float_arrays[name.substr(6)] = std::move(values);
  } catch (const json::exception& e) {
    throw DataError("load_checkpoint: malformed header in " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("load_checkpoint: invalid spec in " + path.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace mmda
