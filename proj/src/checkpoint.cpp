#include "navil/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace navil {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: short write to " + p.string());
}

}  // namespace

void save_checkpoint(const std::string& dir, const ParameterStore& store) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "navil-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "f32";
  manifest["byte_order"] = "little";
  std::string payload;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& e : store.entries()) {
    const std::size_t offset = payload.size();
    for (double v : e.value.data()) {
      const auto f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      payload.append(b, 4);
    }
    tensors.push_back({{"name", e.name},
                       {"group", group_name(e.group)},
                       {"shape", e.value.shape()},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  }
  manifest["payload_bytes"] = payload.size();
  manifest["tensors"] = tensors;
  write_file(fs::path(dir) / kPayloadFile, payload);
  write_file(fs::path(dir) / kManifestFile, manifest.dump(2) + "\n");
}

void load_checkpoint(const std::string& dir, ParameterStore& store) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(fs::path(dir) / kManifestFile));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  const std::string payload = read_file(fs::path(dir) / kPayloadFile);
  try {
    if (manifest.at("dtype") != "f32") throw std::runtime_error("checkpoint: unsupported dtype");
    if (manifest.at("payload_bytes").get<std::size_t>() != payload.size()) {
      throw std::runtime_error("checkpoint: payload size does not match manifest");
    }
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != store.size()) {
      throw ShapeError("checkpoint: " + std::to_string(tensors.size()) + " tensors but config expects " +
                       std::to_string(store.size()));
    }
    std::size_t cursor = 0;
    for (const auto& t : tensors) {
      const auto name = t.at("name").get<std::string>();
      if (!store.contains(name)) throw ShapeError("checkpoint: tensor " + name + " is not part of the config");
      auto& e = store.get(name);
      const auto shape = t.at("shape").get<Shape>();
      if (shape != e.value.shape()) {
        throw ShapeError("checkpoint: tensor " + name + " has shape " + shape_str(shape) + ", config expects " +
                         shape_str(e.value.shape()));
      }
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("nbytes").get<std::size_t>();
      if (offset != cursor || nbytes != 4 * shape_numel(shape)) {
        throw std::runtime_error("checkpoint: byte range of " + name + " does not tile the payload");
      }
      for (std::size_t i = 0; i < e.value.numel(); ++i) {
        float f;
        std::memcpy(&f, payload.data() + offset + 4 * i, 4);
        e.value[i] = static_cast<double>(f);
      }
      cursor += nbytes;
    }
    if (cursor != payload.size()) throw std::runtime_error("checkpoint: payload has trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed manifest: ") + e.what());
  }
}

}  // namespace navil
