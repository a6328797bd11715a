#include "msw/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "msw/errors.hpp"

namespace msw {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void write_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
}

std::string file_name(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

}  // namespace

std::string manifest_path(const std::string& base) { return base + ".json"; }
std::string blob_path(const std::string& base) { return base + ".bin"; }

void save_checkpoint(const std::string& base, const ParamStore& params, const CheckpointMeta& meta) {
  json manifest;
  manifest["format"] = "msw-checkpoint";
  manifest["version"] = 1;
  manifest["byte_order"] = "little";
  manifest["blob"] = file_name(blob_path(base));
  manifest["config"] = meta.config;
  manifest["class_names"] = meta.class_names;
  if (meta.standardization) {
    manifest["standardization"] = {{"mean", meta.standardization->mean},
                                   {"std", meta.standardization->stddev}};
  }
  json tensors = json::array();
  std::ofstream blob(blob_path(base), std::ios::binary);
  if (!blob) throw DataError("cannot write " + blob_path(base));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float64"}, {"offset", offset}});
    write_le(blob, t.data());
    offset += t.numel() * sizeof(double);
  }
  manifest["tensors"] = std::move(tensors);
  manifest["blob_bytes"] = offset;
  if (!blob) throw DataError("write failed for " + blob_path(base));

  std::ofstream out(manifest_path(base));
  if (!out) throw DataError("cannot write " + manifest_path(base));
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& base) {
  std::ifstream in(manifest_path(base));
  if (!in) throw DataError("cannot open checkpoint manifest " + manifest_path(base));
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest " + manifest_path(base) + ": " + e.what());
  }
  if (manifest.value("format", "") != "msw-checkpoint") {
    throw DataError(manifest_path(base) + " is not an msw checkpoint manifest");
  }
  std::ifstream blob(blob_path(base), std::ios::binary);
  if (!blob) throw DataError("cannot open checkpoint blob " + blob_path(base));
  std::stringstream buffer;
  buffer << blob.rdbuf();
  const std::string bytes = buffer.str();

  Checkpoint ck;
  try {
    ck.meta.config = manifest.at("config").get<ConfigMap>();
    ck.meta.class_names = manifest.value("class_names", std::vector<std::string>{});
    if (manifest.contains("standardization")) {
      LeadStats stats;
      stats.mean = manifest["standardization"].at("mean").get<std::vector<double>>();
      stats.stddev = manifest["standardization"].at("std").get<std::vector<double>>();
      ck.meta.standardization = std::move(stats);
    }
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (entry.at("dtype").get<std::string>() != "float64") {
        throw DataError("tensor " + name + " has unsupported dtype");
      }
      const auto count = shape_numel(shape);
      if (offset + count * 8 > bytes.size()) {
        throw DataError("tensor " + name + " extends past the end of " + blob_path(base));
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + offset + i * 8, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        values[i] = std::bit_cast<double>(bits);
      }
      ck.params.add(name, Tensor::from_data(shape, std::move(values), true));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest " + manifest_path(base) + ": " + e.what());
  }
  return ck;
}

}  // namespace msw
