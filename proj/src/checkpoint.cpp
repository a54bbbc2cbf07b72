#include "cogenav/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "cogenav/errors.hpp"

namespace cogenav {

namespace {
constexpr char kMagic[8] = {'C', 'G', 'A', 'V', 'C', 'K', 'P', 'T'};
}

void Checkpoint::apply(ParamStore& store, std::string_view prefix) const {
  for (auto& p : store.all()) {
    if (!has_prefix(p.name, prefix)) continue;
    auto it = tensors.find(p.name);
    require(it != tensors.end(), ErrorCode::kFormat, "checkpoint is missing parameter " + p.name);
    require(it->second.first == p.shape, ErrorCode::kFormat,
            "checkpoint shape mismatch for " + p.name + ": " + shape_str(it->second.first) + " vs " + shape_str(p.shape));
    p.value = it->second.second;
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& config, const nlohmann::json& meta) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = config;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : store.all()) {
    header["tensors"].push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}});
    offset += p.value.size();
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::kIo, "cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : store.all())
      out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    require(out.good(), ErrorCode::kIo, "checkpoint write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kMissingArtifact, "checkpoint not found: " + path.string());
  char magic[8] = {};
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorCode::kFormat,
          "not a checkpoint file: " + path.string());
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorCode::kFormat, "truncated checkpoint header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(text);
  require(header.value("format_version", 0) == kCheckpointVersion, ErrorCode::kFormat, "checkpoint header version mismatch");

  Checkpoint ck;
  ck.config = header.value("config", nlohmann::json::object());
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    std::vector<double> values(numel(shape));
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    require(in.good(), ErrorCode::kFormat, "truncated checkpoint payload: " + path.string());
    ck.tensors.emplace(t.at("name").get<std::string>(), std::make_pair(std::move(shape), std::move(values)));
  }
  return ck;
}

}  // namespace cogenav
