#include "sfnet/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace sfnet::model {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "sfnet-checkpoint";
constexpr int kVersion = 1;

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

std::size_t dtype_size(const std::string& d) {
  if (d == "f32") return 4;
  if (d == "f64") return 8;
  throw CheckpointError("unsupported dtype '" + d + "'");
}

template <typename T>
void write_le(std::ofstream& out, const Tensor<T>& t) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      unsigned char b[sizeof(T)];
      std::memcpy(b, &t[i], sizeof(T));
      for (std::size_t k = sizeof(T); k-- > 0;) out.put(static_cast<char>(b[k]));
    }
  }
}

template <typename T>
void read_le(const std::vector<char>& blob, std::uint64_t offset, Tensor<T>& t) {
  const char* src = blob.data() + offset;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, src + i * sizeof(T), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(b[k], b[sizeof(T) - 1 - k]);
    }
    std::memcpy(&t[i], b, sizeof(T));
  }
}

}  // namespace

template <typename T>
void save_checkpoint(SFNet<T>& model, const fs::path& dir, const nlohmann::json& meta) {
  fs::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::ofstream bin(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw CheckpointError("cannot write " + (dir / "weights.bin").string());
  std::uint64_t offset = 0;
  model.visit([&](Parameter<T>& p) {
    tensors.push_back({{"name", p.name},
                       {"shape", p.value.shape()},
                       {"dtype", dtype_name<T>()},
                       {"offset", offset},
                       {"numel", p.value.numel()},
                       {"trainable", p.trainable}});
    write_le(bin, p.value);
    offset += p.value.numel() * sizeof(T);
  });
  bin.close();
  if (!bin) throw CheckpointError("failed writing " + (dir / "weights.bin").string());
  nlohmann::json manifest{{"format", kFormat},      {"version", kVersion},
                          {"dtype", dtype_name<T>()}, {"config", to_json(model.config())},
                          {"meta", meta},           {"tensors", tensors}};
  std::ofstream js(dir / "manifest.json", std::ios::trunc);
  if (!js) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
  js << manifest.dump(2) << '\n';
}

CheckpointManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointError("no manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("manifest in " + dir.string() + " is not valid JSON: " + e.what());
  }
  CheckpointManifest m;
  try {
    if (j.at("format") != kFormat) throw CheckpointError("not an sfnet checkpoint: " + dir.string());
    if (j.at("version").get<int>() != kVersion)
      throw CheckpointError("unsupported checkpoint version in " + dir.string());
    m.dtype = j.at("dtype").get<std::string>();
    m.config = config_from_json(j.at("config"));
    m.meta = j.value("meta", nlohmann::json::object());
    for (const auto& t : j.at("tensors")) {
      ManifestEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.dtype = t.at("dtype").get<std::string>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.numel = t.at("numel").get<std::uint64_t>();
      e.trainable = t.at("trainable").get<bool>();
      if (shape_numel(e.shape) != e.numel)
        throw CheckpointError("tensor " + e.name + ": numel does not match shape");
      m.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  return m;
}

template <typename T>
void load_into(SFNet<T>& model, const fs::path& dir) {
  const CheckpointManifest m = read_manifest(dir);
  std::ifstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw CheckpointError("no weights.bin in " + dir.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  std::map<std::string, const ManifestEntry*> by_name;
  for (const auto& e : m.tensors) by_name[e.name] = &e;
  std::size_t seen = 0;
  model.visit([&](Parameter<T>& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor " + p.name);
    const ManifestEntry& e = *it->second;
    if (e.shape != p.value.shape()) {
      throw CheckpointError("tensor " + p.name + ": checkpoint shape " + shape_str(e.shape) +
                            " vs model shape " + shape_str(p.value.shape()));
    }
    if (e.dtype != dtype_name<T>()) {
      throw CheckpointError("tensor " + p.name + " stored as " + e.dtype + ", model uses " +
                            dtype_name<T>());
    }
    if (e.offset + e.numel * dtype_size(e.dtype) > blob.size())
      throw CheckpointError("weights.bin is truncated at tensor " + p.name);
    read_le(blob, e.offset, p.value);
    ++seen;
  });
  if (seen != m.tensors.size())
    throw CheckpointError("checkpoint has tensors the model does not know");
}

template <typename T>
std::unique_ptr<SFNet<T>> load_checkpoint(const fs::path& dir) {
  const CheckpointManifest m = read_manifest(dir);
  auto model = std::make_unique<SFNet<T>>(m.config, 0);
  load_into(*model, dir);
  return model;
}

std::uint64_t manifest_trainable_count(const CheckpointManifest& manifest) {
  std::uint64_t n = 0;
  for (const auto& e : manifest.tensors)
    if (e.trainable) n += e.numel;
  return n;
}

template void save_checkpoint<float>(SFNet<float>&, const fs::path&, const nlohmann::json&);
template void save_checkpoint<double>(SFNet<double>&, const fs::path&, const nlohmann::json&);
template void load_into<float>(SFNet<float>&, const fs::path&);
template void load_into<double>(SFNet<double>&, const fs::path&);
template std::unique_ptr<SFNet<float>> load_checkpoint<float>(const fs::path&);
template std::unique_ptr<SFNet<double>> load_checkpoint<double>(const fs::path&);

}  // namespace sfnet::model
