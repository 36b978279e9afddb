#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segadapt/nn.hpp"

namespace segadapt {

// Checkpoint file layout (little-endian payload):
//   bytes 0..7   magic "SEGADPT1"
//   bytes 8..15  uint64 manifest length in bytes
//   manifest     UTF-8 JSON: kind, creation metadata, sections (each with an
//                arch descriptor and tensor name/shape/dtype/offset/bytes),
//                plus free-form "extra"
//   payload      raw tensor data at the manifest offsets
// The manifest is self-describing so any language can read the payload.

constexpr char kCheckpointMagic[8] = {'S', 'E', 'G', 'A', 'D', 'P', 'T', '1'};

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

class CheckpointWriter {
 public:
  explicit CheckpointWriter(std::string kind) {
    manifest_["format_version"] = 1;
    manifest_["kind"] = std::move(kind);
    manifest_["sections"] = nlohmann::json::array();
  }

  template <typename T>
  void add_section(const std::string& name, const std::string& arch,
                   const std::vector<ParamRef<T>>& params) {
    nlohmann::json sec;
    sec["name"] = name;
    sec["arch"] = arch;
    sec["tensors"] = nlohmann::json::array();
    for (const auto& p : params) {
      nlohmann::json t;
      t["name"] = p.name;
      t["shape"] = p.value->shape();
      t["dtype"] = dtype_name<T>();
      t["offset"] = payload_.size();
      const size_t bytes = p.value->numel() * sizeof(T);
      t["bytes"] = bytes;
      sec["tensors"].push_back(t);
      const size_t pos = payload_.size();
      payload_.resize(pos + bytes);
      std::memcpy(payload_.data() + pos, p.value->data(), bytes);
    }
    manifest_["sections"].push_back(sec);
  }

  nlohmann::json& meta() { return manifest_; }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    const std::string m = manifest_.dump();
    const uint64_t mlen = m.size();
    f.write(kCheckpointMagic, 8);
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(m.data(), static_cast<std::streamsize>(m.size()));
    f.write(reinterpret_cast<const char*>(payload_.data()),
            static_cast<std::streamsize>(payload_.size()));
    if (!f) throw IoError("checkpoint: write failed for '" + path + "'");
  }

 private:
  nlohmann::json manifest_;
  std::vector<unsigned char> payload_;
};

class Checkpoint {
 public:
  static Checkpoint read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
      throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    if (!f) throw IoError("checkpoint: truncated header in '" + path + "'");
    std::string m(mlen, '\0');
    f.read(m.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw IoError("checkpoint: truncated manifest in '" + path + "'");
    Checkpoint c;
    try {
      c.manifest_ = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("checkpoint: corrupt manifest in '" + path + "': " + e.what());
    }
    c.payload_.assign(std::istreambuf_iterator<char>(f),
                      std::istreambuf_iterator<char>());
    c.path_ = path;
    return c;
  }

  const nlohmann::json& meta() const { return manifest_; }
  std::string kind() const { return manifest_.value("kind", ""); }

  bool has_section(const std::string& name) const {
    return find_section(name) != nullptr;
  }

  std::string section_arch(const std::string& name) const {
    const nlohmann::json* sec = find_section(name);
    if (!sec) throw IoError(mismatch("section '" + name + "' missing"));
    return (*sec)["arch"].get<std::string>();
  }

  // Copies payload into the given parameter set; every name, shape and
  // dtype must match the manifest exactly.
  template <typename T>
  void load_section(const std::string& name, const std::string& expected_arch,
                    const std::vector<ParamRef<T>>& params) const {
    const nlohmann::json* sec = find_section(name);
    if (!sec) throw IoError(mismatch("section '" + name + "' missing"));
    const std::string arch = (*sec)["arch"].get<std::string>();
    if (arch != expected_arch)
      throw IoError(mismatch("section '" + name + "' arch is '" + arch +
                             "', expected '" + expected_arch + "'"));
    const auto& tensors = (*sec)["tensors"];
    if (tensors.size() != params.size())
      throw IoError(mismatch("section '" + name + "' has " +
                             std::to_string(tensors.size()) + " tensors, expected " +
                             std::to_string(params.size())));
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      if (t["name"].get<std::string>() != params[i].name)
        throw IoError(mismatch("tensor '" + t["name"].get<std::string>() +
                               "' where '" + params[i].name + "' expected"));
      if (t["shape"].get<std::vector<int>>() != params[i].value->shape())
        throw IoError(mismatch("tensor '" + params[i].name + "' shape differs"));
      if (t["dtype"].get<std::string>() != dtype_name<T>())
        throw IoError(mismatch("tensor '" + params[i].name + "' dtype is " +
                               t["dtype"].get<std::string>() + ", expected " +
                               dtype_name<T>()));
      const size_t offset = t["offset"].get<size_t>();
      const size_t bytes = t["bytes"].get<size_t>();
      if (bytes != params[i].value->numel() * sizeof(T) ||
          offset + bytes > payload_.size())
        throw IoError(mismatch("tensor '" + params[i].name + "' payload bounds"));
      std::memcpy(params[i].value->data(), payload_.data() + offset, bytes);
    }
  }

 private:
  const nlohmann::json* find_section(const std::string& name) const {
    for (const auto& sec : manifest_["sections"])
      if (sec["name"].get<std::string>() == name) return &sec;
    return nullptr;
  }

  std::string mismatch(const std::string& detail) const {
    return "checkpoint '" + path_ + "': manifest mismatch: " + detail;
  }

  nlohmann::json manifest_;
  std::vector<unsigned char> payload_;
  std::string path_;
};

}  // namespace segadapt
