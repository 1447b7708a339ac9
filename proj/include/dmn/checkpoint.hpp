#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "dmn/tensor.hpp"

namespace dmn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts unsupported");

// Format: one line of JSON ({"params":[{"name","shape","offset"},...],"meta":{...}}),
// then raw 32-bit float payloads at the stated offsets, in header order.
inline void save_checkpoint(const std::string& path, const NamedParams& params,
                            const nlohmann::json& meta = {}) {
  nlohmann::json header;
  header["params"] = nlohmann::json::array();
  long offset = 0;
  for (const auto& [name, p] : params) {
    header["params"].push_back({{"name", name}, {"shape", p.shape()}, {"offset", offset}});
    offset += p.size() * (long)sizeof(float);
  }
  header["meta"] = meta;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f << header.dump() << "\n";
  for (const auto& [name, p] : params) {
    std::vector<float> buf(p.size());
    for (long i = 0; i < p.size(); ++i) buf[i] = (float)p.val(i);
    f.write(reinterpret_cast<const char*>(buf.data()), (long)buf.size() * sizeof(float));
  }
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

struct Checkpoint {
  std::map<std::string, Tensor> params;
  nlohmann::json meta;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string header_line;
  if (!std::getline(f, header_line)) throw IoError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed checkpoint header in " + path + ": " + e.what());
  }
  std::streampos payload_start = f.tellg();

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("params")) {
    std::string name = entry.at("name");
    Shape shape = entry.at("shape").get<Shape>();
    long offset = entry.at("offset");
    long n = numel(shape);
    std::vector<float> buf(n);
    f.seekg(payload_start + (std::streampos)offset);
    f.read(reinterpret_cast<char*>(buf.data()), n * (long)sizeof(float));
    if (!f) throw IoError("truncated checkpoint payload for '" + name + "' in " + path);
    std::vector<Scalar> v(n);
    for (long i = 0; i < n; ++i) v[i] = (Scalar)buf[i];
    ckpt.params.emplace(name, Tensor(shape, std::move(v)));
  }
  return ckpt;
}

// Copies matching entries into `params`; every destination name must exist in
// the checkpoint with the right shape.
inline void restore_params(const NamedParams& params, const Checkpoint& ckpt) {
  for (const auto& [name, p] : params) {
    auto it = ckpt.params.find(name);
    check(it != ckpt.params.end(), "checkpoint missing parameter '" + name + "'");
    check(it->second.shape() == p.shape(),
          "checkpoint parameter '" + name + "' shape " + shape_str(it->second.shape()) +
              " != model shape " + shape_str(p.shape()));
    const_cast<Tensor&>(p).data() = it->second.data();
  }
}

}  // namespace dmn
