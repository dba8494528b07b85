#pragma once

// Manifest + blob persistence. Every binary file is a flat little-endian array
// of 64-bit reals described by a JSON manifest stored next to it at
// `<path>.json`.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include <fundiff/core/nn.hpp>

namespace fundiff::io {

using json = nlohmann::json;

inline std::string manifest_path(const std::string& blob_path) { return blob_path + ".json"; }

inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, p);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

inline void append_doubles(std::string& out, std::span<const double> values) {
  const std::size_t off = out.size();
  out.resize(off + values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(out.data() + off + i * 8, &bits, 8);
  }
}

inline std::vector<double> read_doubles(const std::string& blob, std::size_t offset_bytes, std::size_t count) {
  if (offset_bytes + count * 8 > blob.size())
    throw IoError("blob too short: need " + std::to_string(offset_bytes + count * 8) + " bytes, have " +
                  std::to_string(blob.size()));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, blob.data() + offset_bytes + i * 8, 8);
    out[i] = std::bit_cast<double>(to_le(bits));
  }
  return out;
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

inline json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in '" + path + "': " + e.what());
  }
}

template <class T>
T require_field(const json& j, const std::string& field, const std::string& where) {
  if (!j.contains(field)) throw IoError(where + ": missing field '" + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw IoError(where + ": field '" + field + "' has the wrong type");
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: manifest lists {name, shape, offset} for every tensor.

struct Checkpoint {
  nn::ParamStore params;
  json meta;
};

inline void save_checkpoint(const std::string& path, const nn::ParamStore& ps, const json& meta,
                            bool with_moments = true) {
  std::string blob;
  json tensors = json::array();
  auto put = [&](const std::string& name, const Tensor& t, const json& extra = json::object()) {
    json e = {{"name", name}, {"shape", t.shape()}, {"offset", blob.size()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) e[it.key()] = it.value();
    tensors.push_back(std::move(e));
    append_doubles(blob, t.data());
  };
  for (const auto& [name, p] : ps.params()) {
    put(name, p.var.value(), {{"trainable", p.trainable}});
    if (with_moments && p.trainable) {
      put("adam.m/" + name, p.m);
      put("adam.v/" + name, p.v);
    }
  }
  json manifest = {{"format", "fundiff-checkpoint-v1"},
                   {"dtype", "float64-le"},
                   {"blob_bytes", blob.size()},
                   {"optimizer_step", ps.step()},
                   {"tensors", tensors},
                   {"meta", meta}};
  write_file_atomic(path, blob);
  write_file_atomic(manifest_path(path), dump_json(manifest));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string where = "checkpoint '" + path + "'";
  if (!std::filesystem::exists(path) || !std::filesystem::exists(manifest_path(path)))
    throw IoError(where + " not found");
  const json m = load_json(manifest_path(path));
  const std::string blob = read_file(path);
  const auto declared = require_field<std::size_t>(m, "blob_bytes", where);
  if (declared != blob.size())
    throw IoError(where + ": blob has " + std::to_string(blob.size()) + " bytes, manifest declares " +
                  std::to_string(declared));
  Checkpoint ck;
  ck.meta = m.value("meta", json::object());
  std::map<std::string, Tensor> moments;
  for (const json& e : require_field<json>(m, "tensors", where)) {
    const auto name = require_field<std::string>(e, "name", where);
    const auto shape = require_field<Shape>(e, "shape", where);
    const auto off = require_field<std::size_t>(e, "offset", where);
    Tensor t(shape, read_doubles(blob, off, shape_numel(shape)));
    if (name.rfind("adam.", 0) == 0)
      moments.emplace(name, std::move(t));
    else
      ck.params.add(name, std::move(t), e.value("trainable", true));
  }
  for (auto& [name, p] : ck.params.params()) {
    if (auto it = moments.find("adam.m/" + name); it != moments.end()) p.m = it->second;
    if (auto it = moments.find("adam.v/" + name); it != moments.end()) p.v = it->second;
  }
  ck.params.set_step(m.value("optimizer_step", std::size_t{0}));
  return ck;
}

}  // namespace fundiff::io
