#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmf/error.hpp"
#include "cmf/json_io.hpp"
#include "cmf/model.hpp"
#include "cmf/train.hpp"

namespace cmf {

// Single-file binary container:
//   magic "CMFCHKPT" | u32 version | u64 header_len | header JSON |
//   parameter blobs (f64 little-endian, manifest order) |
//   optional Adam m/v blobs in the same order.
inline constexpr char kCheckpointMagic[8] = {'C', 'M', 'F', 'C',
                                             'H', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t epoch = 0;
  std::size_t best_epoch = 0;
};

struct Checkpoint {
  ModelConfig model_config;
  std::optional<TrainConfig> train_config;
  CheckpointMeta meta;
  // name -> flat values; shapes are implied by the rebuilt model and checked
  // against the manifest on load.
  std::vector<std::pair<std::string, std::vector<double>>> params;
  struct AdamBlob {
    std::uint64_t t = 0;
    std::vector<AdamOptimizer::Slot> slots;
  };
  std::optional<AdamBlob> adam;
};

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_block(std::ofstream& out, const std::vector<double>& values) {
  std::string buf;
  buf.reserve(values.size() * 8);
  for (double d : values) put_u64le(buf, std::bit_cast<std::uint64_t>(d));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::uint64_t read_u64le(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw NumericalError("checkpoint '" + path + "' truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint32_t read_u32le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw NumericalError("checkpoint '" + path + "' truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::vector<double> read_f64_block(std::istream& in, std::size_t count,
                                          const std::string& path) {
  std::vector<char> buf(count * 8);
  if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
    throw NumericalError("checkpoint '" + path + "' truncated");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k)
      v = (v << 8) | static_cast<unsigned char>(buf[i * 8 + static_cast<std::size_t>(k)]);
    values[i] = std::bit_cast<double>(v);
  }
  return values;
}

}  // namespace detail

inline Checkpoint make_checkpoint(const FusionModel& model,
                                  const AdamOptimizer* opt = nullptr,
                                  CheckpointMeta meta = {}) {
  Checkpoint ck;
  ck.model_config = model.config();
  ck.meta = meta;
  for (const auto& [name, p] : model.named_parameters())
    ck.params.emplace_back(name, p.data());
  if (opt) {
    ck.train_config = opt->config();
    Checkpoint::AdamBlob blob;
    blob.t = opt->step_count();
    blob.slots = opt->slots();
    ck.adam = std::move(blob);
  }
  return ck;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, values] : ck.params)
    manifest.push_back({{"name", name}, {"count", values.size()}});
  nlohmann::json header = {
      {"model", model_config_to_json(ck.model_config)},
      {"epoch", ck.meta.epoch},
      {"best_epoch", ck.meta.best_epoch},
      {"params", manifest},
      {"has_adam", ck.adam.has_value()},
      {"adam_t", ck.adam ? ck.adam->t : 0}};
  if (ck.train_config)
    header["train"] = train_config_to_json(*ck.train_config);
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint file '" + path + "'");
  std::string prefix(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32le(prefix, kCheckpointVersion);
  detail::put_u64le(prefix, header_bytes.size());
  out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, values] : ck.params) detail::put_f64_block(out, values);
  if (ck.adam) {
    for (const auto& slot : ck.adam->slots) {
      detail::put_f64_block(out, slot.m);
      detail::put_f64_block(out, slot.v);
    }
  }
  if (!out) throw IoError("write failed for checkpoint file '" + path + "'");
}

inline void save_checkpoint(const std::string& path, const FusionModel& model,
                            const AdamOptimizer* opt = nullptr,
                            CheckpointMeta meta = {}) {
  write_checkpoint(path, make_checkpoint(model, opt, meta));
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file '" + path + "'");

  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw NumericalError("bad checkpoint magic in '" + path + "'");
  const std::uint32_t version = detail::read_u32le(in, path);
  if (version != kCheckpointVersion)
    throw NumericalError("unsupported checkpoint version " +
                         std::to_string(version) + " in '" + path + "'");
  const std::uint64_t header_len = detail::read_u64le(in, path);
  std::string header_bytes(header_len, '\0');
  if (!in.read(header_bytes.data(), static_cast<std::streamsize>(header_len)))
    throw NumericalError("checkpoint '" + path + "' truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw NumericalError("checkpoint '" + path + "' header unreadable: " +
                         e.what());
  }

  Checkpoint ck;
  try {
    ck.model_config =
        model_config_from_json(header.at("model"), path + " (model config)");
    if (header.contains("train"))
      ck.train_config =
          train_config_from_json(header.at("train"), path + " (train config)");
    ck.meta.epoch = header.at("epoch").get<std::size_t>();
    ck.meta.best_epoch = header.at("best_epoch").get<std::size_t>();
    for (const auto& entry : header.at("params"))
      ck.params.emplace_back(entry.at("name").get<std::string>(),
                             std::vector<double>(entry.at("count").get<std::size_t>()));
    if (header.at("has_adam").get<bool>()) {
      Checkpoint::AdamBlob blob;
      blob.t = header.at("adam_t").get<std::uint64_t>();
      ck.adam = std::move(blob);
    }
  } catch (const nlohmann::json::exception& e) {
    throw NumericalError("checkpoint '" + path + "' header malformed: " +
                         e.what());
  }

  for (auto& [name, values] : ck.params)
    values = detail::read_f64_block(in, values.size(), path);
  if (ck.adam) {
    ck.adam->slots.resize(ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      ck.adam->slots[i].m =
          detail::read_f64_block(in, ck.params[i].second.size(), path);
      ck.adam->slots[i].v =
          detail::read_f64_block(in, ck.params[i].second.size(), path);
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw NumericalError("checkpoint '" + path + "' has trailing bytes");
  return ck;
}

// Rebuilds the model from the stored config and fills in parameter data.
inline FusionModel restore_model(const Checkpoint& ck) {
  FusionModel model(ck.model_config);
  ParamList params = model.named_parameters();
  if (params.size() != ck.params.size())
    throw NumericalError("checkpoint parameter count " +
                         std::to_string(ck.params.size()) +
                         " does not match rebuilt model (" +
                         std::to_string(params.size()) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    const auto& [ck_name, values] = ck.params[i];
    if (name != ck_name)
      throw NumericalError("checkpoint parameter '" + ck_name +
                           "' does not match model parameter '" + name + "'");
    if (values.size() != p.size())
      throw NumericalError("checkpoint parameter '" + ck_name + "' has " +
                           std::to_string(values.size()) + " values, model needs " +
                           std::to_string(p.size()));
    Tensor(p).data() = values;
  }
  return model;
}

inline FusionModel load_model_checkpoint(const std::string& path,
                                            Checkpoint* raw = nullptr) {
  Checkpoint ck = read_checkpoint(path);
  FusionModel model = restore_model(ck);
  if (raw) *raw = std::move(ck);
  return model;
}

}  // namespace cmf
