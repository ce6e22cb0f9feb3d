// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "fm3/error.hpp"

namespace fm3 {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw CheckpointError("checkpoint truncated");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void put_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.put(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name.data(), name.size());
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.put(static_cast<std::uint64_t>(e));
  w.put_bytes(t.data().data(), t.size() * sizeof(double));
}

std::map<std::string, Tensor> head_tensors(const Model& model) {
  std::map<std::string, Tensor> out;
  for (const auto& [task, head] : model.heads()) {
    const std::string prefix = "head." + std::to_string(task) + ".";
    if (const auto* lg = std::get_if<LogisticHead>(&head)) {
      out[prefix + "weight"] = lg->weight;
      out[prefix + "bias"] = Tensor::scalar(lg->bias);
    } else {
      const auto& sm = std::get<SoftmaxHead>(head);
      out[prefix + "weight"] = sm.weight;
      out[prefix + "bias"] = sm.bias;
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const RunConfig& cfg) {
  json snap;
  snap["config"] = config_to_json(cfg);
  snap["frozen_digests"] = {{"text", to_hex(model.encoder_digest(Modality::text))},
                            {"image", to_hex(model.encoder_digest(Modality::image))}};
  json heads = json::object();
  for (const auto& [task, head] : model.heads()) heads[std::to_string(task)] = to_string(head_type(head));
  snap["heads"] = heads;
  snap["sizing"] = {{"bottleneck", model.sizing().bottleneck}, {"hidden_width", model.sizing().hidden_width}};
  const std::string text = snap.dump();

  Writer w;
  w.put_bytes("FM3C", 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  const auto stored = model.stored_tensors();
  const auto heads_t = head_tensors(model);
  w.put(static_cast<std::uint64_t>(stored.size() + heads_t.size()));
  for (const auto& [name, t] : stored) put_tensor(w, name, *t);
  for (const auto& [name, t] : heads_t) put_tensor(w, name, t);
  const Digest d = sha256(w.bytes);
  w.put_bytes(d.data(), d.size());
  return std::move(w.bytes);
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 8 + 32) throw CheckpointError("checkpoint too short");
  if (std::memcmp(bytes.data(), "FM3C", 4) != 0) throw CheckpointError("bad checkpoint magic");
  const std::size_t body = bytes.size() - 32;
  const Digest expect = sha256(std::span<const std::uint8_t>(bytes.data(), body));
  if (std::memcmp(expect.data(), bytes.data() + body, 32) != 0) throw CheckpointError("checkpoint digest mismatch");

  Reader r(bytes.data() + 4, body - 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto snap_len = r.get<std::uint64_t>();
  const auto* snap_ptr = r.take(snap_len);
  json snap;
  try {
    snap = json::parse(snap_ptr, snap_ptr + snap_len);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad config snapshot: ") + e.what());
  }
  RunConfig cfg = config_from_json(snap.at("config"));
  LoadedCheckpoint out{cfg, Model(cfg)};
  Model& model = out.model;

  std::map<std::string, Tensor> table;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const auto* name_ptr = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(name_ptr), name_len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
    Tensor t(shape);
    std::memcpy(t.data().data(), r.take(t.size() * sizeof(double)), t.size() * sizeof(double));
    if (!table.emplace(std::move(name), std::move(t)).second) throw CheckpointError("duplicate tensor in checkpoint");
  }
  if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");

  for (auto& [name, dst] : model.stored_tensors()) {
    auto it = table.find(name);
    if (it == table.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != dst->shape()) throw CheckpointError("shape mismatch for '" + name + "'");
    *dst = std::move(it->second);
    table.erase(it);
  }
  for (const auto& [key, type] : snap.at("heads").items()) {
    const std::size_t task = std::stoul(key);
    const std::string prefix = "head." + key + ".";
    auto w = table.find(prefix + "weight");
    auto b = table.find(prefix + "bias");
    if (w == table.end() || b == table.end()) throw CheckpointError("checkpoint lacks head " + key);
    if (head_type_from_string(type.get<std::string>()) == HeadType::logistic) {
      model.heads()[task] = LogisticHead{w->second, b->second.item(), task};
    } else {
      model.heads()[task] = SoftmaxHead{w->second, b->second, task};
    }
    table.erase(w);
    table.erase(b);
  }
  if (!table.empty()) throw CheckpointError("unexpected tensor '" + table.begin()->first + "'");

  const auto& digests = snap.at("frozen_digests");
  if (to_hex(model.encoder_digest(Modality::text)) != digests.at("text").get<std::string>() ||
      to_hex(model.encoder_digest(Modality::image)) != digests.at("image").get<std::string>()) {
    throw CheckpointError("encoder weights do not match the recorded digests");
  }
  return out;
}

void save_checkpoint(const Model& model, const RunConfig& cfg, const std::string& path) {
  const auto bytes = serialize_checkpoint(model, cfg);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fm3
