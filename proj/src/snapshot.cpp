#include "rtrrl/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "rtrrl/config.hpp"

namespace rtrrl {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const std::string& s) { out_ += s; }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& in, std::size_t end) : in_(in), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw SnapshotError("snapshot is truncated");
  }
  const std::string& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(n)));
}

}  // namespace

TensorMap Snapshot::tensor_map() const {
  TensorMap m;
  for (const auto& t : tensors) m[t.name] = t;
  return m;
}

std::string encode_snapshot(const Snapshot& s) {
  Writer w;
  w.bytes(std::string(kSnapshotMagic, sizeof kSnapshotMagic));
  w.put<std::uint32_t>(kSnapshotVersion);
  const std::string meta = s.meta.dump();
  w.put<std::uint64_t>(meta.size());
  w.bytes(meta);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.tensors.size()));
  for (const auto& t : s.tensors) {
    if (t.name.size() > 0xffff) throw SnapshotError("tensor name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name);
    w.put<std::uint8_t>(t.is_complex ? 1 : 0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.put<std::int64_t>(d);
    const auto expected = t.element_count() * (t.is_complex ? 2 : 1);
    if (static_cast<std::int64_t>(t.data.size()) != expected) {
      throw SnapshotError("tensor '" + t.name + "' data does not match its shape");
    }
    for (double v : t.data) w.put<double>(v);
  }
  w.put<std::uint32_t>(crc_of(w.str(), w.str().size()));
  return w.str();
}

Snapshot decode_snapshot(const std::string& bytes) {
  if (bytes.size() < sizeof kSnapshotMagic + 4 + 8 + 4 + 4) throw SnapshotError("snapshot is truncated");
  if (bytes.compare(0, sizeof kSnapshotMagic, std::string(kSnapshotMagic, sizeof kSnapshotMagic)) != 0) {
    throw SnapshotError("not a snapshot file (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes, body)) throw SnapshotError("snapshot checksum mismatch");

  Reader r(bytes, body);
  r.bytes(sizeof kSnapshotMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion) {
    throw SnapshotError("unsupported snapshot version " + std::to_string(version));
  }
  Snapshot s;
  const auto meta_len = r.get<std::uint64_t>();
  try {
    s.meta = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw SnapshotError(std::string("snapshot metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.bytes(r.get<std::uint16_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw SnapshotError("tensor '" + t.name + "' has unknown dtype");
    t.is_complex = dtype == 1;
    const auto rank = r.get<std::uint8_t>();
    for (int k = 0; k < rank; ++k) {
      const auto d = r.get<std::int64_t>();
      if (d < 0) throw SnapshotError("tensor '" + t.name + "' has a negative dimension");
      t.shape.push_back(d);
    }
    const auto n = t.element_count() * (t.is_complex ? 2 : 1);
    if (n < 0 || static_cast<std::uint64_t>(n) > body / 8) throw SnapshotError("snapshot is truncated");
    t.data.resize(static_cast<std::size_t>(n));
    for (auto& v : t.data) v = r.get<double>();
    s.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw SnapshotError("trailing bytes after the last tensor");
  return s;
}

void write_snapshot(const std::string& path, const Snapshot& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SnapshotError("cannot open '" + path + "' for writing");
  const std::string bytes = encode_snapshot(s);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw SnapshotError("failed writing '" + path + "'");
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_snapshot(ss.str());
}

Snapshot snapshot_agent(const Agent& agent, const std::string& label) {
  return {{{"config", config_to_json(agent.config())}, {"kind", label}, {"steps", agent.step_count()}},
          agent.export_tensors()};
}

std::unique_ptr<Agent> restore_agent(const Snapshot& s) {
  if (!s.meta.contains("config")) throw SnapshotError("snapshot has no config");
  try {
    const TrainConfig cfg = config_from_json(s.meta.at("config"));
    auto env = make_env(cfg.env, cfg.env_params, 0);
    auto agent = std::make_unique<Agent>(cfg, env->spec());
    agent->import_tensors(s.tensor_map());
    return agent;
  } catch (const ConfigError& e) {
    throw SnapshotError(std::string("snapshot does not describe a valid agent: ") + e.what());
  }
}

}  // namespace rtrrl
