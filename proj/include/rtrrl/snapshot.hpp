#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtrrl/agent.hpp"
#include "rtrrl/tensor.hpp"

namespace rtrrl {

// Binary container: magic, version, JSON metadata and named tensors, closed
// by a CRC-32 of everything before it. Byte layout in docs/snapshot_format.md.
inline constexpr char kSnapshotMagic[8] = {'R', 'T', 'R', 'R', 'L', 'S', 'N', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

/// Malformed, truncated or corrupted snapshot.
class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Snapshot {
  nlohmann::json meta;
  std::vector<Tensor> tensors;

  TensorMap tensor_map() const;
};

std::string encode_snapshot(const Snapshot& s);
Snapshot decode_snapshot(const std::string& bytes);

void write_snapshot(const std::string& path, const Snapshot& s);
Snapshot read_snapshot(const std::string& path);

/// meta = {"config": ..., "kind": label}, tensors = agent parameters.
Snapshot snapshot_agent(const Agent& agent, const std::string& label);
/// Rebuilds the agent described by the snapshot's config and loads its tensors.
std::unique_ptr<Agent> restore_agent(const Snapshot& s);

}  // namespace rtrrl
