#pragma once

// Binary checkpoint:
//   8-byte magic "GHNCKPT1", then little-endian
//   u32 version, u32 entry count,
//   per entry: u16 name length, name bytes, u8 dtype code, u8 rank,
//              u32 extents[rank], raw values.
// The training step and a config echo travel as the reserved entries
// "meta.step" (f64 scalar) and "meta.config" (u8 vector).

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghn/network.hpp"

namespace ghn {

inline constexpr char kCheckpointMagic[8] = {'G', 'H', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };

std::size_t dtype_size(DType d);

enum class CheckpointErrorKind { io, bad_magic, version_mismatch, corrupt_length, missing_parameter,
                                 shape_mismatch, dtype_mismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> extents;
  std::vector<unsigned char> bytes;  // raw little-endian values

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t step = 0;
  std::string config;
  std::vector<CheckpointEntry> entries;  // parameters only; meta entries are folded in

  const CheckpointEntry* find(const std::string& name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<unsigned char> serialize(const Checkpoint& c);
Checkpoint deserialize(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every network parameter (including batch-norm running stats).
template <class T>
Checkpoint make_checkpoint(Network<T>& net, std::uint64_t step, const std::string& config);

/// Copies stored values into the network. Every network parameter must be
/// present with a matching shape and the network's precision.
template <class T>
void restore_checkpoint(const Checkpoint& c, Network<T>& net);

}  // namespace ghn
