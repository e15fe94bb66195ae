#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cavmarl/nn/tensor.hpp"

namespace cavmarl::nn {

// Container layout (all integers little-endian):
//   8 bytes  magic "CAVMCKPT"
//   u32      format version
//   u32      metadata length, then that many bytes of UTF-8 JSON
//   u32      tensor count
//   per tensor: u32 name length, name bytes, u32 rank, rank x u64 dims
//   payload: every tensor's values in table order as IEEE-754 binary64
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable file.
class CheckpointIoError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  /// Throws CheckpointError if absent.
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace cavmarl::nn
