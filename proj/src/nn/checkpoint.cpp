#include "cavmarl/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cavmarl::nn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'V', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated data");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("checkpoint: missing tensor " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = metadata.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
  }
  for (const auto& entry : tensors) {
    for (double v : entry.second.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointError("checkpoint: bad magic, not a checkpoint file");
  }
  const auto version = r.get_le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const auto meta_len = r.get_le<std::uint32_t>();
  try {
    ck.metadata = nlohmann::json::parse(r.get_bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get_le<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get_le<std::uint32_t>();
    std::string name = r.get_bytes(name_len);
    const auto rank = r.get_le<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.get_le<std::uint64_t>()));
    table.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : table) {
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = std::bit_cast<double>(r.get_le<std::uint64_t>());
    ck.tensors.emplace_back(name, Tensor(shape, std::move(data)));
  }
  if (!r.at_end()) throw CheckpointError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointIoError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointIoError("write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointIoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const CheckpointIoError&) {
    throw;
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace cavmarl::nn
