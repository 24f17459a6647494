#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "drfn/model/network.hpp"
#include "drfn/train/adam.hpp"

namespace drfn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class UnsupportedCheckpointVersion : public std::runtime_error {
public:
    explicit UnsupportedCheckpointVersion(std::uint32_t v)
        : std::runtime_error("unsupported checkpoint version " + std::to_string(v) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")"),
          version(v)
    {}
    std::uint32_t version;
};

// Truncated file, bad magic, malformed header.
class CheckpointFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
    std::string name;
    bool buffer = false;  // BN running stats
    Tensor value;
};

struct Checkpoint {
    ModelConfig config;
    std::vector<CheckpointEntry> entries;  // model visit order
    std::optional<AdamState> optimizer;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

Checkpoint capture(DRFN& model, const AdamState* optimizer = nullptr);
// Copies every named entry into the model; a missing name, an extra name or a
// shape mismatch throws CheckpointIncompatible naming the first offender.
void restore(DRFN& model, const Checkpoint& ckpt);
DRFN model_from_checkpoint(const Checkpoint& ckpt);

// Layout: "DRFN" | u32 version | u64 header length | JSON header | f64 blobs,
// all integers and floats little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, DRFN& model, const AdamState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace drfn
