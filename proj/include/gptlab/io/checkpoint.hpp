#pragma once

// Binary checkpoint layout (little endian):
//
//   "GPTLABCK" | u32 version | u64 fingerprint
//   u32 metadata count | { str key | str value }*
//   u32 tensor count   | { str name | u32 rank | u64 dims[rank] | f64 data[] }*
//
// where str is u32 length followed by bytes. Entries are written in sorted
// order, so equal contents give identical bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "gptlab/models/backbone.hpp"
#include "gptlab/models/parameters.hpp"
#include "gptlab/prompt/freeze.hpp"
#include "gptlab/prompt/prompt.hpp"

namespace gptlab::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t fingerprint = 0;
  std::map<std::string, std::string> metadata;
  models::ParameterSet params;

  bool operator==(const Checkpoint&) const = default;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::string_view bytes);  // CheckpointError when corrupt

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Full backbone checkpoint, fingerprinted by the backbone's canonical config.
Checkpoint make_backbone_checkpoint(const models::BackboneConfig& config,
                                    const models::ParameterSet& backbone);
// Verifies kind, fingerprint and tensor shapes; returns the backbone.* set.
models::ParameterSet load_backbone(const Checkpoint& ckpt, const models::BackboneConfig& config);

// Prompt parameters and head, without any backbone tensor.
struct PromptBundle {
  prompt::TuningMode mode = prompt::TuningMode::kDeepGpt;
  prompt::PromptConfig prompt;
  models::HeadConfig head;
  models::ParameterSet params;  // prompt.* and head.*
};

// Fingerprint of the (width, layers) pair a prompt bundle depends on.
std::uint64_t prompt_compat_fingerprint(std::size_t width, std::size_t layers);

Checkpoint make_prompt_checkpoint(const models::BackboneConfig& backbone,
                                  const PromptBundle& bundle);
// Rejects checkpoints whose width or layer count differs from `backbone`.
PromptBundle load_prompt(const Checkpoint& ckpt, const models::BackboneConfig& backbone);

}  // namespace gptlab::io
