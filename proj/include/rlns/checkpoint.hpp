#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlns/model.hpp"

namespace rlns {

// Artifact incompatibility (bad magic, digest mismatch, config mismatch).
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(const std::string& s);

// Digest over the raw little-endian f64 payload of the given tensors, in
// order. Used for freeze-contract checks over parameter groups.
std::string params_digest(const std::vector<NamedParam>& params);

// Checkpoint layout: 8-byte magic "RLNSCKPT", u32 LE version (1), u64 LE
// header length, canonical JSON header (config + tensor manifest), raw f64
// LE payloads in manifest order, then 32 bytes of SHA-256 over everything
// preceding the digest.
void save_checkpoint(const std::string& path, const MoEModel& model, const std::string& compat_digest);

struct LoadedCheckpoint {
  MoEModel model;
  std::string compat_digest;  // as recorded at save time
  std::string file_digest;    // hex of the trailing SHA-256
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace rlns
