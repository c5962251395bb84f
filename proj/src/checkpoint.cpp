#include "rlns/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace rlns {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'N', 'S', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 8);
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"n_layers", c.n_layers},     {"d_model", c.d_model},
                        {"n_heads", c.n_heads},       {"vocab_size", c.vocab_size},
                        {"n_experts", c.n_experts},   {"top_k", c.top_k},
                        {"expert_hidden", c.expert_hidden}, {"max_seq_len", c.max_seq_len},
                        {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_experts = j.at("n_experts").get<int>();
  c.top_k = j.at("top_k").get<int>();
  c.expert_hidden = j.at("expert_hidden").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

namespace {

std::string to_hex(std::span<const uint8_t> bytes) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::span<const uint8_t> bytes) {
  unsigned char digest[32];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  return to_hex(std::span<const uint8_t>(digest, len));
}

std::string sha256_hex(const std::string& s) {
  return sha256_hex(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

std::string params_digest(const std::vector<NamedParam>& params) {
  std::vector<uint8_t> bytes;
  for (const auto& np : params) {
    const auto d = np.tensor.data();
    const auto* p = reinterpret_cast<const uint8_t*>(d.data());
    bytes.insert(bytes.end(), p, p + d.size() * sizeof(double));
  }
  return sha256_hex(bytes);
}

void save_checkpoint(const std::string& path, const MoEModel& model, const std::string& compat_digest) {
  const auto params = model.parameters();

  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& np : params) {
    nlohmann::json entry;
    entry["name"] = np.name;
    entry["shape"] = np.tensor.shape();
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += static_cast<uint64_t>(np.tensor.numel()) * sizeof(double);
  }
  nlohmann::json header;
  header["format_version"] = kVersion;
  header["config"] = config_to_json(model.config());
  header["compat_digest"] = compat_digest;
  header["manifest"] = manifest;
  const std::string header_str = header.dump();

  std::vector<uint8_t> bytes;
  bytes.reserve(64 + header_str.size() + offset);
  bytes.insert(bytes.end(), kMagic, kMagic + 8);
  append_u32(bytes, kVersion);
  append_u64(bytes, header_str.size());
  bytes.insert(bytes.end(), header_str.begin(), header_str.end());
  for (const auto& np : params) {
    const auto d = np.tensor.data();
    const auto* p = reinterpret_cast<const uint8_t*>(d.data());
    bytes.insert(bytes.end(), p, p + d.size() * sizeof(double));
  }
  unsigned char digest[32];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  bytes.insert(bytes.end(), digest, digest + 32);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArtifactError("checkpoint: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ArtifactError("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("checkpoint: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + 4 + 8 + 32) throw ArtifactError("checkpoint: truncated file " + path);

  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw ArtifactError("checkpoint: bad magic in " + path);
  uint32_t version;
  std::memcpy(&version, bytes.data() + 8, 4);
  if (version != kVersion) {
    throw ArtifactError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  }
  uint64_t header_len;
  std::memcpy(&header_len, bytes.data() + 12, 8);
  const size_t header_start = 20;
  if (bytes.size() < header_start + header_len + 32) throw ArtifactError("checkpoint: truncated header in " + path);

  unsigned char digest[32];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size() - 32, digest, &len, EVP_sha256(), nullptr);
  if (std::memcmp(digest, bytes.data() + bytes.size() - 32, 32) != 0) {
    throw ArtifactError("checkpoint: content digest mismatch in " + path);
  }

  const std::string header_str(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                               bytes.begin() + static_cast<std::ptrdiff_t>(header_start + header_len));
  nlohmann::json header = nlohmann::json::parse(header_str);

  LoadedCheckpoint out;
  out.model = MoEModel::init(config_from_json(header.at("config")));
  out.compat_digest = header.value("compat_digest", "");
  out.file_digest = to_hex(std::span<const uint8_t>(digest, 32));

  const size_t payload_start = header_start + header_len;
  auto params = out.model.parameters();
  size_t idx = 0;
  for (const auto& entry : header.at("manifest")) {
    if (idx >= params.size()) throw ArtifactError("checkpoint: manifest has extra tensors");
    auto& np = params[idx];
    if (entry.at("name").get<std::string>() != np.name) {
      throw ArtifactError("checkpoint: manifest tensor '" + entry.at("name").get<std::string>() +
                          "' does not match expected '" + np.name + "'");
    }
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != np.tensor.shape()) {
      throw ArtifactError("checkpoint: shape mismatch for " + np.name);
    }
    const uint64_t off = entry.at("offset").get<uint64_t>();
    const size_t nbytes = static_cast<size_t>(np.tensor.numel()) * sizeof(double);
    if (payload_start + off + nbytes > bytes.size() - 32) {
      throw ArtifactError("checkpoint: payload out of bounds for " + np.name);
    }
    std::memcpy(np.tensor.data().data(), bytes.data() + payload_start + off, nbytes);
    ++idx;
  }
  if (idx != params.size()) throw ArtifactError("checkpoint: manifest missing tensors");
  return out;
}

}  // namespace rlns
