#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlns/ops.hpp"
#include "rlns/tensor.hpp"

namespace rlns {

uint64_t mix_seed(uint64_t seed, uint64_t tag);

struct ModelConfig {
  int n_layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int vocab_size = 0;
  int n_experts = 8;
  int top_k = 2;
  int expert_hidden = 128;
  int max_seq_len = 48;
  uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ExpertParams {
  Tensor w1, b1, w2, b2;  // [d,H], [H], [H,d], [d]
};

struct AttnParams {
  std::vector<Tensor> wq, wk, wv;  // per head, [d, d/n_heads]
  Tensor wo;                       // [d, d]
};

struct LayerParams {
  Tensor ln_attn_gain, ln_moe_gain;  // [d]
  AttnParams attn;
  Tensor router;  // [d, n_experts], bias-free score map
  std::vector<ExpertParams> experts;
};

// Per-layer routing record: raw scores, the top-k selected set, and the
// gating weights actually applied (zero off the selected set; also zero on
// experts suppressed by a causal-intervention mask).
struct RoutingTrace {
  std::vector<std::vector<double>> scores;    // [T][n_experts]
  std::vector<std::vector<int>> selected;     // [T][top_k], ascending
  std::vector<std::vector<double>> gates;     // [T][n_experts]
};

struct CaptureFlags {
  bool attention = false;
  bool hidden = false;
  bool routing = false;
  bool router_probs_in_graph = false;  // full-softmax router probs kept on tape
};

struct ForwardCapture {
  Tensor logits;  // [T, V]
  std::vector<std::vector<Tensor>> attention;  // [layer][head] -> [T,T] values
  std::vector<Tensor> hidden;                  // [layer] -> [T,d] post-MoE residual stream
  std::vector<RoutingTrace> routing;           // [layer]
  std::vector<Tensor> router_probs;            // [layer] -> [T,n_experts], in-graph
  std::vector<std::vector<std::vector<int>>> selected_sets;  // [layer][T][k], always filled
};

// Per-layer sets of expert indices whose gates are forced to zero after
// selection. Empty inner vector = no intervention at that layer.
using ExpertMasks = std::vector<std::vector<int>>;

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct ParamPartition {
  std::vector<NamedParam> router_params;
  std::vector<NamedParam> other_params;
};

class MoEModel {
 public:
  MoEModel() = default;
  static MoEModel init(const ModelConfig& cfg);  // seeded random parameters

  const ModelConfig& config() const { return cfg_; }

  // Ordered, stable parameter registry (manifest order).
  std::vector<NamedParam> parameters() const;
  ParamPartition partition() const;
  void set_all_requires_grad(bool rg) const;

  ForwardCapture forward(std::span<const int> tokens, const CaptureFlags& flags = {},
                         const ExpertMasks* masks = nullptr,
                         bool renormalize_masked_gates = false) const;

  std::vector<int> greedy_decode(std::span<const int> prompt, int max_new, int eos_id) const;

  Tensor tok_emb, pos_emb;  // [V,d], [max_seq,d]
  Tensor ln_final_gain;     // [d]
  Tensor unembed;           // [d, V]
  std::vector<LayerParams> layers;

  // Logit-lens projection: final norm then unembedding of a hidden state.
  Tensor lens_logits(const Tensor& hidden_row) const;

 private:
  ModelConfig cfg_;
};

// MoE sublayer on a normalized input block. Exposed for the straight-line
// recomputation tests; the model uses it internally.
struct MoELayerResult {
  Tensor output;          // [T,d] expert mixture (no residual)
  RoutingTrace trace;
  Tensor router_probs;    // [T,n_experts] full softmax, in-graph (optional)
};
MoELayerResult moe_layer_forward(const Tensor& x_norm, const LayerParams& layer, int top_k,
                                 const std::vector<int>* mask, bool renormalize_masked_gates,
                                 bool want_router_probs);

}  // namespace rlns
