#include "rlns/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace rlns {

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  // splitmix64 over seed^tag
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || vocab_size < 1 || n_experts < 1 || expert_hidden < 1 ||
      max_seq_len < 1) {
    throw std::invalid_argument("model config: all counts must be >= 1");
  }
  if (top_k < 1 || top_k > n_experts) {
    throw std::invalid_argument("model config: top_k must be in [1, n_experts]");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  }
}

namespace {

Tensor randu(std::mt19937_64& rng, Shape shape, double range) {
  std::uniform_real_distribution<double> dist(-range, range);
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (double& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace

MoEModel MoEModel::init(const ModelConfig& cfg) {
  cfg.validate();
  MoEModel m;
  m.cfg_ = cfg;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x696e6974));  // "init"
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  const double hs = 1.0 / std::sqrt(static_cast<double>(cfg.expert_hidden));

  m.tok_emb = randu(rng, {cfg.vocab_size, d}, 0.05);
  m.pos_emb = randu(rng, {cfg.max_seq_len, d}, 0.05);
  m.layers.resize(static_cast<size_t>(cfg.n_layers));
  for (auto& layer : m.layers) {
    layer.ln_attn_gain = Tensor::full({d}, 1.0);
    layer.ln_moe_gain = Tensor::full({d}, 1.0);
    layer.attn.wq.resize(static_cast<size_t>(cfg.n_heads));
    layer.attn.wk.resize(static_cast<size_t>(cfg.n_heads));
    layer.attn.wv.resize(static_cast<size_t>(cfg.n_heads));
    for (int h = 0; h < cfg.n_heads; ++h) {
      layer.attn.wq[static_cast<size_t>(h)] = randu(rng, {d, dh}, ws);
      layer.attn.wk[static_cast<size_t>(h)] = randu(rng, {d, dh}, ws);
      layer.attn.wv[static_cast<size_t>(h)] = randu(rng, {d, dh}, ws);
    }
    layer.attn.wo = randu(rng, {d, d}, ws);
    layer.router = randu(rng, {d, cfg.n_experts}, ws);
    layer.experts.resize(static_cast<size_t>(cfg.n_experts));
    for (auto& e : layer.experts) {
      e.w1 = randu(rng, {d, cfg.expert_hidden}, ws);
      e.b1 = Tensor::zeros({cfg.expert_hidden});
      e.w2 = randu(rng, {cfg.expert_hidden, d}, hs);
      e.b2 = Tensor::zeros({d});
    }
  }
  m.ln_final_gain = Tensor::full({d}, 1.0);
  m.unembed = randu(rng, {d, cfg.vocab_size}, ws);
  return m;
}

std::vector<NamedParam> MoEModel::parameters() const {
  std::vector<NamedParam> out;
  out.push_back({"emb.tok", tok_emb});
  out.push_back({"emb.pos", pos_emb});
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const auto& layer = layers[l];
    out.push_back({p + "ln_attn.gain", layer.ln_attn_gain});
    for (size_t h = 0; h < layer.attn.wq.size(); ++h) {
      const std::string hp = p + "attn.h" + std::to_string(h) + ".";
      out.push_back({hp + "wq", layer.attn.wq[h]});
      out.push_back({hp + "wk", layer.attn.wk[h]});
      out.push_back({hp + "wv", layer.attn.wv[h]});
    }
    out.push_back({p + "attn.wo", layer.attn.wo});
    out.push_back({p + "ln_moe.gain", layer.ln_moe_gain});
    out.push_back({p + "moe.router", layer.router});
    for (size_t e = 0; e < layer.experts.size(); ++e) {
      const std::string ep = p + "moe.expert" + std::to_string(e) + ".";
      out.push_back({ep + "w1", layer.experts[e].w1});
      out.push_back({ep + "b1", layer.experts[e].b1});
      out.push_back({ep + "w2", layer.experts[e].w2});
      out.push_back({ep + "b2", layer.experts[e].b2});
    }
  }
  out.push_back({"ln_final.gain", ln_final_gain});
  out.push_back({"unembed", unembed});
  return out;
}

ParamPartition MoEModel::partition() const {
  ParamPartition part;
  for (auto& np : parameters()) {
    if (np.name.find(".moe.router") != std::string::npos) {
      part.router_params.push_back(np);
    } else {
      part.other_params.push_back(np);
    }
  }
  return part;
}

void MoEModel::set_all_requires_grad(bool rg) const {
  for (auto& np : parameters()) np.tensor.set_requires_grad(rg);
}

MoELayerResult moe_layer_forward(const Tensor& x_norm, const LayerParams& layer, int top_k,
                                 const std::vector<int>* mask, bool renormalize_masked_gates,
                                 bool want_router_probs) {
  const int64_t t_count = x_norm.dim(0);
  const int64_t n_exp = layer.router.dim(1);
  if (mask != nullptr) {
    for (int e : *mask) {
      if (e < 0 || e >= n_exp) {
        throw std::invalid_argument("expert mask: index " + std::to_string(e) + " out of range");
      }
    }
  }
  std::vector<uint8_t> suppressed(static_cast<size_t>(n_exp), 0);
  if (mask != nullptr) {
    for (int e : *mask) suppressed[static_cast<size_t>(e)] = 1;
  }

  MoELayerResult res;
  Tensor scores = matmul(x_norm, layer.router);  // [T, n_exp]

  // Selection is detached from the graph; gates are a softmax over the
  // selected scores only.
  std::vector<uint8_t> sel_mask(static_cast<size_t>(t_count * n_exp), 0);
  res.trace.scores.resize(static_cast<size_t>(t_count));
  res.trace.selected.resize(static_cast<size_t>(t_count));
  for (int64_t t = 0; t < t_count; ++t) {
    std::span<const double> row(scores.data().data() + t * n_exp, static_cast<size_t>(n_exp));
    auto sel = top_k_indices(row, top_k);
    res.trace.scores[static_cast<size_t>(t)].assign(row.begin(), row.end());
    auto& sel_out = res.trace.selected[static_cast<size_t>(t)];
    sel_out.reserve(sel.size());
    for (int64_t e : sel) {
      sel_out.push_back(static_cast<int>(e));
      // Renormalization folds the intervention into the softmax support;
      // the default zeroes gates after the fact without renormalizing.
      if (!renormalize_masked_gates || !suppressed[static_cast<size_t>(e)]) {
        sel_mask[static_cast<size_t>(t * n_exp + e)] = 1;
      }
    }
  }
  Tensor gates = masked_softmax_rows(scores, sel_mask);
  if (mask != nullptr && !mask->empty() && !renormalize_masked_gates) {
    Tensor keep = Tensor::full({t_count, n_exp}, 1.0);
    for (int64_t t = 0; t < t_count; ++t) {
      for (int64_t e = 0; e < n_exp; ++e) {
        if (suppressed[static_cast<size_t>(e)]) keep.at(t, e) = 0.0;
      }
    }
    gates = mul(gates, keep);
  }

  res.trace.gates.resize(static_cast<size_t>(t_count));
  for (int64_t t = 0; t < t_count; ++t) {
    res.trace.gates[static_cast<size_t>(t)].assign(gates.data().begin() + t * n_exp,
                                                   gates.data().begin() + (t + 1) * n_exp);
  }

  if (want_router_probs) res.router_probs = softmax(scores, 1);

  // Expert-major dispatch in ascending expert order.
  Tensor acc = Tensor::zeros({t_count, x_norm.dim(1)});
  bool acc_used = false;
  for (int64_t e = 0; e < n_exp; ++e) {
    std::vector<int64_t> token_idx;
    std::vector<int64_t> gate_idx;
    for (int64_t t = 0; t < t_count; ++t) {
      if (gates.at(t, e) > 0.0) {
        token_idx.push_back(t);
        gate_idx.push_back(t * n_exp + e);
      }
    }
    if (token_idx.empty()) continue;
    const auto& ex = layer.experts[static_cast<size_t>(e)];
    Tensor rows = take_rows(x_norm, token_idx);
    Tensor hid = silu(add_rows(matmul(rows, ex.w1), ex.b1));
    Tensor y = add_rows(matmul(hid, ex.w2), ex.b2);
    Tensor w = take_elems(gates, gate_idx);
    Tensor contrib = scatter_rows(scale_rows(y, w), token_idx, t_count);
    acc = acc_used ? add(acc, contrib) : contrib;
    acc_used = true;
  }
  res.output = acc;
  return res;
}

ForwardCapture MoEModel::forward(std::span<const int> tokens, const CaptureFlags& flags,
                                 const ExpertMasks* masks, bool renormalize_masked_gates) const {
  const int64_t t_count = static_cast<int64_t>(tokens.size());
  if (t_count == 0) throw std::invalid_argument("forward: empty token sequence");
  if (t_count > cfg_.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(t_count) + " exceeds max_seq_len " +
                                std::to_string(cfg_.max_seq_len));
  }
  for (int tok : tokens) {
    if (tok < 0 || tok >= cfg_.vocab_size) {
      throw std::invalid_argument("forward: token id " + std::to_string(tok) + " out of vocabulary");
    }
  }
  if (masks != nullptr && static_cast<int>(masks->size()) != cfg_.n_layers) {
    throw std::invalid_argument("forward: expert masks must cover every layer");
  }

  ForwardCapture cap;
  std::vector<int64_t> pos_idx(static_cast<size_t>(t_count));
  for (int64_t i = 0; i < t_count; ++i) pos_idx[static_cast<size_t>(i)] = i;
  Tensor x = add(embedding(tok_emb, tokens), take_rows(pos_emb, pos_idx));

  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    // attention sublayer
    Tensor xn = rms_norm(x, layer.ln_attn_gain);
    std::vector<Tensor> head_outs;
    std::vector<Tensor> head_probs;
    head_outs.reserve(layer.attn.wq.size());
    for (size_t h = 0; h < layer.attn.wq.size(); ++h) {
      Tensor q = matmul(xn, layer.attn.wq[h]);
      Tensor k = matmul(xn, layer.attn.wk[h]);
      Tensor v = matmul(xn, layer.attn.wv[h]);
      auto [out, probs] = causal_attention(q, k, v);
      head_outs.push_back(out);
      if (flags.attention) head_probs.push_back(probs.detached());
    }
    Tensor att = matmul(concat(head_outs, 1), layer.attn.wo);
    x = add(x, att);
    if (flags.attention) cap.attention.push_back(std::move(head_probs));

    // MoE sublayer
    Tensor mn = rms_norm(x, layer.ln_moe_gain);
    const std::vector<int>* layer_mask = masks != nullptr ? &(*masks)[l] : nullptr;
    auto moe = moe_layer_forward(mn, layer, cfg_.top_k, layer_mask, renormalize_masked_gates,
                                 flags.router_probs_in_graph);
    x = add(x, moe.output);
    if (flags.hidden) cap.hidden.push_back(x.detached());
    cap.selected_sets.push_back(moe.trace.selected);
    if (flags.routing) cap.routing.push_back(std::move(moe.trace));
    if (flags.router_probs_in_graph) cap.router_probs.push_back(std::move(moe.router_probs));
  }

  Tensor xf = rms_norm(x, ln_final_gain);
  cap.logits = matmul(xf, unembed);
  return cap;
}

Tensor MoEModel::lens_logits(const Tensor& hidden_row) const {
  Tensor h = hidden_row.rank() == 1 ? reshape(hidden_row, {1, hidden_row.dim(0)}) : hidden_row;
  return matmul(rms_norm(h, ln_final_gain), unembed);
}

std::vector<int> MoEModel::greedy_decode(std::span<const int> prompt, int max_new, int eos_id) const {
  if (prompt.empty()) throw std::invalid_argument("greedy_decode: empty prompt");
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> generated;
  for (int step = 0; step < max_new; ++step) {
    if (static_cast<int>(seq.size()) >= cfg_.max_seq_len) break;
    ForwardCapture cap = forward(seq);
    const int64_t v = cap.logits.dim(1);
    const double* row = cap.logits.data().data() + (static_cast<int64_t>(seq.size()) - 1) * v;
    int best = 0;
    for (int64_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = static_cast<int>(j);  // ties keep the lower id
    }
    if (best == eos_id) break;
    generated.push_back(best);
    seq.push_back(best);
  }
  return generated;
}

}  // namespace rlns
