#pragma once

#include <span>
#include <string>
#include <vector>

#include "rlns/task.hpp"

namespace rlns {

// Head-averaged attention mass from the last prompt position onto the
// given token indices, at one layer.
double attention_mass(const ForwardCapture& cap, std::span<const int64_t> token_indices, int64_t last_prompt_index,
                      int layer);
double context_attention_mass(const ForwardCapture& cap, const SpanAnnotation& ann, int layer);

enum class GainTarget { context, answer };

struct GainReport {
  std::vector<double> cag, aag, apg;  // per layer, mean relative gains
  int n_samples = 0;
  // per-layer included-sample counts; excluded = n_samples - included
  std::vector<int> included_cag, included_aag, included_apg;
  std::string base_digest, tuned_digest;
  // retained per-sample base/tuned values for audit: [layer][sample]
  std::vector<std::vector<double>> alpha_ctx_base, alpha_ctx_tuned;
  std::vector<std::vector<double>> alpha_ans_base, alpha_ans_tuned;
  std::vector<std::vector<double>> p_base, p_tuned;
};

struct GainOptions {
  double exclusion_threshold = 1e-12;
  bool apg_mean_logprob = false;  // alternative multi-token scoring
};

GainReport analyze_gains(const MoEModel& base, const MoEModel& tuned, const World& world,
                         std::span<const TaskSample> samples, const GainOptions& opts = {});

// Logit-lens probability of the answer's first token at every layer
// (final normalization applied before the unembedding).
std::vector<double> lens_answer_probabilities(const MoEModel& model, const ForwardCapture& cap,
                                              int64_t last_prompt_index, int answer_token,
                                              std::span<const int> answer_tokens, bool mean_logprob);

double pearson(std::span<const double> xs, std::span<const double> ys);

// Mean over the deepest ceil(n_layers/3) layers.
double deep_layer_mean(std::span<const double> per_layer);

std::string gain_report_to_json(const GainReport& r);
std::string gain_report_to_csv(const GainReport& r);

}  // namespace rlns
