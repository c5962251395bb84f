#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlns/task.hpp"

namespace rlns {

// [layer][token][k] selected expert indices for one sample's forward pass.
using SelectedSets = std::vector<std::vector<std::vector<int>>>;

struct ContextDependenceReport {
  std::vector<std::vector<double>> ratios;  // [layer][expert], rows sum to 1
  int n_samples = 0;
  std::vector<int> sample_token_counts;
  std::string source_model_digest;
  std::string source_dataset;
};

// Selection-frequency ratio: each token contributes 1/k per selected
// expert, averaged per sample over its tokens and then over samples.
ContextDependenceReport ratio_from_selected(const std::vector<SelectedSets>& per_sample, int n_layers,
                                            int n_experts, int top_k);

struct RatioOptions {
  bool answer_only = false;  // count only positions carrying answer loss
};

ContextDependenceReport context_dependence_ratio(const MoEModel& model, const World& world,
                                                 std::span<const TaskSample> samples,
                                                 const RatioOptions& opts = {});

enum class SelectionMethod { router_lens, base_activation, random };
std::string to_string(SelectionMethod m);
SelectionMethod selection_method_from_string(const std::string& s);

struct ExpertSelection {
  std::vector<std::vector<int>> per_layer;  // k_sel indices, ratio-descending (ties: ascending index)
  int k_sel = 0;
  SelectionMethod method = SelectionMethod::router_lens;
  std::string provenance;  // digest of the report that produced it
};

ExpertSelection select_experts(const ContextDependenceReport& report, int k_sel,
                               SelectionMethod method = SelectionMethod::router_lens);
ExpertSelection random_selection(int n_layers, int n_experts, int k_sel, uint64_t seed);

ExpertMasks masks_from_selection(const ExpertSelection& sel, int n_layers);

// Evaluation with the selection's experts suppressed, plus the unmasked
// reference on the same samples.
struct MaskedEvalReport {
  EvalReport masked;
  EvalReport unmasked;
  double em_delta = 0.0;  // masked - unmasked
  double f1_delta = 0.0;
};
MaskedEvalReport masked_evaluate(const MoEModel& model, const World& world, std::span<const TaskSample> samples,
                                 const ExpertSelection& sel, const EvalOptions& base_opts = {});

// Per-layer activation frequency of the selection's experts over one
// sample's tokens (1/k scale as in the ratio), concatenated layer-major.
std::vector<double> activation_feature_vector(const MoEModel& model, const World& world, const TaskSample& sample,
                                              const ExpertSelection& sel);

// JSON / CSV serialization
std::string report_to_json(const ContextDependenceReport& r);
ContextDependenceReport report_from_json(const std::string& text);
std::string selection_to_json(const ExpertSelection& s);
ExpertSelection selection_from_json(const std::string& text);
std::string feature_csv_header(int n_layers, int k_sel);
std::string feature_csv_row(const std::string& dataset_id, const std::string& sample_id,
                            std::span<const double> features);

}  // namespace rlns
