#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlns/analysis.hpp"
#include "rlns/checkpoint.hpp"
#include "rlns/router_lens.hpp"
#include "rlns/trainer.hpp"

namespace rlns {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat experiment configuration; one JSON file drives every subcommand.
// Unknown keys are rejected. RLNS_SEED overrides `seed`.
struct LabConfig {
  // model architecture
  int n_layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int n_experts = 8;
  int top_k = 2;
  int expert_hidden = 128;
  int max_seq_len = 48;
  // shared lexicon
  int n_parametric_entities = 48;
  int n_lookup_entities = 48;
  int n_values = 96;
  int n_relations = 8;
  int n_filler_words = 160;
  // task
  std::string task_kind = "counterfactual_swap";
  int task_train = 3000;
  int task_val = 500;
  int task_test = 500;
  int facts_per_context = 4;
  // pretraining
  int64_t pretrain_steps = 3000;
  int pretrain_batch = 8;
  int pretrain_seq_len = 32;
  double pretrain_lr = 3e-3;
  double aux_loss_weight = 0.01;
  double mix_canonical = 0.30;
  double mix_parametric_qa = 0.25;
  double mix_lookup_qa = 0.25;
  double mix_filler = 0.20;
  int corpus_sequences = 4096;
  int heldout_sequences = 256;
  // fine-tuning (router tuning, CEFT, FFT, ESFT)
  int64_t tune_steps = 500;
  int tune_batch = 8;
  double tune_lr = 5e-4;
  double warmup_ratio = 0.1;
  bool aux_in_finetune = false;
  // expert selection
  std::string selection_method = "router_lens";
  int k_sel = 2;
  std::vector<int> router_tuning_layers;  // empty = all layers
  std::string phase2_router = "base";     // "base" | "tuned"
  bool renormalize_masked_gates = false;
  std::string ratio_split = "train";  // "train" | "val"
  bool ratio_answer_only = false;
  // evaluation
  int max_answer_tokens = 4;
  uint64_t seed = 0;

  static LabConfig from_json_file(const std::string& path);
  static LabConfig from_json_text(const std::string& text);
  std::string to_json() const;
  void validate() const;

  // Digest over architecture + lexicon + task + seed: artifacts produced
  // under different values of these cannot be mixed.
  std::string compat_digest() const;

  ModelConfig model_config(int vocab_size) const;
  WorldConfig world_config() const;

  // One line per key: name, default, meaning.
  static std::string key_documentation();
};

// Materialized world + primary task dataset for a config.
struct Lab {
  LabConfig cfg;
  World world;
  Dataset data;

  static Lab build(const LabConfig& cfg);
  ModelConfig model_config() const { return cfg.model_config(static_cast<int>(world.vocab.words.size())); }
  Dataset dataset_for(TaskKind kind) const;
  std::span<const TaskSample> split(const std::string& name) const;

  std::vector<std::vector<int>> pretrain_corpus() const;
  std::vector<std::vector<int>> heldout_corpus() const;

  BatchSampler corpus_sampler(const std::vector<std::vector<int>>& corpus) const;
  BatchSampler task_sampler(std::span<const TaskSample> samples) const;
};

// Pipeline stages. Each returns its artifacts; file placement is the
// caller's concern.
struct PretrainResult {
  MoEModel model;
  FitReport fit;
  UsageReport usage;  // on the held-out corpus
};
PretrainResult run_pretrain(const Lab& lab, std::optional<double> aux_weight_override = std::nullopt);

struct TuneResult {
  MoEModel model;
  FitReport fit;
};
// Router tuning restricted to cfg.router_tuning_layers (or an explicit
// subset when `layers_override` is given).
TuneResult run_router_tune(const Lab& lab, const MoEModel& base,
                           const std::vector<int>* layers_override = nullptr);

struct ParamCountReport {
  int64_t total_params = 0;
  int64_t expert_params_total = 0;
  int64_t expert_params_trainable = 0;
  int64_t trainable_params = 0;
  double trainable_expert_fraction = 0.0;
};
ParamCountReport count_params(const MoEModel& model, const std::vector<NamedParam>& trainable);

struct SelectiveTuneResult {
  MoEModel model;
  FitReport fit;
  ExpertSelection selection;
  ContextDependenceReport report;
  ParamCountReport counts;
};
// CEFT: phase-1 selection on the router-tuned model, phase-2 expert-only
// training from the base checkpoint (router source per cfg.phase2_router).
SelectiveTuneResult run_ceft(const Lab& lab, const MoEModel& base, const MoEModel& rt,
                             std::optional<int> k_sel_override = std::nullopt);
// ESFT-style baseline: identical, but phase-1 runs on the base model.
SelectiveTuneResult run_esft(const Lab& lab, const MoEModel& base, std::optional<int> k_sel_override = std::nullopt);
TuneResult run_fft(const Lab& lab, const MoEModel& base);

MoEModel clone_model(const MoEModel& src);

}  // namespace rlns
