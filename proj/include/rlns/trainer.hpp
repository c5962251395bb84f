#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlns/model.hpp"

namespace rlns {

// Numerical failure during training/evaluation (non-finite loss etc).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RegimeMode { pretrain, router_only, experts_only, full };
std::string to_string(RegimeMode m);

struct TrainRegime {
  RegimeMode mode = RegimeMode::full;
  // experts_only: per-layer expert indices to train (routers stay frozen)
  std::vector<std::vector<int>> trainable_experts;
  // router_only: layer subset whose routers train; empty = all layers
  std::vector<int> router_layers;
  double aux_loss_weight = 0.0;  // load-balance pressure (pretraining)
};

struct OptimizerConfig {
  double peak_lr = 5e-4;
  double warmup_ratio = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Linear warmup from 0 to peak over round(warmup_ratio*total) steps, then
// cosine decay to 0 at total_steps. 1-based step; steps past the end clamp
// to 0.
double lr_at(int64_t step, int64_t total_steps, const OptimizerConfig& cfg);

class AdamW {
 public:
  AdamW(std::vector<NamedParam> trainable, OptimizerConfig cfg);
  void step(double lr);  // consumes .grad buffers of the trainable set
  void zero_grad();
  const std::vector<NamedParam>& trainable() const { return params_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<NamedParam> params_;
  std::vector<Moments> moments_;
  OptimizerConfig cfg_;
  int64_t t_ = 0;
};

// Flips requires_grad so that exactly the regime's trainable set is
// trainable; returns that set in registry order. Fresh optimizer state is
// the caller's job (a new AdamW per regime).
std::vector<NamedParam> apply_regime(const MoEModel& model, const TrainRegime& regime);

// Measurement-form load-balance loss over routing traces: per layer,
// N_e * sum_i f_i * P_i with f_i the top-k selection fraction (scaled 1/k)
// and P_i the mean full-softmax routing probability; mean over layers.
// Minimized at 1.0 by perfectly uniform routing.
double load_balance_loss(std::span<const RoutingTrace> layer_traces, int n_experts, int top_k);

// One training item: a token sequence and a mask where mask[t] weights the
// prediction of tokens[t+1] (last entry must be 0).
struct BatchItem {
  std::vector<int> tokens;
  std::vector<double> loss_mask;
  std::string id;
};

using BatchSampler = std::function<BatchItem(std::mt19937_64&)>;

struct FitConfig {
  int64_t steps = 100;
  int batch_size = 8;
  OptimizerConfig opt;
  uint64_t data_seed = 0;
  int log_every = 0;  // 0 = silent
};

struct FitReport {
  std::vector<double> task_losses;  // per step
  std::vector<double> aux_losses;   // per step (0 when unused)
  bool divergence_warning = false;
  std::string regime;
  OptimizerConfig opt;
  int64_t steps = 0;
  int batch_size = 0;
};

FitReport fit(const MoEModel& model, const TrainRegime& regime, const BatchSampler& sampler, const FitConfig& cfg);

BatchItem lm_item(const std::vector<int>& seq, int pad_id, const std::string& id);

// Expert usage over a token stream: per layer, fraction of selection slots
// taken by each expert (rows sum to 1), plus its KL from uniform.
struct UsageReport {
  std::vector<std::vector<double>> usage;  // [layer][expert]
  std::vector<double> kl_per_layer;        // nats
  double mean_kl = 0.0;
};
UsageReport expert_usage(const MoEModel& model, std::span<const std::vector<int>> sequences);

// exp(mean NLL) over positions whose next token is not pad.
double perplexity(const MoEModel& model, std::span<const std::vector<int>> sequences, int pad_id);

}  // namespace rlns
