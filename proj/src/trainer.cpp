#include "rlns/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace rlns {

std::string to_string(RegimeMode m) {
  switch (m) {
    case RegimeMode::pretrain: return "pretrain";
    case RegimeMode::router_only: return "router_only";
    case RegimeMode::experts_only: return "experts_only";
    case RegimeMode::full: return "full";
  }
  return "?";
}

double lr_at(int64_t step, int64_t total_steps, const OptimizerConfig& cfg) {
  if (total_steps < 1) throw std::invalid_argument("lr_at: total_steps must be >= 1");
  if (step > total_steps) return 0.0;
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  const int64_t warmup = std::llround(cfg.warmup_ratio * static_cast<double>(total_steps));
  if (warmup > 0 && step <= warmup) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const int64_t span = total_steps - warmup;
  if (span <= 0) return cfg.peak_lr;
  const double frac = static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

AdamW::AdamW(std::vector<NamedParam> trainable, OptimizerConfig cfg) : params_(std::move(trainable)), cfg_(cfg) {
  moments_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    const size_t n = static_cast<size_t>(params_[i].tensor.numel());
    moments_[i].m.assign(n, 0.0);
    moments_[i].v.assign(n, 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.tensor.has_grad()) continue;  // no gradient flowed this step
    auto g = p.tensor.grad();
    auto d = p.tensor.data();
    auto& mm = moments_[i];
    for (size_t j = 0; j < d.size(); ++j) {
      mm.m[j] = cfg_.beta1 * mm.m[j] + (1.0 - cfg_.beta1) * g[j];
      mm.v[j] = cfg_.beta2 * mm.v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = mm.m[j] / bc1;
      const double vhat = mm.v[j] / bc2;
      d[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * d[j]);
    }
  }
}

std::vector<NamedParam> apply_regime(const MoEModel& model, const TrainRegime& regime) {
  model.set_all_requires_grad(false);
  const auto all = model.parameters();
  const int n_layers = model.config().n_layers;
  switch (regime.mode) {
    case RegimeMode::pretrain:
    case RegimeMode::full:
      for (auto& np : all) np.tensor.set_requires_grad(true);
      break;
    case RegimeMode::router_only: {
      std::vector<bool> on(static_cast<size_t>(n_layers), regime.router_layers.empty());
      for (int l : regime.router_layers) {
        if (l < 0 || l >= n_layers) throw std::invalid_argument("regime: router layer out of range");
        on[static_cast<size_t>(l)] = true;
      }
      for (int l = 0; l < n_layers; ++l) {
        if (on[static_cast<size_t>(l)]) model.layers[static_cast<size_t>(l)].router.set_requires_grad(true);
      }
      break;
    }
    case RegimeMode::experts_only: {
      if (static_cast<int>(regime.trainable_experts.size()) != n_layers) {
        throw std::invalid_argument("regime: trainable_experts must list every layer");
      }
      for (int l = 0; l < n_layers; ++l) {
        for (int e : regime.trainable_experts[static_cast<size_t>(l)]) {
          if (e < 0 || e >= model.config().n_experts) {
            throw std::invalid_argument("regime: expert index out of range");
          }
          auto& ex = model.layers[static_cast<size_t>(l)].experts[static_cast<size_t>(e)];
          ex.w1.set_requires_grad(true);
          ex.b1.set_requires_grad(true);
          ex.w2.set_requires_grad(true);
          ex.b2.set_requires_grad(true);
        }
      }
      break;
    }
  }
  std::vector<NamedParam> trainable;
  for (auto& np : all) {
    if (np.tensor.requires_grad()) trainable.push_back(np);
  }
  return trainable;
}

double load_balance_loss(std::span<const RoutingTrace> layer_traces, int n_experts, int top_k) {
  if (layer_traces.empty()) throw std::invalid_argument("load_balance_loss: no traces");
  double acc = 0.0;
  for (const auto& trace : layer_traces) {
    const size_t t_count = trace.scores.size();
    if (t_count == 0) throw std::invalid_argument("load_balance_loss: empty trace");
    std::vector<double> f(static_cast<size_t>(n_experts), 0.0);
    std::vector<double> p(static_cast<size_t>(n_experts), 0.0);
    for (size_t t = 0; t < t_count; ++t) {
      for (int e : trace.selected[t]) f[static_cast<size_t>(e)] += 1.0;
      const auto& row = trace.scores[t];
      double mx = row[0];
      for (double v : row) mx = std::max(mx, v);
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      for (int e = 0; e < n_experts; ++e) p[static_cast<size_t>(e)] += std::exp(row[static_cast<size_t>(e)] - mx) / z;
    }
    double layer_loss = 0.0;
    for (int e = 0; e < n_experts; ++e) {
      const double fe = f[static_cast<size_t>(e)] / (static_cast<double>(t_count) * top_k);
      const double pe = p[static_cast<size_t>(e)] / static_cast<double>(t_count);
      layer_loss += fe * pe;
    }
    acc += layer_loss * n_experts;
  }
  return acc / static_cast<double>(layer_traces.size());
}

namespace {

// Differentiable twin of load_balance_loss built from a capture with
// in-graph router probabilities; selection counts enter as constants.
Tensor aux_loss_from_capture(const ForwardCapture& cap, int n_experts, int top_k) {
  Tensor acc = Tensor::scalar(0.0);
  const size_t n_layers = cap.router_probs.size();
  for (size_t l = 0; l < n_layers; ++l) {
    const auto& sel = cap.selected_sets[l];
    const auto t_count = static_cast<double>(sel.size());
    std::vector<double> f(static_cast<size_t>(n_experts), 0.0);
    for (const auto& per_token : sel) {
      for (int e : per_token) f[static_cast<size_t>(e)] += 1.0;
    }
    for (auto& v : f) v /= t_count * top_k;
    Tensor f_const(Shape{n_experts}, std::vector<double>(f.begin(), f.end()));
    Tensor p_mean = mean_over_rows(cap.router_probs[l]);
    acc = add(acc, scale(sum_all(mul(p_mean, f_const)), static_cast<double>(n_experts)));
  }
  return scale(acc, 1.0 / static_cast<double>(n_layers));
}

}  // namespace

BatchItem lm_item(const std::vector<int>& seq, int pad_id, const std::string& id) {
  BatchItem item;
  item.tokens = seq;
  item.id = id;
  item.loss_mask.assign(seq.size(), 0.0);
  for (size_t t = 0; t + 1 < seq.size(); ++t) {
    if (seq[t + 1] != pad_id) item.loss_mask[t] = 1.0;
  }
  return item;
}

FitReport fit(const MoEModel& model, const TrainRegime& regime, const BatchSampler& sampler, const FitConfig& cfg) {
  auto trainable = apply_regime(model, regime);
  AdamW opt(trainable, cfg.opt);
  std::mt19937_64 rng(cfg.data_seed);
  const bool use_aux = regime.aux_loss_weight > 0.0;

  FitReport rep;
  rep.regime = to_string(regime.mode);
  rep.opt = cfg.opt;
  rep.steps = cfg.steps;
  rep.batch_size = cfg.batch_size;
  rep.task_losses.reserve(static_cast<size_t>(cfg.steps));
  rep.aux_losses.reserve(static_cast<size_t>(cfg.steps));

  double initial_loss = 0.0;
  int initial_count = 0;

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    opt.zero_grad();
    double step_task = 0.0, step_aux = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      BatchItem item = sampler(rng);
      if (item.tokens.size() < 2) throw std::invalid_argument("fit: batch item shorter than 2 tokens");
      Tape tape;
      TapeScope scope(tape);
      CaptureFlags flags;
      flags.router_probs_in_graph = use_aux;
      ForwardCapture cap = model.forward(item.tokens, flags);

      const size_t t_count = item.tokens.size();
      std::vector<int> targets(t_count, 0);
      for (size_t t = 0; t + 1 < t_count; ++t) targets[t] = item.tokens[t + 1];
      if (item.loss_mask.size() != t_count || item.loss_mask.back() != 0.0) {
        throw std::invalid_argument("fit: loss mask must match tokens and end with 0");
      }
      Tensor task = cross_entropy(cap.logits, targets, item.loss_mask);
      const double task_v = task.item();
      if (!std::isfinite(task_v)) {
        throw NumericError("fit: non-finite task loss at step " + std::to_string(step) + ", batch item '" +
                           item.id + "'");
      }
      Tensor total = scale(task, 1.0 / cfg.batch_size);
      if (use_aux) {
        Tensor aux = aux_loss_from_capture(cap, model.config().n_experts, model.config().top_k);
        const double aux_v = aux.item();
        if (!std::isfinite(aux_v)) {
          throw NumericError("fit: non-finite aux loss at step " + std::to_string(step) + ", batch item '" +
                             item.id + "'");
        }
        step_aux += aux_v / cfg.batch_size;
        total = add(total, scale(aux, regime.aux_loss_weight / cfg.batch_size));
      }
      step_task += task_v / cfg.batch_size;
      tape.backward(total);
    }
    opt.step(lr_at(step, cfg.steps, cfg.opt));
    rep.task_losses.push_back(step_task);
    rep.aux_losses.push_back(step_aux);

    if (initial_count < 10) {
      initial_loss = (initial_loss * initial_count + step_task) / (initial_count + 1);
      ++initial_count;
    } else if (step > cfg.steps / 5 && step_task > initial_loss) {
      rep.divergence_warning = true;
    }
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps)) {
      std::fprintf(stderr, "  step %5lld/%lld  task %.4f  aux %.4f\n", static_cast<long long>(step),
                   static_cast<long long>(cfg.steps), step_task, step_aux);
    }
  }
  opt.zero_grad();
  return rep;
}

UsageReport expert_usage(const MoEModel& model, std::span<const std::vector<int>> sequences) {
  const int n_layers = model.config().n_layers;
  const int n_experts = model.config().n_experts;
  UsageReport rep;
  rep.usage.assign(static_cast<size_t>(n_layers), std::vector<double>(static_cast<size_t>(n_experts), 0.0));
  double slots = 0.0;
  for (const auto& seq : sequences) {
    ForwardCapture cap = model.forward(seq);
    for (int l = 0; l < n_layers; ++l) {
      for (const auto& per_token : cap.selected_sets[static_cast<size_t>(l)]) {
        for (int e : per_token) rep.usage[static_cast<size_t>(l)][static_cast<size_t>(e)] += 1.0;
      }
    }
    slots += static_cast<double>(seq.size() * static_cast<size_t>(model.config().top_k));
  }
  rep.kl_per_layer.resize(static_cast<size_t>(n_layers), 0.0);
  for (int l = 0; l < n_layers; ++l) {
    double kl = 0.0;
    for (auto& u : rep.usage[static_cast<size_t>(l)]) {
      u /= slots;
      if (u > 0.0) kl += u * std::log(u * n_experts);
    }
    rep.kl_per_layer[static_cast<size_t>(l)] = kl;
    rep.mean_kl += kl / n_layers;
  }
  return rep;
}

double perplexity(const MoEModel& model, std::span<const std::vector<int>> sequences, int pad_id) {
  double nll = 0.0;
  double count = 0.0;
  for (const auto& seq : sequences) {
    ForwardCapture cap = model.forward(seq);
    const int64_t v = cap.logits.dim(1);
    for (size_t t = 0; t + 1 < seq.size(); ++t) {
      if (seq[t + 1] == pad_id) continue;
      const double* row = cap.logits.data().data() + static_cast<int64_t>(t) * v;
      double mx = row[0];
      for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
      nll += (mx + std::log(z)) - row[seq[t + 1]];
      count += 1.0;
    }
  }
  if (count == 0.0) throw std::invalid_argument("perplexity: no scored positions");
  return std::exp(nll / count);
}

}  // namespace rlns
