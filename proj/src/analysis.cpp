#include "rlns/analysis.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rlns {

double attention_mass(const ForwardCapture& cap, std::span<const int64_t> token_indices, int64_t last_prompt_index,
                      int layer) {
  if (token_indices.empty()) throw std::invalid_argument("attention_mass: empty token index set");
  if (layer < 0 || layer >= static_cast<int>(cap.attention.size())) {
    throw std::invalid_argument("attention_mass: layer out of range");
  }
  const auto& heads = cap.attention[static_cast<size_t>(layer)];
  const int64_t t_count = heads[0].dim(0);
  if (last_prompt_index < 0 || last_prompt_index >= t_count) {
    throw std::invalid_argument("attention_mass: last prompt index out of range");
  }
  double alpha = 0.0;
  for (int64_t idx : token_indices) {
    if (idx < 0 || idx >= t_count) throw std::invalid_argument("attention_mass: token index out of range");
    double mean = 0.0;
    for (const auto& head : heads) mean += head.at(last_prompt_index, idx);
    alpha += mean / static_cast<double>(heads.size());
  }
  return alpha;
}

double context_attention_mass(const ForwardCapture& cap, const SpanAnnotation& ann, int layer) {
  return attention_mass(cap, ann.context_token_indices, ann.last_prompt_index, layer);
}

std::vector<double> lens_answer_probabilities(const MoEModel& model, const ForwardCapture& cap,
                                              int64_t last_prompt_index, int answer_token,
                                              std::span<const int> answer_tokens, bool mean_logprob) {
  std::vector<double> out;
  out.reserve(cap.hidden.size());
  const int64_t d = model.config().d_model;
  for (const auto& hidden : cap.hidden) {
    std::vector<int64_t> row_idx{last_prompt_index};
    Tensor row = take_rows(hidden, row_idx);
    Tensor logits = model.lens_logits(row);
    const double* lrow = logits.data().data();
    const int64_t v = logits.dim(1);
    double mx = lrow[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, lrow[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(lrow[j] - mx);
    if (!mean_logprob || answer_tokens.size() <= 1) {
      out.push_back(std::exp(lrow[answer_token] - mx) / z);
    } else {
      // geometric-mean probability across the answer tokens under the lens
      double acc = 0.0;
      for (int tok : answer_tokens) acc += (lrow[tok] - mx) - std::log(z);
      out.push_back(std::exp(acc / static_cast<double>(answer_tokens.size())));
    }
  }
  (void)d;
  return out;
}

GainReport analyze_gains(const MoEModel& base, const MoEModel& tuned, const World& world,
                         std::span<const TaskSample> samples, const GainOptions& opts) {
  if (base.config().n_layers != tuned.config().n_layers || base.config().vocab_size != tuned.config().vocab_size) {
    throw std::invalid_argument("analyze_gains: models do not share a configuration");
  }
  const int n_layers = base.config().n_layers;
  GainReport rep;
  rep.n_samples = static_cast<int>(samples.size());
  auto resize2 = [&](std::vector<std::vector<double>>& v) { v.assign(static_cast<size_t>(n_layers), {}); };
  resize2(rep.alpha_ctx_base);
  resize2(rep.alpha_ctx_tuned);
  resize2(rep.alpha_ans_base);
  resize2(rep.alpha_ans_tuned);
  resize2(rep.p_base);
  resize2(rep.p_tuned);

  CaptureFlags flags;
  flags.attention = true;
  flags.hidden = true;

  for (const auto& s : samples) {
    RenderedSample r = render_prompt(world, s);
    ForwardCapture cb = base.forward(r.prompt, flags);
    ForwardCapture ct = tuned.forward(r.prompt, flags);
    const int answer_tok = r.answer_ids[0];
    std::vector<double> pb = lens_answer_probabilities(base, cb, r.spans.last_prompt_index, answer_tok,
                                                       r.answer_ids, opts.apg_mean_logprob);
    std::vector<double> pt = lens_answer_probabilities(tuned, ct, r.spans.last_prompt_index, answer_tok,
                                                       r.answer_ids, opts.apg_mean_logprob);
    for (int l = 0; l < n_layers; ++l) {
      rep.alpha_ctx_base[static_cast<size_t>(l)].push_back(
          attention_mass(cb, r.spans.context_token_indices, r.spans.last_prompt_index, l));
      rep.alpha_ctx_tuned[static_cast<size_t>(l)].push_back(
          attention_mass(ct, r.spans.context_token_indices, r.spans.last_prompt_index, l));
      const bool has_answer_span = !r.spans.answer_token_indices.empty();
      rep.alpha_ans_base[static_cast<size_t>(l)].push_back(
          has_answer_span ? attention_mass(cb, r.spans.answer_token_indices, r.spans.last_prompt_index, l) : 0.0);
      rep.alpha_ans_tuned[static_cast<size_t>(l)].push_back(
          has_answer_span ? attention_mass(ct, r.spans.answer_token_indices, r.spans.last_prompt_index, l) : 0.0);
      rep.p_base[static_cast<size_t>(l)].push_back(pb[static_cast<size_t>(l)]);
      rep.p_tuned[static_cast<size_t>(l)].push_back(pt[static_cast<size_t>(l)]);
    }
  }

  auto mean_gain = [&opts](const std::vector<double>& bs, const std::vector<double>& ts, int& included) {
    double acc = 0.0;
    int n = 0;
    for (size_t i = 0; i < bs.size(); ++i) {
      if (bs[i] < opts.exclusion_threshold) continue;
      acc += (ts[i] - bs[i]) / bs[i];
      ++n;
    }
    included = n;
    return n > 0 ? acc / n : 0.0;
  };

  rep.cag.resize(static_cast<size_t>(n_layers));
  rep.aag.resize(static_cast<size_t>(n_layers));
  rep.apg.resize(static_cast<size_t>(n_layers));
  rep.included_cag.resize(static_cast<size_t>(n_layers));
  rep.included_aag.resize(static_cast<size_t>(n_layers));
  rep.included_apg.resize(static_cast<size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    const auto li = static_cast<size_t>(l);
    rep.cag[li] = mean_gain(rep.alpha_ctx_base[li], rep.alpha_ctx_tuned[li], rep.included_cag[li]);
    rep.aag[li] = mean_gain(rep.alpha_ans_base[li], rep.alpha_ans_tuned[li], rep.included_aag[li]);
    rep.apg[li] = mean_gain(rep.p_base[li], rep.p_tuned[li], rep.included_apg[li]);
  }
  return rep;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  const size_t n = xs.size();
  if (n < 2) throw std::invalid_argument("pearson: need at least two points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: zero variance, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

double deep_layer_mean(std::span<const double> per_layer) {
  const size_t n = per_layer.size();
  if (n == 0) throw std::invalid_argument("deep_layer_mean: empty");
  const size_t take = (n + 2) / 3;  // ceil(n/3)
  double acc = 0.0;
  for (size_t i = n - take; i < n; ++i) acc += per_layer[i];
  return acc / static_cast<double>(take);
}

std::string gain_report_to_json(const GainReport& r) {
  nlohmann::json j;
  j["cag"] = r.cag;
  j["aag"] = r.aag;
  j["apg"] = r.apg;
  j["n_samples"] = r.n_samples;
  j["included"] = {{"cag", r.included_cag}, {"aag", r.included_aag}, {"apg", r.included_apg}};
  j["base_digest"] = r.base_digest;
  j["tuned_digest"] = r.tuned_digest;
  j["per_sample"] = {{"alpha_ctx_base", r.alpha_ctx_base}, {"alpha_ctx_tuned", r.alpha_ctx_tuned},
                     {"alpha_ans_base", r.alpha_ans_base}, {"alpha_ans_tuned", r.alpha_ans_tuned},
                     {"p_base", r.p_base},                 {"p_tuned", r.p_tuned}};
  return j.dump(2);
}

std::string gain_report_to_csv(const GainReport& r) {
  std::ostringstream os;
  os << "layer,metric,value\n";
  char buf[40];
  auto emit = [&os, &buf](const char* name, const std::vector<double>& vals) {
    for (size_t l = 0; l < vals.size(); ++l) {
      std::snprintf(buf, sizeof(buf), "%.10g", vals[l]);
      os << l << "," << name << "," << buf << "\n";
    }
  };
  emit("cag", r.cag);
  emit("aag", r.aag);
  emit("apg", r.apg);
  return os.str();
}

}  // namespace rlns
