#include "rlns/router_lens.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rlns {

ContextDependenceReport ratio_from_selected(const std::vector<SelectedSets>& per_sample, int n_layers,
                                            int n_experts, int top_k) {
  if (per_sample.empty()) throw std::invalid_argument("ratio: empty dataset");
  ContextDependenceReport rep;
  rep.n_samples = static_cast<int>(per_sample.size());
  rep.ratios.assign(static_cast<size_t>(n_layers), std::vector<double>(static_cast<size_t>(n_experts), 0.0));
  for (const auto& sample : per_sample) {
    if (static_cast<int>(sample.size()) != n_layers) throw std::invalid_argument("ratio: layer count mismatch");
    const size_t tokens = sample[0].size();
    rep.sample_token_counts.push_back(static_cast<int>(tokens));
    for (int l = 0; l < n_layers; ++l) {
      const auto& layer_sel = sample[static_cast<size_t>(l)];
      const double norm = 1.0 / (static_cast<double>(layer_sel.size()) * top_k * per_sample.size());
      for (const auto& per_token : layer_sel) {
        for (int e : per_token) rep.ratios[static_cast<size_t>(l)][static_cast<size_t>(e)] += norm;
      }
    }
  }
  return rep;
}

ContextDependenceReport context_dependence_ratio(const MoEModel& model, const World& world,
                                                 std::span<const TaskSample> samples, const RatioOptions& opts) {
  if (samples.empty()) throw std::invalid_argument("context_dependence_ratio: empty dataset");
  std::vector<SelectedSets> sel;
  sel.reserve(samples.size());
  for (const auto& s : samples) {
    RenderedSample r = render_prompt(world, s);
    ForwardCapture cap = model.forward(r.full);
    if (!opts.answer_only) {
      sel.push_back(std::move(cap.selected_sets));
      continue;
    }
    // keep only positions whose prediction carries answer loss
    SelectedSets filtered(cap.selected_sets.size());
    for (size_t l = 0; l < cap.selected_sets.size(); ++l) {
      for (size_t t = 0; t < cap.selected_sets[l].size(); ++t) {
        if (r.loss_mask[t] > 0.0) filtered[l].push_back(cap.selected_sets[l][t]);
      }
    }
    sel.push_back(std::move(filtered));
  }
  return ratio_from_selected(sel, model.config().n_layers, model.config().n_experts, model.config().top_k);
}

std::string to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::router_lens: return "router_lens";
    case SelectionMethod::base_activation: return "base_activation";
    case SelectionMethod::random: return "random";
  }
  return "?";
}

SelectionMethod selection_method_from_string(const std::string& s) {
  if (s == "router_lens") return SelectionMethod::router_lens;
  if (s == "base_activation") return SelectionMethod::base_activation;
  if (s == "random") return SelectionMethod::random;
  throw std::invalid_argument("unknown selection method '" + s + "'");
}

ExpertSelection select_experts(const ContextDependenceReport& report, int k_sel, SelectionMethod method) {
  const int n_experts = report.ratios.empty() ? 0 : static_cast<int>(report.ratios[0].size());
  if (k_sel < 1 || k_sel > n_experts) {
    throw std::invalid_argument("select_experts: k_sel=" + std::to_string(k_sel) + " out of range for " +
                                std::to_string(n_experts) + " experts");
  }
  ExpertSelection sel;
  sel.k_sel = k_sel;
  sel.method = method;
  for (const auto& ratios : report.ratios) {
    std::vector<int> order(ratios.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&ratios](int a, int b) {
      if (ratios[static_cast<size_t>(a)] != ratios[static_cast<size_t>(b)]) {
        return ratios[static_cast<size_t>(a)] > ratios[static_cast<size_t>(b)];
      }
      return a < b;
    });
    order.resize(static_cast<size_t>(k_sel));
    sel.per_layer.push_back(std::move(order));
  }
  return sel;
}

ExpertSelection random_selection(int n_layers, int n_experts, int k_sel, uint64_t seed) {
  if (k_sel < 1 || k_sel > n_experts) throw std::invalid_argument("random_selection: k_sel out of range");
  std::mt19937_64 rng(mix_seed(seed, 0x72616e64));
  ExpertSelection sel;
  sel.k_sel = k_sel;
  sel.method = SelectionMethod::random;
  for (int l = 0; l < n_layers; ++l) {
    std::vector<int> pool(static_cast<size_t>(n_experts));
    std::iota(pool.begin(), pool.end(), 0);
    for (size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rand_index(rng, i)]);
    pool.resize(static_cast<size_t>(k_sel));
    sel.per_layer.push_back(std::move(pool));
  }
  return sel;
}

ExpertMasks masks_from_selection(const ExpertSelection& sel, int n_layers) {
  if (static_cast<int>(sel.per_layer.size()) != n_layers) {
    throw std::invalid_argument("masks_from_selection: selection does not cover every layer");
  }
  return sel.per_layer;
}

MaskedEvalReport masked_evaluate(const MoEModel& model, const World& world, std::span<const TaskSample> samples,
                                 const ExpertSelection& sel, const EvalOptions& base_opts) {
  MaskedEvalReport rep;
  EvalOptions plain = base_opts;
  plain.masks = nullptr;
  rep.unmasked = evaluate(model, world, samples, plain);

  ExpertMasks masks = sel.per_layer.empty() ? ExpertMasks(static_cast<size_t>(model.config().n_layers))
                                            : masks_from_selection(sel, model.config().n_layers);
  EvalOptions masked = base_opts;
  masked.masks = &masks;
  rep.masked = evaluate(model, world, samples, masked);
  rep.em_delta = rep.masked.em - rep.unmasked.em;
  rep.f1_delta = rep.masked.f1 - rep.unmasked.f1;
  return rep;
}

std::vector<double> activation_feature_vector(const MoEModel& model, const World& world, const TaskSample& sample,
                                              const ExpertSelection& sel) {
  RenderedSample r = render_prompt(world, sample);
  ForwardCapture cap = model.forward(r.full);
  const int top_k = model.config().top_k;
  std::vector<double> features;
  features.reserve(sel.per_layer.size() * static_cast<size_t>(sel.k_sel));
  for (size_t l = 0; l < sel.per_layer.size(); ++l) {
    const auto& layer_sel = cap.selected_sets[l];
    const double norm = 1.0 / (static_cast<double>(layer_sel.size()) * top_k);
    for (int expert : sel.per_layer[l]) {
      double freq = 0.0;
      for (const auto& per_token : layer_sel) {
        for (int e : per_token) {
          if (e == expert) freq += norm;
        }
      }
      features.push_back(freq);
    }
  }
  return features;
}

std::string report_to_json(const ContextDependenceReport& r) {
  nlohmann::json j;
  j["ratios"] = r.ratios;
  j["n_samples"] = r.n_samples;
  j["sample_token_counts"] = r.sample_token_counts;
  j["source_model_digest"] = r.source_model_digest;
  j["source_dataset"] = r.source_dataset;
  return j.dump(2);
}

ContextDependenceReport report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ContextDependenceReport r;
  r.ratios = j.at("ratios").get<std::vector<std::vector<double>>>();
  r.n_samples = j.at("n_samples").get<int>();
  r.sample_token_counts = j.at("sample_token_counts").get<std::vector<int>>();
  r.source_model_digest = j.value("source_model_digest", "");
  r.source_dataset = j.value("source_dataset", "");
  return r;
}

std::string selection_to_json(const ExpertSelection& s) {
  nlohmann::json j;
  j["per_layer"] = s.per_layer;
  j["k_sel"] = s.k_sel;
  j["method"] = to_string(s.method);
  j["provenance"] = s.provenance;
  return j.dump(2);
}

ExpertSelection selection_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ExpertSelection s;
  s.per_layer = j.at("per_layer").get<std::vector<std::vector<int>>>();
  s.k_sel = j.at("k_sel").get<int>();
  s.method = selection_method_from_string(j.at("method").get<std::string>());
  s.provenance = j.value("provenance", "");
  return s;
}

std::string feature_csv_header(int n_layers, int k_sel) {
  std::ostringstream os;
  os << "dataset,sample";
  for (int l = 0; l < n_layers; ++l) {
    for (int k = 0; k < k_sel; ++k) os << ",layer" << l << "_sel" << k;
  }
  return os.str();
}

std::string feature_csv_row(const std::string& dataset_id, const std::string& sample_id,
                            std::span<const double> features) {
  std::ostringstream os;
  os << dataset_id << "," << sample_id;
  char buf[32];
  for (double f : features) {
    std::snprintf(buf, sizeof(buf), "%.10g", f);
    os << "," << buf;
  }
  return os.str();
}

}  // namespace rlns
