#include "rlns/lab.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rlns {

namespace {

struct KeyDoc {
  const char* name;
  const char* doc;
};

const KeyDoc kKeyDocs[] = {
    {"n_layers", "transformer layers (each attention + MoE)"},
    {"d_model", "residual stream width"},
    {"n_heads", "attention heads per layer"},
    {"n_experts", "experts per MoE layer"},
    {"top_k", "experts activated per token"},
    {"expert_hidden", "expert FFN inner width"},
    {"max_seq_len", "longest supported token sequence"},
    {"n_parametric_entities", "entities with canonical facts memorized in pretraining"},
    {"n_lookup_entities", "entities that only ever appear with in-context facts"},
    {"n_values", "value vocabulary size"},
    {"n_relations", "relation vocabulary size"},
    {"n_filler_words", "filler vocabulary for pretraining motifs"},
    {"task_kind", "kv_lookup | counterfactual_swap | multihop_2"},
    {"task_train", "task training samples"},
    {"task_val", "task validation samples"},
    {"task_test", "task test samples"},
    {"facts_per_context", "facts listed in each task context"},
    {"pretrain_steps", "pretraining optimizer steps"},
    {"pretrain_batch", "pretraining batch size"},
    {"pretrain_seq_len", "pretraining sequence length"},
    {"pretrain_lr", "pretraining peak learning rate"},
    {"aux_loss_weight", "load-balance loss weight during pretraining"},
    {"mix_canonical", "corpus share: plain canonical fact statements"},
    {"mix_parametric_qa", "corpus share: closed-book QA on canonical facts"},
    {"mix_lookup_qa", "corpus share: open-book lookup QA"},
    {"mix_filler", "corpus share: repeated-motif filler"},
    {"corpus_sequences", "pregenerated pretraining sequences"},
    {"heldout_sequences", "held-out sequences for usage/perplexity checks"},
    {"tune_steps", "fine-tuning steps (RT/CEFT/FFT/ESFT)"},
    {"tune_batch", "fine-tuning batch size"},
    {"tune_lr", "fine-tuning peak learning rate"},
    {"warmup_ratio", "fraction of steps spent in linear warmup"},
    {"aux_in_finetune", "keep load-balance loss during fine-tuning"},
    {"selection_method", "router_lens | base_activation | random"},
    {"k_sel", "experts selected per layer"},
    {"router_tuning_layers", "layer subset for router tuning; empty = all"},
    {"phase2_router", "router weights in CEFT phase 2: base | tuned"},
    {"renormalize_masked_gates", "renormalize surviving gates after masking"},
    {"ratio_split", "split used for the selection ratio: train | val"},
    {"ratio_answer_only", "count only answer-predicting positions in the ratio"},
    {"max_answer_tokens", "greedy decoding budget at evaluation"},
    {"seed", "master seed (env RLNS_SEED overrides)"},
};

}  // namespace

std::string LabConfig::key_documentation() {
  std::ostringstream os;
  for (const auto& kd : kKeyDocs) os << "  " << kd.name << " - " << kd.doc << "\n";
  return os.str();
}

LabConfig LabConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return from_json_text(buf.str());
}

LabConfig LabConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");

  std::set<std::string> known;
  for (const auto& kd : kKeyDocs) known.insert(kd.name);
  for (const auto& [key, _] : j.items()) {
    if (known.count(key) == 0) throw ConfigError("config: unknown key '" + key + "'");
  }

  LabConfig c;
  try {
    auto get = [&j](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k).template get<std::decay_t<decltype(dst)>>();
    };
    get("n_layers", c.n_layers);
    get("d_model", c.d_model);
    get("n_heads", c.n_heads);
    get("n_experts", c.n_experts);
    get("top_k", c.top_k);
    get("expert_hidden", c.expert_hidden);
    get("max_seq_len", c.max_seq_len);
    get("n_parametric_entities", c.n_parametric_entities);
    get("n_lookup_entities", c.n_lookup_entities);
    get("n_values", c.n_values);
    get("n_relations", c.n_relations);
    get("n_filler_words", c.n_filler_words);
    get("task_kind", c.task_kind);
    get("task_train", c.task_train);
    get("task_val", c.task_val);
    get("task_test", c.task_test);
    get("facts_per_context", c.facts_per_context);
    get("pretrain_steps", c.pretrain_steps);
    get("pretrain_batch", c.pretrain_batch);
    get("pretrain_seq_len", c.pretrain_seq_len);
    get("pretrain_lr", c.pretrain_lr);
    get("aux_loss_weight", c.aux_loss_weight);
    get("mix_canonical", c.mix_canonical);
    get("mix_parametric_qa", c.mix_parametric_qa);
    get("mix_lookup_qa", c.mix_lookup_qa);
    get("mix_filler", c.mix_filler);
    get("corpus_sequences", c.corpus_sequences);
    get("heldout_sequences", c.heldout_sequences);
    get("tune_steps", c.tune_steps);
    get("tune_batch", c.tune_batch);
    get("tune_lr", c.tune_lr);
    get("warmup_ratio", c.warmup_ratio);
    get("aux_in_finetune", c.aux_in_finetune);
    get("selection_method", c.selection_method);
    get("k_sel", c.k_sel);
    get("router_tuning_layers", c.router_tuning_layers);
    get("phase2_router", c.phase2_router);
    get("renormalize_masked_gates", c.renormalize_masked_gates);
    get("ratio_split", c.ratio_split);
    get("ratio_answer_only", c.ratio_answer_only);
    get("max_answer_tokens", c.max_answer_tokens);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value type: ") + e.what());
  }

  if (const char* env = std::getenv("RLNS_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("config: RLNS_SEED is not an unsigned integer");
    }
  }
  c.validate();
  return c;
}

void LabConfig::validate() const {
  try {
    model_config(100).validate();  // vocab filled in later; placeholder checks the rest
    task_kind_from_string(task_kind);
    selection_method_from_string(selection_method);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (phase2_router != "base" && phase2_router != "tuned") {
    throw ConfigError("config: phase2_router must be 'base' or 'tuned'");
  }
  if (ratio_split != "train" && ratio_split != "val") {
    throw ConfigError("config: ratio_split must be 'train' or 'val'");
  }
  if (k_sel < 1 || k_sel > n_experts) throw ConfigError("config: k_sel out of range");
  for (int l : router_tuning_layers) {
    if (l < 0 || l >= n_layers) throw ConfigError("config: router_tuning_layers entry out of range");
  }
  if (task_train < 1 || task_val < 1 || task_test < 1) throw ConfigError("config: split sizes must be >= 1");
  if (pretrain_steps < 1 || tune_steps < 1 || pretrain_batch < 1 || tune_batch < 1) {
    throw ConfigError("config: step/batch counts must be >= 1");
  }
  if (pretrain_seq_len < 2 || pretrain_seq_len > max_seq_len) {
    throw ConfigError("config: pretrain_seq_len must be in [2, max_seq_len]");
  }
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0) throw ConfigError("config: warmup_ratio must be in [0,1]");
  if (aux_loss_weight < 0.0) throw ConfigError("config: aux_loss_weight must be nonnegative");
  if (max_answer_tokens < 1) throw ConfigError("config: max_answer_tokens must be >= 1");
}

nlohmann::json config_json(const LabConfig& c) {
  return nlohmann::json{
      {"n_layers", c.n_layers},
      {"d_model", c.d_model},
      {"n_heads", c.n_heads},
      {"n_experts", c.n_experts},
      {"top_k", c.top_k},
      {"expert_hidden", c.expert_hidden},
      {"max_seq_len", c.max_seq_len},
      {"n_parametric_entities", c.n_parametric_entities},
      {"n_lookup_entities", c.n_lookup_entities},
      {"n_values", c.n_values},
      {"n_relations", c.n_relations},
      {"n_filler_words", c.n_filler_words},
      {"task_kind", c.task_kind},
      {"task_train", c.task_train},
      {"task_val", c.task_val},
      {"task_test", c.task_test},
      {"facts_per_context", c.facts_per_context},
      {"pretrain_steps", c.pretrain_steps},
      {"pretrain_batch", c.pretrain_batch},
      {"pretrain_seq_len", c.pretrain_seq_len},
      {"pretrain_lr", c.pretrain_lr},
      {"aux_loss_weight", c.aux_loss_weight},
      {"mix_canonical", c.mix_canonical},
      {"mix_parametric_qa", c.mix_parametric_qa},
      {"mix_lookup_qa", c.mix_lookup_qa},
      {"mix_filler", c.mix_filler},
      {"corpus_sequences", c.corpus_sequences},
      {"heldout_sequences", c.heldout_sequences},
      {"tune_steps", c.tune_steps},
      {"tune_batch", c.tune_batch},
      {"tune_lr", c.tune_lr},
      {"warmup_ratio", c.warmup_ratio},
      {"aux_in_finetune", c.aux_in_finetune},
      {"selection_method", c.selection_method},
      {"k_sel", c.k_sel},
      {"router_tuning_layers", c.router_tuning_layers},
      {"phase2_router", c.phase2_router},
      {"renormalize_masked_gates", c.renormalize_masked_gates},
      {"ratio_split", c.ratio_split},
      {"ratio_answer_only", c.ratio_answer_only},
      {"max_answer_tokens", c.max_answer_tokens},
      {"seed", c.seed},
  };
}

std::string LabConfig::to_json() const { return config_json(*this).dump(2); }

std::string LabConfig::compat_digest() const {
  nlohmann::json j{
      {"n_layers", n_layers},
      {"d_model", d_model},
      {"n_heads", n_heads},
      {"n_experts", n_experts},
      {"top_k", top_k},
      {"expert_hidden", expert_hidden},
      {"max_seq_len", max_seq_len},
      {"n_parametric_entities", n_parametric_entities},
      {"n_lookup_entities", n_lookup_entities},
      {"n_values", n_values},
      {"n_relations", n_relations},
      {"n_filler_words", n_filler_words},
      {"task_kind", task_kind},
      {"task_train", task_train},
      {"task_val", task_val},
      {"task_test", task_test},
      {"facts_per_context", facts_per_context},
      {"seed", seed},
  };
  return sha256_hex(j.dump());
}

ModelConfig LabConfig::model_config(int vocab_size) const {
  ModelConfig mc;
  mc.n_layers = n_layers;
  mc.d_model = d_model;
  mc.n_heads = n_heads;
  mc.vocab_size = vocab_size;
  mc.n_experts = n_experts;
  mc.top_k = top_k;
  mc.expert_hidden = expert_hidden;
  mc.max_seq_len = max_seq_len;
  mc.seed = seed;
  return mc;
}

WorldConfig LabConfig::world_config() const {
  WorldConfig wc;
  wc.n_parametric_entities = n_parametric_entities;
  wc.n_lookup_entities = n_lookup_entities;
  wc.n_values = n_values;
  wc.n_relations = n_relations;
  wc.n_filler_words = n_filler_words;
  wc.seed = seed;
  return wc;
}

Lab Lab::build(const LabConfig& cfg) {
  Lab lab;
  lab.cfg = cfg;
  lab.world = World::build(cfg.world_config());
  lab.data = lab.dataset_for(task_kind_from_string(cfg.task_kind));
  return lab;
}

Dataset Lab::dataset_for(TaskKind kind) const {
  TaskSpec spec;
  spec.kind = kind;
  spec.n_train = cfg.task_train;
  spec.n_val = cfg.task_val;
  spec.n_test = cfg.task_test;
  spec.facts_per_context = cfg.facts_per_context;
  spec.seed = cfg.seed;
  return generate(world, spec);
}

std::span<const TaskSample> Lab::split(const std::string& name) const {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw ConfigError("unknown split '" + name + "'");
}

std::vector<std::vector<int>> Lab::pretrain_corpus() const {
  CorpusConfig cc;
  cc.seq_len = cfg.pretrain_seq_len;
  cc.n_sequences = cfg.corpus_sequences;
  cc.mix_canonical = cfg.mix_canonical;
  cc.mix_parametric_qa = cfg.mix_parametric_qa;
  cc.mix_lookup_qa = cfg.mix_lookup_qa;
  cc.mix_filler = cfg.mix_filler;
  cc.seed = mix_seed(cfg.seed, 0x7072657472);
  return build_corpus(world, cc);
}

std::vector<std::vector<int>> Lab::heldout_corpus() const {
  CorpusConfig cc;
  cc.seq_len = cfg.pretrain_seq_len;
  cc.n_sequences = cfg.heldout_sequences;
  cc.mix_canonical = cfg.mix_canonical;
  cc.mix_parametric_qa = cfg.mix_parametric_qa;
  cc.mix_lookup_qa = cfg.mix_lookup_qa;
  cc.mix_filler = cfg.mix_filler;
  cc.seed = mix_seed(cfg.seed, 0x68656c64);
  return build_corpus(world, cc);
}

BatchSampler Lab::corpus_sampler(const std::vector<std::vector<int>>& corpus) const {
  const int pad = world.vocab.pad_id;
  return [&corpus, pad](std::mt19937_64& rng) {
    const size_t i = rand_index(rng, corpus.size());
    return lm_item(corpus[i], pad, "corpus-" + std::to_string(i));
  };
}

BatchSampler Lab::task_sampler(std::span<const TaskSample> samples) const {
  const World* w = &world;
  return [samples, w](std::mt19937_64& rng) {
    const auto& s = samples[rand_index(rng, samples.size())];
    RenderedSample r = render_prompt(*w, s);
    BatchItem item;
    item.tokens = std::move(r.full);
    item.loss_mask = std::move(r.loss_mask);
    item.id = s.id;
    return item;
  };
}

MoEModel clone_model(const MoEModel& src) {
  MoEModel dst = MoEModel::init(src.config());
  auto sp = src.parameters();
  auto dp = dst.parameters();
  for (size_t i = 0; i < sp.size(); ++i) {
    std::copy(sp[i].tensor.data().begin(), sp[i].tensor.data().end(), dp[i].tensor.data().begin());
  }
  return dst;
}

PretrainResult run_pretrain(const Lab& lab, std::optional<double> aux_weight_override) {
  PretrainResult res;
  res.model = MoEModel::init(lab.model_config());
  const auto corpus = lab.pretrain_corpus();

  TrainRegime regime;
  regime.mode = RegimeMode::pretrain;
  regime.aux_loss_weight = aux_weight_override.value_or(lab.cfg.aux_loss_weight);

  FitConfig fc;
  fc.steps = lab.cfg.pretrain_steps;
  fc.batch_size = lab.cfg.pretrain_batch;
  fc.opt.peak_lr = lab.cfg.pretrain_lr;
  fc.opt.warmup_ratio = lab.cfg.warmup_ratio;
  fc.data_seed = mix_seed(lab.cfg.seed, 0x64617461);
  fc.log_every = 200;

  res.fit = fit(res.model, regime, lab.corpus_sampler(corpus), fc);
  const auto heldout = lab.heldout_corpus();
  res.usage = expert_usage(res.model, heldout);
  return res;
}

TuneResult run_router_tune(const Lab& lab, const MoEModel& base, const std::vector<int>* layers_override) {
  TuneResult res;
  res.model = clone_model(base);

  TrainRegime regime;
  regime.mode = RegimeMode::router_only;
  regime.router_layers = layers_override != nullptr ? *layers_override : lab.cfg.router_tuning_layers;
  regime.aux_loss_weight = lab.cfg.aux_in_finetune ? lab.cfg.aux_loss_weight : 0.0;

  FitConfig fc;
  fc.steps = lab.cfg.tune_steps;
  fc.batch_size = lab.cfg.tune_batch;
  fc.opt.peak_lr = lab.cfg.tune_lr;
  fc.opt.warmup_ratio = lab.cfg.warmup_ratio;
  fc.data_seed = mix_seed(lab.cfg.seed, 0x72747565);
  fc.log_every = 100;

  res.fit = fit(res.model, regime, lab.task_sampler(lab.data.train), fc);
  return res;
}

ParamCountReport count_params(const MoEModel& model, const std::vector<NamedParam>& trainable) {
  ParamCountReport rep;
  for (const auto& np : model.parameters()) {
    rep.total_params += np.tensor.numel();
    if (np.name.find(".moe.expert") != std::string::npos) rep.expert_params_total += np.tensor.numel();
  }
  for (const auto& np : trainable) {
    rep.trainable_params += np.tensor.numel();
    if (np.name.find(".moe.expert") != std::string::npos) rep.expert_params_trainable += np.tensor.numel();
  }
  rep.trainable_expert_fraction =
      rep.expert_params_total > 0
          ? static_cast<double>(rep.expert_params_trainable) / static_cast<double>(rep.expert_params_total)
          : 0.0;
  return rep;
}

namespace {

SelectiveTuneResult run_selective(const Lab& lab, const MoEModel& base, const MoEModel& phase1_model,
                                  SelectionMethod method, std::optional<int> k_sel_override,
                                  const std::string& phase2_router) {
  SelectiveTuneResult res;
  const auto ratio_samples = lab.split(lab.cfg.ratio_split);
  RatioOptions ro;
  ro.answer_only = lab.cfg.ratio_answer_only;
  res.report = context_dependence_ratio(phase1_model, lab.world, ratio_samples, ro);
  res.report.source_dataset = lab.data.id + "/" + lab.cfg.ratio_split;

  const int k_sel = k_sel_override.value_or(lab.cfg.k_sel);
  res.selection = select_experts(res.report, k_sel, method);
  res.selection.provenance = sha256_hex(report_to_json(res.report));

  res.model = clone_model(base);
  if (phase2_router == "tuned") {
    // carry the tuned routers into phase 2
    for (size_t l = 0; l < res.model.layers.size(); ++l) {
      auto dst = res.model.layers[l].router.data();
      auto src = phase1_model.layers[l].router.data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  TrainRegime regime;
  regime.mode = RegimeMode::experts_only;
  regime.trainable_experts = res.selection.per_layer;
  regime.aux_loss_weight = lab.cfg.aux_in_finetune ? lab.cfg.aux_loss_weight : 0.0;

  FitConfig fc;
  fc.steps = lab.cfg.tune_steps;
  fc.batch_size = lab.cfg.tune_batch;
  fc.opt.peak_lr = lab.cfg.tune_lr;
  fc.opt.warmup_ratio = lab.cfg.warmup_ratio;
  fc.data_seed = mix_seed(lab.cfg.seed, 0x65787065);
  fc.log_every = 100;

  res.fit = fit(res.model, regime, lab.task_sampler(lab.data.train), fc);
  res.counts = count_params(res.model, apply_regime(res.model, regime));
  res.model.set_all_requires_grad(false);
  return res;
}

}  // namespace

SelectiveTuneResult run_ceft(const Lab& lab, const MoEModel& base, const MoEModel& rt,
                             std::optional<int> k_sel_override) {
  return run_selective(lab, base, rt, SelectionMethod::router_lens, k_sel_override, lab.cfg.phase2_router);
}

SelectiveTuneResult run_esft(const Lab& lab, const MoEModel& base, std::optional<int> k_sel_override) {
  return run_selective(lab, base, base, SelectionMethod::base_activation, k_sel_override, "base");
}

TuneResult run_fft(const Lab& lab, const MoEModel& base) {
  TuneResult res;
  res.model = clone_model(base);

  TrainRegime regime;
  regime.mode = RegimeMode::full;
  regime.aux_loss_weight = lab.cfg.aux_in_finetune ? lab.cfg.aux_loss_weight : 0.0;

  FitConfig fc;
  fc.steps = lab.cfg.tune_steps;
  fc.batch_size = lab.cfg.tune_batch;
  fc.opt.peak_lr = lab.cfg.tune_lr;
  fc.opt.warmup_ratio = lab.cfg.warmup_ratio;
  fc.data_seed = mix_seed(lab.cfg.seed, 0x66756c6c);
  fc.log_every = 100;

  res.fit = fit(res.model, regime, lab.task_sampler(lab.data.train), fc);
  return res;
}

}  // namespace rlns
