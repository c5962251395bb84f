#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlns/model.hpp"

namespace rlns {

// Portable deterministic draws (avoids implementation-defined std
// distributions in anything that feeds digests).
inline uint64_t rand_index(std::mt19937_64& rng, uint64_t n) { return rng() % n; }
inline double rand_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

struct Vocab {
  std::vector<std::string> words;
  std::map<std::string, int> index;
  int pad_id = 0;
  int eos_id = 1;

  int id(const std::string& word) const;  // throws on out-of-vocabulary text
  std::vector<int> encode(const std::string& text) const;
  std::string decode(std::span<const int> ids) const;  // skips pad/eos

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
};

struct WorldConfig {
  int n_parametric_entities = 48;
  int n_lookup_entities = 48;
  int n_values = 96;
  int n_relations = 8;
  int n_filler_words = 160;
  uint64_t seed = 0;
};

// Shared lexicon and canonical fact table. Every task and the pretraining
// corpus draw from this single closed vocabulary, so models transfer
// between tasks without re-tokenization. Parametric entities carry
// canonical values memorized during pretraining; lookup entities never do.
struct World {
  WorldConfig cfg;
  Vocab vocab;
  std::vector<int> parametric_entities, lookup_entities, values, relations, filler;  // token ids
  std::vector<std::vector<int>> canonical;  // [pe_index][rel_index] -> value token id

  static World build(const WorldConfig& cfg);
};

struct SpanAnnotation {
  std::vector<int64_t> context_token_indices;
  std::vector<int64_t> answer_token_indices;  // subset of context indices
  int64_t last_prompt_index = -1;
};

struct TaskSample {
  std::string id;
  std::string context;
  std::string query;
  std::string answer;
  std::string parametric_answer;  // set only for counterfactual samples
};

enum class TaskKind { kv_lookup, counterfactual_swap, multihop_2 };
TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind k);

struct TaskSpec {
  TaskKind kind = TaskKind::counterfactual_swap;
  int n_train = 3000;
  int n_val = 500;
  int n_test = 500;
  int facts_per_context = 4;
  uint64_t seed = 0;
};

struct Dataset {
  std::string id;
  std::vector<TaskSample> train, val, test;
};

Dataset generate(const World& world, const TaskSpec& spec);
void save_dataset_jsonl(const std::string& path, std::span<const TaskSample> samples);
std::vector<TaskSample> load_dataset_jsonl(const std::string& path);

struct RenderedSample {
  std::vector<int> prompt;        // up to and including the final "answer :" marker
  std::vector<int> full;          // prompt + answer tokens + eos
  std::vector<int> answer_ids;
  std::vector<double> loss_mask;  // len == full.size(); mask[t] weights predicting full[t+1]
  SpanAnnotation spans;
};
RenderedSample render_prompt(const World& world, const TaskSample& sample);

// SQuAD-convention normalization: lowercase, punctuation stripped,
// articles dropped, whitespace collapsed.
std::string normalize_answer(const std::string& s);
double exact_match(const std::string& pred, const std::string& gold);  // 0 or 1
double token_f1(const std::string& pred, const std::string& gold);     // [0,1]

struct SampleResult {
  std::string id;
  std::string pred, gold;
  double em = 0.0, f1 = 0.0;  // 0-100 scale
};

struct EvalReport {
  double em = 0.0, f1 = 0.0;  // means, 0-100 scale
  int n = 0;
  std::vector<SampleResult> samples;
};

struct EvalOptions {
  int max_answer_tokens = 4;
  const ExpertMasks* masks = nullptr;
  bool renormalize_masked_gates = false;
};

EvalReport evaluate(const MoEModel& model, const World& world, std::span<const TaskSample> samples,
                    const EvalOptions& opts = {});

// Pretraining corpus: fixed-length token sequences mixing canonical fact
// statements, closed-book QA over canonical facts, open-book lookup QA
// over lookup entities, and repeated-motif filler.
struct CorpusConfig {
  int seq_len = 32;
  int n_sequences = 4096;
  double mix_canonical = 0.30;
  double mix_parametric_qa = 0.25;
  double mix_lookup_qa = 0.25;
  double mix_filler = 0.20;
  int facts_per_context = 3;
  uint64_t seed = 0;
};
std::vector<std::vector<int>> build_corpus(const World& world, const CorpusConfig& cfg);

}  // namespace rlns
