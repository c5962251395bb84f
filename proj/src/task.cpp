#include "rlns/task.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rlns {

int Vocab::id(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end()) throw std::invalid_argument("tokenizer: out-of-vocabulary word '" + word + "'");
  return it->second;
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == pad_id || i == eos_id) continue;
    if (i < 0 || i >= static_cast<int>(words.size())) {
      throw std::invalid_argument("decode: id " + std::to_string(i) + " out of vocabulary");
    }
    if (!out.empty()) out.push_back(' ');
    out += words[static_cast<size_t>(i)];
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("vocab: cannot write " + path);
  for (const auto& w : words) f << w << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(f, line)) {
    v.index[line] = static_cast<int>(v.words.size());
    v.words.push_back(line);
  }
  v.pad_id = v.id("<pad>");
  v.eos_id = v.id("<eos>");
  return v;
}

namespace {

void add_word(Vocab& v, const std::string& w) {
  v.index[w] = static_cast<int>(v.words.size());
  v.words.push_back(w);
}

}  // namespace

World World::build(const WorldConfig& cfg) {
  World w;
  w.cfg = cfg;
  add_word(w.vocab, "<pad>");
  add_word(w.vocab, "<eos>");
  w.vocab.pad_id = 0;
  w.vocab.eos_id = 1;
  for (const char* t : {"context", ":", ".", "question", "?", "answer"}) add_word(w.vocab, t);

  auto add_pool = [&w](std::vector<int>& pool, const std::string& prefix, int n) {
    for (int i = 0; i < n; ++i) {
      pool.push_back(static_cast<int>(w.vocab.words.size()));
      add_word(w.vocab, prefix + std::to_string(i));
    }
  };
  add_pool(w.parametric_entities, "pe", cfg.n_parametric_entities);
  add_pool(w.lookup_entities, "le", cfg.n_lookup_entities);
  add_pool(w.values, "val", cfg.n_values);
  add_pool(w.relations, "rel", cfg.n_relations);
  add_pool(w.filler, "w", cfg.n_filler_words);

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x776f726c64));  // "world"
  w.canonical.assign(static_cast<size_t>(cfg.n_parametric_entities),
                     std::vector<int>(static_cast<size_t>(cfg.n_relations), 0));
  for (auto& row : w.canonical) {
    for (auto& v : row) v = w.values[rand_index(rng, w.values.size())];
  }
  return w;
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "kv_lookup") return TaskKind::kv_lookup;
  if (s == "counterfactual_swap") return TaskKind::counterfactual_swap;
  if (s == "multihop_2") return TaskKind::multihop_2;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kv_lookup: return "kv_lookup";
    case TaskKind::counterfactual_swap: return "counterfactual_swap";
    case TaskKind::multihop_2: return "multihop_2";
  }
  return "?";
}

namespace {

struct Fact {
  std::string subject, relation, object;
  std::string text() const { return subject + " " + relation + " " + object + " ."; }
};

std::string join_facts(const std::vector<Fact>& facts) {
  std::string out;
  for (const auto& f : facts) {
    if (!out.empty()) out.push_back(' ');
    out += f.text();
  }
  return out;
}

// Split a shuffled pool into train/val/test index pools (70/10/20).
template <class T>
void split_pool(std::vector<T>& pool, std::mt19937_64& rng, std::vector<T>& tr, std::vector<T>& va,
                std::vector<T>& te) {
  for (size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rand_index(rng, i)]);
  const size_t n = pool.size();
  size_t n_tr = std::max<size_t>(1, n * 7 / 10);
  size_t n_va = std::max<size_t>(1, n / 10);
  if (n_tr + n_va >= n) {
    n_tr = n > 2 ? n - 2 : 1;
    n_va = n > 1 ? 1 : 0;
  }
  tr.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_tr));
  va.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_tr),
            pool.begin() + static_cast<std::ptrdiff_t>(n_tr + n_va));
  te.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_tr + n_va), pool.end());
}

}  // namespace

Dataset generate(const World& world, const TaskSpec& spec) {
  const auto& w = world;
  const int n_rel = w.cfg.n_relations;
  std::mt19937_64 rng(mix_seed(spec.seed, 0x7461736b + static_cast<uint64_t>(spec.kind)));
  Dataset ds;
  ds.id = to_string(spec.kind);
  const int total = spec.n_train + spec.n_val + spec.n_test;
  if (spec.facts_per_context < 1) throw std::invalid_argument("generate: facts_per_context must be >= 1");

  auto word = [&w](int id) { return w.vocab.words[static_cast<size_t>(id)]; };

  if (spec.kind == TaskKind::counterfactual_swap || spec.kind == TaskKind::kv_lookup) {
    const bool counterfactual = spec.kind == TaskKind::counterfactual_swap;
    const auto& entities = counterfactual ? w.parametric_entities : w.lookup_entities;
    const int n_ent = static_cast<int>(entities.size());
    if (spec.facts_per_context > n_ent) {
      throw std::invalid_argument("generate: facts_per_context exceeds entity pool");
    }
    std::vector<std::pair<int, int>> pairs;
    for (int e = 0; e < n_ent; ++e) {
      for (int r = 0; r < n_rel; ++r) pairs.emplace_back(e, r);
    }
    if (static_cast<int>(pairs.size()) < 5) throw std::invalid_argument("generate: entity/relation pools too small");
    std::vector<std::pair<int, int>> pool_tr, pool_va, pool_te;
    split_pool(pairs, rng, pool_tr, pool_va, pool_te);

    auto make_split = [&](std::vector<TaskSample>& out, const std::vector<std::pair<int, int>>& pool, int count,
                          const std::string& tag) {
      for (int i = 0; i < count; ++i) {
        const auto [qe, qr] = pool[rand_index(rng, pool.size())];
        // displayed value of the queried fact
        int gold;
        if (counterfactual) {
          const int canon = w.canonical[static_cast<size_t>(qe)][static_cast<size_t>(qr)];
          do {
            gold = w.values[rand_index(rng, w.values.size())];
          } while (gold == canon);
        } else {
          gold = w.values[rand_index(rng, w.values.size())];
        }
        std::vector<Fact> facts;
        facts.push_back({word(entities[static_cast<size_t>(qe)]), word(w.relations[static_cast<size_t>(qr)]),
                         word(gold)});
        std::set<std::pair<int, int>> used{{qe, qr}};
        while (static_cast<int>(facts.size()) < spec.facts_per_context) {
          const auto [de, dr] = pool[rand_index(rng, pool.size())];
          if (used.count({de, dr}) != 0) continue;
          used.insert({de, dr});
          int dv;
          do {
            dv = w.values[rand_index(rng, w.values.size())];
            // distractor values stay off the gold answer so spans are exact;
            // counterfactual distractors also avoid their own canonical value
          } while (dv == gold ||
                   (counterfactual && dv == w.canonical[static_cast<size_t>(de)][static_cast<size_t>(dr)]));
          facts.push_back({word(entities[static_cast<size_t>(de)]), word(w.relations[static_cast<size_t>(dr)]),
                           word(dv)});
        }
        for (size_t j = facts.size(); j > 1; --j) std::swap(facts[j - 1], facts[rand_index(rng, j)]);
        TaskSample s;
        s.id = ds.id + "-" + tag + "-" + std::to_string(i);
        s.context = join_facts(facts);
        s.query = word(entities[static_cast<size_t>(qe)]) + " " + word(w.relations[static_cast<size_t>(qr)]) + " ?";
        s.answer = word(gold);
        if (counterfactual) {
          s.parametric_answer = word(w.canonical[static_cast<size_t>(qe)][static_cast<size_t>(qr)]);
        }
        out.push_back(std::move(s));
      }
    };
    make_split(ds.train, pool_tr, spec.n_train, "train");
    make_split(ds.val, pool_va, spec.n_val, "val");
    make_split(ds.test, pool_te, spec.n_test, "test");
    return ds;
  }

  // multihop_2: chain a --r1--> b, b --r2--> value
  const auto& ents = w.lookup_entities;
  const int n_ent = static_cast<int>(ents.size());
  if (n_ent < spec.facts_per_context + 2) throw std::invalid_argument("generate: lookup pool too small for multihop");
  std::set<std::tuple<int, int, int, int>> chain_set;
  std::vector<std::tuple<int, int, int, int>> chains;
  const int want_chains = std::min(total, n_ent * (n_ent - 1));
  int guard = 0;
  while (static_cast<int>(chains.size()) < std::max(16, want_chains / 4) && guard++ < 100000) {
    int a = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_ent)));
    int b = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_ent)));
    if (a == b) continue;
    int r1 = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_rel)));
    int r2 = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_rel)));
    auto key = std::make_tuple(a, r1, b, r2);
    if (chain_set.insert(key).second) chains.push_back(key);
  }
  std::vector<std::tuple<int, int, int, int>> pool_tr, pool_va, pool_te;
  split_pool(chains, rng, pool_tr, pool_va, pool_te);

  auto make_split = [&](std::vector<TaskSample>& out, const std::vector<std::tuple<int, int, int, int>>& pool,
                        int count, const std::string& tag) {
    for (int i = 0; i < count; ++i) {
      const auto [a, r1, b, r2] = pool[rand_index(rng, pool.size())];
      const int gold = w.values[rand_index(rng, w.values.size())];
      std::vector<Fact> facts;
      facts.push_back({word(ents[static_cast<size_t>(a)]), word(w.relations[static_cast<size_t>(r1)]),
                       word(ents[static_cast<size_t>(b)])});
      facts.push_back({word(ents[static_cast<size_t>(b)]), word(w.relations[static_cast<size_t>(r2)]), word(gold)});
      std::set<int> used_ents{a, b};
      while (static_cast<int>(facts.size()) < std::max(2, spec.facts_per_context)) {
        const int de = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_ent)));
        if (used_ents.count(de) != 0) continue;
        used_ents.insert(de);
        const int dr = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_rel)));
        int dv;
        do {
          dv = w.values[rand_index(rng, w.values.size())];
        } while (dv == gold);
        facts.push_back({word(ents[static_cast<size_t>(de)]), word(w.relations[static_cast<size_t>(dr)]),
                         word(dv)});
      }
      for (size_t j = facts.size(); j > 1; --j) std::swap(facts[j - 1], facts[rand_index(rng, j)]);
      TaskSample s;
      s.id = ds.id + "-" + tag + "-" + std::to_string(i);
      s.context = join_facts(facts);
      s.query = word(ents[static_cast<size_t>(a)]) + " " + word(w.relations[static_cast<size_t>(r1)]) + " " +
                word(w.relations[static_cast<size_t>(r2)]) + " ?";
      s.answer = word(gold);
      out.push_back(std::move(s));
    }
  };
  make_split(ds.train, pool_tr, spec.n_train, "train");
  make_split(ds.val, pool_va, spec.n_val, "val");
  make_split(ds.test, pool_te, spec.n_test, "test");
  return ds;
}

void save_dataset_jsonl(const std::string& path, std::span<const TaskSample> samples) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  for (const auto& s : samples) {
    nlohmann::json j{{"id", s.id}, {"context", s.context}, {"query", s.query}, {"answer", s.answer}};
    if (!s.parametric_answer.empty()) j["parametric_answer"] = s.parametric_answer;
    f << j.dump() << "\n";
  }
}

std::vector<TaskSample> load_dataset_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot open " + path);
  std::vector<TaskSample> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    TaskSample s;
    s.id = j.at("id").get<std::string>();
    s.context = j.at("context").get<std::string>();
    s.query = j.at("query").get<std::string>();
    s.answer = j.at("answer").get<std::string>();
    s.parametric_answer = j.value("parametric_answer", "");
    out.push_back(std::move(s));
  }
  return out;
}

RenderedSample render_prompt(const World& world, const TaskSample& sample) {
  const Vocab& v = world.vocab;
  RenderedSample r;
  const std::vector<int> ctx = v.encode(sample.context);
  const std::vector<int> qry = v.encode(sample.query);
  r.answer_ids = v.encode(sample.answer);
  if (r.answer_ids.empty()) throw std::invalid_argument("render_prompt: empty answer");

  r.prompt.push_back(v.id("context"));
  r.prompt.push_back(v.id(":"));
  const int64_t ctx_begin = static_cast<int64_t>(r.prompt.size());
  r.prompt.insert(r.prompt.end(), ctx.begin(), ctx.end());
  const int64_t ctx_end = static_cast<int64_t>(r.prompt.size());
  r.prompt.push_back(v.id("question"));
  r.prompt.push_back(v.id(":"));
  r.prompt.insert(r.prompt.end(), qry.begin(), qry.end());
  r.prompt.push_back(v.id("answer"));
  r.prompt.push_back(v.id(":"));

  r.full = r.prompt;
  r.full.insert(r.full.end(), r.answer_ids.begin(), r.answer_ids.end());
  r.full.push_back(v.eos_id);

  for (int64_t i = ctx_begin; i < ctx_end; ++i) r.spans.context_token_indices.push_back(i);
  // first occurrence of the answer token sequence inside the context
  for (int64_t i = ctx_begin; i + static_cast<int64_t>(r.answer_ids.size()) <= ctx_end; ++i) {
    bool match = true;
    for (size_t j = 0; j < r.answer_ids.size(); ++j) {
      if (r.prompt[static_cast<size_t>(i) + j] != r.answer_ids[j]) {
        match = false;
        break;
      }
    }
    if (match) {
      for (size_t j = 0; j < r.answer_ids.size(); ++j) {
        r.spans.answer_token_indices.push_back(i + static_cast<int64_t>(j));
      }
      break;
    }
  }
  r.spans.last_prompt_index = static_cast<int64_t>(r.prompt.size()) - 1;

  r.loss_mask.assign(r.full.size(), 0.0);
  // positions predicting the answer tokens and the closing eos
  for (size_t t = r.prompt.size() - 1; t + 1 < r.full.size(); ++t) r.loss_mask[t] = 1.0;
  return r;
}

std::string normalize_answer(const std::string& s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      lowered.push_back(' ');
    }
  }
  std::istringstream is(lowered);
  std::string w, out;
  while (is >> w) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

double exact_match(const std::string& pred, const std::string& gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1.0 : 0.0;
}

double token_f1(const std::string& pred, const std::string& gold) {
  auto tokens = [](const std::string& s) {
    std::istringstream is(normalize_answer(s));
    std::vector<std::string> out;
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
  };
  const auto p = tokens(pred);
  const auto g = tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& w : g) counts[w]++;
  int overlap = 0;
  for (const auto& w : p) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      overlap++;
      it->second--;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

EvalReport evaluate(const MoEModel& model, const World& world, std::span<const TaskSample> samples,
                    const EvalOptions& opts) {
  EvalReport rep;
  for (const auto& s : samples) {
    RenderedSample r = render_prompt(world, s);
    std::vector<int> generated;
    if (opts.masks != nullptr) {
      // decode step by step with masks installed
      std::vector<int> seq = r.prompt;
      for (int step = 0; step < opts.max_answer_tokens; ++step) {
        if (static_cast<int>(seq.size()) >= model.config().max_seq_len) break;
        ForwardCapture cap = model.forward(seq, {}, opts.masks, opts.renormalize_masked_gates);
        const int64_t vsz = cap.logits.dim(1);
        const double* row = cap.logits.data().data() + (static_cast<int64_t>(seq.size()) - 1) * vsz;
        int best = 0;
        for (int64_t j = 1; j < vsz; ++j) {
          if (row[j] > row[best]) best = static_cast<int>(j);
        }
        if (best == world.vocab.eos_id) break;
        generated.push_back(best);
        seq.push_back(best);
      }
    } else {
      generated = model.greedy_decode(r.prompt, opts.max_answer_tokens, world.vocab.eos_id);
    }
    SampleResult res;
    res.id = s.id;
    res.pred = world.vocab.decode(generated);
    res.gold = s.answer;
    res.em = 100.0 * exact_match(res.pred, res.gold);
    res.f1 = 100.0 * token_f1(res.pred, res.gold);
    rep.em += res.em;
    rep.f1 += res.f1;
    rep.samples.push_back(std::move(res));
  }
  rep.n = static_cast<int>(rep.samples.size());
  if (rep.n > 0) {
    rep.em /= rep.n;
    rep.f1 /= rep.n;
  }
  return rep;
}

std::vector<std::vector<int>> build_corpus(const World& world, const CorpusConfig& cfg) {
  const auto& w = world;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x636f7270));  // "corp"
  const Vocab& v = w.vocab;
  const int id_ctx = v.index.at("context"), id_colon = v.index.at(":"), id_dot = v.index.at(".");
  const int id_q = v.index.at("question"), id_qm = v.index.at("?"), id_ans = v.index.at("answer");

  const double total_mix = cfg.mix_canonical + cfg.mix_parametric_qa + cfg.mix_lookup_qa + cfg.mix_filler;
  if (total_mix <= 0.0) throw std::invalid_argument("corpus: mix weights sum to zero");

  auto fit = [&cfg, &v](std::vector<int>& doc) {
    if (static_cast<int>(doc.size()) > cfg.seq_len) doc.resize(static_cast<size_t>(cfg.seq_len));
    while (static_cast<int>(doc.size()) < cfg.seq_len) doc.push_back(v.pad_id);
  };

  auto canonical_fact = [&](std::vector<int>& doc, int pe, int rel) {
    doc.push_back(w.parametric_entities[static_cast<size_t>(pe)]);
    doc.push_back(w.relations[static_cast<size_t>(rel)]);
    doc.push_back(w.canonical[static_cast<size_t>(pe)][static_cast<size_t>(rel)]);
    doc.push_back(id_dot);
  };

  std::vector<std::vector<int>> corpus;
  corpus.reserve(static_cast<size_t>(cfg.n_sequences));
  for (int i = 0; i < cfg.n_sequences; ++i) {
    const double u = rand_unit(rng) * total_mix;
    std::vector<int> doc;
    if (u < cfg.mix_canonical) {
      // plain canonical fact statements
      while (static_cast<int>(doc.size()) + 4 <= cfg.seq_len) {
        const int pe = static_cast<int>(rand_index(rng, w.parametric_entities.size()));
        const int rel = static_cast<int>(rand_index(rng, w.relations.size()));
        canonical_fact(doc, pe, rel);
      }
    } else if (u < cfg.mix_canonical + cfg.mix_parametric_qa) {
      // closed-book QA: question's pair absent from context, answer from memory
      const int qe = static_cast<int>(rand_index(rng, w.parametric_entities.size()));
      const int qr = static_cast<int>(rand_index(rng, w.relations.size()));
      doc.push_back(id_ctx);
      doc.push_back(id_colon);
      for (int k = 0; k < cfg.facts_per_context; ++k) {
        int pe, rel;
        do {
          pe = static_cast<int>(rand_index(rng, w.parametric_entities.size()));
          rel = static_cast<int>(rand_index(rng, w.relations.size()));
        } while (pe == qe && rel == qr);
        canonical_fact(doc, pe, rel);
      }
      doc.push_back(id_q);
      doc.push_back(id_colon);
      doc.push_back(w.parametric_entities[static_cast<size_t>(qe)]);
      doc.push_back(w.relations[static_cast<size_t>(qr)]);
      doc.push_back(id_qm);
      doc.push_back(id_ans);
      doc.push_back(id_colon);
      doc.push_back(w.canonical[static_cast<size_t>(qe)][static_cast<size_t>(qr)]);
      doc.push_back(v.eos_id);
    } else if (u < cfg.mix_canonical + cfg.mix_parametric_qa + cfg.mix_lookup_qa) {
      // open-book QA over lookup entities: answer only recoverable from context
      const int n_facts = cfg.facts_per_context;
      std::vector<int> ent(static_cast<size_t>(n_facts));
      std::set<int> used;
      for (auto& e : ent) {
        int cand;
        do {
          cand = static_cast<int>(rand_index(rng, w.lookup_entities.size()));
        } while (used.count(cand) != 0);
        used.insert(cand);
        e = cand;
      }
      const int q_slot = static_cast<int>(rand_index(rng, static_cast<uint64_t>(n_facts)));
      std::vector<int> rels(static_cast<size_t>(n_facts)), vals(static_cast<size_t>(n_facts));
      for (int k = 0; k < n_facts; ++k) {
        rels[static_cast<size_t>(k)] = static_cast<int>(rand_index(rng, w.relations.size()));
        vals[static_cast<size_t>(k)] = w.values[rand_index(rng, w.values.size())];
      }
      for (int k = 0; k < n_facts; ++k) {
        if (k == q_slot) continue;
        while (vals[static_cast<size_t>(k)] == vals[static_cast<size_t>(q_slot)]) {
          vals[static_cast<size_t>(k)] = w.values[rand_index(rng, w.values.size())];
        }
      }
      doc.push_back(id_ctx);
      doc.push_back(id_colon);
      for (int k = 0; k < n_facts; ++k) {
        doc.push_back(w.lookup_entities[static_cast<size_t>(ent[static_cast<size_t>(k)])]);
        doc.push_back(w.relations[static_cast<size_t>(rels[static_cast<size_t>(k)])]);
        doc.push_back(vals[static_cast<size_t>(k)]);
        doc.push_back(id_dot);
      }
      doc.push_back(id_q);
      doc.push_back(id_colon);
      doc.push_back(w.lookup_entities[static_cast<size_t>(ent[static_cast<size_t>(q_slot)])]);
      doc.push_back(w.relations[static_cast<size_t>(rels[static_cast<size_t>(q_slot)])]);
      doc.push_back(id_qm);
      doc.push_back(id_ans);
      doc.push_back(id_colon);
      doc.push_back(vals[static_cast<size_t>(q_slot)]);
      doc.push_back(v.eos_id);
    } else {
      // repeated-motif filler
      const int motif_len = 3 + static_cast<int>(rand_index(rng, 4));
      std::vector<int> motif(static_cast<size_t>(motif_len));
      for (auto& m : motif) m = w.filler[rand_index(rng, w.filler.size())];
      while (static_cast<int>(doc.size()) < cfg.seq_len) {
        doc.push_back(motif[doc.size() % motif.size()]);
      }
    }
    fit(doc);
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace rlns
