// Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any
// criterion fails.
//
//   charlink_acceptance [--only N]... [--skip N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "charlink/eval.hpp"
#include "charlink/pipeline.hpp"
#include "charlink/retrieval.hpp"
#include "charlink/synthetic.hpp"
#include "charlink/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace charlink;
using testing::Rng;
using testing::uniform_below;
using testing::uniform_unit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// --- 1: analytic gradients vs central differences --------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  Rng rng(20240601);
  std::size_t models = 0, params = 0;
  double worst_rel = 0.0, worst_abs = 0.0;
  while (models < 25) {
    auto inst = testing::random_loss_instance(rng);
    if (!inst) continue;
    if (inst->model.vocabulary().size() > 50) continue;
    const auto r = testing::check_gradient(*inst, 1e-6);
    ++models;
    params += r.checked;
    worst_rel = std::max(worst_rel, r.max_rel_error);
    worst_abs = std::max(worst_abs, r.max_abs_error);
  }
  const double secs = seconds_since(t0);
  // components below 1e-8 have no meaningful relative error; they must agree absolutely
  const bool pass = worst_rel < 1e-4 && worst_abs < 1e-8 && secs < 10.0;
  return {pass, fmt("%zu models, %zu parameters, max rel err %.2e, max abs err (tiny) %.2e, %.2fs",
                    models, params, worst_rel, worst_abs, secs)};
}

// --- 2: blocked retrieval vs a naive double loop --------------------------

Outcome retrieval_oracle() {
  const auto t0 = Clock::now();
  Rng rng(20240602);
  std::size_t mismatches = 0, model_instances = 0;
  for (int round = 0; round < 100; ++round) {
    const auto n = 1 + uniform_below(rng, 2000);
    const unsigned workers = 1 + static_cast<unsigned>(uniform_below(rng, 4));
    if (round % 5 == 0) {
      // through the full retrieve_topk path with a random model
      ++model_instances;
      auto kb = testing::random_kb(rng, n, 2, true);
      auto model = CharagramModel::initialize(
          testing::small_vocabulary(rng, 60, "abcdefghijklmnopqrst", WindowSet({1, 2, 3})), 32,
          rng(), false, 0.3);
      const auto index = EmbeddingIndex::build(encode_kb(model, kb), kb);
      std::vector<float> rows;
      std::vector<EntityOrdinal> row_entity;
      for (EntityOrdinal e = 0; e < kb.size(); ++e) {
        const auto& ent = kb[e];
        std::vector<std::string> names = ent.name_set();
        if (ent.hrl_name) names.push_back(*ent.hrl_name);
        for (const auto& name : names) {
          const auto v = testing::reference_encode(model, name);
          const auto u = unit_query(v);
          rows.insert(rows.end(), u.begin(), u.end());
          row_entity.push_back(e);
        }
      }
      const Mention m{testing::random_word(rng, "abcdefghij", 2, 9), std::nullopt};
      const auto got = retrieve_topk(model, m, index, 30, workers);
      const auto q = unit_query(testing::reference_encode(model, m.surface));
      const auto want = testing::brute_force_topk(rows, 32, row_entity, kb.size(), q, 30);
      bool same = got.items.size() == want.size();
      for (std::size_t i = 0; same && i < want.size(); ++i) {
        same = got.items[i].entity_id == kb[want[i].entity].id &&
               static_cast<float>(got.items[i].score) == want[i].score;
      }
      mismatches += !same;
    } else {
      const auto d = testing::random_index_data(rng, n, 32, 3);
      const auto index = EmbeddingIndex::from_rows(32, d.rows, d.row_entity, d.ids);
      const auto q = testing::random_unit_query(rng, 32);
      mismatches += index.search(q, 30, workers) !=
                    testing::brute_force_topk(d.rows, 32, d.row_entity, n, q, 30);
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0,
          fmt("100 instances (%zu through encoder and retrieve_topk), %zu mismatches, %.2fs", model_instances,
              mismatches, secs)};
}

// --- 3: n-gram counts and bags ---------------------------------------------

Outcome ngram_oracle() {
  Rng rng(20240603);
  std::size_t count_errors = 0, bag_errors = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto windows = testing::random_windows(rng);
    const auto text = testing::random_text(rng, 1, 24);
    const auto bag = extract_ngrams(text, windows);
    std::size_t tokens = 0;
    for (const auto& [g, c] : bag) tokens += c;
    std::size_t expected = 0;
    const auto m = static_cast<long>(text.size()) + 2;
    for (int n : windows.sizes()) expected += static_cast<std::size_t>(std::max(0L, m - n + 1));
    count_errors += tokens != expected;
    bag_errors += bag != testing::brute_force_bag(text, windows);
  }
  return {count_errors == 0 && bag_errors == 0,
          fmt("1000 strings, %zu count mismatches, %zu bag mismatches", count_errors, bag_errors)};
}

// --- 4, 6, 8: synthetic cipher runs ----------------------------------------

RunConfig cipher_config(const std::filesystem::path& out) {
  RunConfig cfg;
  cfg.out_dir = out;
  cfg.synthetic_entities = 1000;
  cfg.synthetic_seed = 7;
  cfg.dim = 64;
  cfg.top_k = 30;
  cfg.train.batch_size = 64;
  cfg.train.learning_rate = 0.1;
  cfg.train.margin = 1.0;
  cfg.train.patience = 50;
  cfg.train.max_epochs = 200;
  cfg.train.seed = 1;
  return cfg;
}

struct CipherRun {
  RunResult result;
  double seconds = 0.0;
};

Outcome synthetic_end_to_end(const CipherRun& run) {
  const auto& r = *run.result.recall;
  const double top1 = static_cast<double>(r.in_top1) / static_cast<double>(r.n_mentions_scored);
  const bool pass = r.recall >= 0.95 && top1 >= 0.80 && run.seconds < 300.0;
  return {pass, fmt("held-out recall@30 %.4f (need >= 0.95), recall@1 %.4f (need >= 0.80), "
                    "%zu mentions, best epoch %zu, %.1fs",
                    r.recall, top1, r.n_mentions_scored, run.result.train_report.best_epoch,
                    run.seconds)};
}

Outcome pivot_term(const std::filesystem::path& run_dir) {
  const auto model = load_model(run_dir / "model.bin");
  const auto kb = KnowledgeBase::load(run_dir / "data" / "kb.tsv", run_dir / "data" / "aliases.tsv");
  const auto mentions = load_mentions(run_dir / "data" / "test_mentions.tsv", &kb).mentions;

  // every other held-out mention becomes its entity's HRL name
  std::vector<KbEntity> entities(kb.entities().begin(), kb.entities().end());
  std::vector<std::pair<std::string, EntityOrdinal>> pivoted;
  for (std::size_t i = 0; i < mentions.size(); i += 2) {
    const auto e = *kb.find(*mentions[i].gold_entity_id);
    if (entities[e].hrl_name) continue;
    entities[e].hrl_name = mentions[i].surface;
    pivoted.emplace_back(mentions[i].surface, e);
  }
  const auto with_hrl = KnowledgeBase::from_entities(entities);

  std::size_t not_first = 0, not_one = 0, not_lowered = 0, raised = 0;
  for (const auto& [surface, gold] : pivoted) {
    const auto v = model.encode(surface);
    double best_other = -INFINITY;
    double gold_with = 0.0;
    for (EntityOrdinal e = 0; e < kb.size(); ++e) {
      const double with = score_entity(model, v, with_hrl[e]);
      const double without = score_entity(model, v, kb[e]);
      raised += without > with;
      if (e == gold) {
        gold_with = with;
        not_lowered += !(without < with);
      } else {
        best_other = std::max(best_other, with);
      }
    }
    not_first += !(gold_with > best_other);
    not_one += std::abs(gold_with - 1.0) > 1e-12;
  }
  const bool pass = !pivoted.empty() && not_first + not_one + not_lowered + raised == 0;
  return {pass, fmt("%zu pivot mentions: %zu not ranked first, %zu with cosine != 1, %zu not lowered "
                    "by removal, %zu scores raised by removal (of %zu checked)",
                    pivoted.size(), not_first, not_one, not_lowered, raised,
                    pivoted.size() * kb.size())};
}

Outcome determinism(const std::filesystem::path& first, const std::filesystem::path& second) {
  std::size_t differing = 0;
  std::string which;
  for (const char* name : {"model.bin", "kb_index.bin", "candidates.tsv", "recall.tsv", "recall.json"}) {
    if (testing::read_file(first / name) != testing::read_file(second / name)) {
      ++differing;
      which += std::string(" ") + name;
    }
  }
  return {differing == 0, differing == 0
                              ? std::string("model, index, candidates and recall reports bitwise identical")
                              : "differing:" + which};
}

// --- 5: aliases --------------------------------------------------------------

Outcome alias_effect() {
  const auto t0 = Clock::now();
  SyntheticConfig sc;
  sc.num_entities = 1000;
  sc.seed = 11;
  sc.alias_fraction = 0.1;
  const auto task = make_cipher_task(sc);
  const auto [train_set, dev_set] = split_dev(concat(task.train_ee, task.train_me), 0.05, 1);
  auto model = CharagramModel::initialize(
      build_vocabulary(train_set, task.kb, WindowSet::defaults()), 64, 3);
  TrainConfig cfg;
  cfg.seed = 1;
  (void)train(model, train_set, dev_set, task.kb, cfg);

  auto recall_with = [&](NameVariants variants) {
    const auto index = EmbeddingIndex::build(encode_kb(model, task.kb, variants), task.kb);
    const auto lists = retrieve_topk_batch(model, task.alias_mentions, index, 30);
    return evaluate_recall(lists, 30).recall;
  };
  const double on = recall_with({true, true});
  const double off = recall_with({false, true});
  const double secs = seconds_since(t0);
  return {on - off >= 0.10, fmt("%zu alias mentions: recall@30 %.4f with aliases, %.4f without, "
                                "gain %.1f points (need >= 10), %.1fs",
                                task.alias_mentions.size(), on, off, 100.0 * (on - off), secs)};
}

// --- 7: merge ----------------------------------------------------------------

CandidateList sorted_list(Rng& rng, std::size_t n) {
  CandidateList l;
  for (std::size_t i = 0; i < n; ++i) l.items.push_back({"e" + std::to_string(1000 + i), uniform_unit(rng)});
  std::sort(l.items.begin(), l.items.end(), [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.entity_id < b.entity_id);
  });
  return l;
}

Outcome merge_checks() {
  Rng rng(20240607);
  std::size_t alpha1_bad = 0, alpha0_bad = 0;
  for (int round = 0; round < 200; ++round) {
    const auto lookup = sorted_list(rng, 1 + uniform_below(rng, 30));
    const auto chara = sorted_list(rng, 1 + uniform_below(rng, 30));
    MergeParams p{1.0, 100.0, 60};
    const auto a1 = merge_scores(lookup, chara, p);
    for (std::size_t i = 0; i < lookup.items.size(); ++i) {
      alpha1_bad += a1.items[i].entity_id != lookup.items[i].entity_id;
    }
    p.alpha = 0.0;
    const auto a0 = merge_scores(lookup, chara, p);
    for (std::size_t i = 0; i < chara.items.size(); ++i) {
      alpha0_bad += a0.items[i].entity_id != chara.items[i].entity_id;
    }
  }

  // three entities: A only in the lookup list, B in both, C only in the charagram list
  CandidateList lookup, chara;
  lookup.items = {{"A", 0.9}, {"B", 0.4}};
  chara.items = {{"C", 0.71}, {"B", 0.70}};
  const double alpha = 0.6, beta = 100.0;
  const double ec = std::exp(beta * 0.71), eb = std::exp(beta * 0.70);
  const double want_a = alpha * 0.9;
  const double want_b = alpha * 0.4 + (1 - alpha) * eb / (eb + ec);
  const double want_c = (1 - alpha) * ec / (eb + ec);
  const auto merged = merge_scores(lookup, chara, {alpha, beta, 30});
  double err = 0.0;
  std::size_t found = 0;
  for (const auto& c : merged.items) {
    const double want = c.entity_id == "A" ? want_a : c.entity_id == "B" ? want_b : want_c;
    err = std::max(err, std::abs(c.score - want));
    ++found;
  }
  const bool pass = alpha1_bad == 0 && alpha0_bad == 0 && found == 3 && err < 1e-12 &&
                    is_well_formed(merged);
  return {pass, fmt("200 random pairs: %zu alpha=1 and %zu alpha=0 ranking mismatches; "
                    "three-entity example max error %.1e",
                    alpha1_bad, alpha0_bad, err)};
}

// --- 9: throughput -----------------------------------------------------------

Outcome throughput() {
  constexpr std::size_t kRows = 1'000'000, kDim = 300, kK = 30;
  const auto t_build = Clock::now();
  EmbeddingIndex index;
  {
    Rng rng(20240609);
    std::vector<float> rows(kRows * kDim);
    std::normal_distribution<float> gauss;
    for (std::size_t r = 0; r < kRows; ++r) {
      float* row = rows.data() + r * kDim;
      double norm = 0.0;
      for (std::size_t j = 0; j < kDim; ++j) {
        row[j] = gauss(rng);
        norm += static_cast<double>(row[j]) * row[j];
      }
      const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
      for (std::size_t j = 0; j < kDim; ++j) row[j] *= inv;
    }
    std::vector<EntityOrdinal> row_entity(kRows);
    std::iota(row_entity.begin(), row_entity.end(), EntityOrdinal{0});
    std::vector<std::string> ids(kRows);
    for (std::size_t i = 0; i < kRows; ++i) ids[i] = "E" + std::to_string(i);
    index = EmbeddingIndex::from_rows(kDim, rows, std::move(row_entity), std::move(ids));
  }
  const double build_secs = seconds_since(t_build);

  Rng rng(42);
  std::vector<double> single;
  for (int i = 0; i < 7; ++i) {
    const auto q = testing::random_unit_query(rng, kDim);
    const auto t0 = Clock::now();
    const auto res = index.search(q, kK);
    single.push_back(seconds_since(t0) * 1e3);
    if (res.size() != kK) return {false, "short result list"};
  }
  std::sort(single.begin(), single.end());
  const double median_ms = single[single.size() / 2];

  std::vector<float> batch;
  for (int i = 0; i < 1000; ++i) {
    const auto q = testing::random_unit_query(rng, kDim);
    batch.insert(batch.end(), q.begin(), q.end());
  }
  const auto t_batch = Clock::now();
  const auto results = index.search_batch(batch, kK);
  const double batch_secs = seconds_since(t_batch);

  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  std::string scaling;
  if (cores < 2) {
    scaling = "worker scaling not measurable on this 1-core host";
  } else {
    const unsigned w = std::min(cores, 4u);
    const auto q = testing::random_unit_query(rng, kDim);
    auto t0 = Clock::now();
    for (int i = 0; i < 3; ++i) (void)index.search(q, kK, 1);
    const double one = seconds_since(t0);
    t0 = Clock::now();
    for (int i = 0; i < 3; ++i) (void)index.search(q, kK, w);
    const double many = seconds_since(t0);
    scaling = fmt("speedup %.2fx with %u workers", one / many, w);
  }
  const bool pass = median_ms < 250.0 && batch_secs < 300.0 && results.size() == 1000;
  return {pass, fmt("1M x 300 index (built in %.1fs): single-query top-30 median %.1f ms (need < 250), "
                    "1000-mention batch %.1fs (need < 300); %s",
                    build_secs, median_ms, batch_secs, scaling.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, skip;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (!std::strcmp(argv[i], "--only")) only.insert(std::atoi(argv[i + 1]));
    if (!std::strcmp(argv[i], "--skip")) skip.insert(std::atoi(argv[i + 1]));
  }
  auto wanted = [&](int n) { return (only.empty() || only.count(n)) && !skip.count(n); };

  testing::TempDir work;
  std::optional<CipherRun> first;
  auto cipher_run = [&]() -> const CipherRun& {
    if (!first) {
      const auto t0 = Clock::now();
      auto result = run_pipeline(cipher_config(work / "run1"));
      first = CipherRun{std::move(result), seconds_since(t0)};
    }
    return *first;
  };

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"retrieval oracle", retrieval_oracle},
      {"n-gram counting oracle", ngram_oracle},
      {"synthetic cipher end-to-end", [&] { return synthetic_end_to_end(cipher_run()); }},
      {"alias effect", alias_effect},
      {"pivot term", [&] {
         (void)cipher_run();
         return pivot_term(work / "run1");
       }},
      {"merge degenerate cases", merge_checks},
      {"determinism", [&] {
         (void)cipher_run();
         (void)run_pipeline(cipher_config(work / "run2"));
         return determinism(work / "run1", work / "run2");
       }},
      {"throughput", throughput},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!wanted(n)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failed += !out.pass;
    std::printf("criterion %d (%s): %s - %s\n", n, criteria[i].first, out.pass ? "PASS" : "FAIL",
                out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
