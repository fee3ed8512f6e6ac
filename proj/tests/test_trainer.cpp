#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "charlink/errors.hpp"
#include "charlink/retrieval.hpp"
#include "charlink/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace charlink;

namespace {

// "m", "p", "n" encode to fixed 2-d vectors (see unigram_model).
CharagramModel cosine_model(double cos_pos, double cos_neg) {
  return testing::unigram_model({
      {U'm', testing::at_cosine(1.0)},
      {U'p', testing::at_cosine(cos_pos)},
      {U'n', testing::at_cosine(cos_neg)},
  });
}

// Identity task: every entity is its own training mention.
struct IdentityTask {
  KnowledgeBase kb;
  PairDataset pairs;
};

IdentityTask identity_task(std::size_t n, std::uint64_t seed) {
  testing::Rng rng(seed);
  IdentityTask t;
  std::set<std::string> used;
  std::vector<KbEntity> entities;
  while (entities.size() < n) {
    auto name = testing::random_word(rng, "abcdefghijklmnop", 4, 10);
    if (!used.insert(name).second) continue;
    entities.push_back({"e" + std::to_string(1000 + entities.size()), name, {}, {}});
  }
  t.kb = KnowledgeBase::from_entities(std::move(entities));
  for (std::size_t i = 0; i < n; ++i) {
    t.pairs.pairs.push_back({t.kb[static_cast<EntityOrdinal>(i)].canonical_name,
                             static_cast<EntityOrdinal>(i), PairKind::EntityEntity});
  }
  return t;
}

CharagramModel fresh_model(const IdentityTask& t, std::size_t dim, std::uint64_t seed) {
  return CharagramModel::initialize(build_vocabulary(t.pairs, t.kb, WindowSet::defaults()), dim,
                                    seed);
}

}  // namespace

TEST_CASE("pair loss by direct substitution") {
  const auto model = cosine_model(0.2, 0.5);
  const std::vector<std::string> neg{"n"};
  const auto r = pair_loss(model, "m", "p", neg, 1.0);
  CHECK(r.loss == doctest::Approx(1.3).epsilon(1e-12));
  CHECK(r.active == 1);
  CHECK_FALSE(r.skipped);
}

TEST_CASE("a fully satisfied hinge gives zero loss and zero gradient") {
  const auto model = cosine_model(1.0, -1.0);
  const std::vector<std::string> negs{"n", "n", "n"};
  Gradient grad(model.vocabulary().size(), model.dim());
  const auto r = pair_loss(model, "m", "p", negs, 1.0, &grad);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.active == 0);
  CHECK(grad.touched().empty());
  for (double g : grad.bias()) CHECK(g == 0.0);
}

TEST_CASE("inactive negatives add neither loss nor gradient") {
  auto model = testing::unigram_model({
      {U'm', testing::at_cosine(1.0)},
      {U'p', testing::at_cosine(0.9)},
      {U'n', testing::at_cosine(0.5)},
      {U'o', testing::at_cosine(-0.9)},  // hinge 1 - 0.9 - 0.9 < 0
  });
  const std::vector<std::string> negs{"n", "o"};
  Gradient grad(model.vocabulary().size(), model.dim());
  const auto r = pair_loss(model, "m", "p", negs, 1.0, &grad);
  CHECK(r.active == 1);
  CHECK(r.loss == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_FALSE(grad.is_touched(*model.vocabulary().find(U"o")));
  CHECK(grad.is_touched(*model.vocabulary().find(U"n")));
}

TEST_CASE("zero-norm embeddings skip the pair") {
  testing::Rng rng(1);
  CharagramModel model(testing::small_vocabulary(rng, 5, "ab", WindowSet({2})), 3);
  const std::vector<std::string> negs{"ab"};
  Gradient grad(model.vocabulary().size(), model.dim());
  const auto r = pair_loss(model, "ab", "ba", negs, 1.0, &grad);
  CHECK(r.skipped);
  CHECK(r.loss == 0.0);
  CHECK(grad.touched().empty());
}

TEST_CASE("pair loss argument errors") {
  const auto model = cosine_model(0.2, 0.5);
  CHECK_THROWS_AS((void)pair_loss(model, "m", "p", std::vector<std::string>{}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)pair_loss(model, "", "p", std::vector<std::string>{"n"}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)pair_loss(model, "m", "p", std::vector<std::string>{""}, 1.0),
                  std::invalid_argument);
}

TEST_CASE("analytic gradient agrees with central differences") {
  testing::Rng rng(2024);
  int checked = 0;
  while (checked < 10) {
    auto inst = testing::random_loss_instance(rng);
    if (!inst) continue;
    const auto result = testing::check_gradient(*inst);
    CHECK(result.max_rel_error < 1e-4);
    CHECK(result.max_abs_error < 1e-8);
    ++checked;
  }
}

TEST_CASE("gradient of a 20-row, 5-wide model") {
  testing::Rng rng(77);
  for (int attempts = 0; attempts < 1000; ++attempts) {
    testing::LossInstance inst;
    // 5 unigrams + 15 bigrams over {a, b, c} with boundaries = 20 rows
    const std::vector<std::u32string> words{U"aabbccac", U"bacb", U"cba", U"ab"};
    auto vocab = NgramVocabulary::build(words, {}, WindowSet({1, 2}));
    if (vocab.size() != 20) continue;
    inst.model = CharagramModel::initialize(std::move(vocab), 5, rng(), false, 0.8);
    inst.mention = inst.model.bag("abca");
    inst.positive = inst.model.bag("acb");
    inst.negatives = {inst.model.bag("bb"), inst.model.bag("cab"), inst.model.bag("c")};
    const auto result = testing::check_gradient(inst);
    CHECK(result.checked > 0);
    CHECK(result.max_rel_error < 1e-4);
    return;
  }
  FAIL("could not build a 20-row vocabulary");
}

TEST_CASE("negative sampling") {
  const auto kb = KnowledgeBase::from_entities(
      {{"q1", "one", {}, {}}, {"q2", "two", {}, {}}, {"q3", "three", {}, {}}});
  testing::Rng rng(3);
  auto names = sample_negative_names(kb, *kb.find("q1"), 2, rng);
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"three", "two"});

  CHECK_THROWS_AS((void)sample_negatives(3, 0, 3, rng), std::invalid_argument);

  testing::Rng a(9), b(9);
  const auto first = sample_negatives(100, 5, 32, a);
  CHECK(first == sample_negatives(100, 5, 32, b));  // same state, same sample
  const auto second = sample_negatives(100, 5, 32, a);
  CHECK(second != first);  // the state advanced
  CHECK(std::set<EntityOrdinal>(first.begin(), first.end()).size() == 32);
  CHECK(std::find(first.begin(), first.end(), 5u) == first.end());
}

TEST_CASE("negatives are uniform over the non-positive entities") {
  constexpr std::size_t kEntities = 100;
  constexpr std::size_t kDraws = 10000;
  constexpr EntityOrdinal kPositive = 42;
  testing::Rng rng(12345);
  std::vector<std::size_t> counts(kEntities, 0);
  for (std::size_t i = 0; i < kDraws; ++i) {
    for (auto e : sample_negatives(kEntities, kPositive, 1, rng)) ++counts[e];
  }
  CHECK(counts[kPositive] == 0);
  const double p = 1.0 / (kEntities - 1);
  const double mean = kDraws * p;
  const double sigma = std::sqrt(kDraws * p * (1.0 - p));
  double chi2 = 0.0;
  for (std::size_t e = 0; e < kEntities; ++e) {
    if (e == kPositive) continue;
    CHECK(std::abs(static_cast<double>(counts[e]) - mean) < 3.0 * sigma);
    chi2 += (counts[e] - mean) * (counts[e] - mean) / mean;
  }
  // 98 degrees of freedom; the 0.999 quantile is about 148.2
  CHECK(chi2 < 148.2);
}

TEST_CASE("multi-draw samples include every entity equally often") {
  testing::Rng rng(8);
  std::vector<std::size_t> counts(40, 0);
  for (int i = 0; i < 5000; ++i) {
    for (auto e : sample_negatives(40, 0, 10, rng)) ++counts[e];
  }
  const double p = 10.0 / 39.0;
  const double mean = 5000 * p;
  const double sigma = std::sqrt(5000 * p * (1 - p));
  CHECK(counts[0] == 0);
  for (std::size_t e = 1; e < counts.size(); ++e) {
    CHECK(std::abs(static_cast<double>(counts[e]) - mean) < 4.0 * sigma);
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.margin = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(parse_reduction("sum") == BatchReduction::Sum);
  CHECK_THROWS_AS(parse_reduction("max"), std::invalid_argument);
}

TEST_CASE("identity transliteration is learned to perfect top-1 recall") {
  const auto task = identity_task(50, 1);
  auto model = fresh_model(task, 32, 2);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.eval_top_k = 1;
  cfg.patience = 200;
  cfg.max_epochs = 200;
  std::size_t first_perfect = 0;
  const auto report = train(model, task.pairs, task.pairs, task.kb, cfg, [&](const EpochRecord& e) {
    if (first_perfect == 0 && e.dev_recall == 1.0) first_perfect = e.epoch;
  });
  CHECK(first_perfect > 0);
  CHECK(report.best_recall == 1.0);
  CHECK(report.stop == StopReason::MaxEpochs);
  // the installed snapshot is the best epoch's: recompute from scratch
  CHECK(dev_recall(model, task.pairs, task.kb, 1) == 1.0);
  MESSAGE("top-1 recall first reached 1.0 at epoch " << first_perfect);
}

TEST_CASE("training is bitwise deterministic") {
  const auto task = identity_task(40, 4);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = 4;
  auto a = fresh_model(task, 8, 6);
  auto b = fresh_model(task, 8, 6);
  const auto ra = train(a, task.pairs, task.pairs, task.kb, cfg);
  const auto rb = train(b, task.pairs, task.pairs, task.kb, cfg);
  CHECK(ra == rb);
  CHECK(a == b);
}

TEST_CASE("zero learning rate leaves parameters unchanged; patience bookkeeping") {
  const auto task = identity_task(40, 7);
  auto model = fresh_model(task, 8, 8);
  const auto before = model;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.patience = 5;
  cfg.max_epochs = 100;
  const auto report = train(model, task.pairs, task.pairs, task.kb, cfg);
  CHECK(model == before);
  REQUIRE(report.epochs.size() == 6);
  for (const auto& e : report.epochs) CHECK(e.dev_recall == report.epochs.front().dev_recall);
  // no strict improvement after epoch 1, stop 5 epochs later
  CHECK(report.best_epoch == 1);
  CHECK(report.stop == StopReason::Patience);
  CHECK(report.epochs.back().epoch == report.best_epoch + cfg.patience);
}

TEST_CASE("max-epoch stop and the report's running best") {
  const auto task = identity_task(40, 9);
  auto model = fresh_model(task, 8, 10);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.eval_top_k = 1;
  const auto report = train(model, task.pairs, task.pairs, task.kb, cfg);
  CHECK(report.stop == StopReason::MaxEpochs);
  CHECK(report.epochs.size() == 3);
  double running = -1.0;
  double best = -1.0;
  for (const auto& e : report.epochs) {
    running = std::max(running, e.dev_recall);
    CHECK(e.best_recall == running);
    best = std::max(best, e.dev_recall);
  }
  CHECK(report.epochs[report.best_epoch - 1].dev_recall == best);
  CHECK(report.best_recall == best);

  std::ostringstream tsv;
  report.write_tsv(tsv);
  CHECK(tsv.str().rfind("epoch\tloss\tdev_recall\tbest_recall\tskipped_pairs\n", 0) == 0);
}

TEST_CASE("exploding updates stop training with coordinates") {
  const auto task = identity_task(40, 11);
  auto model = fresh_model(task, 8, 12);
  TrainConfig cfg;
  cfg.learning_rate = 1e308;
  cfg.reduction = BatchReduction::Sum;
  cfg.max_epochs = 3;
  CHECK_THROWS_WITH_AS(train(model, task.pairs, task.pairs, task.kb, cfg),
                       doctest::Contains("epoch 1, batch"), NumericError);
}

TEST_CASE("train rejects a kb too small for the negative count") {
  const auto task = identity_task(10, 13);
  auto model = fresh_model(task, 4, 14);
  TrainConfig cfg;  // 32 negatives
  CHECK_THROWS_AS(train(model, task.pairs, task.pairs, task.kb, cfg), std::invalid_argument);
  cfg.negatives = 9;
  cfg.max_epochs = 1;
  CHECK_NOTHROW(train(model, task.pairs, task.pairs, task.kb, cfg));
  CHECK_THROWS_AS(train(model, task.pairs, PairDataset{}, task.kb, cfg), std::invalid_argument);
}

TEST_CASE("sum and mean reduction differ only by the step scale") {
  const auto task = identity_task(40, 15);
  TrainConfig mean_cfg;
  mean_cfg.max_epochs = 1;
  mean_cfg.batch_size = 1000;  // one batch of 40 pairs
  TrainConfig sum_cfg = mean_cfg;
  sum_cfg.reduction = BatchReduction::Sum;
  sum_cfg.learning_rate = mean_cfg.learning_rate / 40.0;
  auto a = fresh_model(task, 6, 16);
  auto b = fresh_model(task, 6, 16);
  (void)train(a, task.pairs, task.pairs, task.kb, mean_cfg);
  (void)train(b, task.pairs, task.pairs, task.kb, sum_cfg);
  for (std::size_t i = 0; i < a.weights().size(); ++i) {
    CHECK(a.weights()[i] == doctest::Approx(b.weights()[i]).epsilon(1e-12));
  }
}
