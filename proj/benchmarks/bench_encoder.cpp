#include <benchmark/benchmark.h>

#include "charlink/charagram.hpp"
#include "charlink/synthetic.hpp"
#include "charlink/trainer.hpp"

using namespace charlink;

namespace {

struct Fixture {
  SyntheticTask task;
  PairDataset pairs;
  CharagramModel model;

  explicit Fixture(std::size_t dim) {
    SyntheticConfig sc;
    sc.num_entities = 1000;
    sc.seed = 7;
    task = make_cipher_task(sc);
    pairs = concat(task.train_ee, task.train_me);
    model = CharagramModel::initialize(build_vocabulary(pairs, task.kb, WindowSet::defaults()), dim, 3);
  }
};

void BM_Encode(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.model.encode(f.pairs.pairs[i].source));
    i = (i + 1) % f.pairs.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Encode)->Arg(64)->Arg(300);

void BM_EncodeKb(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(encode_kb(f.model, f.task.kb));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.task.kb.size()));
}
BENCHMARK(BM_EncodeKb)->Arg(64)->Arg(300)->Unit(benchmark::kMillisecond);

// One pair: loss plus analytic gradient against 32 negatives.
void BM_PairLossGradient(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const auto& kb = f.task.kb;
  Rng rng(5);
  Gradient grad(f.model.vocabulary().size(), f.model.dim());
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& p = f.pairs.pairs[i];
    const auto negs = sample_negative_names(kb, p.entity, 32, rng);
    benchmark::DoNotOptimize(
        pair_loss(f.model, p.source, kb[p.entity].canonical_name, negs, 1.0, &grad));
    grad.clear();
    i = (i + 1) % f.pairs.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PairLossGradient)->Arg(64)->Arg(300);

// One training epoch over the synthetic task.
void BM_TrainEpoch(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.patience = 1;
  const auto [train_set, dev_set] = split_dev(f.pairs, 0.05, 1);
  for (auto _ : state) benchmark::DoNotOptimize(train(f.model, train_set, dev_set, f.task.kb, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(train_set.size()));
}
BENCHMARK(BM_TrainEpoch)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
