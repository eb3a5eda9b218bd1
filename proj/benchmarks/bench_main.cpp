#include <benchmark/benchmark.h>

#include <random>

#include "star/metrics.hpp"
#include "star/recombiner.hpp"
#include "star/trainer.hpp"

using namespace star;

static void BM_EnumerateAssignments(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(enumerate_assignments(k, k));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(assignment_count(k, k)));
}
BENCHMARK(BM_EnumerateAssignments)->DenseRange(2, 6);

static void BM_Bleu(benchmark::State& state) {
  Words ref = token_texts(tokenize("show the salary of players in the lions who joined after 2010"));
  Words hyp = token_texts(tokenize("show salary of the players in the lions that joined after 2010"));
  for (auto _ : state)
    benchmark::DoNotOptimize(bleu4(ref, hyp));
}
BENCHMARK(BM_Bleu);

static void BM_SplitNetForward(benchmark::State& state) {
  Vocabulary vocab;
  QueryTriple t = make_triple("show the salary of players in the bears who joined in 2010",
                              "how about the lions", std::nullopt, "", vocab, true);
  TrainConfig cfg;
  cfg.hidden = static_cast<int>(state.range(0));
  auto params = init_model(cfg, vocab, 1);
  for (auto _ : state) {
    ad::Tape<float> tape(false);
    auto out = run_splitnet(tape, params, t.precedent, t.followup);
    benchmark::DoNotOptimize(out.probs.value().data());
  }
}
BENCHMARK(BM_SplitNetForward)->Arg(50)->Arg(100);

static void BM_SplitNetBackward(benchmark::State& state) {
  Vocabulary vocab;
  QueryTriple t = make_triple("show the salary of players in the bears who joined in 2010",
                              "how about the lions", std::nullopt, "", vocab, true);
  auto params = init_model(TrainConfig{}, vocab, 1);
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    ad::Tape<float> tape;
    auto out = run_splitnet(tape, params, t.precedent, t.followup, &rng);
    reinforce_update(out.probs, 20, rng, [](const SplitLabeling& l) { return double(l.labels.front() == Label::Split); });
    params.zero_grad();
  }
}
BENCHMARK(BM_SplitNetBackward);

BENCHMARK_MAIN();
