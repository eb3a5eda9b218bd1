#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "star/checkpoint.hpp"
#include "star/optimizer.hpp"
#include "star/trainer.hpp"
#include "support.hpp"

using namespace star;
using star::test::data_path;
using star::test::tiny_config;

namespace {

struct Corpus {
  Vocabulary vocab;
  std::vector<QueryTriple> triples;
  TableMap tables;
  Corpus() {
    triples = load_dataset(data_path("followup.jsonl"), vocab, true);
    tables = load_tables(data_path("tables"));
  }
  std::span<const QueryTriple> first(std::size_t n) const { return std::span<const QueryTriple>(triples).first(n); }
};

std::string bytes(const ModelParams<float>& p) {
  std::ostringstream os;
  write_checkpoint(os, p);
  return os.str();
}

std::vector<std::uint64_t> hashes(const std::vector<ad::Parameter<float>*>& ps) {
  std::vector<std::uint64_t> out;
  for (auto* p : ps)
    out.push_back(parameter_hash(*p));
  return out;
}

}  // namespace

TEST_CASE("Adam takes a bounded first step and clips the global norm") {
  ad::Parameter<double> p("p", (ad::Matrix<double>(1, 2) << 1.0, -1.0).finished());
  p.grad << 30.0, -40.0;
  Adam<double> opt(0.1);
  std::vector<ad::Parameter<double>*> ps{&p};
  const double norm = opt.step(ps, 5.0);
  CHECK(norm == doctest::Approx(50.0));
  // The first bias-corrected Adam step has magnitude lr per coordinate.
  CHECK(p.value(0, 0) == doctest::Approx(0.9));
  CHECK(p.value(0, 1) == doctest::Approx(-0.9));
  CHECK(p.grad.isZero());
}

TEST_CASE("zero pretraining epochs leaves the initialization") {
  Corpus c;
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 0;
  auto init = init_model(cfg, c.vocab, 5);
  auto res = pretrain(cfg, init, c.first(4));
  CHECK(bytes(res.params) == bytes(init));
  CHECK(res.best_epoch == 0);
}

TEST_CASE("pretraining is deterministic and writes checkpoints") {
  namespace fs = std::filesystem;
  Corpus c;
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 3;
  cfg.lr_pretrain = 0.01;
  const fs::path dir = fs::temp_directory_path() / "star_pretrain_test";
  fs::remove_all(dir);
  PretrainOptions opts;
  opts.checkpoint_dir = dir.string();
  auto a = pretrain(cfg, init_model(cfg, c.vocab, cfg.seed), c.first(6), opts);
  auto b = pretrain(cfg, init_model(cfg, c.vocab, cfg.seed), c.first(6));
  CHECK(bytes(a.params) == bytes(b.params));
  CHECK(bytes(a.last) == bytes(b.last));
  CHECK(a.epoch_loss.size() == 3);
  CHECK(a.dev_accuracy.size() == 4);
  CHECK(fs::exists(dir / "pretrain_last.ckpt"));
  CHECK(fs::exists(dir / "pretrain_best.ckpt"));
  CHECK(bytes(load_checkpoint((dir / "pretrain_last.ckpt").string())) == bytes(a.last));
  CHECK(bytes(load_checkpoint((dir / "pretrain_best.ckpt").string())) == bytes(a.params));
  fs::remove_all(dir);

  TrainConfig other = cfg;
  other.seed = 2;
  auto d = pretrain(other, init_model(other, c.vocab, other.seed), c.first(6));
  CHECK(bytes(d.last) != bytes(a.last));
}

TEST_CASE("pretraining rejects triples without restatements") {
  Corpus c;
  TrainConfig cfg = tiny_config();
  auto data = c.triples;
  data[1].restated.reset();
  CHECK_THROWS_WITH(pretrain(cfg, init_model(cfg, c.vocab, 1), data), doctest::Contains("restated"));
}

TEST_CASE("alternation counts phase blocks") {
  std::mt19937_64 rng(1);
  for (std::size_t steps : {1u, 9u, 10u, 11u, 40u})
    for (std::size_t period : {1u, 3u, 4u, 10u}) {
      std::vector<Phase> phases;
      std::size_t logged = 0;
      auto blocks = run_alternation(
          5, steps, period, rng, [&](Phase p, std::size_t, std::size_t) { phases.push_back(p); },
          [&](Phase, std::size_t) { ++logged; });
      CHECK(blocks == (steps + period - 1) / period);
      CHECK(logged == blocks);
      CHECK(phases.size() == steps);
      for (std::size_t s = 0; s < steps; ++s)
        CHECK(phases[s] == ((s / period) % 2 ? Phase::Recombine : Phase::Split));
    }
  std::vector<std::size_t> seen;
  run_alternation(4, 8, 0, rng, [&](Phase, std::size_t, std::size_t i) { seen.push_back(i); });
  std::vector<std::size_t> epoch1(seen.begin(), seen.begin() + 4);
  std::sort(epoch1.begin(), epoch1.end());
  CHECK(epoch1 == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("RL phases leave the other phase's exclusive parameters alone") {
  Corpus c;
  TrainConfig cfg = tiny_config();
  cfg.samples = 4;
  cfg.rl_epochs = 1;
  cfg.alternation_period = 3;
  auto params = init_model(cfg, c.vocab, 3);
  const auto intent_before = hashes(params.group(ParamGroup::IntentionOnly));
  const auto split_before = hashes(params.group(ParamGroup::SplitOnly));

  RlOptions phase1_only;
  phase1_only.recombine_phase = false;
  auto r1 = train_rl(cfg, params, c.first(3), c.tables, phase1_only);
  CHECK(hashes(r1.params.group(ParamGroup::IntentionOnly)) == intent_before);
  CHECK(hashes(r1.params.group(ParamGroup::SplitOnly)) != split_before);
  CHECK(r1.split_updates == 3);
  CHECK(r1.recombine_updates == 0);

  TrainConfig phase2 = cfg;
  phase2.alternation_period = 0;
  phase2.rl_epochs = 2;  // epoch 1 is Phase I, epoch 2 Phase II
  auto mid = train_rl([&] { TrainConfig x = phase2; x.rl_epochs = 1; return x; }(), params, c.first(3), c.tables);
  const auto split_mid = hashes(mid.params.group(ParamGroup::SplitOnly));
  auto r2 = train_rl(phase2, params, c.first(3), c.tables);
  CHECK(hashes(r2.params.group(ParamGroup::SplitOnly)) == split_mid);
  CHECK(hashes(r2.params.group(ParamGroup::Shared)) != hashes(mid.params.group(ParamGroup::Shared)));
  CHECK(r2.phase_switches == 2);
  CHECK(r2.recombine_updates == 3);
}

TEST_CASE("RL bookkeeping, validation and determinism") {
  Corpus c;
  TrainConfig cfg = tiny_config();
  cfg.samples = 4;
  cfg.rl_epochs = 2;
  cfg.alternation_period = 4;
  auto params = init_model(cfg, c.vocab, 3);
  std::vector<std::string> log;
  RlOptions opts;
  opts.log = [&](const std::string& m) { log.push_back(m); };
  auto a = train_rl(cfg, params, c.first(5), c.tables, opts);
  const std::size_t steps = 10;
  CHECK(a.phase_switches == (steps + 3) / 4);
  CHECK(std::count_if(log.begin(), log.end(), [](const std::string& m) { return m.find("phase") != std::string::npos; }) ==
        static_cast<long>(a.phase_switches));
  CHECK(a.split_updates + a.recombine_updates == steps);
  CHECK(a.reward_history.size() == a.split_updates);
  for (double r : a.reward_history) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
  auto b = train_rl(cfg, params, c.first(5), c.tables);
  CHECK(bytes(a.params) == bytes(b.params));

  TrainConfig bad = cfg;
  bad.samples = 1;
  CHECK_THROWS_WITH(train_rl(bad, params, c.first(2), c.tables), doctest::Contains("samples"));
}

TEST_CASE("candidate cap overflow skips samples instead of failing") {
  Corpus c;
  TrainConfig cfg = tiny_config();
  cfg.samples = 4;
  cfg.rl_epochs = 2;
  cfg.candidate_cap = 1;  // only the empty assignment fits
  std::vector<std::string> log;
  RlOptions opts;
  opts.log = [&](const std::string& m) { log.push_back(m); };
  auto r = train_rl(cfg, init_model(cfg, c.vocab, 3), c.first(3), c.tables, opts);
  CHECK(r.skipped_samples > 0);
  CHECK(std::any_of(log.begin(), log.end(), [](const std::string& m) { return m.find("cap") != std::string::npos; }));
}

TEST_CASE("reward modes") {
  Corpus c;
  TrainConfig cfg = tiny_config();
  const QueryTriple& t = c.triples[0];
  SchemaIndex schema(c.tables.at("salary"));
  auto params = init_model(cfg, c.vocab, 3).cast<double>();
  ad::Tape<double> tape(false);
  auto out = run_splitnet(tape, params, t.precedent, t.followup);
  SplitLabeling gold = derive_pretrain_labels(t);
  std::mt19937_64 rng(1);
  auto score = [&](RewardMode m) {
    TrainConfig x = cfg;
    x.reward_mode = m;
    return split_reward(x, t, schema, gold, out.encoder.x.states.value(), out.encoder.y.states.value(),
                        cfg.hidden, rng);
  };
  const double oracle = score(RewardMode::Oracle);
  CHECK(oracle == doctest::Approx(1.0));
  for (auto m : {RewardMode::Expected, RewardMode::Uniform, RewardMode::Basic}) {
    const double r = score(m);
    CHECK(r >= 0.0);
    CHECK(r <= oracle + 1e-12);
  }
  TrainConfig capped = cfg;
  capped.candidate_cap = 2;
  CHECK(std::isnan(split_reward(capped, t, schema, gold, out.encoder.x.states.value(),
                                out.encoder.y.states.value(), cfg.hidden, rng)));
}

TEST_CASE("experiment summaries") {
  CHECK(summarize(std::vector<double>{0.5}).std == 0.0);
  MetricSummary s = summarize(std::vector<double>{0.5, 0.7});
  CHECK(s.mean == doctest::Approx(0.6));
  CHECK(s.std == doctest::Approx(0.1));
  CHECK(s.format() == "60.00 ± 10.00");

  Corpus c;
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 1;
  cfg.rl_epochs = 1;
  cfg.samples = 2;
  cfg.runs = 1;
  auto one = run_experiment(cfg, c.vocab, c.first(3), c.first(3), c.tables);
  CHECK(one.complete);
  CHECK(one.bleu.size() == 1);
  CHECK(one.bleu_summary.std == 0.0);

  cfg.runs = 2;
  cfg.vary_seed = false;
  auto same = run_experiment(cfg, c.vocab, c.first(3), c.first(3), c.tables);
  CHECK(same.seeds == std::vector<std::uint64_t>{cfg.seed, cfg.seed});
  CHECK(same.bleu_summary.std == 0.0);
  CHECK(same.symacc_summary.std == 0.0);

  cfg.vary_seed = true;
  TableMap missing;
  auto failed = run_experiment(cfg, c.vocab, c.first(3), c.first(3), missing);
  CHECK_FALSE(failed.complete);
  CHECK(failed.error.find("salary") != std::string::npos);
  CHECK(failed.to_json().find("\"complete\": false") != std::string::npos);
}
