#include "star/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "star/checkpoint.hpp"
#include "star/optimizer.hpp"
#include "star/recombiner.hpp"

namespace star {

namespace {

// Independent streams for initialization, pretraining and RL from one seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

void say(const Logger& log, const std::string& msg) {
  if (log)
    log(msg);
}

bool trainable(const QueryTriple& t) {
  return t.restated && label_positions(t.precedent.size(), t.followup.size()) > 0;
}

template <typename P>
std::vector<ad::Parameter<float>*> joined(P& params, ParamGroup a, ParamGroup b) {
  auto out = params.group(a);
  auto more = params.group(b);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

double mode_reward(RewardMode mode, const Eigen::MatrixXd& F, std::span<const RestatedCandidate> cands,
                   std::mt19937_64& rng) {
  switch (mode) {
    case RewardMode::Expected:
      return expected_reward(F, cands);
    case RewardMode::Oracle:
      return select_best(cands).reward;
    case RewardMode::Uniform: {
      double s = 0;
      for (const auto& c : cands)
        s += c.reward;
      return s / static_cast<double>(cands.size());
    }
    case RewardMode::Basic: {
      std::vector<double> lp(cands.size());
      for (std::size_t i = 0; i < cands.size(); ++i)
        lp[i] = assignment_logprob(F, cands[i].assignment);
      const double mx = *std::max_element(lp.begin(), lp.end());
      std::vector<double> w(cands.size(), 1.0);
      if (std::isfinite(mx))
        for (std::size_t i = 0; i < cands.size(); ++i)
          w[i] = std::exp(lp[i] - mx);
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      return cands[pick(rng)].reward;
    }
  }
  return 0;
}

std::vector<RestatedCandidate> scored_candidates(const TrainConfig& config, const QueryTriple& triple,
                                                 const SchemaIndex& schema, const Segmentation& seg) {
  Words x = token_texts(triple.precedent), y = token_texts(triple.followup);
  Words gold = token_texts(*triple.restated);
  auto cands = build_candidates(seg, x, y, schema, config.candidate_cap);
  const RewardWeights weights = config.weights();
  for (auto& c : cands)
    c.reward = reward(gold, c.text, schema, weights);
  return cands;
}

// Candidate sets with rewards depend only on the example and the
// segmentation, so they are reused across updates.
class CandidateCache {
public:
  explicit CandidateCache(std::size_t budget) : budget_(budget) {}

  // nullptr when the enumeration cap is exceeded.
  const std::vector<RestatedCandidate>* get(const TrainConfig& config, std::size_t index,
                                            const QueryTriple& triple, const SchemaIndex& schema,
                                            const SplitLabeling& labeling, const Segmentation& seg) {
    Key key{index, labeling.labels};
    if (auto it = entries_.find(key); it != entries_.end())
      return it->second ? &*it->second : nullptr;
    std::optional<std::vector<RestatedCandidate>> value;
    try {
      value = scored_candidates(config, triple, schema, seg);
    } catch (const EnumerationCapError&) {
    }
    held_ += value ? value->size() : 1;
    if (held_ > budget_) {
      entries_.clear();
      held_ = value ? value->size() : 1;
    }
    auto& slot = entries_[key] = std::move(value);
    return slot ? &*slot : nullptr;
  }

private:
  using Key = std::pair<std::size_t, std::vector<Label>>;
  std::map<Key, std::optional<std::vector<RestatedCandidate>>> entries_;
  std::size_t budget_;
  std::size_t held_ = 0;
};

std::vector<SchemaIndex> schemas_for(std::span<const QueryTriple> triples, const TableMap& tables) {
  std::map<std::string, std::size_t> seen;
  std::vector<SchemaIndex> built;
  std::vector<SchemaIndex> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    auto [it, inserted] = seen.try_emplace(t.table_id, built.size());
    if (inserted)
      built.emplace_back(table_for(t, tables));
    out.push_back(built[it->second]);
  }
  return out;
}

}  // namespace

ModelParams<float> init_model(const TrainConfig& config, const Vocabulary& vocab, std::uint64_t seed,
                              const Eigen::MatrixXf* word_vectors) {
  auto rng = stream(seed, 0);
  auto params = ModelParams<float>::init(config.dims(), vocab.word_count(), vocab.char_count(), rng);
  if (word_vectors) {
    if (word_vectors->rows() != params.word_emb.value.rows() ||
        word_vectors->cols() != params.word_emb.value.cols())
      throw Error("init_model: word vectors are " + std::to_string(word_vectors->rows()) + "x" +
                  std::to_string(word_vectors->cols()) + ", expected " +
                  std::to_string(params.word_emb.value.rows()) + "x" +
                  std::to_string(params.word_emb.value.cols()));
    params.word_emb.value = *word_vectors;
  }
  return params;
}

double label_accuracy(ModelParams<float>& params, std::span<const QueryTriple> triples) {
  std::size_t right = 0, total = 0;
  for (const auto& t : triples) {
    if (!trainable(t))
      continue;
    SplitLabeling gold = derive_pretrain_labels(t);
    ad::Tape<float> tape(false);
    auto out = run_splitnet(tape, params, t.precedent, t.followup);
    SplitLabeling pred = argmax_labeling(to_doubles(out.probs));
    for (std::size_t i = 0; i < gold.size(); ++i)
      right += gold.labels[i] == pred.labels[i];
    total += gold.size();
  }
  return total ? static_cast<double>(right) / static_cast<double>(total) : 1.0;
}

PretrainResult pretrain(const TrainConfig& config, ModelParams<float> params,
                        std::span<const QueryTriple> train, const PretrainOptions& options) {
  config.validate();
  std::vector<std::size_t> usable;
  std::vector<SplitLabeling> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].restated)
      throw Error("pretrain: triple " + std::to_string(i) + " has no restated query");
    if (!trainable(train[i]))
      continue;
    labels[i] = derive_pretrain_labels(train[i]);
    usable.push_back(i);
  }
  const auto dev = options.dev.empty() ? train : options.dev;
  namespace fs = std::filesystem;
  const bool save = !options.checkpoint_dir.empty();
  if (save)
    fs::create_directories(options.checkpoint_dir);
  auto ckpt = [&](const char* name) { return (fs::path(options.checkpoint_dir) / name).string(); };

  PretrainResult result;
  result.dev_accuracy.push_back(label_accuracy(params, dev));
  result.params = params;
  double best = result.dev_accuracy.back();
  if (save) {
    save_checkpoint(ckpt("pretrain_last.ckpt"), params);
    save_checkpoint(ckpt("pretrain_best.ckpt"), params);
  }

  auto rng = stream(config.seed, 1);
  Adam<float> opt(config.lr_pretrain);
  auto group = joined(params, ParamGroup::Shared, ParamGroup::SplitOnly);
  const float dropout = static_cast<float>(config.dropout);

  for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), rng);
    double loss = 0;
    for (std::size_t i : usable) {
      const auto& t = train[i];
      ad::Tape<float> tape;
      auto out = run_splitnet(tape, params, t.precedent, t.followup, &rng, dropout);
      auto nll = ad::scale(labeling_logprob(out.probs, labels[i]), -1.0f);
      loss += nll.scalar();
      tape.backward(nll);
      opt.step(group);
      params.zero_grad();
    }
    loss /= std::max<std::size_t>(usable.size(), 1);
    const double acc = label_accuracy(params, dev);
    result.epoch_loss.push_back(loss);
    result.dev_accuracy.push_back(acc);
    if (acc > best) {
      best = acc;
      result.best_epoch = epoch;
      result.params = params;
    }
    say(options.log, "pretrain epoch " + std::to_string(epoch) + " loss " + fixed(loss, 4) +
                         " label_acc " + fixed(acc, 4));
    if (save) {
      save_checkpoint(ckpt("pretrain_last.ckpt"), params);
      if (result.best_epoch == epoch)
        save_checkpoint(ckpt("pretrain_best.ckpt"), params);
    }
  }
  result.last = std::move(params);
  return result;
}

std::size_t run_alternation(std::size_t count, std::size_t steps, std::size_t period, std::mt19937_64& rng,
                            const std::function<void(Phase, std::size_t, std::size_t)>& update,
                            const std::function<void(Phase, std::size_t)>& on_phase) {
  if (count == 0 || steps == 0)
    return 0;
  if (period == 0)
    period = count;
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::size_t blocks = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    if (step % count == 0)
      std::shuffle(order.begin(), order.end(), rng);
    const Phase phase = (step / period) % 2 == 0 ? Phase::Split : Phase::Recombine;
    if (step % period == 0) {
      ++blocks;
      if (on_phase)
        on_phase(phase, step);
    }
    update(phase, step, order[step % count]);
  }
  return blocks;
}

double RlResult::running_mean(std::size_t end, std::size_t window) const {
  end = std::min(end, reward_history.size());
  if (end == 0 || window == 0)
    return 0;
  const std::size_t begin = end > window ? end - window : 0;
  double s = 0;
  for (std::size_t i = begin; i < end; ++i)
    s += reward_history[i];
  return s / static_cast<double>(end - begin);
}

double split_reward(const TrainConfig& config, const QueryTriple& triple, const SchemaIndex& schema,
                    const SplitLabeling& labeling, const Eigen::MatrixXd& states_x,
                    const Eigen::MatrixXd& states_y, int hidden, std::mt19937_64& rng) {
  Segmentation seg = labeling_to_segmentation(labeling, triple.precedent.size(), triple.followup.size());
  std::vector<RestatedCandidate> cands;
  try {
    cands = scored_candidates(config, triple, schema, seg);
  } catch (const EnumerationCapError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  Eigen::MatrixXd F = conflict_values(seg.x, seg.y, states_x, states_y, hidden);
  return mode_reward(config.reward_mode, F, cands, rng);
}

RlResult train_rl(const TrainConfig& config, ModelParams<float> params, std::span<const QueryTriple> train,
                  const TableMap& tables, const RlOptions& options) {
  config.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].restated)
      throw Error("train_rl: triple " + std::to_string(i) + " has no restated query");
    if (trainable(train[i]))
      usable.push_back(i);
  }
  if (usable.size() < train.size())
    say(options.log, "train_rl: skipping " + std::to_string(train.size() - usable.size()) +
                         " triple(s) without split positions");
  const auto schemas = schemas_for(train, tables);

  RlResult result;
  auto rng = stream(config.seed, 2);
  Adam<float> opt(config.lr_rl);
  auto split_group = joined(params, ParamGroup::Shared, ParamGroup::SplitOnly);
  auto rec_group = joined(params, ParamGroup::Shared, ParamGroup::IntentionOnly);
  const float dropout = static_cast<float>(config.dropout);
  const int hidden = params.dims.hidden;
  CandidateCache cache(2'000'000);

  std::optional<ModelParams<float>> best;
  double best_bleu = -1;
  const std::size_t N = usable.size();
  const std::size_t steps = static_cast<std::size_t>(config.rl_epochs) * N;

  auto split_step = [&](std::size_t index) {
    const auto& t = train[index];
    ad::Tape<float> tape;
    auto out = run_splitnet(tape, params, t.precedent, t.followup, &rng, dropout);
    const Eigen::MatrixXd hx = out.encoder.x.states.value().cast<double>();
    const Eigen::MatrixXd hy = out.encoder.y.states.value().cast<double>();
    LabelingReward fn;
    if (options.split_reward) {
      fn = [&](const SplitLabeling& l) { return options.split_reward(index, l); };
    } else {
      fn = [&](const SplitLabeling& l) {
        Segmentation seg = labeling_to_segmentation(l, t.precedent.size(), t.followup.size());
        const auto* cands = cache.get(config, index, t, schemas[index], l, seg);
        if (!cands)
          return std::numeric_limits<double>::quiet_NaN();
        Eigen::MatrixXd F = conflict_values(seg.x, seg.y, hx, hy, hidden);
        return mode_reward(config.reward_mode, F, *cands, rng);
      };
    }
    ReinforceResult r = reinforce_update(out.probs, config.samples, rng, fn, true);
    if (r.skipped)
      say(options.log, "train_rl: skipped " + std::to_string(r.skipped) +
                           " sample(s) over the candidate cap on triple " + std::to_string(index));
    result.skipped_samples += r.skipped;
    if (r.skipped < r.samples.size()) {
      opt.step(split_group, config.clip_norm);
      result.reward_history.push_back(r.mean_reward);
    }
    ++result.split_updates;
  };

  auto recombine_step = [&](std::size_t index) {
    const auto& t = train[index];
    ad::Tape<float> tape;
    auto out = run_splitnet(tape, params, t.precedent, t.followup, &rng, dropout);
    SplitLabeling l = sample_labelings(to_doubles(out.probs), 1, rng).front();
    Segmentation seg = labeling_to_segmentation(l, t.precedent.size(), t.followup.size());
    const auto* cands = cache.get(config, index, t, schemas[index], l, seg);
    if (!cands) {
      say(options.log, "train_rl: skipped a Phase II sample over the candidate cap on triple " +
                           std::to_string(index));
      ++result.skipped_samples;
      return;
    }
    const RestatedCandidate& target = select_best(*cands);
    auto loss = rec_loss(conflict_matrix(seg.x, seg.y, out.encoder), target.assignment);
    tape.backward(loss);
    opt.step(rec_group, config.clip_norm);
    ++result.recombine_updates;
  };

  auto update = [&](Phase phase, std::size_t step, std::size_t k) {
    const std::size_t index = usable[k];
    if (phase == Phase::Split)
      split_step(index);
    else if (options.recombine_phase)
      recombine_step(index);
    params.zero_grad();

    if ((step + 1) % N != 0)
      return;
    const std::size_t epoch = (step + 1) / N;
    std::string msg = "train_rl epoch " + std::to_string(epoch) + " mean_reward(50) " +
                      fixed(result.running_mean(result.reward_history.size()), 4);
    if (!options.dev.empty()) {
      EvalReport rep = evaluate(params, options.dev, tables, config.lambda);
      msg += " dev_bleu " + fixed(rep.bleu, 4) + " dev_symacc " + fixed(rep.symacc, 4);
      if (rep.bleu > best_bleu) {
        best_bleu = rep.bleu;
        best = params;
      }
    }
    say(options.log, msg);
    if (!options.checkpoint_path.empty())
      save_checkpoint(options.checkpoint_path, best ? *best : params);
  };
  auto on_phase = [&](Phase phase, std::size_t step) {
    say(options.log, std::string("train_rl phase ") + (phase == Phase::Split ? "I" : "II") +
                         " from update " + std::to_string(step));
  };

  const std::size_t period = config.alternation_period > 0
                                 ? static_cast<std::size_t>(config.alternation_period)
                                 : N;
  result.phase_switches = run_alternation(N, steps, period, rng, update, on_phase);
  result.params = best ? std::move(*best) : std::move(params);
  if (!options.checkpoint_path.empty())
    save_checkpoint(options.checkpoint_path, result.params);
  return result;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty())
    return s;
  for (double v : values)
    s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values)
    s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

std::string MetricSummary::format() const { return fixed(100 * mean, 2) + " ± " + fixed(100 * std, 2); }

std::string ExperimentReport::to_json(int indent) const {
  nlohmann::json j;
  j["runs"] = seeds.size();
  j["seeds"] = seeds;
  j["symacc"] = {{"values", symacc}, {"mean", symacc_summary.mean}, {"std", symacc_summary.std},
                 {"formatted", symacc_summary.format()}};
  j["bleu"] = {{"values", bleu}, {"mean", bleu_summary.mean}, {"std", bleu_summary.std},
               {"formatted", bleu_summary.format()}};
  j["complete"] = complete;
  if (!complete)
    j["error"] = error;
  return j.dump(indent);
}

ExperimentReport run_experiment(const TrainConfig& config, const Vocabulary& vocab,
                                std::span<const QueryTriple> train, std::span<const QueryTriple> dev,
                                const TableMap& tables, const Eigen::MatrixXf* word_vectors, Logger log) {
  config.validate();
  const auto eval_set = dev.empty() ? train : dev;
  ExperimentReport report;
  for (int r = 0; r < config.runs; ++r) {
    TrainConfig run = config;
    run.seed = config.vary_seed ? config.seed + static_cast<std::uint64_t>(r) : config.seed;
    try {
      say(log, "run " + std::to_string(r + 1) + "/" + std::to_string(config.runs) + " seed " +
                   std::to_string(run.seed));
      auto params = init_model(run, vocab, run.seed, word_vectors);
      PretrainOptions po;
      po.dev = dev;
      po.log = log;
      auto pre = pretrain(run, std::move(params), train, po);
      RlOptions ro;
      ro.dev = dev;
      ro.log = log;
      auto rl = train_rl(run, std::move(pre.params), train, tables, ro);
      EvalReport rep = evaluate(rl.params, eval_set, tables, run.lambda);
      report.seeds.push_back(run.seed);
      report.symacc.push_back(rep.symacc);
      report.bleu.push_back(rep.bleu);
    } catch (const std::exception& e) {
      report.complete = false;
      report.error = "run " + std::to_string(r + 1) + " failed: " + e.what();
      say(log, report.error);
      break;
    }
  }
  report.symacc_summary = summarize(report.symacc);
  report.bleu_summary = summarize(report.bleu);
  return report;
}

}  // namespace star
