#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "star/config.hpp"
#include "star/dataset.hpp"
#include "star/metrics.hpp"
#include "star/model.hpp"
#include "star/splitter.hpp"

namespace star {

using Logger = std::function<void(const std::string&)>;

/// Fresh parameters sized for `vocab`. Pretrained word vectors, when given,
/// replace the word embedding table (rows must match the vocabulary).
ModelParams<float> init_model(const TrainConfig& config, const Vocabulary& vocab, std::uint64_t seed,
                              const Eigen::MatrixXf* word_vectors = nullptr);

/// Fraction of boundary positions where the argmax labeling agrees with the
/// labels derived from the restated query.
double label_accuracy(ModelParams<float>& params, std::span<const QueryTriple> triples);

struct PretrainOptions {
  std::span<const QueryTriple> dev;  // best-dev selection; train set when empty
  std::string checkpoint_dir;        // empty disables per-epoch checkpoints
  Logger log;
};

struct PretrainResult {
  ModelParams<float> params;  // best-dev parameters
  ModelParams<float> last;
  std::vector<double> epoch_loss;
  std::vector<double> dev_accuracy;
  int best_epoch = 0;  // 0 means the initialization won
};

/// Maximum-likelihood training of the split probabilities on labels derived
/// from each triple's restated query. Writes pretrain_last.ckpt and
/// pretrain_best.ckpt to the checkpoint directory after every epoch.
PretrainResult pretrain(const TrainConfig& config, ModelParams<float> params,
                        std::span<const QueryTriple> train, const PretrainOptions& options = {});

/// Phase of one alternating update.
enum class Phase { Split, Recombine };

/// Drives `steps` updates over `count` examples, switching phase every
/// `period` updates (starting with Split) and reshuffling at each epoch
/// boundary. Returns the number of phase blocks started.
std::size_t run_alternation(std::size_t count, std::size_t steps, std::size_t period, std::mt19937_64& rng,
                            const std::function<void(Phase, std::size_t step, std::size_t index)>& update,
                            const std::function<void(Phase, std::size_t step)>& on_phase = {});

/// Per-example Phase I reward replacing R(q, z). Used to train against a
/// known reward surface.
using SplitRewardOverride = std::function<double(std::size_t index, const SplitLabeling&)>;

struct RlOptions {
  std::span<const QueryTriple> dev;
  std::string checkpoint_path;  // written after every epoch when set
  bool recombine_phase = true;  // false trains Phase I only
  SplitRewardOverride split_reward;
  Logger log;
};

struct RlResult {
  ModelParams<float> params;
  std::vector<double> reward_history;  // mean sampled reward per Phase I update
  std::size_t phase_switches = 0;
  std::size_t split_updates = 0;
  std::size_t recombine_updates = 0;
  std::size_t skipped_samples = 0;

  /// Mean of the last `window` entries ending at update `end` (exclusive).
  double running_mean(std::size_t end, std::size_t window = 50) const;
};

/// Alternating REINFORCE (Phase I, recombination path frozen) and
/// best-candidate likelihood (Phase II, split path frozen).
RlResult train_rl(const TrainConfig& config, ModelParams<float> params, std::span<const QueryTriple> train,
                  const TableMap& tables, const RlOptions& options = {});

/// R(q, z) for one sampled labeling under the configured reward mode. NaN
/// when the candidate enumeration exceeds the cap.
double split_reward(const TrainConfig& config, const QueryTriple& triple, const SchemaIndex& schema,
                    const SplitLabeling& labeling, const Eigen::MatrixXd& states_x,
                    const Eigen::MatrixXd& states_y, int hidden, std::mt19937_64& rng);

struct MetricSummary {
  double mean = 0;
  double std = 0;  // population

  /// "mean ± std" in percent with two decimals.
  std::string format() const;
};

MetricSummary summarize(std::span<const double> values);

struct ExperimentReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> symacc;
  std::vector<double> bleu;
  MetricSummary symacc_summary;
  MetricSummary bleu_summary;
  bool complete = true;
  std::string error;

  std::string to_json(int indent = 2) const;
};

/// Repeats init -> pretrain -> train_rl -> evaluate for config.runs seeds. A
/// failing run stops the loop and is reported alongside the finished runs.
ExperimentReport run_experiment(const TrainConfig& config, const Vocabulary& vocab,
                                std::span<const QueryTriple> train, std::span<const QueryTriple> dev,
                                const TableMap& tables, const Eigen::MatrixXf* word_vectors = nullptr,
                                Logger log = {});

}  // namespace star
