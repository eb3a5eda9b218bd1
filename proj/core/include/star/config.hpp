#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "star/metrics.hpp"
#include "star/model.hpp"

namespace star {

/// How R(q, z) is derived from the candidate rewards of one split.
enum class RewardMode {
  Expected,  // sum over candidates of renormalized P_rec * r
  Basic,     // r of a single candidate drawn from P_rec
  Oracle,    // max r
  Uniform,   // mean r
};

struct TrainConfig {
  double lr_pretrain = 0.001;
  double lr_rl = 0.0001;
  double lr_sqa = 0.0002;
  int samples = 20;  // M
  double alpha = 0.5;
  double beta = 0.5;
  double lambda = 0.6;
  double dropout = 0.5;

  int word_dim = 100;
  int hidden = 100;
  int char_dim = 16;
  int char_channels = 30;
  int char_width = 3;

  int pretrain_epochs = 30;
  int rl_epochs = 50;
  int alternation_period = 0;  // updates per phase; 0 means one epoch
  std::uint64_t seed = 1;
  int runs = 5;
  bool vary_seed = true;  // run r uses seed + r
  double clip_norm = 5.0;
  std::uint64_t candidate_cap = 30000;
  RewardMode reward_mode = RewardMode::Expected;

  ModelDims dims() const;
  RewardWeights weights() const { return {alpha, beta}; }

  /// Throws Error naming the offending field.
  void validate() const;

  /// Sets one field from its config-file key. Throws on unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Every addressable key with its current value, in declaration order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Flat "key = value" lines; '#' starts a comment.
TrainConfig parse_config(std::istream& is, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});
void write_config(std::ostream& os, const TrainConfig& config);

std::string to_string(RewardMode mode);
RewardMode parse_reward_mode(const std::string& s);

}  // namespace star
