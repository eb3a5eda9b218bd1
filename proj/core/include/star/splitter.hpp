#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "star/autograd.hpp"
#include "star/dataset.hpp"
#include "star/span.hpp"

namespace star {

/// Pre-training labels from common token substrings of the restated query
/// with x and with y.
///
/// Blocks are taken greedily: the longest common substring between the
/// not-yet-covered part of z and the not-yet-covered part of x or y, ties
/// broken by leftmost start in z, then x before y, then leftmost start in
/// the source. Each block's outer boundaries become Split labels.
SplitLabeling derive_pretrain_labels(const QueryTriple& triple);

/// Blocks found by the greedy alignment, as spans of x and of y.
struct CommonBlocks {
  std::vector<Span> x;
  std::vector<Span> y;
};
CommonBlocks common_blocks(std::span<const Token> x, std::span<const Token> y,
                           std::span<const Token> z);

/// Sum over positions of log p_t (Split) or log(1 - p_t) (Retain).
double labeling_logprob(std::span<const double> probs, const SplitLabeling& labeling);

/// Differentiable variant over a 1 x T row of probabilities.
template <typename T>
ad::Var<T> labeling_logprob(const ad::Var<T>& probs, const SplitLabeling& labeling);

std::vector<SplitLabeling> sample_labelings(std::span<const double> probs, int count,
                                            std::mt19937_64& rng);

/// Split wherever p >= 0.5.
SplitLabeling argmax_labeling(std::span<const double> probs);

Segmentation labeling_to_segmentation(const SplitLabeling& labeling, std::size_t n, std::size_t m);
SplitLabeling segmentation_to_labeling(const Segmentation& seg, std::size_t n, std::size_t m);

template <typename T>
std::vector<double> to_doubles(const ad::Var<T>& row) {
  const auto& v = row.value();
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<double>(v(i));
  return out;
}

using LabelingReward = std::function<double(const SplitLabeling&)>;

struct ReinforceResult {
  double mean_reward = 0;
  std::vector<SplitLabeling> samples;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::size_t skipped = 0;  // samples whose reward was not finite
};

/// Samples `samples` labelings from `probs`, scores them, and back-propagates
/// -sum_i log p(a_i) * (R_i - baseline) through the tape into parameter
/// gradients. The baseline is the sample mean reward, or 0 when disabled.
/// A non-finite reward marks a skipped sample: it gets zero advantage and is
/// left out of the mean.
template <typename T>
ReinforceResult reinforce_update(const ad::Var<T>& probs, int samples, std::mt19937_64& rng,
                                 const LabelingReward& reward, bool use_baseline = true);

}  // namespace star
