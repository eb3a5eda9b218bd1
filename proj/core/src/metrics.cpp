#include "star/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace star {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, int> ngram_counts(std::span<const std::string> words, std::size_t n) {
  std::map<NGram, int> counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[NGram(words.begin() + static_cast<std::ptrdiff_t>(i),
                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

double bleu4(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (hypothesis.empty() || reference.empty())
    return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto hyp = ngram_counts(hypothesis, n);
    auto ref = ngram_counts(reference, n);
    int matches = 0, total = 0;
    for (const auto& [gram, count] : hyp) {
      total += count;
      auto it = ref.find(gram);
      if (it != ref.end())
        matches += std::min(count, it->second);
    }
    double precision;
    if (matches > 0)
      precision = static_cast<double>(matches) / total;
    else if (n == 1)
      return 0.0;
    else
      precision = 1.0 / (total + 1);
    log_sum += std::log(precision);
  }
  const auto c = static_cast<double>(hypothesis.size());
  const auto r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

bool is_numeric_literal(const std::string& word) {
  bool digit = false;
  for (char c : word) {
    if (std::isdigit(static_cast<unsigned char>(c)))
      digit = true;
    else if (c != '.' && c != ',')
      return false;
  }
  return digit;
}

int symacc(std::span<const std::string> reference, std::span<const std::string> hypothesis,
           const SchemaIndex& schema, const SymAccConfig& config) {
  for (const Words& phrase : schema.phrases_in(reference))
    if (!contains_phrase(hypothesis, phrase))
      return 0;
  auto in_hyp = [&](const std::string& w) {
    return std::find(hypothesis.begin(), hypothesis.end(), w) != hypothesis.end();
  };
  for (const std::string& w : reference) {
    bool related = is_numeric_literal(w) ||
                   std::find(config.keywords.begin(), config.keywords.end(), w) != config.keywords.end();
    if (related && !in_hyp(w))
      return 0;
  }
  return 1;
}

void RewardWeights::validate() const {
  if (!(alpha > 0) || !(beta > 0))
    throw Error("reward weights: alpha and beta must be positive");
  if (std::abs(alpha + beta - 1.0) > 1e-9)
    throw Error("reward weights: alpha + beta must equal 1 (got " + std::to_string(alpha + beta) + ")");
}

double reward(std::span<const std::string> gold, std::span<const std::string> predicted,
              const SchemaIndex& schema, const RewardWeights& weights, const SymAccConfig& config) {
  return weights.alpha * bleu4(gold, predicted) + weights.beta * symacc(gold, predicted, schema, config);
}

}  // namespace star
