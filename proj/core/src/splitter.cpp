#include "star/splitter.hpp"

#include <cmath>
#include <tuple>

namespace star {

using ad::Matrix;
using ad::Var;

namespace {

constexpr double kLogFloor = 1e-12;

void check_length(std::size_t labels, std::size_t n, std::size_t m) {
  if (labels != label_positions(n, m))
    throw Error("labeling length " + std::to_string(labels) + " does not match (n-1)+(m-1) = " +
                std::to_string(label_positions(n, m)));
}

}  // namespace

CommonBlocks common_blocks(std::span<const Token> x, std::span<const Token> y,
                           std::span<const Token> z) {
  std::vector<bool> used_z(z.size(), false);
  std::vector<bool> used_src[2] = {std::vector<bool>(x.size(), false),
                                   std::vector<bool>(y.size(), false)};
  std::span<const Token> src[2] = {x, y};
  CommonBlocks blocks;

  while (true) {
    // (length, z start, source, source start); lexicographic preference is
    // longest, then smallest of the rest.
    std::size_t best_len = 0, best_z = 0, best_src = 0, best_start = 0;
    for (std::size_t a = 0; a < z.size(); ++a) {
      if (used_z[a])
        continue;
      for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t b = 0; b < src[s].size(); ++b) {
          std::size_t len = 0;
          while (a + len < z.size() && b + len < src[s].size() && !used_z[a + len] &&
                 !used_src[s][b + len] && z[a + len].text == src[s][b + len].text)
            ++len;
          if (len > best_len) {
            best_len = len;
            best_z = a;
            best_src = s;
            best_start = b;
          }
        }
      }
    }
    if (best_len == 0)
      break;
    for (std::size_t k = 0; k < best_len; ++k) {
      used_z[best_z + k] = true;
      used_src[best_src][best_start + k] = true;
    }
    Span span{static_cast<int>(best_start), static_cast<int>(best_start + best_len)};
    (best_src == 0 ? blocks.x : blocks.y).push_back(span);
  }
  return blocks;
}

SplitLabeling derive_pretrain_labels(const QueryTriple& triple) {
  if (!triple.restated)
    throw Error("derive_pretrain_labels: triple has no restated query");
  const std::size_t n = triple.precedent.size(), m = triple.followup.size();
  SplitLabeling labeling;
  labeling.labels.assign(label_positions(n, m), Label::Retain);
  CommonBlocks blocks = common_blocks(triple.precedent, triple.followup, *triple.restated);

  auto mark = [&](const std::vector<Span>& spans, std::size_t len, std::size_t offset) {
    for (const Span& s : spans) {
      if (s.begin > 0)
        labeling.labels[offset + static_cast<std::size_t>(s.begin) - 1] = Label::Split;
      if (static_cast<std::size_t>(s.end) < len)
        labeling.labels[offset + static_cast<std::size_t>(s.end) - 1] = Label::Split;
    }
  };
  mark(blocks.x, n, 0);
  mark(blocks.y, m, n ? n - 1 : 0);
  return labeling;
}

double labeling_logprob(std::span<const double> probs, const SplitLabeling& labeling) {
  if (probs.size() != labeling.size())
    throw Error("labeling_logprob: " + std::to_string(probs.size()) + " probabilities for " +
                std::to_string(labeling.size()) + " labels");
  double total = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    double p = labeling.labels[t] == Label::Split ? probs[t] : 1.0 - probs[t];
    total += std::log(std::max(p, kLogFloor));
  }
  return total;
}

template <typename T>
Var<T> labeling_logprob(const Var<T>& probs, const SplitLabeling& labeling) {
  if (static_cast<std::size_t>(probs.cols()) != labeling.size() || probs.rows() != 1)
    throw Error("labeling_logprob: probability row does not match labeling length");
  ad::Tape<T>& tape = *probs.tape();
  Matrix<T> split(1, probs.cols());
  for (std::size_t t = 0; t < labeling.size(); ++t)
    split(0, static_cast<Eigen::Index>(t)) = labeling.labels[t] == Label::Split ? T(1) : T(0);
  Matrix<T> retain = (T(1) - split.array()).matrix();
  Var<T> lp = ad::cmul(tape.constant(std::move(split)), ad::log_clamped(probs, T(kLogFloor)));
  Var<T> lq = ad::cmul(tape.constant(std::move(retain)),
                       ad::log_clamped(ad::one_minus(probs), T(kLogFloor)));
  return ad::sum(ad::add(lp, lq));
}

std::vector<SplitLabeling> sample_labelings(std::span<const double> probs, int count,
                                            std::mt19937_64& rng) {
  if (count < 1)
    throw Error("sample_labelings: count must be >= 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SplitLabeling> out(static_cast<std::size_t>(count));
  for (auto& l : out) {
    l.labels.resize(probs.size());
    for (std::size_t t = 0; t < probs.size(); ++t)
      l.labels[t] = u(rng) < probs[t] ? Label::Split : Label::Retain;
  }
  return out;
}

SplitLabeling argmax_labeling(std::span<const double> probs) {
  SplitLabeling l;
  l.labels.reserve(probs.size());
  for (double p : probs)
    l.labels.push_back(p >= 0.5 ? Label::Split : Label::Retain);
  return l;
}

Segmentation labeling_to_segmentation(const SplitLabeling& labeling, std::size_t n, std::size_t m) {
  check_length(labeling.size(), n, m);
  Segmentation seg;
  auto build = [&](std::size_t len, std::size_t offset, std::vector<Span>& out) {
    int start = 0;
    for (std::size_t i = 0; i + 1 < len; ++i) {
      if (labeling.labels[offset + i] == Label::Split) {
        out.push_back({start, static_cast<int>(i) + 1});
        start = static_cast<int>(i) + 1;
      }
    }
    if (len > 0)
      out.push_back({start, static_cast<int>(len)});
  };
  build(n, 0, seg.x);
  build(m, n ? n - 1 : 0, seg.y);
  return seg;
}

SplitLabeling segmentation_to_labeling(const Segmentation& seg, std::size_t n, std::size_t m) {
  SplitLabeling labeling;
  labeling.labels.assign(label_positions(n, m), Label::Retain);
  auto mark = [&](const std::vector<Span>& spans, std::size_t len, std::size_t offset) {
    int expect = 0;
    for (const Span& s : spans) {
      if (s.begin != expect || s.end <= s.begin || static_cast<std::size_t>(s.end) > len)
        throw Error("segmentation_to_labeling: spans do not tile the query");
      if (static_cast<std::size_t>(s.end) < len)
        labeling.labels[offset + static_cast<std::size_t>(s.end) - 1] = Label::Split;
      expect = s.end;
    }
    if (static_cast<std::size_t>(expect) != len)
      throw Error("segmentation_to_labeling: spans do not cover the query");
  };
  mark(seg.x, n, 0);
  mark(seg.y, m, n ? n - 1 : 0);
  return labeling;
}

template <typename T>
ReinforceResult reinforce_update(const Var<T>& probs, int samples, std::mt19937_64& rng,
                                 const LabelingReward& reward, bool use_baseline) {
  if (samples < 1 || (use_baseline && samples < 2))
    throw Error("reinforce_update: need at least 2 samples for the mean-reward baseline");
  ReinforceResult res;
  std::vector<double> p = to_doubles(probs);
  res.samples = sample_labelings(p, samples, rng);
  res.rewards.reserve(res.samples.size());
  for (const auto& s : res.samples)
    res.rewards.push_back(reward(s));
  double mean = 0;
  std::size_t valid = 0;
  for (double r : res.rewards)
    if (std::isfinite(r)) {
      mean += r;
      ++valid;
    }
  res.skipped = res.rewards.size() - valid;
  mean = valid ? mean / static_cast<double>(valid) : 0.0;
  res.mean_reward = mean;
  const double baseline = use_baseline ? mean : 0.0;
  for (double r : res.rewards)
    res.advantages.push_back(std::isfinite(r) ? r - baseline : 0.0);
  if (valid == 0)
    return res;

  // sum_i adv_i * log p(a_i) = sum_t W_t log p_t + V_t log(1 - p_t), where W
  // and V accumulate the advantages of samples that chose Split and Retain.
  const auto T_len = probs.cols();
  Matrix<T> w = Matrix<T>::Zero(1, T_len), v = Matrix<T>::Zero(1, T_len);
  for (std::size_t i = 0; i < res.samples.size(); ++i)
    for (Eigen::Index t = 0; t < T_len; ++t) {
      const auto a = static_cast<T>(res.advantages[i]);
      if (res.samples[i].labels[static_cast<std::size_t>(t)] == Label::Split)
        w(0, t) += a;
      else
        v(0, t) += a;
    }
  ad::Tape<T>& tape = *probs.tape();
  Var<T> lp = ad::cmul(tape.constant(std::move(w)), ad::log_clamped(probs, T(kLogFloor)));
  Var<T> lq = ad::cmul(tape.constant(std::move(v)), ad::log_clamped(ad::one_minus(probs), T(kLogFloor)));
  Var<T> surrogate = ad::scale(ad::sum(ad::add(lp, lq)), T(-1));
  tape.backward(surrogate);
  return res;
}

template Var<float> labeling_logprob<float>(const Var<float>&, const SplitLabeling&);
template Var<double> labeling_logprob<double>(const Var<double>&, const SplitLabeling&);
template ReinforceResult reinforce_update<float>(const Var<float>&, int, std::mt19937_64&,
                                                 const LabelingReward&, bool);
template ReinforceResult reinforce_update<double>(const Var<double>&, int, std::mt19937_64&,
                                                  const LabelingReward&, bool);

}  // namespace star
