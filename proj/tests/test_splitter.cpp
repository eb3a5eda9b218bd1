#include <doctest.h>

#include <cmath>
#include <limits>

#include "star/splitter.hpp"
#include "support.hpp"

using namespace star;

namespace {

SplitLabeling from_string(const std::string& s) {
  SplitLabeling l;
  for (char c : s)
    l.labels.push_back(c == 'S' ? Label::Split : Label::Retain);
  return l;
}

SplitLabeling from_bits(unsigned bits, std::size_t T) {
  SplitLabeling l;
  for (std::size_t t = 0; t < T; ++t)
    l.labels.push_back((bits >> t) & 1u ? Label::Split : Label::Retain);
  return l;
}

}  // namespace

TEST_CASE("derived labels for the running example") {
  Vocabulary v;
  QueryTriple t = make_triple("How much money has Smith earned", "How about Bill Collins",
                              "How much money has Bill Collins earned", "", v, true);
  CommonBlocks blocks = common_blocks(t.precedent, t.followup, *t.restated);
  CHECK(blocks.x == std::vector<Span>{{0, 4}, {5, 6}});
  CHECK(blocks.y == std::vector<Span>{{2, 4}});

  SplitLabeling l = derive_pretrain_labels(t);
  CHECK(l == from_string("RRRSSRSR"));
  Segmentation seg = labeling_to_segmentation(l, 6, 4);
  CHECK(seg.x == std::vector<Span>{{0, 4}, {4, 5}, {5, 6}});
  CHECK(seg.y == std::vector<Span>{{0, 2}, {2, 4}});
}

TEST_CASE("derived labels need a restated query") {
  Vocabulary v;
  QueryTriple t = make_triple("a b", "c d", std::nullopt, "", v, true);
  CHECK_THROWS(derive_pretrain_labels(t));
}

TEST_CASE("identical restatement yields no interior splits on x") {
  Vocabulary v;
  QueryTriple t = make_triple("show all cities", "sorted", "show all cities", "", v, true);
  SplitLabeling l = derive_pretrain_labels(t);
  CHECK(l == from_string("RR"));
}

TEST_CASE("labeling and segmentation are inverse") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> len(1, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = len(rng), m = len(rng);
    const std::size_t T = label_positions(n, m);
    SplitLabeling l = from_bits(static_cast<unsigned>(rng()), T);
    Segmentation seg = labeling_to_segmentation(l, n, m);
    int covered = 0;
    for (const Span& s : seg.x) {
      CHECK(s.begin == covered);
      covered = s.end;
    }
    CHECK(covered == static_cast<int>(n));
    CHECK(segmentation_to_labeling(seg, n, m) == l);
  }
  CHECK_THROWS(labeling_to_segmentation(from_string("RR"), 3, 3));
  CHECK_THROWS(segmentation_to_labeling(Segmentation{{{0, 2}}, {{0, 1}}}, 3, 1));
}

TEST_CASE("labeling probabilities sum to one") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (std::size_t T : {1u, 5u, 12u}) {
    std::vector<double> p(T);
    for (auto& x : p)
      x = u(rng);
    double total = 0;
    for (unsigned bits = 0; bits < (1u << T); ++bits)
      total += std::exp(labeling_logprob(p, from_bits(bits, T)));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  std::vector<double> p{0.2, 0.7};
  CHECK(labeling_logprob(p, from_string("SR")) == doctest::Approx(std::log(0.2 * 0.3)));
  CHECK_THROWS(labeling_logprob(p, from_string("S")));
}

TEST_CASE("differentiable labeling log-probability matches the value version") {
  ad::Parameter<double> probs("p", (ad::Matrix<double>(1, 3) << 0.1, 0.6, 0.9).finished());
  ad::Tape<double> tape;
  auto lp = labeling_logprob(tape.parameter(probs), from_string("SRS"));
  std::vector<double> p{0.1, 0.6, 0.9};
  CHECK(lp.scalar() == doctest::Approx(labeling_logprob(p, from_string("SRS"))));
  tape.backward(lp);
  CHECK(probs.grad(0, 0) == doctest::Approx(1 / 0.1));
  CHECK(probs.grad(0, 1) == doctest::Approx(-1 / 0.4));
}

TEST_CASE("sampling frequencies track probabilities") {
  std::mt19937_64 rng(12);
  std::vector<double> p{0.1, 0.5, 0.9};
  auto samples = sample_labelings(p, 20000, rng);
  for (std::size_t t = 0; t < p.size(); ++t) {
    double hits = 0;
    for (const auto& s : samples)
      hits += s.labels[t] == Label::Split;
    CHECK(hits / 20000.0 == doctest::Approx(p[t]).epsilon(0.03));
  }
  CHECK(argmax_labeling(p) == from_string("RSS"));
  CHECK_THROWS(sample_labelings(p, 0, rng));
}

TEST_CASE("reinforce gradient equals the score-function estimate") {
  ad::Parameter<double> probs("p", (ad::Matrix<double>(1, 4) << 0.3, 0.5, 0.8, 0.2).finished());
  std::mt19937_64 rng(21);
  const SplitLabeling gold = from_string("SRSR");
  auto reward = [&](const SplitLabeling& l) {
    double agree = 0;
    for (std::size_t t = 0; t < l.size(); ++t)
      agree += l.labels[t] == gold.labels[t];
    return agree / 4.0;
  };
  ad::Tape<double> tape;
  ReinforceResult r = reinforce_update(tape.parameter(probs), 8, rng, reward);
  REQUIRE(r.samples.size() == 8);
  double mean = 0;
  for (double x : r.rewards)
    mean += x / 8;
  CHECK(r.mean_reward == doctest::Approx(mean));
  double adv_sum = 0;
  for (double a : r.advantages)
    adv_sum += a;
  CHECK(adv_sum == doctest::Approx(0.0).epsilon(1e-12));

  for (Eigen::Index t = 0; t < 4; ++t) {
    const double p = probs.value(0, t);
    double expect = 0;
    for (std::size_t i = 0; i < 8; ++i)
      expect -= r.advantages[i] * (r.samples[i].labels[t] == Label::Split ? 1 / p : -1 / (1 - p));
    CHECK(probs.grad(0, t) == doctest::Approx(expect));
  }
}

TEST_CASE("reinforce skips non-finite rewards and validates sample counts") {
  ad::Parameter<double> probs("p", (ad::Matrix<double>(1, 2) << 0.5, 0.5).finished());
  std::mt19937_64 rng(1);
  int calls = 0;
  auto reward = [&](const SplitLabeling&) {
    return ++calls % 2 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
  };
  ad::Tape<double> tape;
  ReinforceResult r = reinforce_update(tape.parameter(probs), 6, rng, reward);
  CHECK(r.skipped == 3);
  CHECK(r.mean_reward == doctest::Approx(1.0));
  for (std::size_t i = 0; i < 6; ++i)
    if (!std::isfinite(r.rewards[i]))
      CHECK(r.advantages[i] == 0.0);

  ad::Tape<double> t2;
  CHECK_THROWS(reinforce_update(t2.parameter(probs), 1, rng, reward));
  CHECK_NOTHROW(reinforce_update(t2.parameter(probs), 1, rng, reward, false));

  probs.zero_grad();
  ad::Tape<double> t3;
  auto none = reinforce_update(t3.parameter(probs), 4, rng,
                               [](const SplitLabeling&) { return std::numeric_limits<double>::infinity(); });
  CHECK(none.skipped == 4);
  CHECK(probs.grad.isZero());
}
