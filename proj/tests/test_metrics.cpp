#include <doctest.h>

#include "oracles.hpp"
#include "star/metrics.hpp"
#include "support.hpp"

using namespace star;
using star::test::words;

TEST_CASE("sentence BLEU against hand-computed values") {
  for (const auto& c : star::test::bleu_cases()) {
    CAPTURE(c.hypothesis);
    CHECK(bleu4(words(c.reference), words(c.hypothesis)) == doctest::Approx(c.expected).epsilon(1e-12));
  }
  CHECK(bleu4(words("a b"), Words{}) == 0.0);
  CHECK(bleu4(Words{}, words("a b")) == 0.0);
}

TEST_CASE("BLEU stays in the unit interval") {
  std::mt19937_64 rng(8);
  const Words vocab = words("a b c d e f");
  std::uniform_int_distribution<std::size_t> len(1, 9), pick(0, vocab.size() - 1);
  for (int i = 0; i < 300; ++i) {
    Words r, h;
    for (std::size_t k = len(rng); k > 0; --k)
      r.push_back(vocab[pick(rng)]);
    for (std::size_t k = len(rng); k > 0; --k)
      h.push_back(vocab[pick(rng)]);
    const double b = bleu4(r, h);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0 + 1e-12);
    CHECK(bleu4(r, r) == doctest::Approx(1.0));
  }
}

TEST_CASE("numeric literals") {
  CHECK(is_numeric_literal("2010"));
  CHECK(is_numeric_literal("8.2"));
  CHECK(is_numeric_literal("1,000"));
  CHECK_FALSE(is_numeric_literal("."));
  CHECK_FALSE(is_numeric_literal("a1"));
}

TEST_CASE("SymAcc requires every SQL-related group of the reference") {
  TableSchema t = load_table_csv(star::test::data_path("tables/salary.csv"));
  SchemaIndex s(t);
  const Words gold = words("list players with salary more than 6000 and year 2010");
  CHECK(symacc(gold, gold, s) == 1);
  CHECK(symacc(gold, words("list players with salary more than 6000 and 2010 year"), s) == 1);
  CHECK(symacc(gold, words("list players with salary more than 6000 and year"), s) == 0);
  CHECK(symacc(gold, words("list players with salary less than 6000 and year 2010"), s) == 0);
  CHECK(symacc(words("how much money has bill collins earned"), words("how much money has smith earned"), s) == 0);
  CHECK(symacc(words("how much money has bill collins earned"), words("bill collins earned money"), s) == 1);
  // Words of a multi-word cell must stay contiguous.
  CHECK(symacc(words("salary of bill collins"), words("salary of bill and collins"), s) == 0);
  CHECK(symacc(words("show everything"), words("nothing"), s) == 1);
}

TEST_CASE("reward mixes BLEU and SymAcc") {
  SchemaIndex none;
  const Words z = words("how much money has bill collins earned");
  CHECK(reward(z, z, none) == doctest::Approx(1.0));
  CHECK(reward(z, z, none, {0.7, 0.3}) == doctest::Approx(1.0));
  const Words h = words("how much money has smith earned");
  CHECK(reward(z, h, none, {0.7, 0.3}) == doctest::Approx(0.7 * bleu4(z, h) + 0.3 * 1));
  CHECK(reward(z, words("x y z"), none) == doctest::Approx(0.5));
  CHECK_THROWS(RewardWeights{0.7, 0.7}.validate());
  CHECK_THROWS(RewardWeights{1.0, 0.0}.validate());
  CHECK_NOTHROW(RewardWeights{0.5, 0.5}.validate());
}

TEST_CASE("corpus evaluation shape and errors") {
  Vocabulary v;
  auto data = load_dataset(star::test::data_path("followup.jsonl"), v, true);
  TableMap tables = load_tables(star::test::data_path("tables"));
  std::mt19937_64 rng(1);
  auto params = ModelParams<float>::init(star::test::tiny_config().dims(), v.word_count(), v.char_count(), rng);
  EvalReport r = evaluate(params, std::span<const QueryTriple>(data).first(4), tables, 0.6);
  CHECK(r.examples.size() == 4);
  CHECK(r.bleu >= 0.0);
  CHECK(r.bleu <= 1.0);
  CHECK(r.to_json().find("\"symacc\"") != std::string::npos);
  EvalReport again = evaluate(params, std::span<const QueryTriple>(data).first(4), tables, 0.6);
  CHECK(again.to_json() == r.to_json());

  CHECK_THROWS_WITH(evaluate(params, std::span<const QueryTriple>(), tables, 0.6), doctest::Contains("empty"));
  QueryTriple orphan = data[0];
  orphan.table_id = "missing_table";
  CHECK_THROWS_WITH(table_for(orphan, tables), doctest::Contains("missing_table"));
}
