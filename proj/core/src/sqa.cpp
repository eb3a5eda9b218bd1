#include "star/sqa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "star/optimizer.hpp"
#include "star/splitter.hpp"

namespace star {

namespace {

using nlohmann::json;

AnswerSet parse_cells(const json& j, const std::string& field, std::size_t line) {
  if (!j.is_array())
    throw Error(field + " must be an array of [row, col] at line " + std::to_string(line));
  AnswerSet out;
  for (const auto& c : j) {
    if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer())
      throw Error(field + " must be an array of [row, col] at line " + std::to_string(line));
    out.insert({c[0].get<int>(), c[1].get<int>()});
  }
  return out;
}

Eigen::VectorXd span_vector(const Eigen::MatrixXd& states, const Span& s, int hidden) {
  const Eigen::Index i = s.begin, k = s.end - 1;
  Eigen::VectorXd v(2 * hidden);
  v.head(hidden) = states.col(k).head(hidden) - states.col(i).head(hidden);
  v.tail(hidden) = states.col(i).tail(hidden) - states.col(k).tail(hidden);
  return v;
}

IntentionDist mean_dist(std::span<const IntentionDist> dists) {
  IntentionDist m{};
  for (const auto& d : dists)
    for (int i = 0; i < kIntentionCount; ++i)
      m[i] += d[i] / static_cast<double>(dists.size());
  return m;
}

struct Answers {
  AnswerSet wx, wy;
  std::array<double, kIntentionCount> score{};  // jaccard per intention
};

Answers oracle_answers(const SqaExample& ex, const TableSchema& table, const AnswerOracle& oracle) {
  Answers a;
  a.wx = oracle.answer(token_texts(ex.precedent), table);
  a.wy = oracle.answer(token_texts(ex.followup), table);
  check_in_bounds(a.wx, table);
  check_in_bounds(a.wy, table);
  for (int i = 0; i < kIntentionCount; ++i)
    a.score[i] = jaccard(ex.followup_answer, recombine_answers(static_cast<Intention>(i), a.wx, a.wy, table));
  return a;
}

const TableSchema& table_of(const SqaExample& ex, const TableMap& tables) {
  auto it = tables.find(ex.table_id);
  if (it == tables.end())
    throw Error("no table schema for table_id " + ex.table_id);
  return it->second;
}

}  // namespace

std::string to_string(Intention intention) {
  switch (intention) {
    case Intention::Column: return "column";
    case Intention::Subset: return "subset";
    case Intention::Row: return "row";
  }
  return "column";
}

LookupOracle LookupOracle::load(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open oracle file " + path);
  return parse(is);
}

LookupOracle LookupOracle::parse(std::istream& is) {
  LookupOracle o;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Error("malformed JSON at line " + std::to_string(lineno));
    }
    if (!j.contains("query") || !j["query"].is_string())
      throw Error("missing field query at line " + std::to_string(lineno));
    if (!j.contains("answer"))
      throw Error("missing field answer at line " + std::to_string(lineno));
    o.add(token_texts(tokenize(j["query"].get<std::string>())), parse_cells(j["answer"], "answer", lineno));
  }
  return o;
}

void LookupOracle::add(std::span<const std::string> query, AnswerSet cells) {
  entries_[join_words(query)] = std::move(cells);
}

AnswerSet LookupOracle::answer(std::span<const std::string> query, const TableSchema& table) const {
  auto it = entries_.find(join_words(query));
  if (it == entries_.end())
    return {};
  check_in_bounds(it->second, table);
  return it->second;
}

std::vector<SqaExample> load_sqa_dataset(const std::string& path, Vocabulary& vocab, bool grow_vocab) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open dataset " + path);
  return parse_sqa_dataset(is, vocab, grow_vocab);
}

std::vector<SqaExample> parse_sqa_dataset(std::istream& is, Vocabulary& vocab, bool grow_vocab) {
  std::vector<SqaExample> out;
  std::string line;
  std::size_t lineno = 0;
  auto tokens = [&](const std::string& text) {
    TokenSeq seq = tokenize(text);
    for (auto& t : seq)
      vocab.index(t, grow_vocab);
    return seq;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Error("malformed JSON at line " + std::to_string(lineno));
    }
    for (const char* f : {"precedent", "followup", "precedent_answer", "followup_answer"})
      if (!j.contains(f))
        throw Error(std::string("missing field ") + f + " at line " + std::to_string(lineno));
    SqaExample ex;
    ex.precedent = tokens(j["precedent"].get<std::string>());
    ex.followup = tokens(j["followup"].get<std::string>());
    if (ex.precedent.empty() || ex.followup.empty())
      throw Error("empty query at line " + std::to_string(lineno));
    ex.table_id = j.value("table_id", std::string());
    ex.precedent_answer = parse_cells(j["precedent_answer"], "precedent_answer", lineno);
    ex.followup_answer = parse_cells(j["followup_answer"], "followup_answer", lineno);
    out.push_back(std::move(ex));
  }
  return out;
}

void check_in_bounds(const AnswerSet& cells, const TableSchema& table) {
  for (const Cell& c : cells)
    if (c.row < 0 || c.col < 0 || static_cast<std::size_t>(c.row) >= table.rows() ||
        static_cast<std::size_t>(c.col) >= table.cols())
      throw Error("answer cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                  ") outside a " + std::to_string(table.rows()) + "x" + std::to_string(table.cols()) +
                  " table");
}

IntentionDist classify_intention(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                 const Eigen::VectorXd& span_vector) {
  if (weights.rows() != kIntentionCount || bias.size() != kIntentionCount ||
      weights.cols() != span_vector.size())
    throw Error("classify_intention: shape mismatch");
  Eigen::VectorXd logits = weights * span_vector + bias;
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp();
  e /= e.sum();
  return {e(0), e(1), e(2)};
}

Intention argmax_intention(const IntentionDist& dist) {
  return static_cast<Intention>(std::max_element(dist.begin(), dist.end()) - dist.begin());
}

Intention vote_intention(std::span<const IntentionDist> per_span) {
  if (per_span.empty())
    throw Error("vote_intention: no spans");
  std::array<int, kIntentionCount> votes{};
  std::array<double, kIntentionCount> mass{};
  for (const auto& d : per_span) {
    ++votes[static_cast<int>(argmax_intention(d))];
    for (int i = 0; i < kIntentionCount; ++i)
      mass[i] += d[i];
  }
  int best = 0;
  for (int i = 1; i < kIntentionCount; ++i)
    if (votes[i] > votes[best] || (votes[i] == votes[best] && mass[i] > mass[best]))
      best = i;
  return static_cast<Intention>(best);
}

std::set<int> rows_of(const AnswerSet& cells) {
  std::set<int> r;
  for (const Cell& c : cells)
    r.insert(c.row);
  return r;
}

std::set<int> columns_of(const AnswerSet& cells) {
  std::set<int> r;
  for (const Cell& c : cells)
    r.insert(c.col);
  return r;
}

AnswerSet recombine_answers(Intention intention, const AnswerSet& wx, const AnswerSet& wy,
                            const TableSchema& table) {
  switch (intention) {
    case Intention::Column:
      return wy;
    case Intention::Subset: {
      const auto rows = rows_of(wy);
      AnswerSet out;
      for (const Cell& c : wx)
        if (rows.count(c.row))
          out.insert(c);
      return out;
    }
    case Intention::Row: {
      AnswerSet out;
      const auto cols = columns_of(wy);
      for (int r : rows_of(wx))
        for (int c : cols)
          if (r >= 0 && c >= 0 && static_cast<std::size_t>(r) < table.rows() &&
              static_cast<std::size_t>(c) < table.cols())
            out.insert({r, c});
      return out;
    }
  }
  return {};
}

double jaccard(const AnswerSet& gold, const AnswerSet& predicted) {
  if (gold.empty() && predicted.empty())
    return 1.0;
  std::size_t inter = 0;
  for (const Cell& c : predicted)
    inter += gold.count(c);
  return static_cast<double>(inter) / static_cast<double>(gold.size() + predicted.size() - inter);
}

SqaPrediction predict_sqa(ModelParams<float>& params, const SqaExample& example, const TableSchema& table,
                          const AnswerOracle& oracle) {
  ad::Tape<float> tape(false);
  auto out = run_splitnet(tape, params, example.precedent, example.followup);
  SqaPrediction p;
  p.labeling = argmax_labeling(out.probs.valid() ? to_doubles(out.probs) : std::vector<double>{});
  p.segmentation = labeling_to_segmentation(p.labeling, example.precedent.size(), example.followup.size());
  const Eigen::MatrixXd states = out.encoder.y.states.value().cast<double>();
  const Eigen::MatrixXd w = params.intent_w.value.cast<double>();
  const Eigen::VectorXd b = params.intent_b.value.cast<double>();
  for (const Span& s : p.segmentation.y)
    p.span_intentions.push_back(classify_intention(w, b, span_vector(states, s, params.dims.hidden)));
  p.intention = vote_intention(p.span_intentions);
  AnswerSet wx = oracle.answer(token_texts(example.precedent), table);
  AnswerSet wy = oracle.answer(token_texts(example.followup), table);
  p.answer = recombine_answers(p.intention, wx, wy, table);
  return p;
}

std::string SqaReport::to_json(int indent) const {
  json j;
  j["accuracy"] = accuracy;
  j["jaccard"] = jaccard;
  j["examples"] = examples;
  j["intentions"] = intentions;
  return j.dump(indent);
}

SqaReport evaluate_sqa(ModelParams<float>& params, std::span<const SqaExample> examples,
                       const TableMap& tables, const AnswerOracle& oracle) {
  if (examples.empty())
    throw Error("empty evaluation set");
  SqaReport r;
  for (const auto& ex : examples) {
    SqaPrediction p = predict_sqa(params, ex, table_of(ex, tables), oracle);
    r.accuracy += p.answer == ex.followup_answer;
    r.jaccard += star::jaccard(ex.followup_answer, p.answer);
    ++r.intentions[to_string(p.intention)];
  }
  r.examples = examples.size();
  r.accuracy /= static_cast<double>(examples.size());
  r.jaccard /= static_cast<double>(examples.size());
  return r;
}

SqaTrainResult train_sqa(const TrainConfig& config, ModelParams<float> params,
                         std::span<const SqaExample> train, const TableMap& tables,
                         const AnswerOracle& oracle, Logger log) {
  config.validate();
  if (params.dims.intentions != kIntentionCount)
    throw Error("train_sqa: model has " + std::to_string(params.dims.intentions) + " intentions, expected 3");
  std::vector<Answers> answers;
  for (const auto& ex : train)
    answers.push_back(oracle_answers(ex, table_of(ex, tables), oracle));

  SqaTrainResult result;
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 3u};
  std::mt19937_64 rng(seq);
  Adam<float> opt(config.lr_sqa);
  auto split_group = params.group(ParamGroup::Shared);
  auto more = params.group(ParamGroup::SplitOnly);
  split_group.insert(split_group.end(), more.begin(), more.end());
  auto rec_group = params.group(ParamGroup::Shared);
  more = params.group(ParamGroup::IntentionOnly);
  rec_group.insert(rec_group.end(), more.begin(), more.end());
  const float dropout = static_cast<float>(config.dropout);
  const int hidden = params.dims.hidden;
  const std::size_t N = train.size();

  auto split_step = [&](std::size_t i) {
    const auto& ex = train[i];
    ad::Tape<float> tape;
    auto out = run_splitnet(tape, params, ex.precedent, ex.followup, &rng, dropout);
    if (!out.probs.valid())
      return;
    const Eigen::MatrixXd states = out.encoder.y.states.value().cast<double>();
    const Eigen::MatrixXd w = params.intent_w.value.cast<double>();
    const Eigen::VectorXd b = params.intent_b.value.cast<double>();
    auto fn = [&](const SplitLabeling& l) {
      Segmentation seg = labeling_to_segmentation(l, ex.precedent.size(), ex.followup.size());
      std::vector<IntentionDist> dists;
      for (const Span& s : seg.y)
        dists.push_back(classify_intention(w, b, span_vector(states, s, hidden)));
      IntentionDist p = mean_dist(dists);
      double r = 0;
      for (int k = 0; k < kIntentionCount; ++k)
        r += p[k] * answers[i].score[k];
      return r;
    };
    ReinforceResult r = reinforce_update(out.probs, config.samples, rng, fn, true);
    opt.step(split_group, config.clip_norm);
    result.reward_history.push_back(r.mean_reward);
  };

  auto rec_step = [&](std::size_t i) {
    const auto& ex = train[i];
    ad::Tape<float> tape;
    auto out = run_splitnet(tape, params, ex.precedent, ex.followup, &rng, dropout);
    SplitLabeling l;
    if (out.probs.valid())
      l = sample_labelings(to_doubles(out.probs), 1, rng).front();
    Segmentation seg = labeling_to_segmentation(l, ex.precedent.size(), ex.followup.size());
    const auto& score = answers[i].score;
    const int target = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
    std::vector<ad::Var<float>> cols;
    for (const Span& s : seg.y)
      cols.push_back(span_repr(out.encoder.y, s));
    auto probs = intention_probs(tape, params, ad::concat_cols<float>(std::span<const ad::Var<float>>(cols)));
    ad::Matrix<float> pick = ad::Matrix<float>::Zero(kIntentionCount, probs.cols());
    pick.row(target).setOnes();
    auto ll = ad::sum(ad::cmul(tape.constant(std::move(pick)), ad::log_clamped(probs, 1e-12f)));
    auto loss = ad::scale(ll, -1.0f / static_cast<float>(probs.cols()));
    tape.backward(loss);
    opt.step(rec_group, config.clip_norm);
  };

  auto update = [&](Phase phase, std::size_t step, std::size_t i) {
    if (phase == Phase::Split)
      split_step(i);
    else
      rec_step(i);
    params.zero_grad();
    if ((step + 1) % N == 0 && log) {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(4);
      os << "train_sqa epoch " << (step + 1) / N << " mean_reward(50) ";
      const std::size_t n = result.reward_history.size(), from = n > 50 ? n - 50 : 0;
      double s = 0;
      for (std::size_t k = from; k < n; ++k)
        s += result.reward_history[k];
      os << (n > from ? s / static_cast<double>(n - from) : 0.0);
      log(os.str());
    }
  };

  const std::size_t period =
      config.alternation_period > 0 ? static_cast<std::size_t>(config.alternation_period) : N;
  result.phase_switches =
      run_alternation(N, static_cast<std::size_t>(config.rl_epochs) * N, period, rng, update);
  result.params = std::move(params);
  return result;
}

}  // namespace star
