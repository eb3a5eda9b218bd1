#pragma once

#include <array>
#include <compare>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "star/config.hpp"
#include "star/dataset.hpp"
#include "star/model.hpp"
#include "star/trainer.hpp"

namespace star {

/// How a follow-up answer relates to the precedent answer.
enum class Intention { Column = 0, Subset = 1, Row = 2 };

inline constexpr int kIntentionCount = 3;
std::string to_string(Intention intention);

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

using AnswerSet = std::set<Cell>;
using IntentionDist = std::array<double, kIntentionCount>;

/// Context-independent parser stand-in: maps a query over a table to cells.
class AnswerOracle {
public:
  virtual ~AnswerOracle() = default;
  virtual AnswerSet answer(std::span<const std::string> query, const TableSchema& table) const = 0;
};

/// Answers from a fixed query -> cells table read from JSONL lines
/// {"query": ..., "answer": [[r, c], ...]}. Queries are matched on their
/// tokenized form; unknown queries get an empty answer.
class LookupOracle : public AnswerOracle {
public:
  LookupOracle() = default;
  static LookupOracle load(const std::string& path);
  static LookupOracle parse(std::istream& is);

  void add(std::span<const std::string> query, AnswerSet cells);
  AnswerSet answer(std::span<const std::string> query, const TableSchema& table) const override;
  std::size_t size() const { return entries_.size(); }

private:
  std::map<std::string, AnswerSet> entries_;
};

struct SqaExample {
  TokenSeq precedent;
  TokenSeq followup;
  std::string table_id;
  AnswerSet precedent_answer;
  AnswerSet followup_answer;
};

/// JSONL lines {precedent, followup, table_id, precedent_answer,
/// followup_answer}; answers are [[row, col], ...].
std::vector<SqaExample> load_sqa_dataset(const std::string& path, Vocabulary& vocab, bool grow_vocab);
std::vector<SqaExample> parse_sqa_dataset(std::istream& is, Vocabulary& vocab, bool grow_vocab);

/// Throws unless every cell lies inside the table.
void check_in_bounds(const AnswerSet& cells, const TableSchema& table);

/// Softmax of W v + b.
IntentionDist classify_intention(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                 const Eigen::VectorXd& span_vector);

Intention argmax_intention(const IntentionDist& dist);

/// Plurality of per-span argmaxes; ties go to the larger summed probability,
/// then to Column, Subset, Row in that order.
Intention vote_intention(std::span<const IntentionDist> per_span);

std::set<int> rows_of(const AnswerSet& cells);
std::set<int> columns_of(const AnswerSet& cells);

/// Column: wy. Subset: cells of wx in rows of wy. Row: every table cell in a
/// row of wx and a column of wy.
AnswerSet recombine_answers(Intention intention, const AnswerSet& wx, const AnswerSet& wy,
                            const TableSchema& table);

/// |a ∩ b| / |a ∪ b|; two empty sets score 1.
double jaccard(const AnswerSet& gold, const AnswerSet& predicted);

struct SqaPrediction {
  SplitLabeling labeling;
  Segmentation segmentation;
  std::vector<IntentionDist> span_intentions;
  Intention intention = Intention::Column;
  AnswerSet answer;
};

SqaPrediction predict_sqa(ModelParams<float>& params, const SqaExample& example, const TableSchema& table,
                          const AnswerOracle& oracle);

struct SqaReport {
  double accuracy = 0;  // exact answer match
  double jaccard = 0;
  std::size_t examples = 0;
  std::map<std::string, std::size_t> intentions;

  std::string to_json(int indent = 2) const;
};

SqaReport evaluate_sqa(ModelParams<float>& params, std::span<const SqaExample> examples,
                       const TableMap& tables, const AnswerOracle& oracle);

struct SqaTrainResult {
  ModelParams<float> params;
  std::vector<double> reward_history;
  std::size_t phase_switches = 0;
};

/// The alternating schedule of train_rl with the answer-level reward:
/// R(q) = sum_I P(I | q) jaccard(w, recombine(I)), where P(I | q) averages
/// the follow-up span classifiers. Phase II raises the log-probability of
/// the best-scoring intention on every follow-up span.
SqaTrainResult train_sqa(const TrainConfig& config, ModelParams<float> params,
                         std::span<const SqaExample> train, const TableMap& tables,
                         const AnswerOracle& oracle, Logger log = {});

}  // namespace star
