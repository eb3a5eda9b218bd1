#pragma once

#include <span>
#include <string>
#include <vector>

#include "star/dataset.hpp"
#include "star/model.hpp"
#include "star/recombiner.hpp"

namespace star {

/// Sentence-level cumulative 4-gram BLEU: geometric mean of clipped 1..4-gram
/// precisions times the brevity penalty. An order n >= 2 with no matching
/// n-gram uses 1 / (total_n + 1). Empty hypothesis scores 0.
double bleu4(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// Words that mark SQL content besides schema phrases and numbers.
struct SymAccConfig {
  std::vector<std::string> keywords = {"more", "less",  "than",     "most",     "least",   "highest",
                                       "lowest", "biggest", "smallest", "before", "after", "not",
                                       "or",   "and",   "average",  "sum",      "count"};
  static SymAccConfig defaults() { return {}; }
};

bool is_numeric_literal(const std::string& word);

/// 1 when every SQL-related group of the reference (schema phrase, numeric
/// literal, keyword) also occurs in the hypothesis, else 0.
int symacc(std::span<const std::string> reference, std::span<const std::string> hypothesis,
           const SchemaIndex& schema, const SymAccConfig& config = SymAccConfig::defaults());

struct RewardWeights {
  double alpha = 0.5;  // BLEU
  double beta = 0.5;   // SymAcc

  /// Throws unless alpha, beta > 0 and alpha + beta = 1.
  void validate() const;
};

double reward(std::span<const std::string> gold, std::span<const std::string> predicted,
              const SchemaIndex& schema, const RewardWeights& weights = {},
              const SymAccConfig& config = SymAccConfig::defaults());

// ---------------------------------------------------------------------------
// Inference and corpus evaluation

struct Prediction {
  SplitLabeling labeling;
  Segmentation segmentation;
  Eigen::MatrixXd similarity;  // A
  Eigen::MatrixXd conflicts;   // F
  ConflictAssignment assignment;
  Words restated;
};

/// Split (p >= 0.5) -> conflict matrix -> threshold decoding -> restatement.
Prediction predict(ModelParams<float>& params, const QueryTriple& triple, const SchemaIndex& schema,
                   double lambda);

struct ExampleResult {
  std::string precedent;
  std::string followup;
  std::string gold;
  std::string predicted;
  double bleu = 0;
  int symacc = 0;
};

struct EvalReport {
  double symacc = 0;
  double bleu = 0;
  std::vector<ExampleResult> examples;

  std::string to_json(int indent = 2) const;
};

/// Resolves a triple's table; throws naming the table id when it is absent.
/// An empty table id maps to an empty schema.
const TableSchema& table_for(const QueryTriple& triple, const TableMap& tables);

EvalReport evaluate(ModelParams<float>& params, std::span<const QueryTriple> dataset,
                    const TableMap& tables, double lambda,
                    const SymAccConfig& config = SymAccConfig::defaults());

}  // namespace star
