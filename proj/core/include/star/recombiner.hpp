#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "star/autograd.hpp"
#include "star/dataset.hpp"
#include "star/span.hpp"

namespace star {

/// One-to-one partial matching between precedent spans (u) and follow-up
/// spans (v), 0-based, sorted by u. Unlisted spans are EMPTY.
struct ConflictAssignment {
  std::vector<std::pair<int, int>> pairs;

  bool operator==(const ConflictAssignment&) const = default;
  bool operator<(const ConflictAssignment& o) const { return pairs < o.pairs; }
};

struct RestatedCandidate {
  ConflictAssignment assignment;
  Words text;
  double reward = 0;
};

class EnumerationCapError : public Error {
public:
  using Error::Error;
};

inline constexpr std::uint64_t kDefaultCandidateCap = 30000;

/// sum_k C(nx,k) C(ny,k) k!, saturating at UINT64_MAX.
std::uint64_t assignment_count(int nx, int ny);

/// Every one-to-one partial matching, ordered by pair count and then
/// lexicographically by pair list. Throws EnumerationCapError when the count
/// exceeds `cap`.
std::vector<ConflictAssignment> enumerate_assignments(int nx, int ny,
                                                      std::uint64_t cap = kDefaultCandidateCap);

bool is_one_to_one(const ConflictAssignment& a, int nx, int ny);

/// Closed pronoun lexicon used by restatement.
bool is_pronoun(const std::string& word);

/// Rule-based rewrite of (x, y) under an assignment.
///
/// If any matched follow-up span contains a pronoun, the output is built
/// from y: each such span keeps its words before the first pronoun and has
/// the rest replaced by its precedent partner; all other y spans are kept.
/// Otherwise the output is x with every matched span replaced by its
/// follow-up partner, followed by the unmatched follow-up spans that mention
/// a column name or cell value, in follow-up order.
Words restate(const Segmentation& seg, const ConflictAssignment& assignment,
              std::span<const std::string> x, std::span<const std::string> y,
              const SchemaIndex& schema);

/// prod_{u,v} g(u, v) with g = F(u,v) on matched pairs and 1 - F(u,v)
/// elsewhere.
double assignment_prob(const Eigen::MatrixXd& F, const ConflictAssignment& assignment);
double assignment_logprob(const Eigen::MatrixXd& F, const ConflictAssignment& assignment);

/// Expectation of candidate rewards under assignment_prob renormalized over
/// the candidate set (uniform when every probability is zero).
double expected_reward(const Eigen::MatrixXd& F, std::span<const RestatedCandidate> candidates);

/// Highest reward, first in order on ties.
const RestatedCandidate& select_best(std::span<const RestatedCandidate> candidates);

inline constexpr double kRecLossFloor = 1e-12;

/// -log max(assignment_prob, 1e-12), differentiable through F.
template <typename T>
ad::Var<T> rec_loss(const ad::Var<T>& F, const ConflictAssignment& assignment);
double rec_loss(const Eigen::MatrixXd& F, const ConflictAssignment& assignment);

/// Threshold decoding: each follow-up span takes its argmax precedent span
/// (smallest u on ties) when F >= lambda; competing claims on one u keep the
/// larger F (smaller v on ties).
ConflictAssignment infer_assignment(const Eigen::MatrixXd& F, double lambda);

/// Every candidate for a segmentation with its restated text; rewards are
/// left at zero.
std::vector<RestatedCandidate> build_candidates(const Segmentation& seg, std::span<const std::string> x,
                                                std::span<const std::string> y,
                                                const SchemaIndex& schema,
                                                std::uint64_t cap = kDefaultCandidateCap);

/// Words covered by a span.
Words span_words(std::span<const std::string> words, const Span& span);

/// Tab-separated matrix with a header row and a header column, fixed
/// `decimals`.
void write_matrix_tsv(std::ostream& os, const Eigen::MatrixXd& m, const std::vector<std::string>& row_headers,
                      const std::vector<std::string>& col_headers, int decimals = 4);

}  // namespace star
