#include "star/recombiner.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <unordered_set>

namespace star {

using ad::Matrix;
using ad::Var;

std::uint64_t assignment_count(int nx, int ny) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (nx < 0 || ny < 0)
    return 0;
  // term_k = C(nx,k) C(ny,k) k! = term_{k-1} * (nx-k+1)(ny-k+1) / k
  std::uint64_t total = 1, term = 1;
  for (int k = 1; k <= std::min(nx, ny); ++k) {
    unsigned __int128 next = static_cast<unsigned __int128>(term) * static_cast<unsigned>(nx - k + 1) *
                             static_cast<unsigned>(ny - k + 1);
    next /= static_cast<unsigned>(k);
    if (next > kMax)
      return kMax;
    term = static_cast<std::uint64_t>(next);
    if (total > kMax - term)
      return kMax;
    total += term;
  }
  return total;
}

namespace {

void enumerate_k(int nx, int ny, int k, int next_u, std::vector<bool>& used_v,
                 std::vector<std::pair<int, int>>& current, std::vector<ConflictAssignment>& out) {
  if (static_cast<int>(current.size()) == k) {
    out.push_back({current});
    return;
  }
  const int remaining = k - static_cast<int>(current.size());
  for (int u = next_u; u + remaining <= nx; ++u) {
    for (int v = 0; v < ny; ++v) {
      if (used_v[static_cast<std::size_t>(v)])
        continue;
      used_v[static_cast<std::size_t>(v)] = true;
      current.emplace_back(u, v);
      enumerate_k(nx, ny, k, u + 1, used_v, current, out);
      current.pop_back();
      used_v[static_cast<std::size_t>(v)] = false;
    }
  }
}

}  // namespace

std::vector<ConflictAssignment> enumerate_assignments(int nx, int ny, std::uint64_t cap) {
  if (nx < 1 || ny < 1)
    throw Error("enumerate_assignments: both span counts must be >= 1");
  const std::uint64_t count = assignment_count(nx, ny);
  if (count > cap)
    throw EnumerationCapError("enumerate_assignments: " + std::to_string(count) +
                              " candidates for " + std::to_string(nx) + "x" + std::to_string(ny) +
                              " spans exceeds the cap of " + std::to_string(cap) +
                              "; raise the candidate cap to allow it");
  std::vector<ConflictAssignment> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<bool> used_v(static_cast<std::size_t>(ny), false);
  std::vector<std::pair<int, int>> current;
  for (int k = 0; k <= std::min(nx, ny); ++k)
    enumerate_k(nx, ny, k, 0, used_v, current, out);
  return out;
}

bool is_one_to_one(const ConflictAssignment& a, int nx, int ny) {
  std::vector<bool> su(static_cast<std::size_t>(nx), false), sv(static_cast<std::size_t>(ny), false);
  for (auto [u, v] : a.pairs) {
    if (u < 0 || u >= nx || v < 0 || v >= ny)
      return false;
    if (su[static_cast<std::size_t>(u)] || sv[static_cast<std::size_t>(v)])
      return false;
    su[static_cast<std::size_t>(u)] = sv[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

bool is_pronoun(const std::string& word) {
  static const std::unordered_set<std::string> kPronouns = {
      "it", "they", "them", "those", "these", "that", "this", "he",
      "she", "his", "her", "its", "their", "one", "ones"};
  return kPronouns.count(word) > 0;
}

Words span_words(std::span<const std::string> words, const Span& span) {
  return Words(words.begin() + span.begin, words.begin() + span.end);
}

Words restate(const Segmentation& seg, const ConflictAssignment& assignment,
              std::span<const std::string> x, std::span<const std::string> y,
              const SchemaIndex& schema) {
  const auto nx = seg.x.size(), ny = seg.y.size();
  std::vector<int> partner_of_u(nx, -1), partner_of_v(ny, -1);
  for (auto [u, v] : assignment.pairs) {
    partner_of_u[static_cast<std::size_t>(u)] = v;
    partner_of_v[static_cast<std::size_t>(v)] = u;
  }

  auto first_pronoun = [&](std::size_t v) -> int {
    const Span& s = seg.y[v];
    for (int i = s.begin; i < s.end; ++i)
      if (is_pronoun(y[static_cast<std::size_t>(i)]))
        return i;
    return -1;
  };

  bool follow_up_side = false;
  for (std::size_t v = 0; v < ny; ++v)
    if (partner_of_v[v] >= 0 && first_pronoun(v) >= 0)
      follow_up_side = true;

  Words out;
  auto append = [&out](std::span<const std::string> words, const Span& s) {
    out.insert(out.end(), words.begin() + s.begin, words.begin() + s.end);
  };

  if (follow_up_side) {
    for (std::size_t v = 0; v < ny; ++v) {
      const int p = partner_of_v[v] >= 0 ? first_pronoun(v) : -1;
      if (p < 0) {
        append(y, seg.y[v]);
        continue;
      }
      append(y, {seg.y[v].begin, p});
      append(x, seg.x[static_cast<std::size_t>(partner_of_v[v])]);
    }
    return out;
  }

  for (std::size_t u = 0; u < nx; ++u) {
    if (partner_of_u[u] >= 0)
      append(y, seg.y[static_cast<std::size_t>(partner_of_u[u])]);
    else
      append(x, seg.x[u]);
  }
  for (std::size_t v = 0; v < ny; ++v) {
    if (partner_of_v[v] >= 0)
      continue;
    const Span& s = seg.y[v];
    if (schema.contains_any(y.subspan(static_cast<std::size_t>(s.begin), static_cast<std::size_t>(s.size()))))
      append(y, s);
  }
  return out;
}

double assignment_logprob(const Eigen::MatrixXd& F, const ConflictAssignment& assignment) {
  Eigen::MatrixXd g = (1.0 - F.array()).matrix();
  for (auto [u, v] : assignment.pairs) {
    if (u < 0 || u >= F.rows() || v < 0 || v >= F.cols())
      throw Error("assignment_prob: pair outside the conflict matrix");
    g(u, v) = F(u, v);
  }
  double total = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (g(i) <= 0)
      return -std::numeric_limits<double>::infinity();
    total += std::log(g(i));
  }
  return total;
}

double assignment_prob(const Eigen::MatrixXd& F, const ConflictAssignment& assignment) {
  Eigen::MatrixXd g = (1.0 - F.array()).matrix();
  for (auto [u, v] : assignment.pairs) {
    if (u < 0 || u >= F.rows() || v < 0 || v >= F.cols())
      throw Error("assignment_prob: pair outside the conflict matrix");
    g(u, v) = F(u, v);
  }
  return g.prod();
}

double expected_reward(const Eigen::MatrixXd& F, std::span<const RestatedCandidate> candidates) {
  if (candidates.empty())
    throw Error("expected_reward: no candidates");
  std::vector<double> logp;
  logp.reserve(candidates.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    logp.push_back(assignment_logprob(F, c.assignment));
    peak = std::max(peak, logp.back());
  }
  double z = 0, acc = 0;
  if (std::isinf(peak)) {
    for (const auto& c : candidates)
      acc += c.reward;
    return acc / static_cast<double>(candidates.size());
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double w = std::exp(logp[i] - peak);
    z += w;
    acc += w * candidates[i].reward;
  }
  return acc / z;
}

const RestatedCandidate& select_best(std::span<const RestatedCandidate> candidates) {
  if (candidates.empty())
    throw Error("select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].reward > candidates[best].reward)
      best = i;
  return candidates[best];
}

template <typename T>
Var<T> rec_loss(const Var<T>& F, const ConflictAssignment& assignment) {
  ad::Tape<T>& tape = *F.tape();
  Matrix<T> matched = Matrix<T>::Zero(F.rows(), F.cols());
  for (auto [u, v] : assignment.pairs) {
    if (u < 0 || u >= F.rows() || v < 0 || v >= F.cols())
      throw Error("rec_loss: pair outside the conflict matrix");
    matched(u, v) = T(1);
  }
  Matrix<T> unmatched = (T(1) - matched.array()).matrix();
  const T tiny = std::numeric_limits<T>::min();
  Var<T> lp = ad::cmul(tape.constant(std::move(matched)), ad::log_clamped(F, tiny));
  Var<T> lq = ad::cmul(tape.constant(std::move(unmatched)), ad::log_clamped(ad::one_minus(F), tiny));
  Var<T> logp = ad::clamp_min(ad::sum(ad::add(lp, lq)), static_cast<T>(std::log(kRecLossFloor)));
  return ad::scale(logp, T(-1));
}

double rec_loss(const Eigen::MatrixXd& F, const ConflictAssignment& assignment) {
  return -std::max(assignment_logprob(F, assignment), std::log(kRecLossFloor));
}

ConflictAssignment infer_assignment(const Eigen::MatrixXd& F, double lambda) {
  if (F.size() == 0)
    throw Error("infer_assignment: empty conflict matrix");
  std::vector<int> claim(static_cast<std::size_t>(F.rows()), -1);
  for (Eigen::Index v = 0; v < F.cols(); ++v) {
    Eigen::Index best = 0;
    for (Eigen::Index u = 1; u < F.rows(); ++u)
      if (F(u, v) > F(best, v))
        best = u;
    if (F(best, v) < lambda)
      continue;
    int& c = claim[static_cast<std::size_t>(best)];
    if (c < 0 || F(best, v) > F(best, c))
      c = static_cast<int>(v);
  }
  ConflictAssignment a;
  for (std::size_t u = 0; u < claim.size(); ++u)
    if (claim[u] >= 0)
      a.pairs.emplace_back(static_cast<int>(u), claim[u]);
  return a;
}

std::vector<RestatedCandidate> build_candidates(const Segmentation& seg, std::span<const std::string> x,
                                                std::span<const std::string> y,
                                                const SchemaIndex& schema, std::uint64_t cap) {
  auto assignments = enumerate_assignments(static_cast<int>(seg.x.size()),
                                           static_cast<int>(seg.y.size()), cap);
  std::vector<RestatedCandidate> out;
  out.reserve(assignments.size());
  for (auto& a : assignments) {
    RestatedCandidate c;
    c.text = restate(seg, a, x, y, schema);
    c.assignment = std::move(a);
    out.push_back(std::move(c));
  }
  return out;
}

void write_matrix_tsv(std::ostream& os, const Eigen::MatrixXd& m, const std::vector<std::string>& row_headers,
                      const std::vector<std::string>& col_headers, int decimals) {
  for (const auto& h : col_headers)
    os << '\t' << h;
  os << '\n';
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::fixed << std::setprecision(decimals);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << row_headers[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      os << '\t' << m(r, c);
    os << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

template Var<float> rec_loss<float>(const Var<float>&, const ConflictAssignment&);
template Var<double> rec_loss<double>(const Var<double>&, const ConflictAssignment&);

}  // namespace star
