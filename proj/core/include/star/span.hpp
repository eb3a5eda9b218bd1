#pragma once

#include <cstdint>
#include <vector>

namespace star {

/// Half-open token range [begin, end) within one query.
struct Span {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// Spans of x and y induced by a split labeling. Within each query the spans
/// are contiguous, ordered and cover every token.
struct Segmentation {
  std::vector<Span> x;
  std::vector<Span> y;

  bool operator==(const Segmentation&) const = default;
};

enum class Label : std::uint8_t { Retain = 0, Split = 1 };

/// One label per boundary after x_1..x_{n-1}, then after y_1..y_{m-1}. The
/// boundary at the end of each query is implicit.
struct SplitLabeling {
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  bool operator==(const SplitLabeling&) const = default;
};

inline std::size_t label_positions(std::size_t n, std::size_t m) {
  return (n ? n - 1 : 0) + (m ? m - 1 : 0);
}

}  // namespace star
