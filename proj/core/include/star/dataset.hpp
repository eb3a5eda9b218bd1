#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "star/text.hpp"

namespace star {

struct QueryTriple {
  TokenSeq precedent;                // x
  TokenSeq followup;                 // y
  std::optional<TokenSeq> restated;  // z
  std::string table_id;
};

struct TableSchema {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;  // row-major

  std::size_t rows() const { return cells.size(); }
  std::size_t cols() const { return columns.size(); }
};

using TableMap = std::map<std::string, TableSchema>;

using Words = std::vector<std::string>;

/// Tokenized column names and cell values of one table, for contiguous
/// phrase lookup.
class SchemaIndex {
public:
  SchemaIndex() = default;
  explicit SchemaIndex(const TableSchema& table);

  /// True when some column name or cell value occurs contiguously in `words`.
  bool contains_any(std::span<const std::string> words) const;
  /// Every distinct phrase that occurs contiguously in `words`.
  std::vector<Words> phrases_in(std::span<const std::string> words) const;
  /// True when `token` belongs to some phrase.
  bool is_schema_token(const std::string& token) const;

  std::size_t size() const { return phrase_count_; }

private:
  std::map<std::string, std::vector<Words>> by_first_;
  std::unordered_set<std::string> tokens_;
  std::size_t phrase_count_ = 0;
};

/// True when `phrase` occurs contiguously in `words`.
bool contains_phrase(std::span<const std::string> words, std::span<const std::string> phrase);

/// Reads the JSON-lines dataset format. Blank lines are skipped; line
/// numbers in error messages are 1-based.
std::vector<QueryTriple> load_dataset(const std::string& path, Vocabulary& vocab, bool grow_vocab);
std::vector<QueryTriple> parse_dataset(std::istream& is, Vocabulary& vocab, bool grow_vocab);

void save_dataset(const std::string& path, const std::vector<QueryTriple>& triples);
void write_dataset(std::ostream& os, const std::vector<QueryTriple>& triples);

/// Builds a triple from raw strings (used by the CLI and tests).
QueryTriple make_triple(std::string_view precedent, std::string_view followup,
                        std::optional<std::string_view> restated, std::string table_id,
                        Vocabulary& vocab, bool grow_vocab);

/// Comma-separated, RFC 4180 quoting, first row is the header.
TableSchema parse_table_csv(std::istream& is);
TableSchema load_table_csv(const std::string& path);

/// Loads every "<table_id>.csv" in a directory, or a single CSV file keyed
/// by its stem.
TableMap load_tables(const std::string& path);

/// GloVe text layout. Rows of words absent from the file are drawn from
/// U(-0.1, 0.1); the padding row is zero.
Eigen::MatrixXf load_embeddings(const std::string& path, const Vocabulary& vocab, int dim,
                                std::mt19937_64& rng);

}  // namespace star
