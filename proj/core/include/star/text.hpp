#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace star {

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Token {
  std::string text;            // lowercased
  std::vector<int> char_ids;   // one per code point of text
  int word_id = 0;
};

using TokenSeq = std::vector<Token>;

/// Word and character index maps. Index 0 is padding, index 1 is OOV, for
/// both maps.
class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  Vocabulary();

  int word_index(std::string_view word) const;
  int char_index(char32_t c) const;

  /// Returns the existing index or appends a new entry.
  int add_word(std::string_view word);
  int add_char(char32_t c);

  const std::string& word(int index) const { return words_.at(static_cast<std::size_t>(index)); }
  std::size_t word_count() const { return words_.size(); }
  std::size_t char_count() const { return chars_.size(); }

  /// Fills char_ids and word_id. Unknown entries are added when `grow` is
  /// set, otherwise mapped to kOov.
  void index(Token& token, bool grow);
  void index(TokenSeq& tokens, bool grow);
  /// Const lookup variant (never grows).
  void lookup(Token& token) const;
  void lookup(TokenSeq& tokens) const;

  void save(std::ostream& os) const;
  static Vocabulary load(std::istream& is);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary&) const = default;

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> word_ids_;
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, int> char_ids_;
};

/// Decodes UTF-8. Invalid bytes decode to U+FFFD.
std::vector<char32_t> utf8_decode(std::string_view text);

/// Lowercases and splits on whitespace; punctuation becomes its own token,
/// except '.', ',' between digits and '\'', '-' between alphanumerics.
/// Returned tokens have text set and ids unset.
TokenSeq tokenize(std::string_view text);

std::vector<std::string> token_texts(std::span<const Token> tokens);
std::string join_tokens(std::span<const Token> tokens);
std::string join_words(std::span<const std::string> words);

}  // namespace star
