#include "star/text.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace star {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
// Non-ASCII bytes count as word characters.
bool is_word_char(char c) { return !is_space(c) && !is_punct(c); }

bool joins_word(std::string_view word, std::size_t i) {
  if (i == 0 || i + 1 >= word.size())
    return false;
  char prev = word[i - 1], next = word[i + 1], c = word[i];
  if ((c == '.' || c == ',') && is_digit(prev) && is_digit(next))
    return true;
  if ((c == '\'' || c == '-') && is_word_char(prev) && is_word_char(next))
    return true;
  return false;
}

Token make_token(std::string text) {
  Token t;
  t.text = std::move(text);
  return t;
}

}  // namespace

std::vector<char32_t> utf8_decode(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    auto b = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b < 0x80) {
      cp = b;
    } else if ((b & 0xE0) == 0xC0) {
      cp = b & 0x1F;
      extra = 1;
    } else if ((b & 0xF0) == 0xE0) {
      cp = b & 0x0F;
      extra = 2;
    } else if ((b & 0xF8) == 0xF0) {
      cp = b & 0x07;
      extra = 3;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + static_cast<std::size_t>(extra) >= text.size()) {
      out.push_back(0xFFFD);
      break;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      auto nb = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((nb & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (nb & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string lowered(text);
  for (auto& c : lowered)
    if (static_cast<unsigned char>(c) < 0x80)
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && is_space(lowered[i]))
      ++i;
    std::size_t j = i;
    while (j < lowered.size() && !is_space(lowered[j]))
      ++j;
    std::string_view word(lowered.data() + i, j - i);
    std::string current;
    for (std::size_t k = 0; k < word.size(); ++k) {
      char c = word[k];
      if (is_punct(c) && !joins_word(word, k)) {
        if (!current.empty())
          tokens.push_back(make_token(std::move(current)));
        current.clear();
        tokens.push_back(make_token(std::string(1, c)));
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty())
      tokens.push_back(make_token(std::move(current)));
    i = j;
  }
  return tokens;
}

std::vector<std::string> token_texts(std::span<const Token> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens)
    out.push_back(t.text);
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i)
      out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string join_tokens(std::span<const Token> tokens) {
  auto words = token_texts(tokens);
  return join_words(words);
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<unk>"};
  word_ids_ = {{"<pad>", kPad}, {"<unk>", kOov}};
  chars_ = {0, 0xFFFF};
  // Special chars are not addressable through char_ids_.
}

int Vocabulary::word_index(std::string_view word) const {
  auto it = word_ids_.find(std::string(word));
  return it == word_ids_.end() ? kOov : it->second;
}

int Vocabulary::char_index(char32_t c) const {
  auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kOov : it->second;
}

int Vocabulary::add_word(std::string_view word) {
  std::string key(word);
  auto it = word_ids_.find(key);
  if (it != word_ids_.end())
    return it->second;
  int id = static_cast<int>(words_.size());
  words_.push_back(key);
  word_ids_.emplace(std::move(key), id);
  return id;
}

int Vocabulary::add_char(char32_t c) {
  auto it = char_ids_.find(c);
  if (it != char_ids_.end())
    return it->second;
  int id = static_cast<int>(chars_.size());
  chars_.push_back(c);
  char_ids_.emplace(c, id);
  return id;
}

void Vocabulary::index(Token& token, bool grow) {
  if (!grow) {
    lookup(token);
    return;
  }
  token.word_id = add_word(token.text);
  token.char_ids.clear();
  for (char32_t c : utf8_decode(token.text))
    token.char_ids.push_back(add_char(c));
}

void Vocabulary::index(TokenSeq& tokens, bool grow) {
  for (auto& t : tokens)
    index(t, grow);
}

void Vocabulary::lookup(Token& token) const {
  token.word_id = word_index(token.text);
  token.char_ids.clear();
  for (char32_t c : utf8_decode(token.text))
    token.char_ids.push_back(char_index(c));
}

void Vocabulary::lookup(TokenSeq& tokens) const {
  for (auto& t : tokens)
    lookup(t);
}

// Format: "words <N>" then N lines, "chars <K>" then K code points in decimal.
void Vocabulary::save(std::ostream& os) const {
  os << "words " << words_.size() - 2 << '\n';
  for (std::size_t i = 2; i < words_.size(); ++i)
    os << words_[i] << '\n';
  os << "chars " << chars_.size() - 2 << '\n';
  for (std::size_t i = 2; i < chars_.size(); ++i)
    os << static_cast<std::uint32_t>(chars_[i]) << '\n';
}

Vocabulary Vocabulary::load(std::istream& is) {
  Vocabulary v;
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "words")
    throw Error("vocabulary: expected 'words <count>' header");
  std::string line;
  std::getline(is, line);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line))
      throw Error("vocabulary: truncated word list");
    v.add_word(line);
  }
  if (!(is >> tag >> n) || tag != "chars")
    throw Error("vocabulary: expected 'chars <count>' header");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t cp = 0;
    if (!(is >> cp))
      throw Error("vocabulary: truncated char list");
    v.add_char(static_cast<char32_t>(cp));
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write vocabulary file " + path);
  save(os);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open vocabulary file " + path);
  return load(is);
}

}  // namespace star
