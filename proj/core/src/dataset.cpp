#include "star/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace star {

namespace fs = std::filesystem;
using nlohmann::json;

QueryTriple make_triple(std::string_view precedent, std::string_view followup,
                        std::optional<std::string_view> restated, std::string table_id,
                        Vocabulary& vocab, bool grow_vocab) {
  QueryTriple t;
  t.precedent = tokenize(precedent);
  t.followup = tokenize(followup);
  vocab.index(t.precedent, grow_vocab);
  vocab.index(t.followup, grow_vocab);
  if (restated) {
    t.restated = tokenize(*restated);
    vocab.index(*t.restated, grow_vocab);
  }
  t.table_id = std::move(table_id);
  return t;
}

std::vector<QueryTriple> parse_dataset(std::istream& is, Vocabulary& vocab, bool grow_vocab) {
  std::vector<QueryTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("malformed JSON at line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!obj.is_object())
      throw Error("malformed record at line " + std::to_string(lineno) + ": expected object");
    auto field = [&](const char* name) -> std::string {
      auto it = obj.find(name);
      if (it == obj.end())
        throw Error(std::string("missing field ") + name + " at line " + std::to_string(lineno));
      if (!it->is_string())
        throw Error(std::string("field ") + name + " is not a string at line " +
                    std::to_string(lineno));
      return it->get<std::string>();
    };
    std::string precedent = field("precedent");
    std::string followup = field("followup");
    std::optional<std::string> restated;
    if (obj.contains("restated"))
      restated = field("restated");
    std::string table_id = obj.contains("table_id") ? field("table_id") : std::string();

    QueryTriple t = make_triple(precedent, followup,
                                restated ? std::optional<std::string_view>(*restated) : std::nullopt,
                                std::move(table_id), vocab, grow_vocab);
    if (t.precedent.empty())
      throw Error("empty field precedent at line " + std::to_string(lineno));
    if (t.followup.empty())
      throw Error("empty field followup at line " + std::to_string(lineno));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<QueryTriple> load_dataset(const std::string& path, Vocabulary& vocab, bool grow_vocab) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open dataset " + path);
  return parse_dataset(is, vocab, grow_vocab);
}

void write_dataset(std::ostream& os, const std::vector<QueryTriple>& triples) {
  for (const auto& t : triples) {
    json obj;
    obj["precedent"] = join_tokens(t.precedent);
    obj["followup"] = join_tokens(t.followup);
    if (t.restated)
      obj["restated"] = join_tokens(*t.restated);
    obj["table_id"] = t.table_id;
    os << obj.dump() << '\n';
  }
}

void save_dataset(const std::string& path, const std::vector<QueryTriple>& triples) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write dataset " + path);
  write_dataset(os, triples);
}

// ---------------------------------------------------------------------------

bool contains_phrase(std::span<const std::string> words, std::span<const std::string> phrase) {
  if (phrase.empty() || phrase.size() > words.size())
    return false;
  for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i)
    if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  return false;
}

SchemaIndex::SchemaIndex(const TableSchema& table) {
  auto add = [this](const std::string& text) {
    Words w = token_texts(tokenize(text));
    if (w.empty())
      return;
    tokens_.insert(w.begin(), w.end());
    auto& bucket = by_first_[w.front()];
    if (std::find(bucket.begin(), bucket.end(), w) == bucket.end()) {
      bucket.push_back(std::move(w));
      ++phrase_count_;
    }
  };
  for (const auto& c : table.columns)
    add(c);
  for (const auto& row : table.cells)
    for (const auto& cell : row)
      add(cell);
}

bool SchemaIndex::contains_any(std::span<const std::string> words) const {
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = by_first_.find(words[i]);
    if (it == by_first_.end())
      continue;
    for (const Words& phrase : it->second)
      if (i + phrase.size() <= words.size() &&
          std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i)))
        return true;
  }
  return false;
}

std::vector<Words> SchemaIndex::phrases_in(std::span<const std::string> words) const {
  std::vector<Words> found;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = by_first_.find(words[i]);
    if (it == by_first_.end())
      continue;
    for (const Words& phrase : it->second)
      if (i + phrase.size() <= words.size() &&
          std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i)) &&
          std::find(found.begin(), found.end(), phrase) == found.end())
        found.push_back(phrase);
  }
  return found;
}

bool SchemaIndex::is_schema_token(const std::string& token) const {
  return tokens_.count(token) > 0;
}

// ---------------------------------------------------------------------------

namespace {

// Reads one CSV record, which may span physical lines inside quotes.
bool read_csv_record(std::istream& is, std::vector<std::string>& fields) {
  fields.clear();
  int c = is.peek();
  if (c == EOF)
    return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  while ((c = is.get()) != EOF) {
    any = true;
    char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (is.peek() == '"') {
          field.push_back('"');
          is.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      break;
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (quoted)
    throw Error("csv: unterminated quoted field");
  if (any)
    fields.push_back(std::move(field));
  return any;
}

}  // namespace

TableSchema parse_table_csv(std::istream& is) {
  TableSchema t;
  std::vector<std::string> rec;
  if (!read_csv_record(is, rec))
    throw Error("csv: missing header row");
  t.columns = rec;
  std::size_t row = 1;
  while (read_csv_record(is, rec)) {
    ++row;
    if (rec.size() == 1 && rec[0].empty())
      continue;
    if (rec.size() != t.columns.size())
      throw Error("csv: row " + std::to_string(row) + " has " + std::to_string(rec.size()) +
                  " cells, expected " + std::to_string(t.columns.size()));
    t.cells.push_back(rec);
  }
  return t;
}

TableSchema load_table_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error("cannot open table " + path);
  try {
    return parse_table_csv(is);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

TableMap load_tables(const std::string& path) {
  TableMap tables;
  fs::path p(path);
  if (fs::is_directory(p)) {
    for (const auto& entry : fs::directory_iterator(p))
      if (entry.is_regular_file() && entry.path().extension() == ".csv")
        tables.emplace(entry.path().stem().string(), load_table_csv(entry.path().string()));
  } else if (fs::is_regular_file(p)) {
    tables.emplace(p.stem().string(), load_table_csv(path));
  } else {
    throw Error("table path not found: " + path);
  }
  return tables;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXf load_embeddings(const std::string& path, const Vocabulary& vocab, int dim,
                                std::mt19937_64& rng) {
  const auto rows = static_cast<Eigen::Index>(vocab.word_count());
  Eigen::MatrixXf emb(rows, dim);
  std::uniform_real_distribution<float> init(-0.1f, 0.1f);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int c = 0; c < dim; ++c)
      emb(r, c) = init(rng);
  emb.row(Vocabulary::kPad).setZero();

  std::ifstream is(path);
  if (!is)
    throw Error("cannot open embeddings " + path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<float> values;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word))
      continue;
    values.clear();
    float v = 0;
    while (ls >> v)
      values.push_back(v);
    if (!ls.eof())
      throw Error("embeddings: non-numeric value at line " + std::to_string(lineno));
    if (static_cast<int>(values.size()) != dim)
      throw Error("embeddings: expected " + std::to_string(dim) + " values at line " +
                  std::to_string(lineno) + ", got " + std::to_string(values.size()));
    int id = vocab.word_index(word);
    if (id == Vocabulary::kOov || id == Vocabulary::kPad)
      continue;
    for (int c = 0; c < dim; ++c)
      emb(id, c) = values[static_cast<std::size_t>(c)];
  }
  return emb;
}

}  // namespace star
