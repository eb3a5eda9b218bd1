#include "star/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace star {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size())
      throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("config: " + key + " expects a number, got '" + v + "'");
  }
}

template <typename I>
I to_int(const std::string& key, const std::string& v) {
  I out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on")
    return true;
  if (v == "0" || v == "false" || v == "no" || v == "off")
    return false;
  throw Error("config: " + key + " expects a boolean, got '" + v + "'");
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::Expected: return "expected";
    case RewardMode::Basic: return "basic";
    case RewardMode::Oracle: return "oracle";
    case RewardMode::Uniform: return "uniform";
  }
  return "expected";
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "expected") return RewardMode::Expected;
  if (s == "basic") return RewardMode::Basic;
  if (s == "oracle") return RewardMode::Oracle;
  if (s == "uniform") return RewardMode::Uniform;
  throw Error("config: reward_mode must be one of expected, basic, oracle, uniform; got '" + s + "'");
}

ModelDims TrainConfig::dims() const {
  ModelDims d;
  d.word_dim = word_dim;
  d.hidden = hidden;
  d.char_dim = char_dim;
  d.char_channels = char_channels;
  d.char_width = char_width;
  return d;
}

void TrainConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0))
      throw Error(std::string("config: ") + name + " must be > 0");
  };
  positive("lr_pretrain", lr_pretrain);
  positive("lr_rl", lr_rl);
  positive("lr_sqa", lr_sqa);
  if (samples < 2)
    throw Error("config: samples (M) must be >= 2 for the mean-reward baseline");
  weights().validate();
  if (!(lambda > 0) || lambda > 1)
    throw Error("config: lambda must be in (0, 1]");
  if (dropout < 0 || dropout >= 1)
    throw Error("config: dropout must be in [0, 1)");
  for (auto [name, v] : {std::pair{"word_dim", word_dim}, {"hidden", hidden}, {"char_dim", char_dim},
                         {"char_channels", char_channels}, {"char_width", char_width}})
    if (v < 1)
      throw Error(std::string("config: ") + name + " must be >= 1");
  if (pretrain_epochs < 0)
    throw Error("config: pretrain_epochs must be >= 0");
  if (rl_epochs < 0)
    throw Error("config: rl_epochs must be >= 0");
  if (alternation_period < 0)
    throw Error("config: alternation_period must be >= 0");
  if (runs < 1)
    throw Error("config: runs must be >= 1");
  if (!(clip_norm > 0))
    throw Error("config: clip_norm must be > 0");
  if (candidate_cap < 1)
    throw Error("config: candidate_cap must be >= 1");
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "lr_pretrain") lr_pretrain = to_double(key, v);
  else if (key == "lr_rl") lr_rl = to_double(key, v);
  else if (key == "lr_sqa") lr_sqa = to_double(key, v);
  else if (key == "samples" || key == "m_samples") samples = to_int<int>(key, v);
  else if (key == "alpha") alpha = to_double(key, v);
  else if (key == "beta") beta = to_double(key, v);
  else if (key == "lambda") lambda = to_double(key, v);
  else if (key == "dropout") dropout = to_double(key, v);
  else if (key == "word_dim") word_dim = to_int<int>(key, v);
  else if (key == "hidden") hidden = to_int<int>(key, v);
  else if (key == "char_dim") char_dim = to_int<int>(key, v);
  else if (key == "char_channels") char_channels = to_int<int>(key, v);
  else if (key == "char_width") char_width = to_int<int>(key, v);
  else if (key == "pretrain_epochs") pretrain_epochs = to_int<int>(key, v);
  else if (key == "rl_epochs") rl_epochs = to_int<int>(key, v);
  else if (key == "alternation_period") alternation_period = to_int<int>(key, v);
  else if (key == "seed") seed = to_int<std::uint64_t>(key, v);
  else if (key == "runs") runs = to_int<int>(key, v);
  else if (key == "vary_seed") vary_seed = to_bool(key, v);
  else if (key == "clip_norm") clip_norm = to_double(key, v);
  else if (key == "candidate_cap") candidate_cap = to_int<std::uint64_t>(key, v);
  else if (key == "reward_mode") reward_mode = parse_reward_mode(v);
  else throw Error("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {{"lr_pretrain", fmt(lr_pretrain)},
          {"lr_rl", fmt(lr_rl)},
          {"lr_sqa", fmt(lr_sqa)},
          {"samples", std::to_string(samples)},
          {"alpha", fmt(alpha)},
          {"beta", fmt(beta)},
          {"lambda", fmt(lambda)},
          {"dropout", fmt(dropout)},
          {"word_dim", std::to_string(word_dim)},
          {"hidden", std::to_string(hidden)},
          {"char_dim", std::to_string(char_dim)},
          {"char_channels", std::to_string(char_channels)},
          {"char_width", std::to_string(char_width)},
          {"pretrain_epochs", std::to_string(pretrain_epochs)},
          {"rl_epochs", std::to_string(rl_epochs)},
          {"alternation_period", std::to_string(alternation_period)},
          {"seed", std::to_string(seed)},
          {"runs", std::to_string(runs)},
          {"vary_seed", vary_seed ? "true" : "false"},
          {"clip_norm", fmt(clip_norm)},
          {"candidate_cap", std::to_string(candidate_cap)},
          {"reward_mode", to_string(reward_mode)}};
}

TrainConfig parse_config(std::istream& is, TrainConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config: expected key=value at line " + std::to_string(lineno));
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open config " + path);
  return parse_config(is, std::move(base));
}

void write_config(std::ostream& os, const TrainConfig& config) {
  for (const auto& [k, v] : config.entries())
    os << k << " = " << v << '\n';
}

}  // namespace star
