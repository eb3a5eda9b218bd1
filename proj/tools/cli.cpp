#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "star/checkpoint.hpp"
#include "star/config.hpp"
#include "star/dataset.hpp"
#include "star/metrics.hpp"
#include "star/recombiner.hpp"
#include "star/sqa.hpp"
#include "star/trainer.hpp"

namespace star::cli {

namespace {

class UsageError : public Error {
public:
  using Error::Error;
};

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string dataset;
  std::string dev;
  std::string tables;
  std::string table;
  std::string embeddings;
  std::string oracle;
  std::optional<double> alpha, beta, lambda, lr;
  std::optional<int> m_samples, epochs, runs;
  std::vector<std::string> overrides;
  std::string out;
  std::string precedent, followup;
};

enum class LrTarget { Pretrain, Rl, Sqa };

// Defaults, then the config file, then command-line flags.
TrainConfig resolve_config(const Flags& f, LrTarget target, std::ostream& err) {
  TrainConfig c;
  if (!f.config_path.empty())
    c = load_config(f.config_path, c);
  for (const auto& kv : f.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw UsageError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) c.seed = *f.seed;
  if (f.alpha) c.alpha = *f.alpha;
  if (f.beta) c.beta = *f.beta;
  if (f.lambda) c.lambda = *f.lambda;
  if (f.m_samples) c.samples = *f.m_samples;
  if (f.runs) c.runs = *f.runs;
  if (f.lr) {
    switch (target) {
      case LrTarget::Pretrain: c.lr_pretrain = *f.lr; break;
      case LrTarget::Rl: c.lr_rl = *f.lr; break;
      case LrTarget::Sqa: c.lr_sqa = *f.lr; break;
    }
  }
  if (f.epochs) {
    if (target == LrTarget::Pretrain)
      c.pretrain_epochs = *f.epochs;
    else
      c.rl_epochs = *f.epochs;
  }
  c.validate();
  if (f.alpha || f.beta)
    err << "reward weights: alpha " << c.alpha << " beta " << c.beta << '\n';
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty())
    throw UsageError(std::string(flag) + " is required");
}

Logger stderr_logger(std::ostream& err) {
  return [&err](const std::string& msg) { err << msg << '\n'; };
}

// Output goes to --out when set, else to stdout.
void emit(const Flags& f, std::ostream& out, const std::string& text) {
  if (f.out.empty()) {
    out << text;
    return;
  }
  std::ofstream os(f.out);
  if (!os)
    throw Error("cannot write " + f.out);
  os << text;
}

struct Model {
  ModelParams<float> params;
  Vocabulary vocab;
};

Model load_model(const std::string& checkpoint) {
  require(checkpoint, "--checkpoint");
  if (!std::filesystem::exists(checkpoint))
    throw Error("checkpoint not found: " + checkpoint);
  Model m{load_checkpoint(checkpoint), Vocabulary()};
  const std::string vp = vocab_path_for(checkpoint);
  if (!std::filesystem::exists(vp))
    throw Error("vocabulary not found: " + vp);
  m.vocab = Vocabulary::load(vp);
  if (m.vocab.word_count() != static_cast<std::size_t>(m.params.word_emb.value.rows()))
    throw Error("vocabulary " + vp + " does not match checkpoint " + checkpoint);
  return m;
}

void save_model(const std::string& path, const ModelParams<float>& params, const Vocabulary& vocab) {
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  save_checkpoint(path, params);
  vocab.save(vocab_path_for(path));
}

TableMap tables_or_empty(const std::string& path) { return path.empty() ? TableMap{} : load_tables(path); }

SchemaIndex schema_from_table_flag(const std::string& path) {
  if (path.empty())
    return {};
  return SchemaIndex(load_table_csv(path));
}

QueryTriple pair_from_flags(const Flags& f, const Vocabulary& vocab) {
  require(f.precedent, "--precedent");
  require(f.followup, "--followup");
  Vocabulary v = vocab;
  QueryTriple t = make_triple(f.precedent, f.followup, std::nullopt, "", v, false);
  if (t.precedent.empty() || t.followup.empty())
    throw UsageError("--precedent and --followup must contain at least one token");
  return t;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_prepare(const Flags& f, std::ostream& out, std::ostream& err) {
  require(f.dataset, "--dataset");
  std::ifstream is(f.dataset);
  if (!is)
    throw Error("cannot open " + f.dataset);
  Vocabulary vocab;
  std::vector<QueryTriple> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos)
      continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');)
      cols.push_back(c);
    if (cols.size() < 2 || cols.size() > 4)
      throw Error("expected 2 to 4 tab-separated columns at line " + std::to_string(lineno));
    std::optional<std::string_view> restated;
    if (cols.size() >= 3 && !cols[2].empty())
      restated = cols[2];
    triples.push_back(make_triple(cols[0], cols[1], restated, cols.size() == 4 ? cols[3] : "", vocab, true));
    if (triples.back().precedent.empty() || triples.back().followup.empty())
      throw Error("empty query at line " + std::to_string(lineno));
  }
  std::ostringstream os;
  write_dataset(os, triples);
  emit(f, out, os.str());
  err << "prepared " << triples.size() << " triples\n";
  return kExitOk;
}

int cmd_pretrain(const Flags& f, std::ostream& out, std::ostream& err) {
  TrainConfig c = resolve_config(f, LrTarget::Pretrain, err);
  require(f.dataset, "--dataset");
  require(f.checkpoint, "--checkpoint");
  Vocabulary vocab;
  auto train = load_dataset(f.dataset, vocab, true);
  std::vector<QueryTriple> dev;
  if (!f.dev.empty())
    dev = load_dataset(f.dev, vocab, true);
  std::optional<Eigen::MatrixXf> vectors;
  if (!f.embeddings.empty()) {
    std::mt19937_64 rng(c.seed);
    vectors = load_embeddings(f.embeddings, vocab, c.word_dim, rng);
  }
  auto params = init_model(c, vocab, c.seed, vectors ? &*vectors : nullptr);
  PretrainOptions po;
  po.dev = dev;
  po.log = stderr_logger(err);
  auto res = pretrain(c, std::move(params), train, po);
  save_model(f.checkpoint, res.params, vocab);
  std::ostringstream os;
  os << "{\"best_epoch\": " << res.best_epoch << ", \"label_accuracy\": " << res.dev_accuracy[res.best_epoch]
     << ", \"checkpoint\": \"" << f.checkpoint << "\"}\n";
  emit(f, out, os.str());
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  TrainConfig c = resolve_config(f, LrTarget::Rl, err);
  require(f.dataset, "--dataset");
  TableMap tables = tables_or_empty(f.tables);
  Logger log = stderr_logger(err);

  if (f.runs) {
    Vocabulary vocab;
    auto train = load_dataset(f.dataset, vocab, true);
    std::vector<QueryTriple> dev;
    if (!f.dev.empty())
      dev = load_dataset(f.dev, vocab, true);
    std::optional<Eigen::MatrixXf> vectors;
    if (!f.embeddings.empty()) {
      std::mt19937_64 rng(c.seed);
      vectors = load_embeddings(f.embeddings, vocab, c.word_dim, rng);
    }
    auto report = run_experiment(c, vocab, train, dev, tables, vectors ? &*vectors : nullptr, log);
    emit(f, out, report.to_json() + "\n");
    return report.complete ? kExitOk : kExitRuntime;
  }

  require(f.checkpoint, "--checkpoint");
  Model m = load_model(f.checkpoint);
  auto train = load_dataset(f.dataset, m.vocab, false);
  std::vector<QueryTriple> dev;
  if (!f.dev.empty())
    dev = load_dataset(f.dev, m.vocab, false);
  RlOptions ro;
  ro.dev = dev;
  ro.log = log;
  const std::string target = f.out.empty() ? f.checkpoint : f.out;
  auto res = train_rl(c, std::move(m.params), train, tables, ro);
  save_model(target, res.params, m.vocab);
  err << "wrote " << target << '\n';
  if (!dev.empty())
    out << evaluate(res.params, dev, tables, c.lambda).to_json() << '\n';
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
  TrainConfig c = resolve_config(f, LrTarget::Rl, err);
  require(f.dataset, "--dataset");
  Model m = load_model(f.checkpoint);
  auto data = load_dataset(f.dataset, m.vocab, false);
  TableMap tables = tables_or_empty(f.tables);
  EvalReport r = evaluate(m.params, data, tables, c.lambda);
  err << "symacc " << r.symacc << " bleu " << r.bleu << " on " << data.size() << " triples\n";
  emit(f, out, r.to_json() + "\n");
  return kExitOk;
}

int cmd_restate(const Flags& f, std::ostream& out, std::ostream& err) {
  TrainConfig c = resolve_config(f, LrTarget::Rl, err);
  Model m = load_model(f.checkpoint);
  QueryTriple t = pair_from_flags(f, m.vocab);
  SchemaIndex schema = schema_from_table_flag(f.table);
  Prediction p = predict(m.params, t, schema, c.lambda);
  emit(f, out, join_words(p.restated) + "\n");
  return kExitOk;
}

int cmd_inspect(const Flags& f, std::ostream& out, std::ostream& err) {
  TrainConfig c = resolve_config(f, LrTarget::Rl, err);
  Model m = load_model(f.checkpoint);
  QueryTriple t = pair_from_flags(f, m.vocab);
  Prediction p = predict(m.params, t, schema_from_table_flag(f.table), c.lambda);
  Words x = token_texts(t.precedent), y = token_texts(t.followup);
  auto span_names = [](const Words& w, const std::vector<Span>& spans) {
    std::vector<std::string> out;
    for (const Span& s : spans) {
      Words part = span_words(w, s);
      out.push_back(join_words(part));
    }
    return out;
  };
  std::ostringstream a, fm;
  write_matrix_tsv(a, p.similarity, x, y);
  write_matrix_tsv(fm, p.conflicts, span_names(x, p.segmentation.x), span_names(y, p.segmentation.y));
  if (f.out.empty()) {
    out << "# A\n" << a.str() << "# F\n" << fm.str();
  } else {
    for (auto [suffix, body] : {std::pair{".A.tsv", &a}, {".F.tsv", &fm}}) {
      std::ofstream os(f.out + suffix);
      if (!os)
        throw Error("cannot write " + f.out + suffix);
      os << body->str();
    }
    err << "wrote " << f.out << ".A.tsv and " << f.out << ".F.tsv\n";
  }
  return kExitOk;
}

int cmd_sqa_train(const Flags& f, std::ostream& out, std::ostream& err) {
  TrainConfig c = resolve_config(f, LrTarget::Sqa, err);
  require(f.dataset, "--dataset");
  require(f.tables, "--tables");
  require(f.oracle, "--oracle");
  require(f.out, "--out");
  TableMap tables = load_tables(f.tables);
  LookupOracle oracle = LookupOracle::load(f.oracle);
  Model m;
  std::vector<SqaExample> data;
  if (!f.checkpoint.empty()) {
    m = load_model(f.checkpoint);
    data = load_sqa_dataset(f.dataset, m.vocab, false);
  } else {
    data = load_sqa_dataset(f.dataset, m.vocab, true);
    m.params = init_model(c, m.vocab, c.seed);
  }
  auto res = train_sqa(c, std::move(m.params), data, tables, oracle, stderr_logger(err));
  save_model(f.out, res.params, m.vocab);
  err << "wrote " << f.out << '\n';
  out << evaluate_sqa(res.params, data, tables, oracle).to_json() << '\n';
  return kExitOk;
}

int cmd_sqa_eval(const Flags& f, std::ostream& out, std::ostream&) {
  require(f.dataset, "--dataset");
  require(f.tables, "--tables");
  require(f.oracle, "--oracle");
  Model m = load_model(f.checkpoint);
  auto data = load_sqa_dataset(f.dataset, m.vocab, false);
  TableMap tables = load_tables(f.tables);
  LookupOracle oracle = LookupOracle::load(f.oracle);
  emit(f, out, evaluate_sqa(m.params, data, tables, oracle).to_json() + "\n");
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split-and-recombine follow-up query restatement", "star"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");
  Flags f;

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", f.overrides, "override one config key (key=value)");
    sub->add_option("--seed", f.seed);
    sub->add_option("--alpha", f.alpha, "BLEU weight in the reward");
    sub->add_option("--beta", f.beta, "SymAcc weight in the reward");
    sub->add_option("--lambda", f.lambda, "conflict threshold at inference");
    sub->add_option("--m-samples", f.m_samples, "sampled labelings per update");
    sub->add_option("--lr", f.lr);
    sub->add_option("--epochs", f.epochs);
    sub->add_option("--out", f.out, "output path (stdout when omitted)");
  };
  auto data = [&f](CLI::App* sub) {
    sub->add_option("--dataset", f.dataset, "JSONL triples");
    sub->add_option("--tables", f.tables, "directory of <table_id>.csv, or one CSV");
  };

  std::map<CLI::App*, int (*)(const Flags&, std::ostream&, std::ostream&)> handlers;

  auto* prepare = app.add_subcommand("prepare", "convert a TSV of precedent, followup, restated, table_id to JSONL");
  prepare->add_option("--dataset", f.dataset, "input TSV");
  prepare->add_option("--out", f.out);
  handlers[prepare] = cmd_prepare;

  auto* pre = app.add_subcommand("pretrain", "fit split probabilities to derived labels");
  common(pre);
  data(pre);
  pre->add_option("--dev", f.dev);
  pre->add_option("--embeddings", f.embeddings, "GloVe-format word vectors");
  pre->add_option("--checkpoint", f.checkpoint, "checkpoint to write");
  handlers[pre] = cmd_pretrain;

  auto* train = app.add_subcommand("train", "alternating RL from a pretrained checkpoint, or full runs with --runs");
  common(train);
  data(train);
  train->add_option("--dev", f.dev);
  train->add_option("--embeddings", f.embeddings);
  train->add_option("--checkpoint", f.checkpoint, "pretrained checkpoint");
  train->add_option("--runs", f.runs, "independent runs (reports mean and std)");
  handlers[train] = cmd_train;

  auto* eval = app.add_subcommand("eval", "SymAcc and BLEU report");
  common(eval);
  data(eval);
  eval->add_option("--checkpoint", f.checkpoint);
  handlers[eval] = cmd_eval;

  auto* restate = app.add_subcommand("restate", "restate one follow-up query");
  common(restate);
  restate->add_option("--checkpoint", f.checkpoint);
  restate->add_option("--precedent", f.precedent);
  restate->add_option("--followup", f.followup);
  restate->add_option("--table", f.table, "table CSV");
  handlers[restate] = cmd_restate;

  auto* inspect = app.add_subcommand("inspect", "dump attention and conflict matrices as TSV");
  common(inspect);
  inspect->add_option("--checkpoint", f.checkpoint);
  inspect->add_option("--precedent", f.precedent);
  inspect->add_option("--followup", f.followup);
  inspect->add_option("--table", f.table);
  handlers[inspect] = cmd_inspect;

  auto* sqa_train = app.add_subcommand("sqa-train", "train intention classification against answer rewards");
  common(sqa_train);
  data(sqa_train);
  sqa_train->add_option("--oracle", f.oracle, "JSONL of {query, answer}");
  sqa_train->add_option("--checkpoint", f.checkpoint, "optional starting checkpoint");
  handlers[sqa_train] = cmd_sqa_train;

  auto* sqa_eval = app.add_subcommand("sqa-eval", "answer accuracy of recombined answers");
  common(sqa_eval);
  data(sqa_eval);
  sqa_eval->add_option("--oracle", f.oracle);
  sqa_eval->add_option("--checkpoint", f.checkpoint);
  handlers[sqa_eval] = cmd_sqa_eval;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  for (auto& [sub, handler] : handlers) {
    if (!sub->parsed())
      continue;
    try {
      return handler(f, out, err);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n" << sub->help();
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

}  // namespace star::cli
