#include <json.hpp>

#include "star/metrics.hpp"
#include "star/splitter.hpp"

namespace star {

Prediction predict(ModelParams<float>& params, const QueryTriple& triple, const SchemaIndex& schema,
                   double lambda) {
  ad::Tape<float> tape(false);
  auto out = run_splitnet(tape, params, triple.precedent, triple.followup);
  std::vector<double> probs;
  if (out.probs.valid())
    probs = to_doubles(out.probs);

  Prediction p;
  p.labeling = argmax_labeling(probs);
  p.segmentation = labeling_to_segmentation(p.labeling, triple.precedent.size(), triple.followup.size());
  p.similarity = out.attention.similarity.value().cast<double>();
  p.conflicts = conflict_matrix(p.segmentation.x, p.segmentation.y, out.encoder).value().cast<double>();
  p.assignment = infer_assignment(p.conflicts, lambda);
  Words x = token_texts(triple.precedent), y = token_texts(triple.followup);
  p.restated = restate(p.segmentation, p.assignment, x, y, schema);
  return p;
}

const TableSchema& table_for(const QueryTriple& triple, const TableMap& tables) {
  static const TableSchema kEmpty;
  if (triple.table_id.empty())
    return kEmpty;
  auto it = tables.find(triple.table_id);
  if (it == tables.end())
    throw Error("no table schema for table_id " + triple.table_id);
  return it->second;
}

EvalReport evaluate(ModelParams<float>& params, std::span<const QueryTriple> dataset,
                    const TableMap& tables, double lambda, const SymAccConfig& config) {
  if (dataset.empty())
    throw Error("empty evaluation set");
  EvalReport report;
  std::map<std::string, SchemaIndex> indexes;
  for (const auto& triple : dataset) {
    if (!triple.restated)
      throw Error("evaluate: triple without restated query");
    const TableSchema& table = table_for(triple, tables);
    auto [it, inserted] = indexes.try_emplace(triple.table_id);
    if (inserted)
      it->second = SchemaIndex(table);
    const SchemaIndex& schema = it->second;

    Prediction p = predict(params, triple, schema, lambda);
    Words gold = token_texts(*triple.restated);
    ExampleResult r;
    r.precedent = join_tokens(triple.precedent);
    r.followup = join_tokens(triple.followup);
    r.gold = join_words(gold);
    r.predicted = join_words(p.restated);
    r.bleu = bleu4(gold, p.restated);
    r.symacc = symacc(gold, p.restated, schema, config);
    report.bleu += r.bleu;
    report.symacc += r.symacc;
    report.examples.push_back(std::move(r));
  }
  report.bleu /= static_cast<double>(dataset.size());
  report.symacc /= static_cast<double>(dataset.size());
  return report;
}

std::string EvalReport::to_json(int indent) const {
  nlohmann::json j;
  j["symacc"] = symacc;
  j["bleu"] = bleu;
  j["examples"] = nlohmann::json::array();
  for (const auto& e : examples)
    j["examples"].push_back({{"precedent", e.precedent},
                             {"followup", e.followup},
                             {"gold", e.gold},
                             {"predicted", e.predicted},
                             {"bleu", e.bleu},
                             {"symacc", e.symacc}});
  return j.dump(indent);
}

}  // namespace star
