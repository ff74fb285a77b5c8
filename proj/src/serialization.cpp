#include "forge/serialization.hpp"

#include <cmath>
#include <stdexcept>

namespace forge {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument(std::string(what) + ": unknown key '" + key + "'");
  }
}

}  // namespace

AttackSpec attack_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("attack: expected an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw std::invalid_argument("attack: missing string field 'kind'");
  const std::string kind = j["kind"];
  if (kind == "jpeg") {
    reject_unknown_keys(j, {"kind", "quality"}, "attack");
    if (!j.contains("quality") || !j["quality"].is_number_integer()) {
      throw std::invalid_argument("attack: jpeg requires integer 'quality'");
    }
    return AttackSpec::jpeg(j["quality"].get<int>());
  }
  if (kind == "scale") {
    reject_unknown_keys(j, {"kind", "ratio"}, "attack");
    if (!j.contains("ratio") || !j["ratio"].is_number()) throw std::invalid_argument("attack: scale requires 'ratio'");
    return AttackSpec::scale(j["ratio"].get<double>());
  }
  throw std::invalid_argument("attack: unknown kind '" + kind + "'");
}

json to_json(const AttackSpec& spec) {
  if (spec.kind == AttackSpec::Kind::jpeg) return {{"kind", "jpeg"}, {"quality", spec.quality}};
  return {{"kind", "scale"}, {"ratio", spec.ratio}};
}

json to_json(const LossBreakdown& l) {
  return {{"l_bg", l.l_bg}, {"l_grad", l.l_grad}, {"l_edge", l.l_edge}, {"total", l.total},
          {"n_bg", l.n_bg}, {"n_fg", l.n_fg},     {"n_edge", l.n_edge}};
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json out;
  out["mode"] = to_string(r.mode);
  out["metric"] = to_string(r.metric);
  out["dataset_f1"] = round6(r.dataset_f1);
  out["dataset_mcc"] = round6(r.dataset_mcc);
  out["global_threshold"] = r.global_threshold ? nlohmann::ordered_json(round6(*r.global_threshold)) : nullptr;
  out["per_image"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_image) {
    nlohmann::ordered_json row;
    row["id"] = s.id;
    row["best_threshold"] = round6(s.best_threshold);
    row["f1"] = round6(s.f1);
    row["mcc"] = round6(s.mcc);
    out["per_image"].push_back(std::move(row));
  }
  return out;
}

}  // namespace forge
