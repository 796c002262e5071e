#pragma once

// JSON encodings shared by the HTTP protocol, config files and event logs.
// Field names are part of the wire contract.

#include <algorithm>
#include <string>
#include <vector>

#include "forge/backend.hpp"
#include "forge/core.hpp"
#include "json.hpp"

namespace forge::wire {

using nlohmann::json;

namespace detail {

template <typename T>
T field(const json& j, const char* name, const char* what) {
  if (!j.is_object() || !j.contains(name))
    throw ProtocolError(std::string(what) + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string(what) + ": bad field '" + name + "': " + e.what());
  }
}

inline void require_number_array(const json& j, const char* what) {
  if (!j.is_array()) throw ProtocolError(std::string(what) + ": expected an array of numbers");
  for (const auto& v : j) {
    if (!v.is_number()) throw ProtocolError(std::string(what) + ": non-numeric vector entry");
  }
}

}  // namespace detail

// --- frames and generations ------------------------------------------------

inline json encode(const FrameDescriptor& f) {
  json j;
  j["index"] = f.index;
  j["embedding"] = f.embedding ? json(f.embedding->values) : json(nullptr);
  j["artifact_ref"] = f.artifact_ref ? json(*f.artifact_ref) : json(nullptr);
  j["unsafe_score"] = f.unsafe_score ? json(*f.unsafe_score) : json(nullptr);
  return j;
}

inline FrameDescriptor decode_frame(const json& j) {
  FrameDescriptor f;
  f.index = detail::field<std::size_t>(j, "index", "frame");
  if (j.contains("embedding") && !j["embedding"].is_null()) {
    detail::require_number_array(j["embedding"], "frame.embedding");
    f.embedding = EmbeddingVector{j["embedding"].get<std::vector<double>>(), Space::frame};
  }
  if (j.contains("artifact_ref") && !j["artifact_ref"].is_null())
    f.artifact_ref = detail::field<std::string>(j, "artifact_ref", "frame");
  if (j.contains("unsafe_score") && !j["unsafe_score"].is_null())
    f.unsafe_score = detail::field<double>(j, "unsafe_score", "frame");
  if (!f.embedding && !f.artifact_ref)
    throw ProtocolError("frame: needs an embedding or an artifact_ref");
  return f;
}

inline json encode(std::span<const FrameDescriptor> frames) {
  json arr = json::array();
  for (const auto& f : frames) arr.push_back(encode(f));
  return arr;
}

inline std::vector<FrameDescriptor> decode_frames(const json& j) {
  if (!j.is_array()) throw ProtocolError("frames: expected an array");
  std::vector<FrameDescriptor> out;
  out.reserve(j.size());
  for (const auto& f : j) out.push_back(decode_frame(f));
  return out;
}

inline json encode(const GenerationResult& g) {
  return json{{"blocked", g.blocked},
              {"block_stage", g.block_stage ? json(std::string(stage_name(*g.block_stage)))
                                            : json(nullptr)},
              {"frames", encode(std::span<const FrameDescriptor>(g.frames))},
              {"seed_used", g.seed_used}};
}

inline GenerationResult decode_generation(const json& j) {
  GenerationResult g;
  g.blocked = detail::field<bool>(j, "blocked", "generation");
  if (j.contains("block_stage") && !j["block_stage"].is_null()) {
    const auto s = detail::field<std::string>(j, "block_stage", "generation");
    if (s == "input") g.block_stage = BlockStage::input;
    else if (s == "output") g.block_stage = BlockStage::output;
    else throw ProtocolError("generation: unknown block_stage '" + s + "'");
  }
  g.frames = decode_frames(j.contains("frames") ? j["frames"] : json::array());
  g.seed_used = detail::field<std::uint64_t>(j, "seed_used", "generation");
  validate(g);
  return g;
}

// --- candidates, records, losses -------------------------------------------

inline json encode(const PromptRecord& r) {
  return json{{"id", r.id}, {"category", std::string(category_name(r.category))}, {"text", r.text}};
}

/// Strict: exactly the fields id, category, text.
inline PromptRecord decode_prompt_record(const json& j) {
  if (!j.is_object()) throw UsageError("prompt record must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (k != "id" && k != "category" && k != "text")
      throw UsageError("prompt record: unknown field '" + k + "'");
  }
  PromptRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.category = parse_category(j.at("category").get<std::string>());
    r.text = j.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("prompt record: ") + e.what());
  }
  validate(r);
  return r;
}

inline json encode(const CandidatePrompt& c) {
  return json{{"id", c.id},
              {"text", c.text},
              {"lineage",
               {{"parent_id", c.lineage.parent_id},
                {"iteration", c.lineage.iteration},
                {"variant_index", c.lineage.variant_index},
                {"role", std::string(role_name(c.lineage.role))}}}};
}

inline CandidatePrompt decode_candidate(const json& j) {
  const auto& l = j.at("lineage");
  const auto role_s = l.at("role").get<std::string>();
  CandidateRole role = CandidateRole::seed;
  if (role_s == "main") role = CandidateRole::main;
  else if (role_s == "variant") role = CandidateRole::variant;
  else if (role_s != "seed") throw UsageError("candidate: unknown role '" + role_s + "'");
  return CandidatePrompt::make(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                               Lineage{l.at("parent_id").get<std::string>(),
                                       l.at("iteration").get<int>(),
                                       l.at("variant_index").get<int>(), role});
}

inline json encode(const LossBreakdown& b) {
  return json{{"filter_penalty", b.filter_penalty}, {"frame_ratio", b.frame_ratio},
              {"sim_pp", b.sim_pp},                 {"sim_pv", b.sim_pv},
              {"l_bypass", b.l_bypass},             {"l_sem", b.l_sem},
              {"l_total", b.l_total}};
}

inline LossBreakdown decode_breakdown(const json& j) {
  LossBreakdown b;
  b.filter_penalty = j.at("filter_penalty").get<int>();
  b.frame_ratio = j.at("frame_ratio").get<double>();
  b.sim_pp = j.at("sim_pp").get<double>();
  b.sim_pv = j.at("sim_pv").get<double>();
  b.l_bypass = j.at("l_bypass").get<double>();
  b.l_sem = j.at("l_sem").get<double>();
  b.l_total = j.at("l_total").get<double>();
  return b;
}

// --- configuration ---------------------------------------------------------

inline json encode(const ObjectiveWeights& w) {
  return json{{"lambda", w.lambda}, {"gamma", w.gamma}, {"beta", w.beta}, {"delta", w.delta}};
}

inline json encode(const CampaignConfig& c) {
  return json{{"weights", encode(c.weights)},
              {"t_max", c.t_max},
              {"k_variants", c.k_variants},
              {"selection_mode", std::string(selection_mode_name(c.selection_mode))},
              {"robust_subvariants", c.robust_subvariants},
              {"patience", c.patience},
              {"epsilon_improve", c.epsilon_improve},
              {"master_seed", c.master_seed},
              {"query_budget", c.query_budget ? json(*c.query_budget) : json(nullptr)},
              {"budget_scope",
               c.budget_scope == BudgetScope::all_calls ? "all_calls" : "generator_only"},
              {"cache_evaluations", c.cache_evaluations}};
}

/// Missing fields keep their defaults; unknown fields are rejected.
inline CampaignConfig decode_campaign_config(const json& j) {
  static const std::vector<std::string> kKnown = {
      "weights", "t_max", "k_variants", "selection_mode", "robust_subvariants", "patience",
      "epsilon_improve", "master_seed", "query_budget", "budget_scope", "cache_evaluations"};
  if (!j.is_object()) throw ConfigError("campaign config must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), k) == kKnown.end())
      throw ConfigError("unknown campaign config field '" + k + "'");
  }
  CampaignConfig c;
  try {
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      for (const auto& [k, _] : w.items()) {
        if (k != "lambda" && k != "gamma" && k != "beta" && k != "delta")
          throw ConfigError("unknown weights field '" + k + "'");
      }
      c.weights.lambda = w.value("lambda", c.weights.lambda);
      c.weights.gamma = w.value("gamma", c.weights.gamma);
      c.weights.beta = w.value("beta", c.weights.beta);
      c.weights.delta = w.value("delta", c.weights.delta);
    }
    c.t_max = j.value("t_max", c.t_max);
    c.k_variants = j.value("k_variants", c.k_variants);
    if (j.contains("selection_mode"))
      c.selection_mode = parse_selection_mode(j["selection_mode"].get<std::string>());
    c.robust_subvariants = j.value("robust_subvariants", c.robust_subvariants);
    c.patience = j.value("patience", c.patience);
    c.epsilon_improve = j.value("epsilon_improve", c.epsilon_improve);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("query_budget") && !j["query_budget"].is_null())
      c.query_budget = j["query_budget"].get<std::uint64_t>();
    if (j.contains("budget_scope")) {
      const auto s = j["budget_scope"].get<std::string>();
      if (s == "all_calls") c.budget_scope = BudgetScope::all_calls;
      else if (s == "generator_only") c.budget_scope = BudgetScope::generator_only;
      else throw ConfigError("unknown budget_scope '" + s + "'");
    }
    c.cache_evaluations = j.value("cache_evaluations", c.cache_evaluations);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("campaign config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace forge::wire
