#pragma once

// Iterative mutation search: each round scores the current candidate and K
// agent-proposed variants, picks the next current, and keeps a global best.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/backend.hpp"
#include "forge/core.hpp"
#include "forge/hash.hpp"
#include "forge/objectives.hpp"

namespace forge {

struct MemberScore {
  CandidatePrompt candidate;
  LossBreakdown breakdown;
  bool cached = false;
  std::optional<double> robust_score;  // robust selection only
};

struct IterationRecord {
  int iteration = 0;
  std::vector<MemberScore> members;  // current first, then variants 1..K
  double mean_total_loss = 0.0;
  std::string selected_id;
  double best_so_far_loss = 0.0;
  /// Micro-variant scores feeding robust selection, grouped by member.
  std::vector<MemberScore> robust_evaluations;
  /// False when the query budget ran out part-way through the round.
  bool complete = true;
};

enum class StopReason : std::uint8_t { t_max, converged, budget, loss_floor };

constexpr std::string_view stop_reason_name(StopReason r) noexcept {
  switch (r) {
    case StopReason::t_max: return "t_max";
    case StopReason::converged: return "converged";
    case StopReason::budget: return "budget";
    case StopReason::loss_floor: return "loss_floor";
  }
  return "?";
}

inline StopReason parse_stop_reason(std::string_view s) {
  if (s == "t_max") return StopReason::t_max;
  if (s == "converged") return StopReason::converged;
  if (s == "budget") return StopReason::budget;
  if (s == "loss_floor") return StopReason::loss_floor;
  throw UsageError("unknown stop reason '" + std::string(s) + "'");
}

struct CampaignResult {
  PromptRecord original;
  CandidatePrompt best;
  /// Absent only when the budget allowed no evaluation at all.
  std::optional<CandidateEvaluation> best_evaluation;
  std::vector<IterationRecord> trace;
  StopReason stop_reason = StopReason::t_max;
  std::uint64_t queries_spent = 0;
  std::uint64_t evaluations = 0;

  const LossBreakdown& best_breakdown() const { return best_evaluation.value().breakdown; }
};

/// Hooks for streaming progress out of optimize(). Both are optional.
struct OptimizerObserver {
  std::function<void(const CandidatePrompt&, const CandidateEvaluation&, bool cached)> on_evaluation;
  std::function<void(const IterationRecord&)> on_iteration;
};

// ---------------------------------------------------------------------------

inline std::string candidate_id(const std::string& prompt_id, int iteration, int variant) {
  return prompt_id + ":" + std::to_string(iteration) + "." + std::to_string(variant);
}

/// Asks the agent for k rewrites of `current` and wraps them as variants
/// 1..k of `iteration`. Duplicates are kept as returned.
inline std::vector<CandidatePrompt> mutate(const CandidatePrompt& current, int k,
                                           MutationAgent& agent, std::uint64_t seed,
                                           int iteration, const std::string& id_prefix) {
  if (k < 0) throw UsageError("mutate: k must be >= 0");
  std::vector<CandidatePrompt> out;
  if (k == 0) return out;
  auto texts = agent.propose_variants(current.text, static_cast<std::size_t>(k), seed);
  if (texts.size() != static_cast<std::size_t>(k))
    throw ProtocolError("mutation agent returned " + std::to_string(texts.size()) +
                        " variants, expected " + std::to_string(k));
  out.reserve(texts.size());
  for (int i = 0; i < k; ++i) {
    out.push_back(CandidatePrompt::make(
        id_prefix + "." + std::to_string(i + 1), std::move(texts[static_cast<std::size_t>(i)]),
        Lineage{current.id, iteration, i + 1, CandidateRole::variant}));
  }
  return out;
}

/// Index of the member to continue from. Individual mode minimizes each
/// member's own loss; robust mode minimizes `robust_scores`. Ties go to the
/// lowest index.
inline std::size_t select(std::span<const MemberScore> members, SelectionMode mode,
                          std::span<const double> robust_scores = {}) {
  if (members.empty()) throw UsageError("select: no members");
  if (mode == SelectionMode::robust && robust_scores.size() != members.size())
    throw UsageError("select: robust mode needs one score per member");
  auto score = [&](std::size_t i) {
    return mode == SelectionMode::robust ? robust_scores[i] : members[i].breakdown.l_total;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (score(i) < score(best)) best = i;
  }
  return best;
}

/// True iff the trace holds at least `patience` records and best-so-far
/// improved by no more than epsilon between each consecutive pair of the last
/// `patience` records.
inline bool converged(std::span<const double> best_so_far, int patience, double epsilon_improve) {
  if (patience < 1) throw UsageError("converged: patience must be >= 1");
  const auto p = static_cast<std::size_t>(patience);
  if (best_so_far.size() < p) return false;
  for (std::size_t i = best_so_far.size() - p + 1; i < best_so_far.size(); ++i) {
    if (best_so_far[i - 1] - best_so_far[i] > epsilon_improve) return false;
  }
  return true;
}

inline bool converged(std::span<const IterationRecord> trace, int patience,
                      double epsilon_improve) {
  std::vector<double> b;
  b.reserve(trace.size());
  for (const auto& r : trace) b.push_back(r.best_so_far_loss);
  return converged(std::span<const double>(b), patience, epsilon_improve);
}

namespace detail {

/// Per-prompt scoring state: evaluation cache and the global best.
class Scorer {
 public:
  Scorer(const PromptRecord& original, Backends& backends, const CampaignConfig& cfg,
         std::uint64_t generation_seed, const OptimizerObserver& observer,
         CampaignResult& result)
      : original_(original),
        backends_(backends),
        cfg_(cfg),
        seed_(generation_seed),
        observer_(observer),
        result_(result) {}

  MemberScore score(const CandidatePrompt& c) {
    const CandidateEvaluation* ev = nullptr;
    bool cached = false;
    CandidateEvaluation fresh;
    if (cfg_.cache_evaluations) {
      if (auto it = cache_.find(c.text); it != cache_.end()) {
        ev = &it->second;
        cached = true;
      }
    }
    if (!ev) {
      fresh = evaluate_candidate(original_, c, backends_, cfg_.weights, seed_);
      if (cfg_.cache_evaluations) {
        ev = &cache_.emplace(c.text, std::move(fresh)).first->second;
      } else {
        ev = &fresh;
      }
    }
    ++result_.evaluations;
    if (observer_.on_evaluation) observer_.on_evaluation(c, *ev, cached);
    if (!result_.best_evaluation ||
        ev->breakdown.l_total < result_.best_evaluation->breakdown.l_total) {
      result_.best = c;
      result_.best_evaluation = *ev;
      result_.best_evaluation->candidate_id = c.id;
    }
    return MemberScore{c, ev->breakdown, cached, std::nullopt};
  }

 private:
  const PromptRecord& original_;
  Backends& backends_;
  const CampaignConfig& cfg_;
  std::uint64_t seed_;
  const OptimizerObserver& observer_;
  CampaignResult& result_;
  std::map<std::string, CandidateEvaluation> cache_;
};

}  // namespace detail

/// Runs the search for one prompt. Generation uses one seed per prompt,
/// prompt_seed(master_seed, id); the mutation seed for round j is
/// mix(that seed, j), and robust micro-variants of member i use
/// mix(that seed, j, i + 1).
///
/// Stops at t_max, at a zero loss, when the best-so-far stalls for `patience`
/// rounds, or when the query budget runs out. Backend failures propagate
/// after the partial trace has been handed to the observer.
inline CampaignResult optimize(const PromptRecord& original, const CampaignConfig& cfg,
                               const Backends& backends, const OptimizerObserver& observer = {}) {
  validate(original);
  cfg.validate();
  backends.require_complete();

  auto budget = std::make_shared<QueryBudget>(cfg.query_budget);
  Backends metered = meter(backends, budget, cfg.budget_scope);
  const std::uint64_t gen_seed = prompt_seed(cfg.master_seed, original.id);

  CampaignResult result;
  result.original = original;
  result.best = CandidatePrompt::make(candidate_id(original.id, 0, 0), original.text,
                                      Lineage{"", 0, 0, CandidateRole::seed});
  detail::Scorer scorer(original, metered, cfg, gen_seed, observer, result);

  IterationRecord pending;
  auto finish_partial = [&] {
    if (pending.members.empty()) return;
    pending.complete = false;
    double sum = 0.0;
    for (const auto& m : pending.members) sum += m.breakdown.l_total;
    pending.mean_total_loss = sum / static_cast<double>(pending.members.size());
    pending.selected_id = pending.members[select(pending.members, SelectionMode::individual)]
                              .candidate.id;
    pending.best_so_far_loss = result.best_breakdown().l_total;
    result.trace.push_back(pending);
    if (observer.on_iteration) observer.on_iteration(result.trace.back());
  };

  try {
    CandidatePrompt current = result.best;
    scorer.score(current);
    result.stop_reason = StopReason::t_max;

    for (int j = 1; j <= cfg.t_max; ++j) {
      pending = IterationRecord{};
      pending.iteration = j;
      const auto main = CandidatePrompt::make(candidate_id(original.id, j, 0), current.text,
                                              Lineage{current.id, j, 0, CandidateRole::main});
      pending.members.push_back(scorer.score(main));
      auto variants = mutate(main, cfg.k_variants, *metered.mutator, mix(gen_seed, j), j,
                             original.id + ":" + std::to_string(j));
      for (const auto& v : variants) pending.members.push_back(scorer.score(v));

      std::vector<double> robust;
      if (cfg.selection_mode == SelectionMode::robust) {
        for (std::size_t i = 0; i < pending.members.size(); ++i) {
          auto& member = pending.members[i];
          auto micro = mutate(member.candidate, cfg.robust_subvariants, *metered.mutator,
                              mix(gen_seed, j, i + 1), j, member.candidate.id + "/r");
          double sum = member.breakdown.l_total;
          for (const auto& mv : micro) {
            auto s = scorer.score(mv);
            sum += s.breakdown.l_total;
            pending.robust_evaluations.push_back(std::move(s));
          }
          member.robust_score = sum / static_cast<double>(micro.size() + 1);
          robust.push_back(*member.robust_score);
        }
      }

      double sum = 0.0;
      for (const auto& m : pending.members) sum += m.breakdown.l_total;
      pending.mean_total_loss = sum / static_cast<double>(pending.members.size());
      const std::size_t chosen = select(pending.members, cfg.selection_mode, robust);
      pending.selected_id = pending.members[chosen].candidate.id;
      pending.best_so_far_loss = result.best_breakdown().l_total;
      current = pending.members[chosen].candidate;
      result.trace.push_back(std::move(pending));
      pending = IterationRecord{};
      if (observer.on_iteration) observer.on_iteration(result.trace.back());

      if (result.best_breakdown().l_total == 0.0) {
        result.stop_reason = StopReason::loss_floor;
        break;
      }
      if (converged(std::span<const IterationRecord>(result.trace), cfg.patience,
                    cfg.epsilon_improve)) {
        result.stop_reason = StopReason::converged;
        break;
      }
    }
  } catch (const BudgetExceeded&) {
    result.stop_reason = StopReason::budget;
    finish_partial();
  } catch (...) {
    finish_partial();
    throw;
  }
  result.queries_spent = budget->spent();
  return result;
}

}  // namespace forge
