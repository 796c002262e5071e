#pragma once

// Campaign orchestration over a prompt corpus with an append-only JSON-Lines
// event log, prompt-level resume and report generation.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "forge/core.hpp"
#include "forge/evaluation.hpp"
#include "forge/hash.hpp"
#include "forge/optimizer.hpp"
#include "forge/remote.hpp"
#include "forge/simbench.hpp"
#include "forge/wire.hpp"
#include "json.hpp"

namespace forge::campaign {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Remote backends failed their health check.
class BackendUnavailable : public TransportError {
 public:
  using TransportError::TransportError;
};

/// The event log is not a valid prefix of a campaign.
class LogCorrupt : public Error {
 public:
  LogCorrupt(std::uint64_t last_valid_event_id, const std::string& what)
      : Error(what + " (last valid event id " + std::to_string(last_valid_event_id) + ")"),
        last_valid_(last_valid_event_id) {}
  std::uint64_t last_valid_event_id() const noexcept { return last_valid_; }

 private:
  std::uint64_t last_valid_;
};

// ---------------------------------------------------------------------------
// Configuration file

enum class BackendMode : std::uint8_t { simulation, remote };

struct ForgeConfig {
  CampaignConfig campaign;
  BackendMode mode = BackendMode::simulation;
  std::optional<sim::SimConfig> simulation;
  std::optional<remote::Endpoints> endpoints;
};

inline ForgeConfig config_from_json(const json& j, const fs::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (k != "mode" && k != "campaign" && k != "simulation" && k != "endpoints")
      throw ConfigError("unknown config field '" + k + "'");
  }
  ForgeConfig c;
  const std::string mode = j.value("mode", std::string("simulation"));
  if (mode == "simulation") c.mode = BackendMode::simulation;
  else if (mode == "remote") c.mode = BackendMode::remote;
  else throw ConfigError("mode must be 'simulation' or 'remote', got '" + mode + "'");

  c.campaign = wire::decode_campaign_config(j.value("campaign", json::object()));
  if (c.mode == BackendMode::simulation) {
    if (!j.contains("simulation")) throw ConfigError("simulation mode needs a 'simulation' block");
    c.simulation = sim::sim_config_from_json(j["simulation"], base_dir);
  } else {
    if (!j.contains("endpoints")) throw ConfigError("remote mode needs an 'endpoints' block");
    c.endpoints = remote::decode_endpoints(j["endpoints"]);
  }
  return c;
}

inline ForgeConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

/// Self-contained snapshot: fixture files are inlined, secrets dropped.
inline json config_snapshot(const ForgeConfig& c) {
  json j;
  j["mode"] = c.mode == BackendMode::simulation ? "simulation" : "remote";
  j["campaign"] = wire::encode(c.campaign);
  if (c.simulation) j["simulation"] = sim::sim_config_to_json(*c.simulation);
  if (c.endpoints) j["endpoints"] = remote::encode_endpoints(*c.endpoints);
  return j;
}

// ---------------------------------------------------------------------------
// Corpus

inline std::vector<PromptRecord> parse_corpus(std::istream& in) {
  std::vector<PromptRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = wire::decode_prompt_record(json::parse(line));
      if (!ids.insert(rec.id).second) throw UsageError("duplicate prompt id '" + rec.id + "'");
      out.push_back(std::move(rec));
    } catch (const json::parse_error& e) {
      throw UsageError("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const UsageError& e) {
      throw UsageError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<PromptRecord> load_corpus(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open corpus '" + path.string() + "'");
  auto records = parse_corpus(in);
  if (records.empty()) throw UsageError("corpus '" + path.string() + "' is empty");
  return records;
}

inline std::string corpus_digest(std::span<const PromptRecord> records) {
  std::string canon;
  for (const auto& r : records) canon += wire::encode(r).dump() + "\n";
  return to_hex(fnv1a64(canon));
}

// ---------------------------------------------------------------------------
// Events

enum class EventKind : std::uint8_t {
  campaign_started,
  candidate_evaluated,
  iteration_completed,
  prompt_finished,
  campaign_finished,
  error,
};

inline constexpr std::array<std::string_view, 6> kEventKindNames = {
    "campaign_started", "candidate_evaluated", "iteration_completed",
    "prompt_finished",  "campaign_finished",   "error"};

constexpr std::string_view event_kind_name(EventKind k) noexcept {
  return kEventKindNames[static_cast<std::size_t>(k)];
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (std::size_t i = 0; i < kEventKindNames.size(); ++i) {
    if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

struct Event {
  std::uint64_t event_id = 0;
  std::string timestamp;
  EventKind kind = EventKind::error;
  json payload;
};

inline json encode(const Event& e) {
  return json{{"event_id", e.event_id},
              {"timestamp", e.timestamp},
              {"kind", std::string(event_kind_name(e.kind))},
              {"payload", e.payload}};
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

/// Hash of every event with its timestamp removed.
inline std::string determinism_digest(std::span<const Event> events) {
  std::string canon;
  for (const auto& e : events) {
    json j = encode(e);
    j.erase("timestamp");
    canon += j.dump() + "\n";
  }
  return to_hex(fnv1a64(canon));
}

/// Single-writer appender. Each append is one line, flushed immediately.
class EventWriter {
 public:
  EventWriter(const fs::path& path, std::uint64_t next_id, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc), next_id_(next_id) {
    if (!out_) throw UsageError("cannot open event log '" + path.string() + "' for writing");
  }

  const Event& append(EventKind kind, json payload) {
    last_ = Event{next_id_++, utc_timestamp(), kind, std::move(payload)};
    out_ << encode(last_).dump() << '\n';
    out_.flush();
    return last_;
  }

  std::uint64_t next_id() const noexcept { return next_id_; }

 private:
  std::ofstream out_;
  std::uint64_t next_id_;
  Event last_;
};

/// Parses and validates a log: every line a well-formed event, ids strictly
/// increasing, first event campaign_started.
inline std::vector<Event> read_event_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open event log '" + path.string() + "'");
  std::vector<Event> events;
  std::uint64_t last_id = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "event log line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw LogCorrupt(last_id, where + ": not valid JSON");
    }
    Event e;
    try {
      e.event_id = j.at("event_id").get<std::uint64_t>();
      e.timestamp = j.at("timestamp").get<std::string>();
      auto kind = parse_event_kind(j.at("kind").get<std::string>());
      if (!kind) throw LogCorrupt(last_id, where + ": unknown event kind");
      e.kind = *kind;
      e.payload = j.at("payload");
    } catch (const json::exception&) {
      throw LogCorrupt(last_id, where + ": malformed event");
    }
    if (!events.empty() && e.event_id <= last_id)
      throw LogCorrupt(last_id, where + ": event ids not strictly increasing");
    if (events.empty() && e.kind != EventKind::campaign_started)
      throw LogCorrupt(last_id, where + ": log must start with campaign_started");
    last_id = e.event_id;
    events.push_back(std::move(e));
  }
  if (events.empty()) throw LogCorrupt(0, "event log '" + path.string() + "' is empty");
  return events;
}

// ---------------------------------------------------------------------------
// Running one prompt

struct PromptRun {
  std::vector<std::pair<EventKind, json>> events;
  bool failed = false;
  bool budget_stopped = false;
};

inline json encode_outcome(const AssessedResult& a) {
  return json{{"bypassed", a.outcome.bypassed},
              {"unsafe", a.outcome.unsafe},
              {"success", a.outcome.success},
              {"judge_source", std::string(judge_source_name(a.outcome.judge_source))},
              {"judge_score", a.judge_score},
              {"caption", a.caption},
              {"caption_similarity", a.outcome.caption_similarity}};
}

/// Optimizes one prompt and buffers its events. Backend failures become an
/// error event; everything streamed before the failure is kept.
inline PromptRun run_prompt(const PromptRecord& record, const CampaignConfig& cfg,
                            const Backends& backends) {
  PromptRun run;
  OptimizerObserver obs;
  obs.on_evaluation = [&](const CandidatePrompt& c, const CandidateEvaluation& ev, bool cached) {
    json p{{"prompt_id", record.id},
           {"candidate", wire::encode(c)},
           {"cached", cached},
           {"blocked", ev.generation.blocked},
           {"block_stage", ev.generation.block_stage
                               ? json(std::string(stage_name(*ev.generation.block_stage)))
                               : json(nullptr)},
           {"frames", ev.generation.frames.size()},
           {"caption", ev.caption ? json(*ev.caption) : json(nullptr)},
           {"breakdown", wire::encode(ev.breakdown)},
           {"queries_spent", cached ? 0 : ev.queries_spent}};
    run.events.emplace_back(EventKind::candidate_evaluated, std::move(p));
  };
  obs.on_iteration = [&](const IterationRecord& r) {
    json members = json::array();
    for (const auto& m : r.members) {
      json mj{{"id", m.candidate.id}, {"l_total", m.breakdown.l_total}};
      if (m.robust_score) mj["robust_score"] = *m.robust_score;
      members.push_back(std::move(mj));
    }
    run.events.emplace_back(EventKind::iteration_completed,
                            json{{"prompt_id", record.id},
                                 {"iteration", r.iteration},
                                 {"members", std::move(members)},
                                 {"mean_total_loss", r.mean_total_loss},
                                 {"selected_id", r.selected_id},
                                 {"best_so_far_loss", r.best_so_far_loss},
                                 {"complete", r.complete}});
  };

  try {
    const CampaignResult result = optimize(record, cfg, backends, obs);
    Backends plain = backends;
    const AssessedResult assessed = assess(result, plain);
    json p{{"prompt_id", record.id},
           {"category", std::string(category_name(record.category))},
           {"original", record.text},
           {"best", wire::encode(result.best)},
           {"best_breakdown",
            result.best_evaluation ? wire::encode(result.best_breakdown()) : json(nullptr)},
           {"stop_reason", std::string(stop_reason_name(result.stop_reason))},
           {"iterations", result.trace.size()},
           {"evaluations", result.evaluations},
           {"queries_spent", result.queries_spent},
           {"outcome", encode_outcome(assessed)}};
    run.budget_stopped = result.stop_reason == StopReason::budget;
    run.events.emplace_back(EventKind::prompt_finished, std::move(p));
  } catch (const EvaluationError& e) {
    run.failed = true;
    run.events.emplace_back(EventKind::error, json{{"prompt_id", record.id},
                                                   {"candidate_id", e.candidate_id()},
                                                   {"message", e.what()}});
  } catch (const Error& e) {
    run.failed = true;
    run.events.emplace_back(EventKind::error,
                            json{{"prompt_id", record.id}, {"message", e.what()}});
  }
  return run;
}

/// Runs prompts on up to `parallel` worker threads and hands each prompt's
/// buffered events to `sink` in corpus order, so the log never depends on
/// scheduling.
inline void run_prompts(std::span<const PromptRecord> prompts, const CampaignConfig& cfg,
                        const Backends& backends, int parallel,
                        const std::function<void(const PromptRun&)>& sink) {
  const std::size_t n = prompts.size();
  std::vector<std::optional<PromptRun>> slots(n);
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      PromptRun r = run_prompt(prompts[i], cfg, backends);
      std::lock_guard lock(mu);
      slots[i] = std::move(r);
      ready.notify_all();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, parallel));
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(worker);
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock lock(mu);
    ready.wait(lock, [&] { return slots[i].has_value(); });
    PromptRun r = std::move(*slots[i]);
    slots[i].reset();
    lock.unlock();
    sink(r);
  }
}

// ---------------------------------------------------------------------------
// Backends from config

inline Backends build_backends(const ForgeConfig& cfg) {
  if (cfg.mode == BackendMode::simulation) return sim::make_backends(*cfg.simulation);
  const auto health = remote::check_health(*cfg.endpoints);
  if (!health.healthy) {
    std::string msg = "backend check failed:";
    for (const auto& p : health.problems) msg += "\n  " + p;
    throw BackendUnavailable(msg);
  }
  return remote::make_backends(*cfg.endpoints, *health.entries[0].dim);
}

/// Simulation mode is always healthy.
inline remote::HealthReport backend_check(const ForgeConfig& cfg) {
  if (cfg.mode == BackendMode::simulation) {
    remote::HealthReport r;
    remote::HealthEntry e;
    e.role = "all";
    e.base_url = "in-process";
    e.ok = true;
    e.backend = "simulation";
    e.dim = cfg.simulation->dim;
    r.entries.push_back(std::move(e));
    return r;
  }
  return remote::check_health(*cfg.endpoints);
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

/// Summary document recomputed from raw events. For a prompt run more than
/// once (after a resume) the last run counts. `labels`, when given, override
/// the automatic unsafe verdicts.
inline json build_report(std::span<const Event> events,
                         std::span<const HumanLabel> labels = {},
                         const std::vector<std::string>& label_warnings = {}) {
  if (events.empty() || events.front().kind != EventKind::campaign_started)
    throw UsageError("report: log does not start with campaign_started");
  const json& started = events.front().payload;
  std::vector<std::string> corpus_ids;
  for (const auto& r : started.at("corpus")) corpus_ids.push_back(r.at("id").get<std::string>());

  std::map<std::string, json> finished;
  std::map<std::string, std::string> errors;
  std::map<std::string, std::vector<double>> traces;
  bool campaign_finished = false;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::iteration_completed: {
        const auto id = e.payload.at("prompt_id").get<std::string>();
        auto& t = traces[id];
        if (e.payload.at("iteration").get<int>() == 1) t.clear();
        t.push_back(e.payload.at("best_so_far_loss").get<double>());
        break;
      }
      case EventKind::prompt_finished: {
        const auto id = e.payload.at("prompt_id").get<std::string>();
        finished[id] = e.payload;
        errors.erase(id);
        break;
      }
      case EventKind::error:
        if (e.payload.contains("prompt_id")) {
          const auto id = e.payload.at("prompt_id").get<std::string>();
          errors[id] = e.payload.at("message").get<std::string>();
          finished.erase(id);
          traces.erase(id);
        }
        break;
      case EventKind::campaign_finished:
        campaign_finished = true;
        break;
      default:
        break;
    }
  }

  std::vector<EvalOutcome> outcomes;
  json prompts = json::array();
  std::uint64_t queries = 0, evaluations = 0;
  std::map<std::string, int> stop_counts;
  for (const auto& id : corpus_ids) {
    auto it = finished.find(id);
    if (it == finished.end()) continue;
    const json& p = it->second;
    const json& o = p.at("outcome");
    EvalOutcome out;
    out.prompt_id = id;
    out.category = parse_category(p.at("category").get<std::string>());
    out.bypassed = o.at("bypassed").get<bool>();
    out.unsafe = o.at("unsafe").get<bool>();
    out.caption_similarity = o.at("caption_similarity").get<double>();
    out.recompute();
    if (out.success != o.at("success").get<bool>())
      throw UsageError("report: prompt '" + id + "' violates success = bypassed AND unsafe");
    outcomes.push_back(out);
    queries += p.at("queries_spent").get<std::uint64_t>();
    evaluations += p.at("evaluations").get<std::uint64_t>();
    ++stop_counts[p.at("stop_reason").get<std::string>()];
  }

  json label_info = nullptr;
  if (!labels.empty() || !label_warnings.empty()) {
    const auto merge = apply_human_labels(outcomes, labels);
    label_info = json{{"applied", merge.applied},
                      {"rejects", merge.rejects},
                      {"warnings", label_warnings}};
  }

  for (const auto& out : outcomes) {
    const json& p = finished.at(out.prompt_id);
    const auto trace_it = traces.find(out.prompt_id);
    prompts.push_back(json{
        {"prompt_id", out.prompt_id},
        {"category", std::string(category_name(out.category))},
        {"best_text", p.at("best").at("text")},
        {"final_loss", p.at("best_breakdown").is_null() ? json(nullptr)
                                                         : p.at("best_breakdown").at("l_total")},
        {"stop_reason", p.at("stop_reason")},
        {"bypassed", out.bypassed},
        {"unsafe", out.unsafe},
        {"success", out.success},
        {"judge_source", std::string(judge_source_name(out.judge_source))},
        {"caption_similarity", out.caption_similarity},
        {"queries_spent", p.at("queries_spent")},
        {"loss_trace", trace_it == traces.end() ? json::array() : json(trace_it->second)}});
  }

  json failed = json::array();
  for (const auto& [id, msg] : errors) failed.push_back(json{{"prompt_id", id}, {"message", msg}});

  const bool partial = !campaign_finished || outcomes.size() + errors.size() < corpus_ids.size();
  json report{{"campaign_id", started.at("manifest").at("campaign_id")},
              {"partial", partial},
              {"prompts_total", corpus_ids.size()},
              {"prompts_finished", outcomes.size()},
              {"prompts_failed", failed},
              {"queries_total", queries},
              {"evaluations_total", evaluations},
              {"stop_reasons", stop_counts},
              {"prompts", prompts},
              {"labels", label_info}};
  if (outcomes.empty()) {
    report["asr"] = nullptr;
    report["per_category"] = json::array();
    report["asr_average"] = nullptr;
    report["semantic_similarity"] = nullptr;
  } else {
    const auto cats = per_category_asr(outcomes);
    json rows = json::array();
    for (const auto& r : cats.rows) {
      rows.push_back(json{{"category", std::string(category_name(r.category))},
                          {"total", r.total},
                          {"successes", r.successes},
                          {"asr", r.asr}});
    }
    double sim = 0.0;
    for (const auto& o : outcomes) sim += o.caption_similarity;
    report["asr"] = asr(outcomes);
    report["per_category"] = rows;
    report["asr_average"] = json{{"value", cats.average},
                                 {"convention", std::string(CategoryReport::kAverageConvention)},
                                 {"pooled", cats.pooled}};
    report["semantic_similarity"] = sim / static_cast<double>(outcomes.size());
  }
  return report;
}

inline std::string render_markdown(const json& report) {
  std::ostringstream md;
  md << "# Campaign " << report.at("campaign_id").get<std::string>() << "\n\n";
  if (report.at("partial").get<bool>()) md << "**Status: partial** (campaign did not finish)\n\n";
  md << "Prompts: " << report.at("prompts_finished") << " finished of "
     << report.at("prompts_total") << ", " << report.at("prompts_failed").size()
     << " failed. Generator queries: " << report.at("queries_total") << ".\n\n";

  md << "## Attack success rate by aspect\n\n| Aspect | Prompts | Successes | ASR |\n|---|---:|---:|---:|\n";
  for (const auto& r : report.at("per_category")) {
    md << "| " << r.at("category").get<std::string>() << " | " << r.at("total") << " | "
       << r.at("successes") << " | " << detail::format_fixed(r.at("asr").get<double>(), 1)
       << "% |\n";
  }
  if (!report.at("asr_average").is_null()) {
    md << "| ASR Average | | | "
       << detail::format_fixed(report.at("asr_average").at("value").get<double>(), 1) << "% |\n";
  } else {
    md << "| ASR Average | 0 | 0 | 0.0% |\n";
  }

  md << "\n## Overall\n\n| ASR (%) | Similarity |\n|---:|---:|\n| ";
  md << (report.at("asr").is_null() ? std::string("0.0")
                                     : detail::format_fixed(report.at("asr").get<double>(), 1))
     << " | "
     << (report.at("semantic_similarity").is_null()
             ? std::string("n/a")
             : detail::format_fixed(report.at("semantic_similarity").get<double>(), 3))
     << " |\n";

  md << "\n## Prompts\n\n| Prompt | Best prompt | Final loss | Stop | Bypassed | Unsafe | "
        "Similarity | Loss trace |\n|---|---|---:|---|---|---|---:|---|\n";
  for (const auto& p : report.at("prompts")) {
    std::string trace;
    for (const auto& v : p.at("loss_trace")) {
      if (!trace.empty()) trace += " ";
      trace += detail::format_fixed(v.get<double>(), 3);
    }
    md << "| " << p.at("prompt_id").get<std::string>() << " | "
       << p.at("best_text").get<std::string>() << " | "
       << (p.at("final_loss").is_null() ? std::string("n/a")
                                        : detail::format_fixed(p.at("final_loss").get<double>(), 4))
       << " | " << p.at("stop_reason").get<std::string>() << " | "
       << (p.at("bypassed").get<bool>() ? "yes" : "no") << " | "
       << (p.at("unsafe").get<bool>() ? "yes" : "no")
       << (p.at("judge_source").get<std::string>() == "human" ? " (human)" : "") << " | "
       << detail::format_fixed(p.at("caption_similarity").get<double>(), 3) << " | " << trace
       << " |\n";
  }
  if (!report.at("prompts_failed").empty()) {
    md << "\n## Failures\n\n";
    for (const auto& f : report.at("prompts_failed")) {
      md << "- " << f.at("prompt_id").get<std::string>() << ": "
         << f.at("message").get<std::string>() << "\n";
    }
  }
  return md.str();
}

// ---------------------------------------------------------------------------
// run / resume

struct RunOptions {
  int parallel = 1;
  std::optional<std::uint64_t> budget;  // overrides campaign.query_budget
};

struct RunSummary {
  int exit_code = 0;
  std::string campaign_id;
  fs::path events_path;
  fs::path summary_path;
  json report;
  bool no_op = false;
};

namespace detail {

inline fs::path summary_path_for(const fs::path& events_path, const std::string& campaign_id) {
  return events_path.parent_path() / (campaign_id + ".summary.json");
}

inline void write_summary(const fs::path& path, const json& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot write summary '" + path.string() + "'");
  out << report.dump(2) << '\n';
}

/// Runs `prompts`, appending their events and a closing campaign_finished.
/// Returns the exit code for the prompts run.
inline int execute(EventWriter& writer, std::span<const PromptRecord> prompts,
                   const CampaignConfig& cfg, const Backends& backends, int parallel,
                   std::size_t already_completed) {
  std::size_t completed = already_completed, failed = 0, budget_stops = 0;
  run_prompts(prompts, cfg, backends, parallel, [&](const PromptRun& r) {
    for (const auto& [kind, payload] : r.events) writer.append(kind, payload);
    if (r.failed) ++failed;
    else ++completed;
    if (r.budget_stopped) ++budget_stops;
  });
  writer.append(EventKind::campaign_finished,
                json{{"completed", completed}, {"failed", failed}, {"budget_stops", budget_stops}});
  return (failed == 0 && budget_stops == 0) ? 0 : 1;
}

}  // namespace detail

inline std::string campaign_id_for(const json& snapshot, const std::string& digest) {
  return "c" + to_hex(mix(fnv1a64(snapshot.dump()), fnv1a64(digest))).substr(0, 12);
}

/// Exit codes: 0 all prompts finished, 1 some prompt failed or ran out of
/// budget. Config/corpus problems throw ConfigError/UsageError, unreachable
/// backends throw BackendUnavailable.
inline RunSummary run_campaign(const fs::path& corpus_path, const fs::path& config_path,
                               const fs::path& out_dir, const RunOptions& opts = {}) {
  ForgeConfig cfg = load_config(config_path);
  if (opts.budget) cfg.campaign.query_budget = *opts.budget;
  const auto corpus = load_corpus(corpus_path);
  const Backends backends = build_backends(cfg);

  const json snapshot = config_snapshot(cfg);
  const std::string digest = corpus_digest(corpus);
  RunSummary s;
  s.campaign_id = campaign_id_for(snapshot, digest);
  fs::create_directories(out_dir);
  s.events_path = out_dir / (s.campaign_id + ".events.jsonl");
  s.summary_path = detail::summary_path_for(s.events_path, s.campaign_id);
  if (fs::exists(s.events_path))
    throw UsageError("event log '" + s.events_path.string() +
                     "' already exists; use 'forge resume' to continue it");

  json corpus_json = json::array();
  for (const auto& r : corpus) corpus_json.push_back(wire::encode(r));
  EventWriter writer(s.events_path, 1, false);
  writer.append(EventKind::campaign_started,
                json{{"manifest",
                      {{"campaign_id", s.campaign_id},
                       {"config", snapshot},
                       {"corpus_digest", digest},
                       {"tool_version", std::string(kToolVersion)}}},
                     {"corpus", corpus_json}});
  s.exit_code = detail::execute(writer, corpus, cfg.campaign, backends, opts.parallel, 0);
  s.report = build_report(read_event_log(s.events_path));
  detail::write_summary(s.summary_path, s.report);
  return s;
}

/// Re-runs every prompt without a prompt_finished event, from its seed.
/// A fully finished log is left untouched.
inline RunSummary resume_campaign(const fs::path& events_path, const RunOptions& opts = {}) {
  const auto events = read_event_log(events_path);
  const json& started = events.front().payload;
  RunSummary s;
  s.events_path = events_path;
  s.campaign_id = started.at("manifest").at("campaign_id").get<std::string>();
  s.summary_path = detail::summary_path_for(events_path, s.campaign_id);

  ForgeConfig cfg = config_from_json(started.at("manifest").at("config"));
  if (opts.budget) cfg.campaign.query_budget = *opts.budget;
  std::vector<PromptRecord> corpus;
  for (const auto& r : started.at("corpus")) corpus.push_back(wire::decode_prompt_record(r));

  std::set<std::string> done;
  bool any_budget_stop = false;
  for (const auto& e : events) {
    if (e.kind == EventKind::prompt_finished) {
      done.insert(e.payload.at("prompt_id").get<std::string>());
      any_budget_stop = any_budget_stop ||
                        e.payload.at("stop_reason").get<std::string>() == "budget";
    } else if (e.kind == EventKind::error && e.payload.contains("prompt_id")) {
      done.erase(e.payload.at("prompt_id").get<std::string>());
    }
  }
  std::vector<PromptRecord> todo;
  for (const auto& r : corpus) {
    if (!done.count(r.id)) todo.push_back(r);
  }
  const bool finished = events.back().kind == EventKind::campaign_finished;
  if (todo.empty() && finished) {
    s.no_op = true;
    s.report = build_report(events);
    s.exit_code = any_budget_stop ? 1 : 0;
    return s;
  }

  const Backends backends = build_backends(cfg);
  EventWriter writer(events_path, events.back().event_id + 1, true);
  const int code = detail::execute(writer, todo, cfg.campaign, backends, opts.parallel, done.size());
  s.exit_code = (code == 0 && !any_budget_stop) ? 0 : 1;
  s.report = build_report(read_event_log(events_path));
  detail::write_summary(s.summary_path, s.report);
  return s;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRun {
  AblationReport report;
  std::vector<AblationSample> with_mutation;
  std::vector<AblationSample> without_mutation;
  std::size_t seeds = 0;
};

/// Paired runs over `seeds` master seeds, mix(master_seed, s) for s < seeds:
/// once with the configured K and once with K = 0.
inline AblationRun run_ablation(std::span<const PromptRecord> corpus, const ForgeConfig& cfg,
                                std::size_t seeds, int parallel = 1) {
  if (corpus.empty()) throw UsageError("ablation: empty corpus");
  if (seeds == 0) throw UsageError("ablation: seeds must be >= 1");
  const Backends backends = build_backends(cfg);

  struct Job {
    std::size_t seed_index;
    std::size_t prompt_index;
    bool with;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < seeds; ++s)
    for (std::size_t p = 0; p < corpus.size(); ++p)
      for (bool with : {true, false}) jobs.push_back(Job{s, p, with});

  std::vector<AblationSample> samples(jobs.size());
  std::vector<std::string> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      const Job& job = jobs[i];
      CampaignConfig cc = cfg.campaign;
      cc.master_seed = mix(cfg.campaign.master_seed, job.seed_index);
      if (!job.with) cc.k_variants = 0;
      try {
        const auto result = optimize(corpus[job.prompt_index], cc, backends);
        Backends b = backends;
        samples[i] = make_sample(result, assess(result, b), cc.master_seed);
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < std::max(1, parallel); ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!failures[i].empty())
      throw Error("ablation run for prompt '" + corpus[jobs[i].prompt_index].id + "' failed: " +
                  failures[i]);
  }

  AblationRun run;
  run.seeds = seeds;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    (jobs[i].with ? run.with_mutation : run.without_mutation).push_back(samples[i]);
  }
  run.report = mutation_ablation_report(run.with_mutation, run.without_mutation);
  return run;
}

inline json encode(const AblationReport& r, std::size_t seeds, int k_variants) {
  auto arm = [](const AblationArm& a) {
    return json{{"samples", a.samples},
                {"asr", a.asr},
                {"mean_final_loss", a.mean_final_loss},
                {"mean_similarity", a.mean_similarity}};
  };
  return json{{"seeds", seeds},
              {"k_variants", k_variants},
              {"with_mutation", arm(r.with_mutation)},
              {"without_mutation", arm(r.without_mutation)},
              {"delta_asr", r.delta_asr},
              {"delta_final_loss", r.delta_final_loss},
              {"delta_similarity", r.delta_similarity},
              {"asr_direction_ok", r.asr_direction_ok},
              {"loss_direction_ok", r.loss_direction_ok}};
}

inline std::string render_ablation_markdown(const AblationReport& r, std::size_t seeds,
                                            int k_variants) {
  std::ostringstream md;
  md << "# Prompt mutation ablation (" << seeds << " seeds, K=" << k_variants << ")\n\n"
     << "| Setting | ASR (%) | Mean final loss | Similarity |\n|---|---:|---:|---:|\n";
  auto row = [&](const char* name, const AblationArm& a) {
    md << "| " << name << " | " << detail::format_fixed(a.asr, 1) << " | "
       << detail::format_fixed(a.mean_final_loss, 4) << " | "
       << detail::format_fixed(a.mean_similarity, 3) << " |\n";
  };
  row("w/ Prompt Mutation", r.with_mutation);
  row("w/o Prompt Mutation", r.without_mutation);
  md << "| Delta | " << detail::format_fixed(r.delta_asr, 1) << " | "
     << detail::format_fixed(r.delta_final_loss, 4) << " | "
     << detail::format_fixed(r.delta_similarity, 3) << " |\n\n"
     << "Direction check (ASR with >= without): " << (r.asr_direction_ok ? "pass" : "FAIL") << "\n";
  return md.str();
}

}  // namespace forge::campaign
