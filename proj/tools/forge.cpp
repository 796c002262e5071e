// forge: run, resume, report on and ablate red-teaming campaigns.
//
// Exit codes: 0 ok, 1 some prompt failed or ran out of budget, 2 bad config
// or usage, 3 backend unavailable, 4 corrupt event log.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "forge/campaign.hpp"

namespace fc = forge::campaign;

namespace {

int print_run(const fc::RunSummary& s) {
  std::cout << "campaign " << s.campaign_id << (s.no_op ? " (already finished)" : "") << "\n"
            << "events:  " << s.events_path.string() << "\n";
  if (!s.no_op) std::cout << "summary: " << s.summary_path.string() << "\n";
  const auto& r = s.report;
  if (!r.at("asr").is_null())
    std::cout << "ASR " << fc::detail::format_fixed(r.at("asr").get<double>(), 1) << "% over "
              << r.at("prompts").size() << " prompts, " << r.at("queries_total") << " queries\n";
  if (!r.at("prompts_failed").empty())
    std::cout << r.at("prompts_failed").size() << " prompt(s) failed\n";
  return s.exit_code;
}

int cmd_check(const std::string& config_path) {
  const auto cfg = fc::load_config(config_path);
  const auto health = fc::backend_check(cfg);
  for (const auto& e : health.entries) {
    std::cout << (e.ok ? "ok   " : "FAIL ") << e.role << " " << e.base_url;
    if (!e.backend.empty()) std::cout << " backend=" << e.backend;
    if (e.dim) std::cout << " dim=" << *e.dim;
    if (!e.error.empty()) std::cout << " error: " << e.error;
    std::cout << "\n";
  }
  for (const auto& p : health.problems) std::cout << "problem: " << p << "\n";
  return health.healthy ? 0 : 3;
}

int cmd_report(const std::string& events, const std::string& format,
               const std::string& labels_path) {
  const auto log = fc::read_event_log(events);
  forge::LabelImport labels;
  if (!labels_path.empty()) labels = forge::import_human_labels(labels_path);
  for (const auto& w : labels.warnings) std::cerr << "warning: " << w << "\n";
  const auto report = fc::build_report(log, labels.labels, labels.warnings);
  if (format == "json") std::cout << report.dump(2) << "\n";
  else std::cout << fc::render_markdown(report);
  return 0;
}

int cmd_ablate(const std::string& corpus, const std::string& config, std::size_t seeds,
               int parallel, const std::string& format) {
  const auto cfg = fc::load_config(config);
  const auto prompts = fc::load_corpus(corpus);
  const auto run = fc::run_ablation(prompts, cfg, seeds, parallel);
  if (format == "json")
    std::cout << fc::encode(run.report, seeds, cfg.campaign.k_variants).dump(2) << "\n";
  else
    std::cout << fc::render_ablation_markdown(run.report, seeds, cfg.campaign.k_variants);
  return run.report.asr_direction_ok && run.report.loss_direction_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial prompt optimization campaigns against text-to-video pipelines"};
  app.set_version_flag("--version", std::string(fc::kToolVersion));
  app.require_subcommand(1);

  std::string corpus, config, out, events, format = "md", labels;
  int parallel = 1;
  std::optional<std::uint64_t> budget;
  std::size_t seeds = 50;

  auto* run = app.add_subcommand("run", "Optimize every prompt of a corpus");
  run->add_option("--corpus", corpus, "Prompt corpus (JSONL)")->required()->check(CLI::ExistingFile);
  run->add_option("--config", config, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--parallel", parallel, "Prompts optimized concurrently")->check(CLI::Range(1, 256));
  run->add_option("--budget", budget, "Per-prompt query budget (overrides config)");

  auto* resume = app.add_subcommand("resume", "Finish an interrupted campaign");
  resume->add_option("--events", events, "Event log")->required()->check(CLI::ExistingFile);
  resume->add_option("--parallel", parallel, "Prompts optimized concurrently")->check(CLI::Range(1, 256));

  auto* report = app.add_subcommand("report", "Summarize an event log");
  report->add_option("--events", events, "Event log")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "Output format (default md)")->check(CLI::IsMember({"md", "markdown", "json"}));
  report->add_option("--labels", labels, "Human labels CSV overriding the automatic judge")
      ->check(CLI::ExistingFile);

  auto* check = app.add_subcommand("check", "Health-check the configured backends");
  check->add_option("--config", config, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "Paired runs with and without prompt mutation");
  ablate->add_option("--corpus", corpus, "Prompt corpus (JSONL)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--config", config, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "Paired master seeds (default 50)")->check(CLI::Range(1, 100000));
  ablate->add_option("--parallel", parallel, "Runs executed concurrently")->check(CLI::Range(1, 256));
  ablate->add_option("--format", format, "Output format (default md)")->check(CLI::IsMember({"md", "markdown", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      fc::RunOptions opts{parallel, budget};
      return print_run(fc::run_campaign(corpus, config, out, opts));
    }
    if (*resume) return print_run(fc::resume_campaign(events, fc::RunOptions{parallel, {}}));
    if (*report) return cmd_report(events, format, labels);
    if (*check) return cmd_check(config);
    if (*ablate) return cmd_ablate(corpus, config, seeds, parallel, format);
  } catch (const fc::LogCorrupt& e) {
    std::cerr << "error: corrupt event log: " << e.what() << "\n";
    return 4;
  } catch (const forge::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const forge::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const forge::TransportError& e) {
    std::cerr << "error: backend unavailable: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
