// Command-line front end: one subcommand per pipeline stage, `run` for a
// stage range, and `simulate` to write a synthetic corpus with a matching
// run config.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "decop/pipeline.hpp"
#include "decop/simulator.hpp"

namespace fs = std::filesystem;
using namespace decop;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
  bool quiet = false;
};

pipeline::RunConfig resolve_config(const GlobalOptions& g) {
  if (g.config.empty()) throw pipeline::InvalidRunConfig("--config is required");
  auto cfg = pipeline::load_run_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.output_dir = g.out;
  return cfg;
}

int run_stages(const GlobalOptions& g, const std::vector<pipeline::Stage>& stages) {
  const auto cfg = resolve_config(g);
  const auto manifest = pipeline::run(cfg, stages);
  for (const auto& [stage, rec] : manifest.stages) {
    spdlog::debug("{}: {}{}", pipeline::to_string(stage), rec.completed_at, rec.cache_hit ? " (cached)" : "");
  }
  std::cout << "run manifest: " << pipeline::manifest_path(cfg).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership-inference audit pipeline (DE-COP quizzes, AUROC statistics)"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config, "Run config (JSON)");
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--out", g.out, "Override the output directory");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

  std::vector<std::pair<CLI::App*, pipeline::Stage>> stage_commands;
  for (pipeline::Stage s : pipeline::kAllStages) {
    const std::string name(pipeline::to_string(s));
    stage_commands.emplace_back(app.add_subcommand(name, "Run the " + name + " stage"), s);
  }

  auto* run_cmd = app.add_subcommand("run", "Run several stages in pipeline order");
  bool all = false;
  std::vector<std::string> stage_names;
  run_cmd->add_flag("--all", all, "Run every stage");
  run_cmd->add_option("--stages", stage_names, "Stages to run")->delimiter(',');

  auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic corpus and a run config for it");
  sim::SyntheticConfig sc;
  std::string sim_dir;
  bool sim_run = false;
  int sim_bootstrap = 1000;
  sim_cmd->add_option("--dir", sim_dir, "Directory for the corpus and run.json (defaults to --out)");
  sim_cmd->add_option("--members", sc.n_books_member, "Books dated before the synthetic cutoff");
  sim_cmd->add_option("--nonmembers", sc.n_books_nonmember, "Books dated after the synthetic cutoff");
  sim_cmd->add_option("--paragraphs-per-book", sc.paragraphs_per_book);
  sim_cmd->add_option("--p-member", sc.p_member, "Correct-answer probability for member paragraphs");
  sim_cmd->add_option("--p-nonmember", sc.p_nonmember, "Correct-answer probability for non-member paragraphs");
  sim_cmd->add_option("--public-boost", sc.p_public_boost, "Added probability for public paragraphs");
  sim_cmd->add_flag("--boost-members-only", sc.boost_members_only);
  sim_cmd->add_option("--bootstrap", sim_bootstrap, "bootstrap_count written to run.json");
  sim_cmd->add_flag("--run", sim_run, "Also run every stage on the generated corpus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  spdlog::set_level(g.verbose ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  try {
    for (const auto& [cmd, stage] : stage_commands) {
      if (cmd->parsed()) return run_stages(g, {stage});
    }
    if (run_cmd->parsed()) {
      std::vector<pipeline::Stage> stages;
      if (all) {
        stages.assign(std::begin(pipeline::kAllStages), std::end(pipeline::kAllStages));
      } else {
        for (const auto& n : stage_names) stages.push_back(pipeline::parse_stage(n));
      }
      if (stages.empty()) throw pipeline::InvalidRunConfig("run needs --all or --stages");
      return run_stages(g, stages);
    }
    if (sim_cmd->parsed()) {
      const fs::path dir = !sim_dir.empty() ? fs::path(sim_dir) : !g.out.empty() ? fs::path(g.out) : fs::path();
      if (dir.empty()) throw pipeline::InvalidRunConfig("simulate needs --dir or --out");
      if (g.seed) sc.seed = *g.seed;
      const auto corpus = sim::synth_corpus(sc);
      sim::write_synthetic_corpus(corpus, dir / "corpus");
      auto run_json = pipeline::synthetic_run_config(sc, "corpus/manifest.jsonl", "run");
      run_json["bootstrap_count"] = sim_bootstrap;
      write_text_file(dir / "run.json", run_json.dump(2) + "\n");
      std::cout << fmt::format("wrote {} documents, {} paragraphs; config {}\n", corpus.documents.size(),
                               corpus.paragraphs.size(), (dir / "run.json").string());
      if (sim_run) {
        GlobalOptions run_opts = g;
        run_opts.config = (dir / "run.json").string();
        run_opts.out.clear();
        return run_stages(run_opts, {std::begin(pipeline::kAllStages), std::end(pipeline::kAllStages)});
      }
      return 0;
    }
  } catch (const pipeline::StageInputMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const pipeline::InvalidRunConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
