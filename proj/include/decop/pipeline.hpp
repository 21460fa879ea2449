#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decop/common.hpp"
#include "decop/corpus.hpp"
#include "decop/provider.hpp"
#include "decop/simulator.hpp"

namespace decop::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

class InvalidRunConfig : public Error {
 public:
  using Error::Error;
};

class StageInputMissing : public Error {
 public:
  using Error::Error;
};

enum class Stage { Ingest, Paraphrase, Quiz, Query, Score, Analyze, Report };

inline constexpr Stage kAllStages[] = {Stage::Ingest, Stage::Paraphrase, Stage::Quiz,  Stage::Query,
                                       Stage::Score,  Stage::Analyze,    Stage::Report};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

// Any failure inside a stage, rethrown with the stage name attached.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct ModelEntry {
  corpus::ModelSpec spec;
  provider::ProviderConfig provider;
};

struct RunConfig {
  std::filesystem::path corpus_manifest;
  provider::ProviderConfig paraphrase_provider;
  std::vector<ModelEntry> models;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  int low_coverage_threshold = 18;
  int balanced_subsets = 100;
  int bootstrap_count = 1000;
  int paraphrase_retries = 2;
  // Quizzes are rebuilt and sent this many at a time, bounding memory.
  std::size_t query_batch = 12'000;
};

// Relative paths are resolved against base_dir. Throws InvalidRunConfig.
//
//   {"corpus_manifest": "corpus/manifest.jsonl",
//    "paraphrase_provider": {provider config},
//    "models": [{"name": "...", "cutoff_date": "2023-10-01", "provider": {...}}],
//    "output_dir": "out", "seed": 7, "low_coverage_threshold": 18,
//    "balanced_subsets": 100, "bootstrap_count": 1000}
RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
json to_json(const RunConfig& cfg);

// Checks that referenced paths exist and every model has a usable provider.
void validate(const RunConfig& cfg);

struct StageRecord {
  std::string completed_at;
  std::map<std::string, std::string> inputs;   // name -> sha256
  std::map<std::string, std::string> outputs;  // path relative to output_dir -> sha256
  bool cache_hit = false;
};

struct RunManifest {
  json config;
  std::map<Stage, StageRecord> stages;
  std::string version{kVersion};
};

json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const json& j);
std::filesystem::path manifest_path(const RunConfig& cfg);

struct RunHooks {
  // Lets callers wrap or replace the transport built for a provider config.
  std::function<std::shared_ptr<provider::Transport>(const provider::ProviderConfig&,
                                                     std::shared_ptr<provider::Transport>)>
      wrap_transport;
};

// Runs the selected stages in pipeline order. A stage whose recorded inputs
// and outputs are unchanged is skipped; otherwise it reruns against its
// caches. Throws StageInputMissing or StageError.
RunManifest run(const RunConfig& cfg, std::span<const Stage> stages, const RunHooks& hooks = {});

// Formats the analyze outputs as delimited tables plus summary.txt. Returns
// the written paths in order.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& analyze_dir,
                                               const std::filesystem::path& report_dir);

// Run config for a corpus written by sim::write_synthetic_corpus: mock
// paraphraser plus the simulated target model with cfg's answer parameters.
// Paths are taken relative to the config file's directory.
json synthetic_run_config(const sim::SyntheticConfig& cfg, const std::string& corpus_manifest,
                          const std::string& output_dir);

// Directory-safe form of a model name.
std::string model_dir_name(std::string_view model_name);

}  // namespace decop::pipeline
