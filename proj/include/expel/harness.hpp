// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/gather.hpp>
#include <expel/inference.hpp>
#include <expel/insights.hpp>
#include <expel/llm.hpp>
#include <expel/prompt.hpp>
#include <expel/retrieval.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

// Folds ----------------------------------------------------------------------------------------

struct FoldRun
{
    std::vector<std::string> train;
    std::vector<std::string> eval;
    bool operator==(FoldRun const&) const = default;
};

struct FoldPlan
{
    std::vector<FoldRun> runs;
    bool operator==(FoldPlan const&) const = default;
};

/// `splits` seeded half-splits, each used in both directions. The first half takes the extra
/// task when the count is odd. With `taskTypes` (parallel to `taskIds`) every half receives
/// roughly half of each type.
[[nodiscard]] FoldPlan make_folds(std::span<std::string const> taskIds,
                                  std::uint64_t seed,
                                  std::size_t splits = 2,
                                  std::span<std::string const> taskTypes = {});

// Reporting ------------------------------------------------------------------------------------

struct MeanStdErr
{
    double mean = 0.0;
    double std_error = 0.0; // sample standard deviation / sqrt(n); 0 for a single value
};

[[nodiscard]] MeanStdErr mean_and_std_error(std::span<double const> values);

struct FoldMetrics
{
    std::string label;
    Metrics metrics;
};

struct Report
{
    std::vector<FoldMetrics> folds;
    MeanStdErr success_rate;
    MeanStdErr mean_reward;
    Metrics::Averages averages; // per trajectory, pooled over folds
    std::size_t successes = 0;
    std::size_t failures = 0;
    std::size_t halts = 0;
    std::vector<std::string> warnings;
};

/// Needs at least one fold.
[[nodiscard]] Report make_report(std::vector<FoldMetrics> folds);
[[nodiscard]] nlohmann::json to_json(Report const& report);
[[nodiscard]] std::string render_report(Report const& report, std::string_view title = {});

// Configuration --------------------------------------------------------------------------------

struct Seeds
{
    std::uint64_t chunking = 0;
    std::uint64_t folds = 0;
    std::uint64_t embedder = 0;
    std::uint64_t retrieval = 0;
};

struct ArtifactNames
{
    std::string pool = "pool.jsonl";
    std::string insights = "insights.json";
    std::string index = "index.bin";
    std::string reports = "eval";
};

struct RunConfig
{
    std::string env;
    std::filesystem::path data_dir;
    std::filesystem::path output_dir;
    std::filesystem::path base_dir; // relative paths inside the config resolve against this

    std::map<ModelRole, nlohmann::json> models;
    nlohmann::json embedder = { { "type", "hash" }, { "dimension", 256 } };

    int max_retries = 3;         // Z
    int max_steps = 7;           // H
    int fewshot_k = 6;           // k
    int success_chunk_size = 8;  // L
    int reflection_fewshots = 2; // k_reflections
    Seeds seeds;

    std::vector<EvalMode> modes { EvalMode::Full };
    RetrievalStrategy retrieval = RetrievalStrategy::TaskSimilarity;
    bool include_manual = true;
    bool extract_with_reflections = false;

    std::size_t fold_splits = 2;
    bool stratify = false;
    bool parallel_folds = false; // each fold gets its own gateway and output directory
    std::optional<FoldRun> split;   // fixed train/eval split instead of folds
    std::vector<std::string> tasks; // restrict to these ids; empty means all
    ArtifactNames paths;
};

/// Environment-specific defaults are applied first, then every key present in `record`.
/// `baseDir` anchors relative paths; throws ConfigError on unknown keys or bad values.
[[nodiscard]] RunConfig run_config_from_json(nlohmann::json const& record, std::filesystem::path const& baseDir);
[[nodiscard]] RunConfig load_run_config(std::filesystem::path const& path);
/// Fully resolved configuration, defaults expanded.
[[nodiscard]] nlohmann::json to_json(RunConfig const& config);

[[nodiscard]] std::filesystem::path default_data_dir();

/// Backend from a model spec: {"type": "scripted", "path": ..., "section"?: ...}, an inline
/// scripted spec {"type": "scripted", "rules": ..., "default": ...}, or {"type": "remote", ...endpoint}.
[[nodiscard]] std::shared_ptr<CompletionBackend const> make_backend(nlohmann::json const& spec, std::filesystem::path const& baseDir);
[[nodiscard]] std::unique_ptr<Embedder> make_embedder(RunConfig const& config);
void configure_gateway(Gateway& gateway, RunConfig const& config);

[[nodiscard]] EnvFactory env_factory(RunConfig const& config);
/// Tasks of the configured environment, restricted to `ids` (in the given order) when non-empty.
[[nodiscard]] std::vector<Task> resolve_tasks(RunConfig const& config, std::span<std::string const> ids = {});
[[nodiscard]] FoldPlan plan_folds(RunConfig const& config);

// Stages ---------------------------------------------------------------------------------------

using Progress = std::function<void(std::string_view)>;

GatherResult run_gather_stage(RunConfig const& config,
                              Gateway& gateway,
                              std::vector<Task> tasks,
                              std::filesystem::path const& poolPath,
                              Progress const& progress = {});

ExtractionResult run_extract_stage(RunConfig const& config,
                                   Gateway& gateway,
                                   std::filesystem::path const& poolPath,
                                   std::filesystem::path const& insightsPath,
                                   Progress const& progress = {});

EmbeddingIndex run_index_stage(RunConfig const& config,
                               std::filesystem::path const& poolPath,
                               std::filesystem::path const& indexPath);

/// Loads pool, insights and index as the mode requires, evaluates, and saves results under `outDir`.
EvalResult run_eval_stage(RunConfig const& config,
                          Gateway& gateway,
                          std::vector<Task> tasks,
                          EvalMode mode,
                          std::filesystem::path const& poolPath,
                          std::filesystem::path const& insightsPath,
                          std::filesystem::path const& indexPath,
                          std::filesystem::path const& outDir,
                          Progress const& progress = {});

enum class Stage
{
    Gather,
    Extract,
    Index,
    Eval,
    Report,
};

[[nodiscard]] std::string_view to_string(Stage stage) noexcept;
[[nodiscard]] Stage stage_from_string(std::string_view text);

/// A pipeline stage failed; the message names the stage and the artifacts involved.
class StageError: public std::runtime_error
{
  public:
    StageError(Stage stage, std::string const& message): std::runtime_error(message), _stage(stage) {}
    [[nodiscard]] Stage stage() const noexcept { return _stage; }

  private:
    Stage _stage;
};

struct PipelineResult
{
    std::map<EvalMode, Report> reports;
    std::filesystem::path report_json;
    std::filesystem::path report_text;
};

/// gather -> extract -> index -> eval for every fold, then one report per mode. Stages before
/// `from` reuse the artifacts already on disk.
PipelineResult run_pipeline(RunConfig const& config, Stage from = Stage::Gather, Progress const& progress = {});

} // namespace expel
