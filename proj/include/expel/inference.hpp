// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/agent.hpp>
#include <expel/core.hpp>
#include <expel/environment.hpp>
#include <expel/gather.hpp>
#include <expel/insights.hpp>
#include <expel/llm.hpp>
#include <expel/prompt.hpp>
#include <expel/retrieval.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

enum class EvalMode
{
    Full,         // insights and retrieved demonstrations
    InsightsOnly, // insights with the manual demonstrations
    RetrieveOnly, // retrieved demonstrations, no insights
    Base,         // manual demonstrations only
};

[[nodiscard]] std::string_view to_string(EvalMode mode) noexcept;
[[nodiscard]] EvalMode eval_mode_from_string(std::string_view text);
[[nodiscard]] constexpr bool uses_insights(EvalMode mode) noexcept
{
    return mode == EvalMode::Full || mode == EvalMode::InsightsOnly;
}
[[nodiscard]] constexpr bool uses_retrieval(EvalMode mode) noexcept
{
    return mode == EvalMode::Full || mode == EvalMode::RetrieveOnly;
}

enum class RetrievalStrategy
{
    TaskSimilarity,   // once per task, keyed by the task description
    ReasonSimilarity, // re-queried every step with the latest thought (ablation)
    Random,           // seeded uniform sample of successes (ablation)
};

[[nodiscard]] std::string_view to_string(RetrievalStrategy strategy) noexcept;
[[nodiscard]] RetrievalStrategy retrieval_strategy_from_string(std::string_view text);

struct EvalConfig
{
    std::vector<Task> tasks;
    int k = 6;         // demonstrations per prompt
    int max_steps = 7; // H
    EvalMode mode = EvalMode::Full;
    RetrievalStrategy strategy = RetrievalStrategy::TaskSimilarity;
    std::uint64_t random_seed = 0;
    std::string instruction;
    std::vector<Trajectory> manual_fewshots; // used when the mode does not retrieve
    DecodingParams decoding;
};

/// What retrieval needs at evaluation time. The thought index is only read by the reasoning strategy.
struct RetrievalContext
{
    ExperiencePool const* pool = nullptr;
    EmbeddingIndex const* index = nullptr;
    EmbeddingIndex const* thought_index = nullptr;
    Embedder const* embedder = nullptr;
};

/// Actor prompt for the given mode. Insights are rendered only for modes that use them;
/// `fewshots` are taken as given.
[[nodiscard]] PromptBundle assemble_prompt(std::string const& instruction,
                                           Trajectory const& partial,
                                           InsightSet const& insights,
                                           std::span<Trajectory const> fewshots,
                                           EvalMode mode);

struct FewshotSelection
{
    std::vector<TrajectoryRef> refs; // empty when manual demonstrations are used
    std::vector<Trajectory> trajectories;
    std::optional<std::string> warning;
};

/// Demonstrations for one prompt: retrieved from the pool for retrieving modes, else the first k manual ones.
/// `latestThought` is only consulted by the reasoning strategy; `ordinal` varies the random strategy per task.
[[nodiscard]] FewshotSelection select_fewshots(Task const& task,
                                               EvalConfig const& config,
                                               RetrievalContext const& retrieval,
                                               std::string_view latestThought = {},
                                               std::size_t ordinal = 0);

struct TaskRun
{
    Trajectory trajectory;
    std::vector<TrajectoryRef> fewshot_refs;
    std::vector<std::string> warnings;
};

/// Call-log tag used for every actor call made while evaluating `taskId`.
[[nodiscard]] std::string eval_tag(std::string_view taskId);

/// One attempt, no reflection; the environment must already hold the task.
[[nodiscard]] TaskRun run_task(Task const& task,
                               Environment& env,
                               Gateway& gateway,
                               InsightSet const& insights,
                               RetrievalContext const& retrieval,
                               EvalConfig const& config,
                               std::size_t ordinal = 0);

struct EvalResult
{
    Metrics metrics;
    std::vector<TaskRun> runs;        // in task order
    std::vector<CallLogEntry> calls;  // actor calls made by this evaluation
};

/// Runs every task once in listed order. A task whose environment cannot be created or reset
/// is recorded as halted with the error, and evaluation continues.
[[nodiscard]] EvalResult evaluate(EvalConfig const& config,
                                  EnvFactory const& envFactory,
                                  Gateway& gateway,
                                  InsightSet const& insights,
                                  RetrievalContext const& retrieval,
                                  std::function<void(std::string_view)> const& progress = {});

/// Writes metrics.json, trajectories.jsonl, trajectories/<task>.json, fewshots.json and calls.jsonl.
void save_eval(EvalResult const& result, std::filesystem::path const& dir);

} // namespace expel
