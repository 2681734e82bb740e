// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/text.hpp>

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace expel
{

struct Task
{
    std::string id;
    std::string env_name;
    std::string description;              // natural-language goal; also the retrieval key
    std::optional<std::string> task_type; // e.g. put / clean / heat / cool / look / puttwo

    bool operator==(Task const&) const = default;
};

struct Step
{
    std::vector<std::string> thoughts;
    std::string action;
    std::string observation;
    double reward = 0.0;
    bool valid = true;
    bool parse_failed = false; // the completion carried no parseable action

    bool operator==(Step const&) const = default;
};

enum class Outcome
{
    Success,
    Failure,
    Halted, // step cap reached without the environment signalling done
};

[[nodiscard]] std::string_view to_string(Outcome outcome) noexcept;
[[nodiscard]] Outcome outcome_from_string(std::string_view text);

/// One attempt at one task. Steps can only be appended until the outcome is set.
class Trajectory
{
  public:
    Trajectory() = default;
    Trajectory(Task const& task, int trialIndex, std::string initialObservation, std::string reflectionsUsed = {});

    void append_step(Step step);
    void finalize(Outcome outcome);

    [[nodiscard]] bool finalized() const noexcept { return _outcome.has_value(); }
    [[nodiscard]] std::optional<Outcome> outcome() const noexcept { return _outcome; }
    [[nodiscard]] bool succeeded() const noexcept { return _outcome == Outcome::Success; }

    [[nodiscard]] Task const& task() const noexcept { return _task; }
    [[nodiscard]] std::string const& task_id() const noexcept { return _task.id; }
    [[nodiscard]] int trial_index() const noexcept { return _trialIndex; }
    [[nodiscard]] std::string const& initial_observation() const noexcept { return _initialObservation; }
    [[nodiscard]] std::string const& reflections_used() const noexcept { return _reflectionsUsed; }
    [[nodiscard]] std::vector<Step> const& steps() const noexcept { return _steps; }
    [[nodiscard]] double final_reward() const noexcept { return _steps.empty() ? 0.0 : _steps.back().reward; }

    /// Hand-provided demonstration (F_manual member).
    [[nodiscard]] bool manual() const noexcept { return _manual; }
    void set_manual(bool manual) noexcept { _manual = manual; }

    [[nodiscard]] std::optional<std::string> const& error() const noexcept { return _error; }
    void set_error(std::string message) { _error = std::move(message); }

    bool operator==(Trajectory const&) const = default;

  private:
    Task _task;
    int _trialIndex = 0;
    std::string _initialObservation;
    std::string _reflectionsUsed;
    std::vector<Step> _steps;
    std::optional<Outcome> _outcome;
    bool _manual = false;
    std::optional<std::string> _error;
};

enum class RenderStyle
{
    Full,
    TaskOnly,
};

/// `Full` prints the initial observation followed by Thought/Action/Observation lines in step order.
[[nodiscard]] std::string render_trajectory(Trajectory const& trajectory,
                                            RenderStyle style = RenderStyle::Full,
                                            bool includeReflections = false);

/// Append-only store of every gathered trajectory, seeded with the manual demonstrations.
class ExperiencePool
{
  public:
    ExperiencePool() = default;
    explicit ExperiencePool(std::vector<Trajectory> manualFewshots);

    void insert(Trajectory trajectory);

    /// After sealing the pool is read-only; further inserts are usage errors.
    void seal() noexcept { _sealed = true; }
    [[nodiscard]] bool sealed() const noexcept { return _sealed; }

    [[nodiscard]] std::size_t size() const noexcept { return _trajectories.size(); }
    [[nodiscard]] bool empty() const noexcept { return _trajectories.empty(); }
    [[nodiscard]] std::size_t manual_count() const noexcept { return _manualCount; }
    [[nodiscard]] std::span<Trajectory const> trajectories() const noexcept { return _trajectories; }
    [[nodiscard]] std::span<Trajectory const> manual_fewshots() const noexcept
    {
        return std::span<Trajectory const>(_trajectories).first(_manualCount);
    }
    [[nodiscard]] Trajectory const& operator[](std::size_t index) const { return _trajectories.at(index); }

    [[nodiscard]] std::span<std::size_t const> indices_for(std::string const& taskId) const;
    /// Task ids in order of first appearance.
    [[nodiscard]] std::vector<std::string> const& task_order() const noexcept { return _taskOrder; }

    bool operator==(ExperiencePool const& other) const { return _trajectories == other._trajectories; }

  private:
    void index(std::size_t position);

    std::vector<Trajectory> _trajectories;
    std::unordered_map<std::string, std::vector<std::size_t>> _byTask;
    std::vector<std::string> _taskOrder;
    std::size_t _manualCount = 0;
    bool _sealed = false;
};

[[nodiscard]] nlohmann::json to_json(Trajectory const& trajectory);
[[nodiscard]] Trajectory trajectory_from_json(nlohmann::json const& record);

/// One JSON record per line. Written to a temporary file and renamed into place.
void save_pool(ExperiencePool const& pool, std::filesystem::path const& path);
/// Throws ParseError naming the offending line; never returns a partial pool.
[[nodiscard]] ExperiencePool load_pool(std::filesystem::path const& path);

/// Reads a line-delimited trajectory file (fewshot fixtures use the pool record format).
[[nodiscard]] std::vector<Trajectory> load_trajectories(std::filesystem::path const& path);
void save_trajectories(std::span<Trajectory const> trajectories, std::filesystem::path const& path);

// Metrics -------------------------------------------------------------------------------------

struct TrajectoryStats
{
    std::string task_id;
    std::optional<std::string> task_type;
    Outcome outcome = Outcome::Failure;
    double final_reward = 0.0;
    std::size_t thoughts = 0;
    std::size_t actions = 0;
    std::size_t observations = 0;
    std::size_t invalid_actions = 0;
    std::size_t thought_tokens = 0;
    std::size_t action_tokens = 0;
    std::size_t observation_tokens = 0;
    std::size_t llm_input_tokens = 0;
    std::size_t llm_output_tokens = 0;

    bool operator==(TrajectoryStats const&) const = default;
};

/// Counts taken from the trajectory itself; LLM token fields are left at zero.
[[nodiscard]] TrajectoryStats trajectory_stats(Trajectory const& trajectory,
                                               Tokenizer const& tokenizer = default_tokenizer());

struct TypeTally
{
    std::size_t successes = 0;
    std::size_t tasks = 0;

    [[nodiscard]] double rate() const noexcept
    {
        return tasks == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(tasks);
    }
    bool operator==(TypeTally const&) const = default;
};

struct Metrics
{
    std::size_t success_count = 0; // S
    std::size_t task_count = 0;    // M
    double success_rate = 0.0;
    double mean_reward = 0.0;
    std::size_t failed_count = 0;
    std::size_t halted_count = 0;
    std::map<std::string, TypeTally> per_type;
    std::vector<TrajectoryStats> per_trajectory;

    struct Averages
    {
        double thoughts = 0.0;
        double actions = 0.0;
        double observations = 0.0;
        double invalid_actions = 0.0;
        bool operator==(Averages const&) const = default;
    } averages;

    struct TokenTotals
    {
        std::size_t thought = 0;
        std::size_t action = 0;
        std::size_t observation = 0;
        std::size_t llm_input = 0;
        std::size_t llm_output = 0;
        bool operator==(TokenTotals const&) const = default;
    } tokens;

    bool operator==(Metrics const&) const = default;
};

/// Aggregates per-trajectory stats into S/M, per-type tallies, averages and token totals.
[[nodiscard]] Metrics aggregate_metrics(std::vector<TrajectoryStats> stats);

[[nodiscard]] nlohmann::json to_json(Metrics const& metrics);
[[nodiscard]] Metrics metrics_from_json(nlohmann::json const& record);

} // namespace expel
