// SPDX-License-Identifier: Apache-2.0
#include <expel/core.hpp>
#include <expel/error.hpp>

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace expel
{

std::string_view to_string(Outcome outcome) noexcept
{
    switch (outcome)
    {
        case Outcome::Success: return "success";
        case Outcome::Failure: return "failure";
        case Outcome::Halted: return "halted";
    }
    return "failure";
}

Outcome outcome_from_string(std::string_view text)
{
    if (text == "success")
        return Outcome::Success;
    if (text == "failure")
        return Outcome::Failure;
    if (text == "halted")
        return Outcome::Halted;
    throw std::invalid_argument(fmt::format("unknown outcome '{}'", text));
}

Trajectory::Trajectory(Task const& task, int trialIndex, std::string initialObservation, std::string reflectionsUsed):
    _task(task),
    _trialIndex(trialIndex),
    _initialObservation(std::move(initialObservation)),
    _reflectionsUsed(std::move(reflectionsUsed))
{
    if (trialIndex < 0)
        throw UsageError("trial index must be nonnegative");
}

void Trajectory::append_step(Step step)
{
    if (finalized())
        throw UsageError(fmt::format("cannot append to finalized trajectory of task '{}'", _task.id));
    if (step.action.empty())
        throw UsageError("step action must be non-empty");
    if (!(step.reward >= 0.0 && step.reward <= 1.0))
        throw UsageError(fmt::format("step reward {} outside [0, 1]", step.reward));
    _steps.push_back(std::move(step));
}

void Trajectory::finalize(Outcome outcome)
{
    if (finalized())
        throw UsageError(fmt::format("trajectory of task '{}' is already finalized", _task.id));
    if (outcome == Outcome::Success && (_steps.empty() || _steps.back().reward != 1.0))
        throw UsageError("a successful trajectory must end with reward 1");
    _outcome = outcome;
}

std::string render_trajectory(Trajectory const& trajectory, RenderStyle style, bool includeReflections)
{
    if (style == RenderStyle::TaskOnly)
        return trajectory.task().description;

    auto out = std::string {};
    out += trajectory.initial_observation().empty() ? trajectory.task().description
                                                    : trajectory.initial_observation();
    out += '\n';
    for (auto const& step: trajectory.steps())
    {
        for (auto const& thought: step.thoughts)
            out += fmt::format("Thought: {}\n", thought);
        out += fmt::format("Action: {}\n", step.action);
        out += fmt::format("Observation: {}\n", step.observation);
    }
    if (includeReflections && !trajectory.reflections_used().empty())
        out += fmt::format("Reflections: {}\n", trajectory.reflections_used());
    return out;
}

ExperiencePool::ExperiencePool(std::vector<Trajectory> manualFewshots)
{
    for (auto& trajectory: manualFewshots)
    {
        if (!trajectory.finalized())
            throw UsageError("manual fewshot trajectories must be finalized");
        trajectory.set_manual(true);
        _trajectories.push_back(std::move(trajectory));
        index(_trajectories.size() - 1);
    }
    _manualCount = _trajectories.size();
}

void ExperiencePool::insert(Trajectory trajectory)
{
    if (_sealed)
        throw UsageError("experience pool is sealed");
    if (!trajectory.finalized())
        throw UsageError(fmt::format("cannot insert unfinalized trajectory of task '{}'", trajectory.task_id()));
    _trajectories.push_back(std::move(trajectory));
    index(_trajectories.size() - 1);
}

void ExperiencePool::index(std::size_t position)
{
    auto const& id = _trajectories[position].task_id();
    auto [it, inserted] = _byTask.try_emplace(id);
    if (inserted)
        _taskOrder.push_back(id);
    it->second.push_back(position);
}

std::span<std::size_t const> ExperiencePool::indices_for(std::string const& taskId) const
{
    auto const it = _byTask.find(taskId);
    if (it == _byTask.end())
        return {};
    return it->second;
}

// Serialization --------------------------------------------------------------------------------

nlohmann::json to_json(Trajectory const& trajectory)
{
    auto steps = nlohmann::json::array();
    for (auto const& step: trajectory.steps())
    {
        auto record = nlohmann::json {
            { "thoughts", step.thoughts },
            { "action", step.action },
            { "observation", step.observation },
            { "reward", step.reward },
            { "valid", step.valid },
        };
        if (step.parse_failed)
            record["parse_failed"] = true;
        steps.push_back(std::move(record));
    }

    auto record = nlohmann::json {
        { "task_id", trajectory.task_id() },
        { "env_name", trajectory.task().env_name },
        { "task_description", trajectory.task().description },
        { "trial_index", trajectory.trial_index() },
        { "initial_observation", trajectory.initial_observation() },
        { "steps", std::move(steps) },
        { "outcome", trajectory.outcome() ? std::string(to_string(*trajectory.outcome())) : std::string("pending") },
        { "reflections_used", trajectory.reflections_used() },
    };
    if (trajectory.task().task_type)
        record["task_type"] = *trajectory.task().task_type;
    if (trajectory.manual())
        record["manual"] = true;
    if (trajectory.error())
        record["error"] = *trajectory.error();
    return record;
}

Trajectory trajectory_from_json(nlohmann::json const& record)
{
    auto task = Task {
        .id = record.at("task_id").get<std::string>(),
        .env_name = record.value("env_name", std::string {}),
        .description = record.value("task_description", std::string {}),
        .task_type = record.contains("task_type") ? std::optional(record["task_type"].get<std::string>())
                                                  : std::nullopt,
    };
    auto trajectory = Trajectory(task,
                                 record.at("trial_index").get<int>(),
                                 record.value("initial_observation", std::string {}),
                                 record.value("reflections_used", std::string {}));
    for (auto const& s: record.at("steps"))
    {
        trajectory.append_step(Step {
            .thoughts = s.value("thoughts", std::vector<std::string> {}),
            .action = s.at("action").get<std::string>(),
            .observation = s.value("observation", std::string {}),
            .reward = s.value("reward", 0.0),
            .valid = s.value("valid", true),
            .parse_failed = s.value("parse_failed", false),
        });
    }
    auto const outcome = record.at("outcome").get<std::string>();
    if (outcome != "pending")
        trajectory.finalize(outcome_from_string(outcome));
    trajectory.set_manual(record.value("manual", false));
    if (record.contains("error"))
        trajectory.set_error(record["error"].get<std::string>());
    return trajectory;
}

namespace
{
    void write_lines(std::span<Trajectory const> trajectories, std::filesystem::path const& path)
    {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        auto tmp = path;
        tmp += ".tmp";
        {
            auto out = std::ofstream(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw std::runtime_error(fmt::format("cannot write '{}'", tmp.string()));
            for (auto const& trajectory: trajectories)
                out << to_json(trajectory).dump() << '\n';
            if (!out)
                throw std::runtime_error(fmt::format("write to '{}' failed", tmp.string()));
        }
        std::filesystem::rename(tmp, path);
    }

    std::vector<Trajectory> read_lines(std::filesystem::path const& path)
    {
        auto in = std::ifstream(path, std::ios::binary);
        if (!in)
            throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
        auto out = std::vector<Trajectory> {};
        auto line = std::string {};
        auto lineNo = std::size_t { 0 };
        while (std::getline(in, line))
        {
            ++lineNo;
            if (trim(line).empty())
                continue;
            try
            {
                auto const record = nlohmann::json::parse(line);
                auto trajectory = trajectory_from_json(record);
                if (!trajectory.finalized())
                    throw UsageError("record is not finalized");
                out.push_back(std::move(trajectory));
            }
            catch (std::exception const& e)
            {
                throw ParseError(fmt::format("{}: malformed trajectory record: {}", path.string(), e.what()), lineNo);
            }
        }
        return out;
    }
} // namespace

void save_pool(ExperiencePool const& pool, std::filesystem::path const& path)
{
    write_lines(pool.trajectories(), path);
}

ExperiencePool load_pool(std::filesystem::path const& path)
{
    auto records = read_lines(path);
    auto manual = std::vector<Trajectory> {};
    auto gathered = std::vector<Trajectory> {};
    for (auto& trajectory: records)
    {
        if (trajectory.manual())
        {
            if (!gathered.empty())
                throw ParseError(fmt::format("{}: manual fewshot record after gathered records", path.string()),
                                 manual.size() + gathered.size() + 1);
            manual.push_back(std::move(trajectory));
        }
        else
            gathered.push_back(std::move(trajectory));
    }
    auto pool = ExperiencePool(std::move(manual));
    for (auto& trajectory: gathered)
        pool.insert(std::move(trajectory));
    pool.seal();
    return pool;
}

std::vector<Trajectory> load_trajectories(std::filesystem::path const& path)
{
    return read_lines(path);
}

void save_trajectories(std::span<Trajectory const> trajectories, std::filesystem::path const& path)
{
    write_lines(trajectories, path);
}

// Metrics --------------------------------------------------------------------------------------

TrajectoryStats trajectory_stats(Trajectory const& trajectory, Tokenizer const& tokenizer)
{
    auto stats = TrajectoryStats {
        .task_id = trajectory.task_id(),
        .task_type = trajectory.task().task_type,
        .outcome = trajectory.outcome().value_or(Outcome::Failure),
        .final_reward = trajectory.final_reward(),
    };
    for (auto const& step: trajectory.steps())
    {
        stats.thoughts += step.thoughts.size();
        for (auto const& thought: step.thoughts)
            stats.thought_tokens += tokenizer.count(thought);
        ++stats.actions;
        stats.action_tokens += tokenizer.count(step.action);
        ++stats.observations;
        stats.observation_tokens += tokenizer.count(step.observation);
        if (!step.valid)
            ++stats.invalid_actions;
    }
    return stats;
}

Metrics aggregate_metrics(std::vector<TrajectoryStats> stats)
{
    auto m = Metrics {};
    m.task_count = stats.size();
    auto rewardSum = 0.0;
    for (auto const& s: stats)
    {
        auto const success = s.outcome == Outcome::Success;
        m.success_count += success ? 1 : 0;
        m.failed_count += s.outcome == Outcome::Failure ? 1 : 0;
        m.halted_count += s.outcome == Outcome::Halted ? 1 : 0;
        rewardSum += s.final_reward;
        if (s.task_type)
        {
            auto& tally = m.per_type[*s.task_type];
            ++tally.tasks;
            tally.successes += success ? 1 : 0;
        }
        m.averages.thoughts += static_cast<double>(s.thoughts);
        m.averages.actions += static_cast<double>(s.actions);
        m.averages.observations += static_cast<double>(s.observations);
        m.averages.invalid_actions += static_cast<double>(s.invalid_actions);
        m.tokens.thought += s.thought_tokens;
        m.tokens.action += s.action_tokens;
        m.tokens.observation += s.observation_tokens;
        m.tokens.llm_input += s.llm_input_tokens;
        m.tokens.llm_output += s.llm_output_tokens;
    }
    if (m.task_count > 0)
    {
        auto const n = static_cast<double>(m.task_count);
        m.success_rate = static_cast<double>(m.success_count) / n;
        m.mean_reward = rewardSum / n;
        m.averages.thoughts /= n;
        m.averages.actions /= n;
        m.averages.observations /= n;
        m.averages.invalid_actions /= n;
    }
    m.per_trajectory = std::move(stats);
    return m;
}

nlohmann::json to_json(Metrics const& m)
{
    auto perType = nlohmann::json::object();
    for (auto const& [type, tally]: m.per_type)
        perType[type] = { { "successes", tally.successes }, { "tasks", tally.tasks }, { "rate", tally.rate() } };

    auto perTrajectory = nlohmann::json::array();
    for (auto const& s: m.per_trajectory)
    {
        auto record = nlohmann::json {
            { "task_id", s.task_id },
            { "outcome", to_string(s.outcome) },
            { "final_reward", s.final_reward },
            { "thoughts", s.thoughts },
            { "actions", s.actions },
            { "observations", s.observations },
            { "invalid_actions", s.invalid_actions },
            { "thought_tokens", s.thought_tokens },
            { "action_tokens", s.action_tokens },
            { "observation_tokens", s.observation_tokens },
            { "llm_input_tokens", s.llm_input_tokens },
            { "llm_output_tokens", s.llm_output_tokens },
        };
        if (s.task_type)
            record["task_type"] = *s.task_type;
        perTrajectory.push_back(std::move(record));
    }

    return {
        { "success_count", m.success_count },
        { "task_count", m.task_count },
        { "success_rate", m.success_rate },
        { "mean_reward", m.mean_reward },
        { "outcomes", { { "success", m.success_count }, { "failed", m.failed_count }, { "halted", m.halted_count } } },
        { "per_type", std::move(perType) },
        { "averages",
          { { "thoughts", m.averages.thoughts },
            { "actions", m.averages.actions },
            { "observations", m.averages.observations },
            { "invalid_actions", m.averages.invalid_actions } } },
        { "tokens",
          { { "thought", m.tokens.thought },
            { "action", m.tokens.action },
            { "observation", m.tokens.observation },
            { "llm_input", m.tokens.llm_input },
            { "llm_output", m.tokens.llm_output } } },
        { "per_trajectory", std::move(perTrajectory) },
    };
}

Metrics metrics_from_json(nlohmann::json const& record)
{
    auto stats = std::vector<TrajectoryStats> {};
    for (auto const& s: record.at("per_trajectory"))
    {
        stats.push_back(TrajectoryStats {
            .task_id = s.at("task_id").get<std::string>(),
            .task_type = s.contains("task_type") ? std::optional(s["task_type"].get<std::string>()) : std::nullopt,
            .outcome = outcome_from_string(s.at("outcome").get<std::string>()),
            .final_reward = s.at("final_reward").get<double>(),
            .thoughts = s.at("thoughts").get<std::size_t>(),
            .actions = s.at("actions").get<std::size_t>(),
            .observations = s.at("observations").get<std::size_t>(),
            .invalid_actions = s.at("invalid_actions").get<std::size_t>(),
            .thought_tokens = s.at("thought_tokens").get<std::size_t>(),
            .action_tokens = s.at("action_tokens").get<std::size_t>(),
            .observation_tokens = s.at("observation_tokens").get<std::size_t>(),
            .llm_input_tokens = s.at("llm_input_tokens").get<std::size_t>(),
            .llm_output_tokens = s.at("llm_output_tokens").get<std::size_t>(),
        });
    }
    return aggregate_metrics(std::move(stats));
}

} // namespace expel
