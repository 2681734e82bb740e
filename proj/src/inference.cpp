// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"

#include <expel/error.hpp>
#include <expel/inference.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace expel
{

std::string_view to_string(EvalMode mode) noexcept
{
    switch (mode)
    {
        case EvalMode::Full: return "full";
        case EvalMode::InsightsOnly: return "insights_only";
        case EvalMode::RetrieveOnly: return "retrieve_only";
        case EvalMode::Base: return "base";
    }
    return "full";
}

EvalMode eval_mode_from_string(std::string_view text)
{
    for (auto mode: { EvalMode::Full, EvalMode::InsightsOnly, EvalMode::RetrieveOnly, EvalMode::Base })
        if (to_string(mode) == text)
            return mode;
    throw ConfigError(fmt::format("unknown evaluation mode '{}' (full, insights_only, retrieve_only, base)", text));
}

std::string_view to_string(RetrievalStrategy strategy) noexcept
{
    switch (strategy)
    {
        case RetrievalStrategy::TaskSimilarity: return "task";
        case RetrievalStrategy::ReasonSimilarity: return "reason";
        case RetrievalStrategy::Random: return "random";
    }
    return "task";
}

RetrievalStrategy retrieval_strategy_from_string(std::string_view text)
{
    for (auto s: { RetrievalStrategy::TaskSimilarity, RetrievalStrategy::ReasonSimilarity, RetrievalStrategy::Random })
        if (to_string(s) == text)
            return s;
    throw ConfigError(fmt::format("unknown retrieval strategy '{}' (task, reason, random)", text));
}

namespace
{
    ActorContext actor_context(std::string const& instruction,
                               InsightSet const& insights,
                               std::span<Trajectory const> fewshots,
                               EvalMode mode)
    {
        auto context = ActorContext { .instruction = instruction };
        if (uses_insights(mode))
            context.insights = render_insights(insights);
        for (auto const& shot: fewshots)
            context.fewshots.push_back(render_trajectory(shot));
        return context;
    }

    std::string latest_thought(Trajectory const& partial)
    {
        for (auto it = partial.steps().rbegin(); it != partial.steps().rend(); ++it)
            if (!it->thoughts.empty())
                return it->thoughts.back();
        return {};
    }
} // namespace

PromptBundle assemble_prompt(std::string const& instruction,
                             Trajectory const& partial,
                             InsightSet const& insights,
                             std::span<Trajectory const> fewshots,
                             EvalMode mode)
{
    auto context = actor_context(instruction, insights, fewshots, mode);
    return PromptBundle {
        .instruction = std::move(context.instruction),
        .insights = std::move(context.insights),
        .fewshots = std::move(context.fewshots),
        .task = partial.initial_observation(),
        .trajectory = render_steps(partial.steps()),
    };
}

FewshotSelection select_fewshots(Task const& task,
                                 EvalConfig const& config,
                                 RetrievalContext const& retrieval,
                                 std::string_view latestThought,
                                 std::size_t ordinal)
{
    if (config.k < 0)
        throw UsageError("k must be >= 0");
    auto const k = static_cast<std::size_t>(config.k);
    auto selection = FewshotSelection {};
    if (k == 0)
        return selection;

    if (!uses_retrieval(config.mode))
    {
        auto const n = std::min(k, config.manual_fewshots.size());
        selection.trajectories.assign(config.manual_fewshots.begin(), config.manual_fewshots.begin() + static_cast<long>(n));
        return selection;
    }

    if (retrieval.pool == nullptr || retrieval.index == nullptr || retrieval.embedder == nullptr)
        throw UsageError(fmt::format("mode {} needs a pool, an index and an embedder", to_string(config.mode)));

    switch (config.strategy)
    {
        case RetrievalStrategy::TaskSimilarity:
            selection.refs = query_topk(*retrieval.index, *retrieval.embedder, task.description, k);
            break;
        case RetrievalStrategy::ReasonSimilarity:
            if (trim(latestThought).empty())
                selection.refs = query_topk(*retrieval.index, *retrieval.embedder, task.description, k);
            else if (retrieval.thought_index == nullptr)
                throw UsageError("reasoning-similarity retrieval needs a thought index");
            else
                selection.refs = query_by_reason(*retrieval.thought_index, *retrieval.embedder, latestThought, k);
            break;
        case RetrievalStrategy::Random:
            selection.refs = sample_random(*retrieval.index, k, config.random_seed + ordinal);
            break;
    }
    for (auto const& ref: selection.refs)
        selection.trajectories.push_back((*retrieval.pool)[ref.pool_index]);
    if (selection.refs.size() < k)
        selection.warning = fmt::format("task {}: only {} of {} demonstrations available", task.id, selection.refs.size(), k);
    return selection;
}

std::string eval_tag(std::string_view taskId)
{
    return fmt::format("eval:{}", taskId);
}

TaskRun run_task(Task const& task,
                 Environment& env,
                 Gateway& gateway,
                 InsightSet const& insights,
                 RetrievalContext const& retrieval,
                 EvalConfig const& config,
                 std::size_t ordinal)
{
    auto run = TaskRun { .trajectory = Trajectory(task, 0, task.description) };
    auto selection = select_fewshots(task, config, retrieval, {}, ordinal);
    auto const note = [&](FewshotSelection const& s) {
        if (s.warning && std::ranges::find(run.warnings, *s.warning) == run.warnings.end())
            run.warnings.push_back(*s.warning);
    };
    note(selection);
    run.fewshot_refs = selection.refs;

    auto const perStep = config.strategy == RetrievalStrategy::ReasonSimilarity && uses_retrieval(config.mode);
    auto spec = EpisodeSpec {
        .task = task,
        .trial_index = 0,
        .max_steps = config.max_steps,
        .context = [&](Trajectory const& partial) {
            if (perStep && !partial.steps().empty())
            {
                selection = select_fewshots(task, config, retrieval, latest_thought(partial), ordinal);
                note(selection);
            }
            return actor_context(config.instruction, insights, selection.trajectories, config.mode);
        },
        .tag = eval_tag(task.id),
        .decoding = config.decoding,
    };
    run.trajectory = run_episode(env, gateway, spec);
    return run;
}

EvalResult evaluate(EvalConfig const& config,
                    EnvFactory const& envFactory,
                    Gateway& gateway,
                    InsightSet const& insights,
                    RetrievalContext const& retrieval,
                    std::function<void(std::string_view)> const& progress)
{
    if (config.tasks.empty())
        throw UsageError("evaluation needs at least one task");
    if (config.max_steps < 1)
        throw UsageError("max steps must be >= 1");
    if (uses_retrieval(config.mode) && retrieval.index != nullptr && retrieval.pool != nullptr)
        retrieval.index->check_against(*retrieval.pool);

    auto result = EvalResult {};
    auto stats = std::vector<TrajectoryStats> {};
    for (std::size_t ordinal = 0; ordinal < config.tasks.size(); ++ordinal)
    {
        auto const& task = config.tasks[ordinal];
        auto const tag = eval_tag(task.id);
        auto const logStart = gateway.call_log().size();

        auto run = TaskRun { .trajectory = Trajectory(task, 0, task.description) };
        try
        {
            auto env = envFactory(task);
            if (!env)
                throw std::runtime_error("factory returned no environment");
            run = run_task(task, *env, gateway, insights, retrieval, config, ordinal);
        }
        catch (UsageError const&)
        {
            throw;
        }
        catch (std::exception const& e)
        {
            run.trajectory = Trajectory(task, 0, task.description);
            run.trajectory.set_error(e.what());
            run.trajectory.finalize(Outcome::Halted);
        }

        auto s = trajectory_stats(run.trajectory);
        auto const log = gateway.call_log();
        for (auto i = logStart; i < log.size(); ++i)
        {
            if (log[i].tag != tag)
                continue;
            s.llm_input_tokens += log[i].record.input_tokens;
            s.llm_output_tokens += log[i].record.output_tokens;
            result.calls.push_back(log[i]);
        }
        if (progress)
        {
            progress(fmt::format("task={} outcome={} steps={} invalid={} reward={}", task.id,
                                 to_string(*run.trajectory.outcome()), s.actions, s.invalid_actions, s.final_reward));
            for (auto const& w: run.warnings)
                progress(fmt::format("warning: {}", w));
        }
        stats.push_back(std::move(s));
        result.runs.push_back(std::move(run));
    }
    result.metrics = aggregate_metrics(std::move(stats));
    return result;
}

void save_eval(EvalResult const& result, std::filesystem::path const& dir)
{
    std::filesystem::create_directories(dir / "trajectories");
    detail::write_text_file(dir / "metrics.json", to_json(result.metrics).dump(2) + "\n");

    auto trajectories = std::vector<Trajectory> {};
    auto fewshots = nlohmann::json::array();
    for (auto const& run: result.runs)
    {
        trajectories.push_back(run.trajectory);
        detail::write_text_file(dir / "trajectories" / (run.trajectory.task_id() + ".json"),
                                to_json(run.trajectory).dump(2) + "\n");
        auto refs = nlohmann::json::array();
        for (auto const& ref: run.fewshot_refs)
            refs.push_back({ { "pool_index", ref.pool_index }, { "task_id", ref.task_id }, { "trial_index", ref.trial_index } });
        fewshots.push_back({ { "task_id", run.trajectory.task_id() }, { "fewshots", refs }, { "warnings", run.warnings } });
    }
    save_trajectories(trajectories, dir / "trajectories.jsonl");
    detail::write_text_file(dir / "fewshots.json", fewshots.dump(2) + "\n");

    auto calls = std::string {};
    for (auto const& call: result.calls)
        calls += to_json(call).dump() + "\n";
    detail::write_text_file(dir / "calls.jsonl", calls);
}

} // namespace expel
