// SPDX-License-Identifier: Apache-2.0
#include <expel/error.hpp>
#include <expel/gather.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace expel
{

void ReflectionLog::append(std::string entry)
{
    if (!_text.empty())
        _text += kReflectionSeparator;
    _text += entry;
    _entries.push_back(std::move(entry));
}

ReflectionLog reflect(Gateway& gateway,
                      Trajectory const& failed,
                      ReflectionLog log,
                      ReflectionPrompt const& prompt,
                      std::string_view tag)
{
    if (!failed.finalized() || failed.succeeded())
        throw UsageError(fmt::format("reflect requires a failed or halted trajectory (task '{}')", failed.task_id()));

    auto const count = std::min<std::size_t>(prompt.examples.size(), static_cast<std::size_t>(std::max(0, prompt.max_examples)));
    auto const examples = join(std::vector(prompt.examples.begin(), prompt.examples.begin() + static_cast<long>(count)), "\n\n");
    auto const text = render_template(prompt.tmpl, { { "examples", examples }, { "trajectory", render_trajectory(failed) } });
    auto const record = gateway.complete(ModelRole::Reflector, Prompt::user(text), DecodingParams {}, tag);
    log.append(std::string(trim(record.completion_text)));
    return log;
}

GatherResult gather(GatherConfig const& config, EnvFactory const& envFactory, Gateway& gateway, GatherHooks const& hooks)
{
    if (config.max_retries < 0)
        throw UsageError("max retries must be >= 0");
    if (config.max_steps < 1)
        throw UsageError("max steps must be >= 1");

    auto result = GatherResult { .pool = ExperiencePool(config.manual_fewshots) };
    auto rendered = std::vector<std::string> {};
    for (auto const& shot: config.manual_fewshots)
        rendered.push_back(render_trajectory(shot));

    for (auto const& task: config.tasks)
    {
        auto env = std::unique_ptr<Environment> {};
        try
        {
            env = envFactory(task);
            if (!env)
                throw std::runtime_error("factory returned no environment");
            (void) env->task(task.id);
        }
        catch (std::exception const& e)
        {
            result.skipped.push_back(SkippedTask { task.id, e.what() });
            if (hooks.progress)
                hooks.progress(fmt::format("task={} skipped: {}", task.id, e.what()));
            continue;
        }

        auto log = ReflectionLog(task.id);
        for (auto trial = 0; trial <= config.max_retries; ++trial)
        {
            auto spec = EpisodeSpec {
                .task = task,
                .trial_index = trial,
                .max_steps = config.max_steps,
                .reflections = log.text(),
                .context = [&](Trajectory const&) {
                    return ActorContext { .instruction = config.instruction, .fewshots = rendered };
                },
                .tag = task.id,
                .decoding = config.decoding,
            };
            auto trajectory = run_episode(*env, gateway, spec);
            ++result.trials_executed;

            auto const stats = trajectory_stats(trajectory);
            if (hooks.progress)
                hooks.progress(fmt::format("task={} trial={} outcome={} steps={} invalid={}",
                                           task.id, trial, to_string(*trajectory.outcome()), stats.actions,
                                           stats.invalid_actions));

            auto const succeeded = trajectory.succeeded();
            auto const last = trial == config.max_retries;
            result.pool.insert(trajectory);
            if (succeeded || last)
                break;
            log = reflect(gateway, trajectory, std::move(log), config.reflection, task.id);
        }
        if (hooks.on_task)
            hooks.on_task(result.pool);
    }

    result.pool.seal();
    return result;
}

} // namespace expel
