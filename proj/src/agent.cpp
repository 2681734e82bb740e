// SPDX-License-Identifier: Apache-2.0
#include <expel/agent.hpp>
#include <expel/error.hpp>

#include <fmt/format.h>

#include <cctype>

namespace expel
{

namespace
{
    /// Matches "Label:" or "Label N:" at the start of a line and returns the remainder.
    std::optional<std::string_view> strip_label(std::string_view line, std::string_view label)
    {
        if (!starts_with_icase(line, label))
            return std::nullopt;
        auto rest = line.substr(label.size());
        while (!rest.empty() && rest.front() == ' ')
            rest.remove_prefix(1);
        while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.front())))
            rest.remove_prefix(1);
        while (!rest.empty() && rest.front() == ' ')
            rest.remove_prefix(1);
        if (rest.empty() || rest.front() != ':')
            return std::nullopt;
        return trim(rest.substr(1));
    }
} // namespace

ActionIntent parse_react_completion(std::string_view completion)
{
    auto intent = ActionIntent { .raw = std::string(completion) };
    for (auto line: split_lines(completion))
    {
        line = trim(line);
        if (auto thought = strip_label(line, "Thought"))
        {
            if (!thought->empty())
                intent.thoughts.emplace_back(*thought);
            continue;
        }
        if (auto action = strip_label(line, "Action"))
        {
            if (!action->empty())
                intent.action = std::string(*action);
            break;
        }
    }
    return intent;
}

ActionIntent react_decide(Gateway& gateway,
                          Trajectory const& trajectory,
                          ActorContext context,
                          std::string_view tag,
                          DecodingParams const& params)
{
    if (trajectory.finalized())
        throw UsageError("react_decide on a finalized trajectory");

    auto bundle = PromptBundle {
        .instruction = std::move(context.instruction),
        .insights = std::move(context.insights),
        .fewshots = std::move(context.fewshots),
        .reflections = std::move(context.reflections),
        .task = trajectory.initial_observation(),
        .trajectory = render_steps(trajectory.steps()),
    };
    for (;;)
    {
        try
        {
            auto const record = gateway.complete(ModelRole::Actor, bundle.to_prompt(), params, tag);
            return parse_react_completion(record.completion_text);
        }
        catch (ContextOverflowError const&)
        {
            if (bundle.fewshots.empty())
                throw;
            bundle.fewshots.erase(bundle.fewshots.begin());
        }
    }
}

Step execute_intent(Environment& env, ActionIntent const& intent)
{
    if (!intent.action)
    {
        auto const lines = split_lines(trim(intent.raw));
        auto const first = lines.empty() ? std::string_view {} : trim(lines.front());
        return Step {
            .thoughts = intent.thoughts,
            .action = first.empty() ? std::string("(no action)") : std::string(first),
            .observation = std::string(kInvalidAction),
            .reward = 0.0,
            .valid = false,
            .parse_failed = true,
        };
    }
    auto const obs = env.step(*intent.action);
    return Step {
        .thoughts = intent.thoughts,
        .action = *intent.action,
        .observation = obs.text,
        .reward = obs.reward,
        .valid = obs.valid,
    };
}

Trajectory run_episode(Environment& env, Gateway& gateway, EpisodeSpec const& spec)
{
    auto const initial = env.reset(spec.task.id);
    auto trajectory = Trajectory(spec.task, spec.trial_index, initial.text, spec.reflections);

    for (auto i = 0; i < spec.max_steps; ++i)
    {
        auto intent = ActionIntent {};
        try
        {
            auto context = spec.context ? spec.context(trajectory) : ActorContext {};
            context.reflections = spec.reflections;
            intent = react_decide(gateway, trajectory, std::move(context), spec.tag, spec.decoding);
        }
        catch (BackendError const& e)
        {
            trajectory.set_error(e.what());
            trajectory.finalize(Outcome::Halted);
            return trajectory;
        }

        trajectory.append_step(execute_intent(env, intent));
        if (env.done())
        {
            trajectory.finalize(trajectory.final_reward() == 1.0 ? Outcome::Success : Outcome::Failure);
            return trajectory;
        }
    }
    trajectory.finalize(Outcome::Halted);
    return trajectory;
}

} // namespace expel
