// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/environment.hpp>
#include <expel/llm.hpp>
#include <expel/prompt.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

/// Parsed actor completion: zero or more thoughts plus at most one action.
struct ActionIntent
{
    std::vector<std::string> thoughts;
    std::optional<std::string> action;
    std::string raw;

    [[nodiscard]] bool valid() const noexcept { return action.has_value(); }
};

/// Reads `Thought:` lines up to the first `Action:` line; anything after the action is ignored.
/// Step numbers ("Thought 2:", "Action 2:") are accepted.
[[nodiscard]] ActionIntent parse_react_completion(std::string_view completion);

/// Everything in the actor prompt except the current task and its steps.
struct ActorContext
{
    std::string instruction;
    std::string insights;
    std::vector<std::string> fewshots; // rendered demonstrations
    std::string reflections;
};

/// One ReAct decision. On context overflow the oldest fewshot is dropped and the call repeated;
/// the current trajectory is never truncated.
ActionIntent react_decide(Gateway& gateway,
                          Trajectory const& trajectory,
                          ActorContext context,
                          std::string_view tag = {},
                          DecodingParams const& params = {});

/// Turns an intent into a step, stepping the environment only when an action was parsed.
Step execute_intent(Environment& env, ActionIntent const& intent);

struct EpisodeSpec
{
    Task task;
    int trial_index = 0;
    int max_steps = 7; // H
    std::string reflections;
    /// Produces the actor context before each step; lets ablations change fewshots mid-episode.
    std::function<ActorContext(Trajectory const& partial)> context;
    std::string tag;
    DecodingParams decoding;
};

/// Reset, then decide/step until done or H steps. Success iff done with reward 1.
/// Backend failures end the episode as Halted with the error recorded.
Trajectory run_episode(Environment& env, Gateway& gateway, EpisodeSpec const& spec);

} // namespace expel
