// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/core.hpp>
#include <expel/llm.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace expel
{

/// Actor prompt, rendered in fixed section order: instruction, insights, fewshot examples,
/// reflections, current task, partial trajectory. Empty optional sections are omitted entirely.
struct PromptBundle
{
    std::string instruction;
    std::string insights; // rendered numbered list
    std::vector<std::string> fewshots;
    std::string reflections; // only during experience gathering
    std::string task;        // initial observation of the current task
    std::string trajectory;  // steps taken so far

    [[nodiscard]] std::string render() const;
    [[nodiscard]] Prompt to_prompt() const { return Prompt::user(render()); }

    bool operator==(PromptBundle const&) const = default;
};

inline constexpr std::string_view kInsightsHeader =
    "The following are insights gathered from past experience on similar tasks. Follow them when they apply:";
inline constexpr std::string_view kFewshotHeader = "Here are some examples:";
inline constexpr std::string_view kFewshotFooter = "(END OF EXAMPLES)";
inline constexpr std::string_view kReflectionsHeader =
    "You have attempted to solve this task before and failed. The following reflections give a plan to avoid "
    "failing the same way you did previously. Use them to improve your strategy:";

/// Thought/Action/Observation lines for the given steps, in order.
[[nodiscard]] std::string render_steps(std::span<Step const> steps);

/// Prompt texts and demonstrations for one environment, shipped as data files.
struct PromptLibrary
{
    std::string instruction;                      // <env>/instruction.txt
    std::string description;                      // <env>/description.txt, one line naming the task family
    std::vector<Trajectory> fewshots;             // <env>/fewshots.jsonl  (F_manual)
    std::vector<std::string> reflection_examples; // <env>/reflection_examples.json
    std::string reflection_template;              // prompts/reflection.txt: {examples} {trajectory}
    std::string extraction_template;              // prompts/insight_extraction.txt: {intro} {insights} {examples}
    std::string extraction_compare_intro;         // prompts/extract_compare_intro.txt
    std::string extraction_success_intro;         // prompts/extract_success_intro.txt
    std::string transfer_template;                // prompts/transfer.txt
    std::string transfer_fewshot_block;           // prompts/transfer_fewshots.txt: {fewshots}

    [[nodiscard]] static PromptLibrary load(std::filesystem::path const& dataDir, std::string const& envName);
};

} // namespace expel
