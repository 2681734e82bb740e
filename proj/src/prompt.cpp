// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"

#include <expel/prompt.hpp>

#include <fmt/format.h>

namespace expel
{

std::string PromptBundle::render() const
{
    auto out = std::string {};
    auto section = [&out](std::string_view text) {
        if (!out.empty())
            out += "\n\n";
        out += text;
    };

    section(instruction);
    if (!insights.empty())
        section(fmt::format("{}\n{}", kInsightsHeader, insights));
    if (!fewshots.empty())
    {
        auto block = std::string(kFewshotHeader);
        for (auto const& shot: fewshots)
        {
            block += '\n';
            block += shot;
        }
        if (block.back() != '\n')
            block += '\n';
        block += kFewshotFooter;
        section(block);
    }
    if (!reflections.empty())
        section(fmt::format("{}\n{}", kReflectionsHeader, reflections));
    section(task);
    out += '\n';
    out += trajectory;
    return out;
}

std::string render_steps(std::span<Step const> steps)
{
    auto out = std::string {};
    for (auto const& step: steps)
    {
        for (auto const& thought: step.thoughts)
            out += fmt::format("Thought: {}\n", thought);
        out += fmt::format("Action: {}\n", step.action);
        out += fmt::format("Observation: {}\n", step.observation);
    }
    return out;
}

PromptLibrary PromptLibrary::load(std::filesystem::path const& dataDir, std::string const& envName)
{
    auto const envDir = dataDir / envName;
    auto const prompts = dataDir / "prompts";
    auto lib = PromptLibrary {};
    lib.instruction = std::string(trim(detail::read_text_file(envDir / "instruction.txt")));
    lib.description = std::string(trim(detail::read_text_file(envDir / "description.txt")));
    lib.fewshots = load_trajectories(envDir / "fewshots.jsonl");
    lib.reflection_examples = detail::read_json_file(envDir / "reflection_examples.json").get<std::vector<std::string>>();
    lib.reflection_template = detail::read_text_file(prompts / "reflection.txt");
    lib.extraction_template = detail::read_text_file(prompts / "insight_extraction.txt");
    lib.extraction_compare_intro = std::string(trim(detail::read_text_file(prompts / "extract_compare_intro.txt")));
    lib.extraction_success_intro = std::string(trim(detail::read_text_file(prompts / "extract_success_intro.txt")));
    lib.transfer_template = detail::read_text_file(prompts / "transfer.txt");
    lib.transfer_fewshot_block = detail::read_text_file(prompts / "transfer_fewshots.txt");
    return lib;
}

} // namespace expel
