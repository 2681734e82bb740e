// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/core.hpp>
#include <expel/insights.hpp>
#include <expel/llm.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace expel
{

struct TransferSpec
{
    InsightSet source_insights;
    std::string source_description;
    std::string target_description;
    std::vector<Trajectory> target_fewshots; // may be empty
};

struct TransferPrompts
{
    std::string tmpl;          // placeholders {source_task} {target_task} {insights} {fewshots}
    std::string fewshot_block; // placeholder {fewshots}; substituted for {fewshots} only when demos exist
};

/// With no target demonstrations the whole fewshot block renders as the empty string.
[[nodiscard]] std::string render_transfer_prompt(TransferSpec const& spec, TransferPrompts const& prompts);

/// Numbered lines ("1. text" or "1) text") in order of appearance. Throws CompletionFormatError
/// carrying the completion when none are found.
[[nodiscard]] std::vector<std::string> parse_numbered_list(std::string_view completion);

/// Single-shot rewrite of the source insights for the target task family; the result is a
/// fresh set with every importance at the initial value.
[[nodiscard]] InsightSet finetune_insights(Gateway& gateway, TransferSpec const& spec, TransferPrompts const& prompts);

} // namespace expel
