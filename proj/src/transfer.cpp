// SPDX-License-Identifier: Apache-2.0
#include <expel/error.hpp>
#include <expel/transfer.hpp>

#include <fmt/format.h>

#include <regex>

namespace expel
{

std::string render_transfer_prompt(TransferSpec const& spec, TransferPrompts const& prompts)
{
    if (trim(spec.source_description).empty() || trim(spec.target_description).empty())
        throw UsageError("transfer needs non-empty source and target task descriptions");

    auto block = std::string {};
    if (!spec.target_fewshots.empty())
    {
        auto shots = std::vector<std::string> {};
        for (auto const& shot: spec.target_fewshots)
            shots.push_back(render_trajectory(shot));
        block = render_template(prompts.fewshot_block, { { "fewshots", join(shots, "\n\n") } });
    }
    return render_template(prompts.tmpl, {
                                             { "source_task", spec.source_description },
                                             { "target_task", spec.target_description },
                                             { "insights", render_insights(spec.source_insights) },
                                             { "fewshots", block },
                                         });
}

std::vector<std::string> parse_numbered_list(std::string_view completion)
{
    static auto const pattern = std::regex(R"(^\s*\d+\s*[.)]\s*(.*\S)\s*$)");
    auto items = std::vector<std::string> {};
    for (auto const line: split_lines(completion))
    {
        auto match = std::match_results<std::string_view::const_iterator> {};
        if (std::regex_match(line.begin(), line.end(), match, pattern))
            items.push_back(match[1].str());
    }
    if (items.empty())
        throw CompletionFormatError("completion contains no numbered insight lines", std::string(completion));
    return items;
}

InsightSet finetune_insights(Gateway& gateway, TransferSpec const& spec, TransferPrompts const& prompts)
{
    auto const text = render_transfer_prompt(spec, prompts);
    auto const record = gateway.complete(ModelRole::Transfer, Prompt::user(text),
                                         DecodingParams { .max_output_tokens = kExtractionMaxOutputTokens }, "transfer");
    auto const items = parse_numbered_list(record.completion_text);
    return InsightSet::from_texts(items);
}

} // namespace expel
