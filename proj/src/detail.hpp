// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/text.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace expel::detail
{

[[nodiscard]] nlohmann::json read_json_file(std::filesystem::path const& path);
[[nodiscard]] std::string read_text_file(std::filesystem::path const& path);
void write_text_file(std::filesystem::path const& path, std::string_view content);

struct BracketAction
{
    std::string verb; // lowercased
    std::string argument;
};

/// `Verb[argument]` with surrounding whitespace trimmed.
[[nodiscard]] std::optional<BracketAction> parse_bracket_action(std::string_view action);

/// Lowercased maximal runs of ASCII letters.
[[nodiscard]] std::vector<std::string> alpha_tokens(std::string_view text);

} // namespace expel::detail
