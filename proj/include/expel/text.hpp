// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

[[nodiscard]] std::string_view trim(std::string_view text) noexcept;
[[nodiscard]] std::string to_lower(std::string_view text);
[[nodiscard]] std::vector<std::string_view> split_lines(std::string_view text);
[[nodiscard]] std::string join(std::vector<std::string> const& parts, std::string_view separator);
[[nodiscard]] bool starts_with_icase(std::string_view text, std::string_view prefix) noexcept;

/// Substitutes `{name}` placeholders. `{{` and `}}` are literal braces.
/// Throws ConfigError for a placeholder with no binding.
[[nodiscard]] std::string render_template(std::string_view tmpl, std::map<std::string, std::string> const& bindings);

/// Pluggable token counter used for Table-style trajectory statistics and context-limit checks.
class Tokenizer
{
  public:
    virtual ~Tokenizer() = default;
    [[nodiscard]] virtual std::size_t count(std::string_view text) const = 0;
};

/// Counts maximal runs of non-whitespace characters.
class WhitespaceTokenizer final: public Tokenizer
{
  public:
    [[nodiscard]] std::size_t count(std::string_view text) const override;
};

[[nodiscard]] Tokenizer const& default_tokenizer();

[[nodiscard]] inline std::size_t count_tokens(std::string_view text, Tokenizer const& tokenizer = default_tokenizer())
{
    return tokenizer.count(text);
}

} // namespace expel
