// SPDX-License-Identifier: Apache-2.0
#include <expel/error.hpp>
#include <expel/text.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace expel
{

ParseError::ParseError(std::string const& message, std::size_t line):
    std::runtime_error(fmt::format("line {}: {}", line, message)), _line(line)
{
}

ContextOverflowError::ContextOverflowError(std::size_t measured, std::size_t limit):
    BackendError(fmt::format("prompt of {} tokens exceeds context limit of {}", measured, limit), false),
    _measured(measured),
    _limit(limit)
{
}

namespace
{
    bool is_space(char c) noexcept
    {
        return std::isspace(static_cast<unsigned char>(c)) != 0;
    }
} // namespace

std::string_view trim(std::string_view text) noexcept
{
    while (!text.empty() && is_space(text.front()))
        text.remove_prefix(1);
    while (!text.empty() && is_space(text.back()))
        text.remove_suffix(1);
    return text;
}

std::string to_lower(std::string_view text)
{
    auto out = std::string(text);
    std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text)
{
    auto lines = std::vector<std::string_view> {};
    while (!text.empty())
    {
        auto const pos = text.find('\n');
        auto line = text.substr(0, pos);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.push_back(line);
        if (pos == std::string_view::npos)
            break;
        text.remove_prefix(pos + 1);
    }
    return lines;
}

std::string join(std::vector<std::string> const& parts, std::string_view separator)
{
    auto out = std::string {};
    for (std::size_t i = 0; i < parts.size(); ++i)
    {
        if (i > 0)
            out += separator;
        out += parts[i];
    }
    return out;
}

bool starts_with_icase(std::string_view text, std::string_view prefix) noexcept
{
    if (text.size() < prefix.size())
        return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(text[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

std::string render_template(std::string_view tmpl, std::map<std::string, std::string> const& bindings)
{
    auto out = std::string {};
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i)
    {
        auto const c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{')
        {
            out += '{';
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}')
        {
            out += '}';
            ++i;
            continue;
        }
        if (c != '{')
        {
            out += c;
            continue;
        }
        auto const close = tmpl.find('}', i);
        if (close == std::string_view::npos)
            throw ConfigError("unterminated placeholder in template");
        auto const name = std::string(tmpl.substr(i + 1, close - i - 1));
        auto const it = bindings.find(name);
        if (it == bindings.end())
            throw ConfigError(fmt::format("template placeholder '{{{}}}' has no binding", name));
        out += it->second;
        i = close;
    }
    return out;
}

std::size_t WhitespaceTokenizer::count(std::string_view text) const
{
    auto count = std::size_t { 0 };
    auto inRun = false;
    for (auto const c: text)
    {
        if (is_space(c))
            inRun = false;
        else if (!inRun)
        {
            inRun = true;
            ++count;
        }
    }
    return count;
}

Tokenizer const& default_tokenizer()
{
    static auto const tokenizer = WhitespaceTokenizer {};
    return tokenizer;
}

} // namespace expel
