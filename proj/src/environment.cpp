// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"

#include <expel/docstore.hpp>
#include <expel/environment.hpp>
#include <expel/error.hpp>
#include <expel/household.hpp>
#include <expel/shop.hpp>

#include <fmt/format.h>

#include <cctype>
#include <fstream>
#include <utility>

namespace expel
{

Task const& Environment::task(std::string const& taskId) const
{
    for (auto const& t: tasks())
        if (t.id == taskId)
            return t;
    throw std::out_of_range(fmt::format("environment '{}' has no task '{}'", name(), taskId));
}

EnvDefaults env_defaults(std::string_view envName)
{
    if (envName == "toyqa")
        return { .max_steps = 7, .fewshot_k = 6, .success_chunk_size = 8, .reflection_fewshots = 2, .max_retries = 3 };
    if (envName == "toyshop")
        return { .max_steps = 15, .fewshot_k = 2, .success_chunk_size = 4, .reflection_fewshots = 2, .max_retries = 3 };
    if (envName == "household")
        return { .max_steps = 20, .fewshot_k = 2, .success_chunk_size = 8, .reflection_fewshots = 2, .max_retries = 3 };
    if (envName == "toyfever")
        return { .max_steps = 7, .fewshot_k = 3, .success_chunk_size = 8, .reflection_fewshots = 2, .max_retries = 3 };
    throw ConfigError(fmt::format("unknown environment '{}'", envName));
}

std::vector<std::string> environment_names()
{
    return { "toyqa", "toyfever", "toyshop", "household" };
}

std::unique_ptr<Environment> make_environment(std::string const& envName, std::filesystem::path const& dataDir)
{
    auto const dir = dataDir / envName;
    if (envName == "toyqa")
        return std::make_unique<docstore::DocstoreEnvironment>(envName, docstore::DocstoreEnvironment::Mode::Question, dir);
    if (envName == "toyfever")
        return std::make_unique<docstore::DocstoreEnvironment>(envName, docstore::DocstoreEnvironment::Mode::Claim, dir);
    if (envName == "toyshop")
        return std::make_unique<shop::ShopEnvironment>(dir);
    if (envName == "household")
        return std::make_unique<household::HouseholdEnvironment>(dir);
    throw ConfigError(fmt::format("unknown environment '{}'", envName));
}

namespace detail
{

nlohmann::json read_json_file(std::filesystem::path const& path)
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw ConfigError(fmt::format("cannot read '{}'", path.string()));
    try
    {
        return nlohmann::json::parse(in);
    }
    catch (nlohmann::json::parse_error const& e)
    {
        throw ConfigError(fmt::format("'{}': {}", path.string(), e.what()));
    }
}

std::string read_text_file(std::filesystem::path const& path)
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw ConfigError(fmt::format("cannot read '{}'", path.string()));
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(std::filesystem::path const& path, std::string_view content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = std::ofstream(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error(fmt::format("cannot write '{}'", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw std::runtime_error(fmt::format("write to '{}' failed", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

std::optional<BracketAction> parse_bracket_action(std::string_view action)
{
    action = trim(action);
    auto const open = action.find('[');
    if (open == std::string_view::npos || open == 0 || action.back() != ']')
        return std::nullopt;
    auto verb = trim(action.substr(0, open));
    auto arg = trim(action.substr(open + 1, action.size() - open - 2));
    return BracketAction { to_lower(verb), std::string(arg) };
}

std::vector<std::string> alpha_tokens(std::string_view text)
{
    auto out = std::vector<std::string> {};
    auto current = std::string {};
    for (auto const c: text)
    {
        if (std::isalpha(static_cast<unsigned char>(c)))
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else if (!current.empty())
            out.push_back(std::exchange(current, {}));
    }
    if (!current.empty())
        out.push_back(std::move(current));
    return out;
}

} // namespace detail

} // namespace expel
