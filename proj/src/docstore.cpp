// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"

#include <expel/docstore.hpp>
#include <expel/error.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <set>

namespace expel::docstore
{

std::string normalize_answer(std::string_view answer)
{
    auto words = std::vector<std::string> {};
    auto current = std::string {};
    auto flush = [&] {
        if (!current.empty() && current != "a" && current != "an" && current != "the")
            words.push_back(current);
        current.clear();
    };
    for (auto const c: answer)
    {
        auto const u = static_cast<unsigned char>(c);
        if (std::isspace(u))
            flush();
        else if (!std::ispunct(u))
            current += static_cast<char>(std::tolower(u));
    }
    flush();
    return join(words, " ");
}

DocstoreEnvironment::DocstoreEnvironment(std::string name, Mode mode, std::filesystem::path const& dir):
    _name(std::move(name)), _mode(mode)
{
    auto const store = detail::read_json_file(dir / "docstore.json");
    for (auto const& a: store.at("articles"))
        _articles.push_back(Article { a.at("title").get<std::string>(), a.at("sentences").get<std::vector<std::string>>() });

    auto const tasks = detail::read_json_file(dir / "tasks.json");
    auto const textKey = mode == Mode::Question ? "question" : "claim";
    auto const answerKey = mode == Mode::Question ? "answer" : "label";
    for (auto const& t: tasks.at("tasks"))
    {
        auto task = Task {
            .id = t.at("id").get<std::string>(),
            .env_name = _name,
            .description = t.at(textKey).get<std::string>(),
            .task_type = t.contains("type") ? std::optional(t["type"].get<std::string>()) : std::nullopt,
        };
        if (task.description.empty())
            throw ConfigError(fmt::format("{}: task '{}' has an empty description", _name, task.id));
        if (!_answers.emplace(task.id, t.at(answerKey).get<std::string>()).second)
            throw ConfigError(fmt::format("{}: duplicate task id '{}'", _name, task.id));
        _tasks.push_back(std::move(task));
    }
}

EnvObservation DocstoreEnvironment::reset(std::string const& taskId)
{
    auto const& t = task(taskId);
    _taskId = t.id;
    _started = true;
    _done = false;
    _article.reset();
    _lookupKeyword.clear();
    _lookupCursor = 0;
    auto const prefix = _mode == Mode::Question ? "Question" : "Claim";
    return EnvObservation { .text = fmt::format("{}: {}", prefix, t.description) };
}

EnvObservation DocstoreEnvironment::step(std::string_view action)
{
    if (!_started)
        throw UsageError(fmt::format("{}: step before reset", _name));
    if (_done)
        throw UsageError(fmt::format("{}: episode already finished", _name));

    auto const parsed = detail::parse_bracket_action(action);
    if (!parsed)
        return EnvObservation { .text = std::string(kInvalidAction), .valid = false };
    if (parsed->verb == "search")
        return search(parsed->argument);
    if (parsed->verb == "lookup")
        return lookup(parsed->argument);
    if (parsed->verb == "finish")
        return finish(parsed->argument);
    return EnvObservation { .text = std::string(kInvalidAction), .valid = false };
}

EnvObservation DocstoreEnvironment::search(std::string_view entity)
{
    if (trim(entity).empty())
        return EnvObservation { .text = std::string(kInvalidAction), .valid = false };

    auto const key = to_lower(trim(entity));
    for (std::size_t i = 0; i < _articles.size(); ++i)
    {
        if (to_lower(_articles[i].title) != key)
            continue;
        _article = i;
        _lookupKeyword.clear();
        _lookupCursor = 0;
        auto const& sentences = _articles[i].sentences;
        auto const n = std::min<std::size_t>(sentences.size(), 5);
        return EnvObservation { .text = join(std::vector(sentences.begin(), sentences.begin() + static_cast<long>(n)), " ") };
    }

    auto const wanted = detail::alpha_tokens(entity);
    auto const wantedSet = std::set(wanted.begin(), wanted.end());
    auto similar = std::vector<std::string> {};
    for (auto const& article: _articles)
    {
        for (auto const& token: detail::alpha_tokens(article.title))
        {
            if (wantedSet.contains(token))
            {
                similar.push_back(fmt::format("'{}'", article.title));
                break;
            }
        }
        if (similar.size() == 5)
            break;
    }
    return EnvObservation { .text = fmt::format("Could not find [{}]. Similar: [{}].", trim(entity), join(similar, ", ")) };
}

EnvObservation DocstoreEnvironment::lookup(std::string_view keyword)
{
    if (!_article || trim(keyword).empty())
        return EnvObservation { .text = std::string(kInvalidAction), .valid = false };

    auto const key = to_lower(trim(keyword));
    if (key != _lookupKeyword)
    {
        _lookupKeyword = key;
        _lookupCursor = 0;
    }
    auto matches = std::vector<std::string const*> {};
    for (auto const& sentence: _articles[*_article].sentences)
        if (to_lower(sentence).find(key) != std::string::npos)
            matches.push_back(&sentence);
    if (_lookupCursor >= matches.size())
        return EnvObservation { .text = "No more results." };
    auto const index = _lookupCursor++;
    return EnvObservation { .text = fmt::format("(Result {} / {}) {}", index + 1, matches.size(), *matches[index]) };
}

EnvObservation DocstoreEnvironment::finish(std::string_view answer)
{
    if (_mode == Mode::Claim)
    {
        auto const label = to_lower(trim(answer));
        if (label != "supports" && label != "refutes" && label != "not enough info")
            return EnvObservation { .text = std::string(kInvalidAction), .valid = false };
    }
    _done = true;
    auto const& gold = _answers.at(_taskId);
    auto correct = false;
    if (_mode == Mode::Question)
        correct = normalize_answer(answer) == normalize_answer(gold);
    else
        correct = to_lower(trim(answer)) == to_lower(trim(gold));
    auto const reward = correct ? 1.0 : 0.0;
    return EnvObservation {
        .text = fmt::format("Episode finished, reward = {}", correct ? 1 : 0),
        .reward = reward,
        .done = true,
    };
}

} // namespace expel::docstore
