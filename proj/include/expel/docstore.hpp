// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/environment.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace expel::docstore
{

struct Article
{
    std::string title;
    std::vector<std::string> sentences;
};

/// Lowercase, strip punctuation and articles, collapse whitespace (exact-match answer normalization).
[[nodiscard]] std::string normalize_answer(std::string_view answer);

/// Question answering and claim verification over a small article store.
/// Actions: Search[entity], Lookup[keyword], Finish[answer].
class DocstoreEnvironment final: public Environment
{
  public:
    enum class Mode
    {
        Question, // answer must exactly match after normalization
        Claim,    // answer must be SUPPORTS / REFUTES / NOT ENOUGH INFO
    };

    DocstoreEnvironment(std::string name, Mode mode, std::filesystem::path const& dir);

    [[nodiscard]] std::string const& name() const noexcept override { return _name; }
    [[nodiscard]] std::vector<Task> const& tasks() const noexcept override { return _tasks; }
    EnvObservation reset(std::string const& taskId) override;
    EnvObservation step(std::string_view action) override;
    [[nodiscard]] bool done() const noexcept override { return _done; }

    [[nodiscard]] std::string const& gold_answer(std::string const& taskId) const { return _answers.at(taskId); }

  private:
    EnvObservation search(std::string_view entity);
    EnvObservation lookup(std::string_view keyword);
    EnvObservation finish(std::string_view answer);

    std::string _name;
    Mode _mode;
    std::vector<Article> _articles;
    std::vector<Task> _tasks;
    std::map<std::string, std::string> _answers;

    std::string _taskId;
    bool _started = false;
    bool _done = true;
    std::optional<std::size_t> _article;
    std::string _lookupKeyword;
    std::size_t _lookupCursor = 0;
};

} // namespace expel::docstore
