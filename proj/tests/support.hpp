// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/core.hpp>
#include <expel/llm.hpp>

#include <fmt/format.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace expel::testing
{

inline std::filesystem::path data_dir()
{
    return EXPEL_TEST_DATA_DIR;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
  public:
    TempDir()
    {
        static auto counter = std::atomic<int> { 0 };
        _path = std::filesystem::temp_directory_path()
              / fmt::format("expel-test-{}-{}", std::random_device {}(), counter.fetch_add(1));
        std::filesystem::create_directories(_path);
    }
    ~TempDir() { std::filesystem::remove_all(_path); }
    TempDir(TempDir const&) = delete;
    TempDir& operator=(TempDir const&) = delete;

    [[nodiscard]] std::filesystem::path const& path() const noexcept { return _path; }
    [[nodiscard]] std::filesystem::path operator/(std::string_view name) const { return _path / name; }

  private:
    std::filesystem::path _path;
};

inline std::string read_file(std::filesystem::path const& path)
{
    auto in = std::ifstream(path, std::ios::binary);
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    return buffer.str();
}

inline void write_file(std::filesystem::path const& path, std::string const& content)
{
    std::ofstream(path, std::ios::binary) << content;
}

inline Task make_task(std::string id, std::string description = {}, std::optional<std::string> type = std::nullopt)
{
    if (description.empty())
        description = "Solve task " + id;
    return Task { .id = std::move(id), .env_name = "test", .description = std::move(description), .task_type = std::move(type) };
}

/// A finalized trajectory with `steps` steps; the last step carries reward 1 for successes.
inline Trajectory make_trajectory(Task const& task, int trial, Outcome outcome, int steps = 1, std::string reflections = {})
{
    auto trajectory = Trajectory(task, trial, "Task: " + task.description, std::move(reflections));
    for (int i = 0; i < steps; ++i)
    {
        auto const last = i + 1 == steps;
        trajectory.append_step(Step {
            .thoughts = { fmt::format("thinking about {} step {}", task.id, i) },
            .action = fmt::format("act[{} {}]", task.id, i),
            .observation = fmt::format("observed {} {}", task.id, i),
            .reward = last && outcome == Outcome::Success ? 1.0 : 0.0,
        });
    }
    trajectory.finalize(outcome);
    return trajectory;
}

inline std::shared_ptr<ScriptedBackend> scripted(std::vector<ScriptedRule> rules, std::string fallback = {})
{
    return std::make_shared<ScriptedBackend>("scripted", std::move(rules), std::move(fallback));
}

inline ScriptedRule when_contains(std::string needle, std::string response)
{
    return ScriptedRule { .when = PromptMatcher { .all_of = { std::move(needle) } }, .response = std::move(response) };
}

} // namespace expel::testing
