// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/agent.hpp>
#include <expel/core.hpp>
#include <expel/environment.hpp>
#include <expel/llm.hpp>

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

inline constexpr std::string_view kReflectionSeparator = "\n";

/// Reflections accumulated over the trials of one task. Each text is a prefix of the next.
class ReflectionLog
{
  public:
    ReflectionLog() = default;
    explicit ReflectionLog(std::string taskId): _taskId(std::move(taskId)) {}

    void append(std::string entry);

    [[nodiscard]] std::string const& task_id() const noexcept { return _taskId; }
    [[nodiscard]] std::vector<std::string> const& entries() const noexcept { return _entries; }
    [[nodiscard]] std::string const& text() const noexcept { return _text; }

  private:
    std::string _taskId;
    std::vector<std::string> _entries;
    std::string _text;
};

struct ReflectionPrompt
{
    std::string tmpl;                     // placeholders {examples} {trajectory}
    std::vector<std::string> examples;    // reflection exemplars
    int max_examples = 2;                 // k_reflections
};

/// Asks the reflector about a failed or halted attempt and appends its answer to the log.
ReflectionLog reflect(Gateway& gateway,
                      Trajectory const& failed,
                      ReflectionLog log,
                      ReflectionPrompt const& prompt,
                      std::string_view tag = {});

struct GatherConfig
{
    int max_retries = 3; // Z: trials per task are 0..Z
    int max_steps = 7;   // H
    std::vector<Task> tasks;
    std::vector<Trajectory> manual_fewshots;
    std::string instruction;
    ReflectionPrompt reflection;
    DecodingParams decoding;
};

struct SkippedTask
{
    std::string task_id;
    std::string reason;
};

struct GatherResult
{
    ExperiencePool pool;
    std::vector<SkippedTask> skipped;
    std::size_t trials_executed = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>(Task const&)>;

struct GatherHooks
{
    std::function<void(std::string_view)> progress;     // one line per trial
    std::function<void(ExperiencePool const&)> on_task; // after each task, e.g. to flush the pool
};

/// Retry-and-reflect experience collection; every finalized attempt is ingested into the pool.
GatherResult gather(GatherConfig const& config, EnvFactory const& envFactory, Gateway& gateway, GatherHooks const& hooks = {});

} // namespace expel
