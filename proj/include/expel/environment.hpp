// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/core.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

inline constexpr std::string_view kInvalidAction = "Invalid action.";

struct EnvObservation
{
    std::string text;
    double reward = 0.0;
    bool done = false;
    bool valid = true; // false when the action did not parse or could not be applied
};

/// Deterministic text environment: reset to a task's canonical initial state, then step with action text.
class Environment
{
  public:
    virtual ~Environment() = default;

    [[nodiscard]] virtual std::string const& name() const noexcept = 0;
    [[nodiscard]] virtual std::vector<Task> const& tasks() const noexcept = 0;

    /// Throws std::out_of_range for a task id this environment does not know.
    virtual EnvObservation reset(std::string const& taskId) = 0;
    /// Throws UsageError once the episode is done or before reset.
    virtual EnvObservation step(std::string_view action) = 0;

    [[nodiscard]] virtual bool done() const noexcept = 0;

    [[nodiscard]] Task const& task(std::string const& taskId) const;
};

/// Episode horizon and retrieval/extraction defaults per environment family.
struct EnvDefaults
{
    int max_steps = 7;          // H
    int fewshot_k = 6;          // k
    int success_chunk_size = 8; // L
    int reflection_fewshots = 2;
    int max_retries = 3; // Z
};

[[nodiscard]] EnvDefaults env_defaults(std::string_view envName);

/// Known environment names: toyqa, toyfever, toyshop, household.
[[nodiscard]] std::vector<std::string> environment_names();

/// Loads environment content from `dataDir / envName`.
[[nodiscard]] std::unique_ptr<Environment> make_environment(std::string const& envName,
                                                            std::filesystem::path const& dataDir);

} // namespace expel
