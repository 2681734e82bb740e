// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/text.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

struct ChatMessage
{
    std::string role; // system | user | assistant
    std::string content;

    bool operator==(ChatMessage const&) const = default;
};

struct Prompt
{
    std::vector<ChatMessage> messages;

    [[nodiscard]] static Prompt user(std::string content) { return Prompt { { { "user", std::move(content) } } }; }

    /// Message contents joined by newlines; what scripted rules and token limits see.
    [[nodiscard]] std::string text() const;
};

enum class DecodingStrategy
{
    Greedy,
};

inline constexpr std::size_t kActionMaxOutputTokens = 512;
inline constexpr std::size_t kExtractionMaxOutputTokens = 2048;

struct DecodingParams
{
    double temperature = 0.0;
    DecodingStrategy strategy = DecodingStrategy::Greedy;
    std::size_t max_output_tokens = kActionMaxOutputTokens;
};

struct CompletionRecord
{
    std::string prompt_text;
    std::string completion_text;
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    std::string backend_id;

    bool operator==(CompletionRecord const&) const = default;
};

class CompletionBackend
{
  public:
    virtual ~CompletionBackend() = default;

    [[nodiscard]] virtual std::string const& id() const noexcept = 0;
    /// Prompt size limit in tokens, if the backend has one.
    [[nodiscard]] virtual std::optional<std::size_t> context_limit() const noexcept { return std::nullopt; }
    /// Must be safe to call concurrently.
    [[nodiscard]] virtual CompletionRecord complete(Prompt const& prompt, DecodingParams const& params) const = 0;
};

/// Substring conjunction with optional exclusions and regex. An empty matcher matches everything.
struct PromptMatcher
{
    std::vector<std::string> all_of;
    std::vector<std::string> none_of;
    std::optional<std::string> regex;

    [[nodiscard]] bool matches(std::string_view prompt) const;
};

struct ScriptedRule
{
    PromptMatcher when;
    std::string response;
};

/// Deterministic offline backend: the first rule whose matcher accepts the prompt supplies the completion.
class ScriptedBackend final: public CompletionBackend
{
  public:
    ScriptedBackend(std::string id,
                    std::vector<ScriptedRule> rules,
                    std::string defaultResponse,
                    std::optional<std::size_t> contextLimit = std::nullopt);

    /// {"id", "default", "context_limit"?, "rules": [{"all_of": [...], "none_of": [...], "regex": "...", "response"}]}
    [[nodiscard]] static std::shared_ptr<ScriptedBackend> from_json(nlohmann::json const& spec);

    [[nodiscard]] std::string const& id() const noexcept override { return _id; }
    [[nodiscard]] std::optional<std::size_t> context_limit() const noexcept override { return _contextLimit; }
    [[nodiscard]] CompletionRecord complete(Prompt const& prompt, DecodingParams const& params) const override;

  private:
    std::string _id;
    std::vector<ScriptedRule> _rules;
    std::vector<std::optional<std::regex>> _compiled;
    std::string _default;
    std::optional<std::size_t> _contextLimit;
};

enum class ModelRole
{
    Actor,
    Reflector,
    Extractor,
    Transfer,
};

[[nodiscard]] std::string_view to_string(ModelRole role) noexcept;
[[nodiscard]] ModelRole model_role_from_string(std::string_view text);

struct RetryPolicy
{
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff { 500 };
    double multiplier = 2.0;
};

struct CallLogEntry
{
    ModelRole role = ModelRole::Actor;
    std::string tag; // caller-supplied label, usually the task id
    CompletionRecord record;
    int attempts = 1;
    bool used_fallback = false;
};

[[nodiscard]] nlohmann::json to_json(CallLogEntry const& entry);
[[nodiscard]] CallLogEntry call_log_entry_from_json(nlohmann::json const& record);

/// Routes completions to the backend configured for each model role, with bounded retries and a call log.
class Gateway
{
  public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit Gateway(RetryPolicy policy = {}, Sleeper sleeper = {});

    /// `fallback` is used when the prompt overflows the primary backend's context.
    void set_backend(ModelRole role,
                     std::shared_ptr<CompletionBackend const> backend,
                     std::shared_ptr<CompletionBackend const> fallback = nullptr);
    [[nodiscard]] bool has_backend(ModelRole role) const;

    CompletionRecord complete(ModelRole role,
                              Prompt const& prompt,
                              DecodingParams const& params = {},
                              std::string_view tag = {});

    [[nodiscard]] std::vector<CallLogEntry> call_log() const;
    void clear_log();

  private:
    struct Route
    {
        std::shared_ptr<CompletionBackend const> primary;
        std::shared_ptr<CompletionBackend const> fallback;
    };

    CompletionRecord call_with_retries(CompletionBackend const& backend,
                                       Prompt const& prompt,
                                       DecodingParams const& params,
                                       int& attempts) const;

    RetryPolicy _policy;
    Sleeper _sleeper;
    std::map<ModelRole, Route> _routes;
    mutable std::mutex _logMutex;
    std::vector<CallLogEntry> _log;
};

} // namespace expel
