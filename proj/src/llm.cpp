// SPDX-License-Identifier: Apache-2.0
#include <expel/error.hpp>
#include <expel/llm.hpp>

#include <fmt/format.h>

#include <thread>

namespace expel
{

std::string Prompt::text() const
{
    auto out = std::string {};
    for (std::size_t i = 0; i < messages.size(); ++i)
    {
        if (i > 0)
            out += '\n';
        out += messages[i].content;
    }
    return out;
}

bool PromptMatcher::matches(std::string_view prompt) const
{
    for (auto const& needle: all_of)
        if (prompt.find(needle) == std::string_view::npos)
            return false;
    for (auto const& needle: none_of)
        if (prompt.find(needle) != std::string_view::npos)
            return false;
    if (regex)
        return std::regex_search(prompt.begin(), prompt.end(), std::regex(*regex));
    return true;
}

ScriptedBackend::ScriptedBackend(std::string id,
                                 std::vector<ScriptedRule> rules,
                                 std::string defaultResponse,
                                 std::optional<std::size_t> contextLimit):
    _id(std::move(id)), _rules(std::move(rules)), _default(std::move(defaultResponse)), _contextLimit(contextLimit)
{
    _compiled.reserve(_rules.size());
    for (auto const& rule: _rules)
        _compiled.push_back(rule.when.regex ? std::optional(std::regex(*rule.when.regex)) : std::nullopt);
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(nlohmann::json const& spec)
{
    auto rules = std::vector<ScriptedRule> {};
    for (auto const& r: spec.value("rules", nlohmann::json::array()))
    {
        auto rule = ScriptedRule {};
        rule.when.all_of = r.value("all_of", std::vector<std::string> {});
        rule.when.none_of = r.value("none_of", std::vector<std::string> {});
        if (r.contains("regex"))
            rule.when.regex = r["regex"].get<std::string>();
        rule.response = r.at("response").get<std::string>();
        rules.push_back(std::move(rule));
    }
    auto limit = spec.contains("context_limit") ? std::optional(spec["context_limit"].get<std::size_t>())
                                                : std::nullopt;
    return std::make_shared<ScriptedBackend>(spec.value("id", std::string("scripted")),
                                             std::move(rules),
                                             spec.value("default", std::string {}),
                                             limit);
}

CompletionRecord ScriptedBackend::complete(Prompt const& prompt, DecodingParams const& /*params*/) const
{
    auto text = prompt.text();
    auto const* response = &_default;
    for (std::size_t i = 0; i < _rules.size(); ++i)
    {
        auto const& when = _rules[i].when;
        auto ok = true;
        for (auto const& needle: when.all_of)
            ok = ok && text.find(needle) != std::string::npos;
        for (auto const& needle: when.none_of)
            ok = ok && text.find(needle) == std::string::npos;
        if (ok && _compiled[i])
            ok = std::regex_search(text, *_compiled[i]);
        if (ok)
        {
            response = &_rules[i].response;
            break;
        }
    }
    auto record = CompletionRecord {
        .prompt_text = std::move(text),
        .completion_text = *response,
        .input_tokens = 0,
        .output_tokens = count_tokens(*response),
        .backend_id = _id,
    };
    record.input_tokens = count_tokens(record.prompt_text);
    return record;
}

std::string_view to_string(ModelRole role) noexcept
{
    switch (role)
    {
        case ModelRole::Actor: return "actor";
        case ModelRole::Reflector: return "reflector";
        case ModelRole::Extractor: return "extractor";
        case ModelRole::Transfer: return "transfer";
    }
    return "actor";
}

ModelRole model_role_from_string(std::string_view text)
{
    for (auto role: { ModelRole::Actor, ModelRole::Reflector, ModelRole::Extractor, ModelRole::Transfer })
        if (to_string(role) == text)
            return role;
    throw ConfigError(fmt::format("unknown model role '{}'", text));
}

nlohmann::json to_json(CallLogEntry const& entry)
{
    return {
        { "role", to_string(entry.role) },
        { "tag", entry.tag },
        { "backend", entry.record.backend_id },
        { "input_tokens", entry.record.input_tokens },
        { "output_tokens", entry.record.output_tokens },
        { "attempts", entry.attempts },
        { "used_fallback", entry.used_fallback },
        { "prompt", entry.record.prompt_text },
        { "completion", entry.record.completion_text },
    };
}

CallLogEntry call_log_entry_from_json(nlohmann::json const& record)
{
    return CallLogEntry {
        .role = model_role_from_string(record.at("role").get<std::string>()),
        .tag = record.at("tag").get<std::string>(),
        .record = CompletionRecord {
            .prompt_text = record.value("prompt", std::string {}),
            .completion_text = record.value("completion", std::string {}),
            .input_tokens = record.at("input_tokens").get<std::size_t>(),
            .output_tokens = record.at("output_tokens").get<std::size_t>(),
            .backend_id = record.value("backend", std::string {}),
        },
        .attempts = record.value("attempts", 1),
        .used_fallback = record.value("used_fallback", false),
    };
}

Gateway::Gateway(RetryPolicy policy, Sleeper sleeper): _policy(policy), _sleeper(std::move(sleeper))
{
    if (!_sleeper)
        _sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (_policy.max_attempts < 1)
        _policy.max_attempts = 1;
}

void Gateway::set_backend(ModelRole role,
                          std::shared_ptr<CompletionBackend const> backend,
                          std::shared_ptr<CompletionBackend const> fallback)
{
    if (!backend)
        throw UsageError(fmt::format("null backend for role '{}'", to_string(role)));
    _routes[role] = Route { std::move(backend), std::move(fallback) };
}

bool Gateway::has_backend(ModelRole role) const
{
    return _routes.contains(role);
}

CompletionRecord Gateway::call_with_retries(CompletionBackend const& backend,
                                            Prompt const& prompt,
                                            DecodingParams const& params,
                                            int& attempts) const
{
    if (auto const limit = backend.context_limit())
    {
        auto const measured = count_tokens(prompt.text());
        if (measured > *limit)
            throw ContextOverflowError(measured, *limit);
    }

    auto backoff = _policy.initial_backoff;
    for (attempts = 1;; ++attempts)
    {
        try
        {
            return backend.complete(prompt, params);
        }
        catch (ContextOverflowError const&)
        {
            throw;
        }
        catch (BackendError const& e)
        {
            if (!e.retryable())
                throw;
            if (attempts >= _policy.max_attempts)
                throw BackendError(
                    fmt::format("backend '{}' failed after {} attempts: {}", backend.id(), attempts, e.what()), false);
        }
        _sleeper(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * _policy.multiplier));
    }
}

CompletionRecord Gateway::complete(ModelRole role, Prompt const& prompt, DecodingParams const& params, std::string_view tag)
{
    auto const it = _routes.find(role);
    if (it == _routes.end())
        throw UsageError(fmt::format("no backend configured for role '{}'", to_string(role)));

    auto attempts = 0;
    auto usedFallback = false;
    auto record = CompletionRecord {};
    try
    {
        record = call_with_retries(*it->second.primary, prompt, params, attempts);
    }
    catch (ContextOverflowError const&)
    {
        if (!it->second.fallback)
            throw;
        usedFallback = true;
        record = call_with_retries(*it->second.fallback, prompt, params, attempts);
    }

    auto lock = std::lock_guard(_logMutex);
    _log.push_back(CallLogEntry {
        .role = role,
        .tag = std::string(tag),
        .record = record,
        .attempts = attempts,
        .used_fallback = usedFallback,
    });
    return record;
}

std::vector<CallLogEntry> Gateway::call_log() const
{
    auto lock = std::lock_guard(_logMutex);
    return _log;
}

void Gateway::clear_log()
{
    auto lock = std::lock_guard(_logMutex);
    _log.clear();
}

} // namespace expel
