// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <expel/error.hpp>
#include <expel/remote.hpp>
#include <expel/text.hpp>

#include <fmt/format.h>

#include <cstdlib>

namespace expel
{

RemoteEndpoint RemoteEndpoint::from_json(nlohmann::json const& spec)
{
    auto endpoint = RemoteEndpoint {};
    try
    {
        endpoint.model = spec.at("model").get<std::string>();
        endpoint.base_url = spec.value("base_url", endpoint.base_url);
        endpoint.api_key_env = spec.value("api_key_env", endpoint.api_key_env);
        endpoint.timeout = std::chrono::seconds(spec.value("timeout_s", endpoint.timeout.count()));
        if (spec.contains("context_limit"))
            endpoint.context_limit = spec.at("context_limit").get<std::size_t>();
    }
    catch (nlohmann::json::exception const& e)
    {
        throw ConfigError(fmt::format("remote endpoint: {}", e.what()));
    }
    return endpoint;
}

namespace
{
    struct SplitUrl
    {
        std::string origin; // scheme://host[:port]
        std::string path;   // without trailing slash
    };

    SplitUrl split_url(std::string const& url)
    {
        auto const scheme = url.find("://");
        if (scheme == std::string::npos)
            throw ConfigError(fmt::format("base_url '{}' lacks a scheme", url));
        auto const slash = url.find('/', scheme + 3);
        auto result = SplitUrl { url.substr(0, slash), slash == std::string::npos ? std::string {} : url.substr(slash) };
        while (!result.path.empty() && result.path.back() == '/')
            result.path.pop_back();
        return result;
    }

    nlohmann::json post_json(RemoteEndpoint const& endpoint, std::string_view route, nlohmann::json const& body)
    {
        auto const* key = std::getenv(endpoint.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw BackendError(fmt::format("environment variable {} is not set", endpoint.api_key_env), false);

        auto const url = split_url(endpoint.base_url);
        auto client = httplib::Client(url.origin);
        client.set_connection_timeout(endpoint.timeout);
        client.set_read_timeout(endpoint.timeout);
        client.set_write_timeout(endpoint.timeout);
        auto const headers = httplib::Headers { { "Authorization", fmt::format("Bearer {}", key) } };
        auto const response = client.Post(url.path + std::string(route), headers, body.dump(), "application/json");
        if (!response)
            throw BackendError(fmt::format("{}{}: {}", endpoint.base_url, route, httplib::to_string(response.error())), true);
        if (response->status == 429 || response->status >= 500)
            throw BackendError(fmt::format("{}{}: HTTP {}", endpoint.base_url, route, response->status), true);
        if (response->status != 200)
            throw BackendError(fmt::format("{}{}: HTTP {}: {}", endpoint.base_url, route, response->status, response->body), false);
        try
        {
            return nlohmann::json::parse(response->body);
        }
        catch (nlohmann::json::exception const& e)
        {
            throw BackendError(fmt::format("{}{}: malformed response: {}", endpoint.base_url, route, e.what()), false);
        }
    }
} // namespace

RemoteChatBackend::RemoteChatBackend(RemoteEndpoint endpoint):
    _endpoint(std::move(endpoint)), _id(fmt::format("remote:{}", _endpoint.model))
{
    if (_endpoint.model.empty())
        throw ConfigError("remote chat backend needs a model name");
}

CompletionRecord RemoteChatBackend::complete(Prompt const& prompt, DecodingParams const& params) const
{
    auto messages = nlohmann::json::array();
    for (auto const& m: prompt.messages)
        messages.push_back({ { "role", m.role }, { "content", m.content } });
    auto body = nlohmann::json {
        { "model", _endpoint.model },
        { "messages", messages },
        { "temperature", params.temperature },
        { "max_tokens", params.max_output_tokens },
    };
    if (params.strategy == DecodingStrategy::Greedy)
        body["top_p"] = 1.0;

    auto const reply = post_json(_endpoint, "/chat/completions", body);
    try
    {
        auto record = CompletionRecord {
            .prompt_text = prompt.text(),
            .completion_text = reply.at("choices").at(0).at("message").at("content").get<std::string>(),
            .backend_id = _id,
        };
        auto const& usage = reply.contains("usage") ? reply.at("usage") : nlohmann::json::object();
        record.input_tokens = usage.value("prompt_tokens", count_tokens(record.prompt_text));
        record.output_tokens = usage.value("completion_tokens", count_tokens(record.completion_text));
        return record;
    }
    catch (nlohmann::json::exception const& e)
    {
        throw BackendError(fmt::format("{}: unexpected completion shape: {}", _id, e.what()), false);
    }
}

RemoteEmbedder::RemoteEmbedder(RemoteEndpoint endpoint, std::size_t dimension):
    _endpoint(std::move(endpoint)), _dimension(dimension), _id(fmt::format("remote:{}:d{}", _endpoint.model, dimension))
{
    if (_endpoint.model.empty())
        throw ConfigError("remote embedder needs a model name");
    if (dimension == 0)
        throw ConfigError("remote embedder dimension must be >= 1");
}

std::vector<float> RemoteEmbedder::embed(std::string_view text) const
{
    auto const reply = post_json(_endpoint, "/embeddings", { { "model", _endpoint.model }, { "input", text } });
    try
    {
        auto v = reply.at("data").at(0).at("embedding").get<std::vector<float>>();
        if (v.size() != _dimension)
            throw BackendError(fmt::format("{}: got {} dimensions, expected {}", _id, v.size(), _dimension), false);
        return v;
    }
    catch (nlohmann::json::exception const& e)
    {
        throw BackendError(fmt::format("{}: unexpected embedding shape: {}", _id, e.what()), false);
    }
}

} // namespace expel
