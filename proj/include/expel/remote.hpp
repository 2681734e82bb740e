// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/llm.hpp>
#include <expel/retrieval.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <optional>
#include <string>

namespace expel
{

/// Connection settings for an OpenAI-compatible HTTP endpoint.
struct RemoteEndpoint
{
    std::string base_url = "https://api.openai.com/v1";
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout { 120 };
    std::optional<std::size_t> context_limit;

    /// Keys: base_url, model (required), api_key_env, timeout_s, context_limit.
    [[nodiscard]] static RemoteEndpoint from_json(nlohmann::json const& spec);
};

/// Chat completions over HTTP. Transport failures, 429 and 5xx responses are retryable BackendErrors.
class RemoteChatBackend final: public CompletionBackend
{
  public:
    explicit RemoteChatBackend(RemoteEndpoint endpoint);

    [[nodiscard]] std::string const& id() const noexcept override { return _id; }
    [[nodiscard]] std::optional<std::size_t> context_limit() const noexcept override { return _endpoint.context_limit; }
    [[nodiscard]] CompletionRecord complete(Prompt const& prompt, DecodingParams const& params) const override;

  private:
    RemoteEndpoint _endpoint;
    std::string _id;
};

/// Embeddings over HTTP; the dimension is fixed at construction and checked on every response.
class RemoteEmbedder final: public Embedder
{
  public:
    RemoteEmbedder(RemoteEndpoint endpoint, std::size_t dimension);

    [[nodiscard]] std::string const& id() const noexcept override { return _id; }
    [[nodiscard]] std::size_t dimension() const noexcept override { return _dimension; }
    [[nodiscard]] std::vector<float> embed(std::string_view text) const override;

  private:
    RemoteEndpoint _endpoint;
    std::size_t _dimension;
    std::string _id;
};

} // namespace expel
