// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace expel
{

/// Contract violation by the caller (appending to a finalized trajectory, stepping a finished episode, ...).
class UsageError: public std::logic_error
{
  public:
    using std::logic_error::logic_error;
};

class ParseError: public std::runtime_error
{
  public:
    ParseError(std::string const& message, std::size_t line);

    [[nodiscard]] std::size_t line() const noexcept { return _line; }

  private:
    std::size_t _line;
};

class ConfigError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Failure talking to a completion or embedding backend. `retryable` marks transport-level failures.
class BackendError: public std::runtime_error
{
  public:
    BackendError(std::string const& message, bool retryable):
        std::runtime_error(message), _retryable(retryable)
    {
    }

    [[nodiscard]] bool retryable() const noexcept { return _retryable; }

  private:
    bool _retryable;
};

class ContextOverflowError: public BackendError
{
  public:
    ContextOverflowError(std::size_t measured, std::size_t limit);

    [[nodiscard]] std::size_t measured() const noexcept { return _measured; }
    [[nodiscard]] std::size_t limit() const noexcept { return _limit; }

  private:
    std::size_t _measured;
    std::size_t _limit;
};

/// A completion that could not be interpreted; keeps the raw text for inspection.
class CompletionFormatError: public std::runtime_error
{
  public:
    CompletionFormatError(std::string const& message, std::string raw):
        std::runtime_error(message), _raw(std::move(raw))
    {
    }

    [[nodiscard]] std::string const& raw() const noexcept { return _raw; }

  private:
    std::string _raw;
};

} // namespace expel
