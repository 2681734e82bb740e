// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/core.hpp>
#include <expel/llm.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

struct Insight
{
    int id = 0;
    std::string text;
    int importance = 0;

    bool operator==(Insight const&) const = default;
};

enum class OpKind
{
    Add,
    Edit,
    Upvote,
    Downvote,
};

[[nodiscard]] std::string_view to_string(OpKind kind) noexcept;

/// `id` is the stable insight id. For ADD it is filled in with the assigned id once applied.
struct InsightOperation
{
    OpKind kind = OpKind::Add;
    int id = 0;
    std::string text;

    bool operator==(InsightOperation const&) const = default;
};

/// Vote-weighted insight list. New insights start at importance 2; UPVOTE and EDIT add one,
/// DOWNVOTE subtracts one and removes the insight when it reaches zero. Ids are never reused.
class InsightSet
{
  public:
    static constexpr int kInitialImportance = 2;

    /// Returns false (and leaves the set untouched) for operations on absent ids or empty texts.
    bool apply(InsightOperation op);

    [[nodiscard]] std::vector<Insight> const& insights() const noexcept { return _insights; }
    [[nodiscard]] Insight const* find(int id) const noexcept;
    [[nodiscard]] std::size_t size() const noexcept { return _insights.size(); }
    [[nodiscard]] bool empty() const noexcept { return _insights.empty(); }
    [[nodiscard]] int next_id() const noexcept { return _nextId; }

    /// Operations applied since construction or the last `clear_audit`, in order.
    [[nodiscard]] std::vector<InsightOperation> const& audit_log() const noexcept { return _audit; }
    void clear_audit() noexcept { _audit.clear(); }

    /// Same insights and id counter; audit logs are not compared.
    [[nodiscard]] bool same_state(InsightSet const& other) const noexcept
    {
        return _insights == other._insights && _nextId == other._nextId;
    }

    /// Fresh set holding the given texts in order, each at the initial importance.
    [[nodiscard]] static InsightSet from_texts(std::span<std::string const> texts);

  private:
    std::vector<Insight> _insights;
    int _nextId = 1;
    std::vector<InsightOperation> _audit;
};

/// Applies a recorded audit log to `initial`; throws UsageError if any entry fails to replay.
[[nodiscard]] InsightSet replay(InsightSet initial, std::span<InsightOperation const> log);

/// Numbered lines "1. <text>" in list order; numbering is positional, not the stable id.
[[nodiscard]] std::string render_insights(InsightSet const& set);

struct RejectedLine
{
    std::string line;
    std::string reason;
};

struct ParsedOperations
{
    std::vector<InsightOperation> operations;
    std::vector<RejectedLine> rejected;
};

/// Line-based grammar: `ADD <text>`, `EDIT <n>: <text>`, `UPVOTE <n>`, `DOWNVOTE <n>`, where n is the
/// positional number shown by render_insights(set). Numbers are translated to stable ids here.
[[nodiscard]] ParsedOperations parse_operations(std::string_view completion, InsightSet const& set);

// Batching -------------------------------------------------------------------------------------

struct ComparePair
{
    std::size_t success = 0; // pool index
    std::size_t failure = 0; // pool index
    bool operator==(ComparePair const&) const = default;
};

struct SuccessChunk
{
    std::vector<std::size_t> members; // pool indices
    bool operator==(SuccessChunk const&) const = default;
};

/// One (success, failure) pair per failed attempt of every task that also has a success,
/// ordered by task first appearance, then failure trial index.
[[nodiscard]] std::vector<ComparePair> build_compare_set(ExperiencePool const& pool);

/// Seeded shuffle of all successes, cut into consecutive chunks of `chunkSize` (last one may be smaller).
[[nodiscard]] std::vector<SuccessChunk> build_success_chunks(ExperiencePool const& pool,
                                                             std::size_t chunkSize,
                                                             std::uint64_t seed,
                                                             bool includeManual = true);

// Extraction -----------------------------------------------------------------------------------

struct ExtractionPrompts
{
    std::string tmpl;          // placeholders {intro} {insights} {examples}
    std::string compare_intro; // for success/failure pairs
    std::string success_intro; // for lists of successes
};

struct ExtractionOptions
{
    std::size_t chunk_size = 8; // L
    std::uint64_t seed = 0;
    bool include_reflections = false;
    bool include_manual = true;
};

struct ExtractionResult
{
    InsightSet insights; // its audit log covers this run only
    std::vector<RejectedLine> rejected;
    std::vector<std::string> skipped_batches;
    std::size_t batches = 0;
};

[[nodiscard]] std::string render_compare_batch(ExperiencePool const& pool, ComparePair const& pair, bool includeReflections);
[[nodiscard]] std::string render_success_batch(ExperiencePool const& pool, SuccessChunk const& chunk, bool includeReflections);

/// All compare pairs first, then all success chunks; each completion is parsed and applied in turn.
/// A batch whose completion call fails is skipped and noted.
ExtractionResult extract_insights(Gateway& gateway,
                                  ExperiencePool const& pool,
                                  ExtractionPrompts const& prompts,
                                  ExtractionOptions const& options,
                                  InsightSet initial = {},
                                  std::function<void(std::string_view)> const& progress = {});

// Persistence ----------------------------------------------------------------------------------

[[nodiscard]] nlohmann::json to_json(InsightSet const& set);
[[nodiscard]] InsightSet insight_set_from_json(nlohmann::json const& record);

/// Writes {initial, insights, next_id, audit}; the audit log replays `initial` into the final set.
void save_insights(std::filesystem::path const& path, InsightSet const& finalSet, InsightSet const& initial = {});
/// Loads the final set (with its audit log) and verifies it against a replay of the initial set.
[[nodiscard]] InsightSet load_insights(std::filesystem::path const& path);

} // namespace expel
