// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"
#include "rng.hpp"

#include <expel/error.hpp>
#include <expel/insights.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>

namespace expel
{

std::string_view to_string(OpKind kind) noexcept
{
    switch (kind)
    {
        case OpKind::Add: return "ADD";
        case OpKind::Edit: return "EDIT";
        case OpKind::Upvote: return "UPVOTE";
        case OpKind::Downvote: return "DOWNVOTE";
    }
    return "ADD";
}

bool InsightSet::apply(InsightOperation op)
{
    if (op.kind == OpKind::Add)
    {
        if (trim(op.text).empty())
            return false;
        op.id = _nextId++;
        _insights.push_back(Insight { op.id, op.text, kInitialImportance });
        _audit.push_back(std::move(op));
        return true;
    }

    auto const it = std::ranges::find(_insights, op.id, &Insight::id);
    if (it == _insights.end())
        return false;

    switch (op.kind)
    {
        case OpKind::Edit:
            if (trim(op.text).empty())
                return false;
            it->text = op.text;
            ++it->importance;
            break;
        case OpKind::Upvote: ++it->importance; break;
        case OpKind::Downvote:
            if (--it->importance <= 0)
                _insights.erase(it);
            break;
        case OpKind::Add: break;
    }
    _audit.push_back(std::move(op));
    return true;
}

Insight const* InsightSet::find(int id) const noexcept
{
    auto const it = std::ranges::find(_insights, id, &Insight::id);
    return it == _insights.end() ? nullptr : &*it;
}

InsightSet InsightSet::from_texts(std::span<std::string const> texts)
{
    auto set = InsightSet {};
    for (auto const& text: texts)
        set.apply(InsightOperation { .kind = OpKind::Add, .text = text });
    set.clear_audit();
    return set;
}

InsightSet replay(InsightSet initial, std::span<InsightOperation const> log)
{
    initial.clear_audit();
    for (auto const& op: log)
    {
        auto const expectedId = op.kind == OpKind::Add ? initial.next_id() : op.id;
        if (op.kind == OpKind::Add && op.id != expectedId)
            throw UsageError(fmt::format("audit log ADD assigned id {} but replay would assign {}", op.id, expectedId));
        if (!initial.apply(op))
            throw UsageError(fmt::format("audit log entry {} {} does not replay", to_string(op.kind), op.id));
    }
    return initial;
}

std::string render_insights(InsightSet const& set)
{
    auto lines = std::vector<std::string> {};
    auto number = 1;
    for (auto const& insight: set.insights())
        lines.push_back(fmt::format("{}. {}", number++, insight.text));
    return join(lines, "\n");
}

namespace
{
    std::optional<int> parse_number(std::string_view text)
    {
        text = trim(text);
        auto value = 0;
        auto const [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc {} || end != text.data() + text.size())
            return std::nullopt;
        return value;
    }

    /// Keyword followed by a space, colon, or end of line.
    std::optional<std::string_view> after_keyword(std::string_view line, std::string_view keyword)
    {
        if (!line.starts_with(keyword))
            return std::nullopt;
        auto rest = line.substr(keyword.size());
        if (!rest.empty() && rest.front() != ' ' && rest.front() != ':' && rest.front() != '\t')
            return std::nullopt;
        rest = trim(rest);
        if (!rest.empty() && rest.front() == ':')
            rest = trim(rest.substr(1));
        return rest;
    }
} // namespace

ParsedOperations parse_operations(std::string_view completion, InsightSet const& set)
{
    auto result = ParsedOperations {};
    auto const& listed = set.insights();
    auto const resolve = [&](int position) -> std::optional<int> {
        if (position < 1 || static_cast<std::size_t>(position) > listed.size())
            return std::nullopt;
        return listed[static_cast<std::size_t>(position - 1)].id;
    };
    auto const reject = [&](std::string_view line, std::string reason) {
        result.rejected.push_back(RejectedLine { std::string(line), std::move(reason) });
    };

    for (auto raw: split_lines(completion))
    {
        auto line = trim(raw);
        while (!line.empty() && (line.front() == '-' || line.front() == '*'))
            line = trim(line.substr(1));
        if (line.empty())
            continue;

        if (auto rest = after_keyword(line, "ADD"))
        {
            if (rest->empty())
                reject(line, "ADD without text");
            else
                result.operations.push_back(InsightOperation { OpKind::Add, 0, std::string(*rest) });
            continue;
        }
        if (auto rest = after_keyword(line, "EDIT"))
        {
            auto const colon = rest->find(':');
            auto const number = colon == std::string_view::npos ? std::nullopt : parse_number(rest->substr(0, colon));
            auto const text = colon == std::string_view::npos ? std::string_view {} : trim(rest->substr(colon + 1));
            if (!number || text.empty())
                reject(line, "expected EDIT <n>: <text>");
            else if (auto id = resolve(*number))
                result.operations.push_back(InsightOperation { OpKind::Edit, *id, std::string(text) });
            else
                reject(line, fmt::format("no insight numbered {}", *number));
            continue;
        }
        auto handled = false;
        for (auto const kind: { OpKind::Upvote, OpKind::Downvote })
        {
            auto rest = after_keyword(line, to_string(kind));
            if (!rest)
                continue;
            handled = true;
            auto const number = parse_number(*rest);
            if (!number)
                reject(line, fmt::format("expected {} <n>", to_string(kind)));
            else if (auto id = resolve(*number))
                result.operations.push_back(InsightOperation { kind, *id, {} });
            else
                reject(line, fmt::format("no insight numbered {}", *number));
        }
        if (!handled)
            reject(line, "unrecognized operation");
    }
    return result;
}

// Batching -------------------------------------------------------------------------------------

std::vector<ComparePair> build_compare_set(ExperiencePool const& pool)
{
    auto pairs = std::vector<ComparePair> {};
    for (auto const& taskId: pool.task_order())
    {
        auto const indices = pool.indices_for(taskId);
        auto const success = std::ranges::find_if(indices, [&](auto i) { return pool[i].succeeded(); });
        if (success == indices.end())
            continue;
        auto failures = std::vector<std::size_t> {};
        for (auto const i: indices)
            if (!pool[i].succeeded())
                failures.push_back(i);
        std::ranges::stable_sort(failures, {}, [&](auto i) { return pool[i].trial_index(); });
        for (auto const f: failures)
            pairs.push_back(ComparePair { *success, f });
    }
    return pairs;
}

std::vector<SuccessChunk> build_success_chunks(ExperiencePool const& pool,
                                               std::size_t chunkSize,
                                               std::uint64_t seed,
                                               bool includeManual)
{
    if (chunkSize < 1)
        throw UsageError("success chunk size must be >= 1");

    auto successes = std::vector<std::size_t> {};
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].succeeded() && (includeManual || !pool[i].manual()))
            successes.push_back(i);

    auto rng = detail::Rng(seed);
    detail::shuffle(successes, rng);

    auto chunks = std::vector<SuccessChunk> {};
    for (std::size_t begin = 0; begin < successes.size(); begin += chunkSize)
    {
        auto const end = std::min(successes.size(), begin + chunkSize);
        chunks.push_back(SuccessChunk { std::vector(successes.begin() + static_cast<long>(begin),
                                                    successes.begin() + static_cast<long>(end)) });
    }
    return chunks;
}

// Extraction -----------------------------------------------------------------------------------

std::string render_compare_batch(ExperiencePool const& pool, ComparePair const& pair, bool includeReflections)
{
    return fmt::format("Successful attempt:\n{}\nFailed attempt:\n{}",
                       render_trajectory(pool[pair.success], RenderStyle::Full, includeReflections),
                       render_trajectory(pool[pair.failure], RenderStyle::Full, includeReflections));
}

std::string render_success_batch(ExperiencePool const& pool, SuccessChunk const& chunk, bool includeReflections)
{
    auto parts = std::vector<std::string> {};
    auto number = 1;
    for (auto const i: chunk.members)
        parts.push_back(fmt::format("Successful attempt {}:\n{}", number++,
                                    render_trajectory(pool[i], RenderStyle::Full, includeReflections)));
    return join(parts, "\n");
}

ExtractionResult extract_insights(Gateway& gateway,
                                  ExperiencePool const& pool,
                                  ExtractionPrompts const& prompts,
                                  ExtractionOptions const& options,
                                  InsightSet initial,
                                  std::function<void(std::string_view)> const& progress)
{
    auto result = ExtractionResult { .insights = std::move(initial) };
    result.insights.clear_audit();

    struct Batch
    {
        std::string label;
        std::string intro;
        std::string examples;
    };
    auto batches = std::vector<Batch> {};
    auto const pairs = build_compare_set(pool);
    for (std::size_t i = 0; i < pairs.size(); ++i)
        batches.push_back(Batch { fmt::format("compare#{} ({})", i, pool[pairs[i].success].task_id()),
                                  prompts.compare_intro,
                                  render_compare_batch(pool, pairs[i], options.include_reflections) });
    auto const chunks = build_success_chunks(pool, options.chunk_size, options.seed, options.include_manual);
    for (std::size_t i = 0; i < chunks.size(); ++i)
        batches.push_back(Batch { fmt::format("successes#{}", i),
                                  prompts.success_intro,
                                  render_success_batch(pool, chunks[i], options.include_reflections) });

    auto const decoding = DecodingParams { .max_output_tokens = kExtractionMaxOutputTokens };
    for (auto const& batch: batches)
    {
        ++result.batches;
        auto const listing = result.insights.empty() ? std::string("(none yet)") : render_insights(result.insights);
        auto const text = render_template(prompts.tmpl, {
                                                            { "intro", batch.intro },
                                                            { "insights", listing },
                                                            { "examples", batch.examples },
                                                        });
        auto completion = std::string {};
        try
        {
            completion = gateway.complete(ModelRole::Extractor, Prompt::user(text), decoding, batch.label).completion_text;
        }
        catch (BackendError const& e)
        {
            result.skipped_batches.push_back(fmt::format("{}: {}", batch.label, e.what()));
            if (progress)
                progress(fmt::format("batch {} skipped: {}", batch.label, e.what()));
            continue;
        }

        auto parsed = parse_operations(completion, result.insights);
        auto applied = std::size_t { 0 };
        for (auto& op: parsed.operations)
        {
            auto const line = fmt::format("{} {}", to_string(op.kind), op.id);
            if (result.insights.apply(op))
                ++applied;
            else
                parsed.rejected.push_back(RejectedLine { line, "insight no longer present" });
        }
        if (progress)
            progress(fmt::format("batch {} applied={} rejected={} insights={}", batch.label, applied,
                                 parsed.rejected.size(), result.insights.size()));
        std::ranges::move(parsed.rejected, std::back_inserter(result.rejected));
    }
    return result;
}

// Persistence ----------------------------------------------------------------------------------

namespace
{
    nlohmann::json insights_json(InsightSet const& set)
    {
        auto list = nlohmann::json::array();
        for (auto const& insight: set.insights())
            list.push_back({ { "id", insight.id }, { "text", insight.text }, { "importance", insight.importance } });
        return list;
    }

    nlohmann::json audit_json(std::span<InsightOperation const> log)
    {
        auto list = nlohmann::json::array();
        for (auto const& op: log)
        {
            auto entry = nlohmann::json { { "op", to_string(op.kind) }, { "id", op.id } };
            if (op.kind == OpKind::Add || op.kind == OpKind::Edit)
                entry["text"] = op.text;
            list.push_back(std::move(entry));
        }
        return list;
    }

    OpKind op_kind_from_string(std::string_view text)
    {
        for (auto kind: { OpKind::Add, OpKind::Edit, OpKind::Upvote, OpKind::Downvote })
            if (to_string(kind) == text)
                return kind;
        throw std::invalid_argument(fmt::format("unknown insight operation '{}'", text));
    }

    /// Restores a set's exact state (ids, importances, counter) without an audit trail.
    InsightSet restore_state(nlohmann::json const& record)
    {
        auto set = InsightSet {};
        auto const entries = record.at("insights");
        auto const nextId = record.at("next_id").get<int>();
        // Rebuild by replaying ADDs with gaps filled by immediately removed placeholders, so that
        // ids and the counter match the stored state exactly.
        auto wanted = std::vector<Insight> {};
        for (auto const& e: entries)
            wanted.push_back(Insight { e.at("id").get<int>(), e.at("text").get<std::string>(), e.at("importance").get<int>() });
        auto sortedIds = std::vector<int> {};
        for (auto const& w: wanted)
            sortedIds.push_back(w.id);
        if (!std::ranges::is_sorted(sortedIds))
            throw std::invalid_argument("insight ids must be stored in list order of creation");
        auto cursor = std::size_t { 0 };
        while (set.next_id() < nextId)
        {
            auto const id = set.next_id();
            if (cursor < wanted.size() && wanted[cursor].id == id)
            {
                auto const& w = wanted[cursor++];
                if (w.importance < 1)
                    throw std::invalid_argument(fmt::format("insight {} has importance < 1", w.id));
                set.apply(InsightOperation { OpKind::Add, 0, w.text });
                for (auto i = InsightSet::kInitialImportance; i < w.importance; ++i)
                    set.apply(InsightOperation { OpKind::Upvote, id, {} });
                for (auto i = w.importance; i < InsightSet::kInitialImportance; ++i)
                    set.apply(InsightOperation { OpKind::Downvote, id, {} });
            }
            else
            {
                set.apply(InsightOperation { OpKind::Add, 0, "-" });
                set.apply(InsightOperation { OpKind::Downvote, id, {} });
                set.apply(InsightOperation { OpKind::Downvote, id, {} });
            }
        }
        if (cursor != wanted.size())
            throw std::invalid_argument("insight id at or beyond next_id");
        set.clear_audit();
        return set;
    }
} // namespace

nlohmann::json to_json(InsightSet const& set)
{
    return {
        { "next_id", set.next_id() },
        { "insights", insights_json(set) },
        { "audit", audit_json(set.audit_log()) },
    };
}

InsightSet insight_set_from_json(nlohmann::json const& record)
{
    auto set = restore_state(record);
    if (!record.contains("initial"))
        return set;
    auto log = std::vector<InsightOperation> {};
    for (auto const& e: record.value("audit", nlohmann::json::array()))
        log.push_back(InsightOperation {
            op_kind_from_string(e.at("op").get<std::string>()),
            e.at("id").get<int>(),
            e.value("text", std::string {}),
        });
    auto replayed = replay(restore_state(record.at("initial")), log);
    if (!replayed.same_state(set))
        throw std::invalid_argument("audit log does not reproduce the stored insight set");
    return replayed;
}

void save_insights(std::filesystem::path const& path, InsightSet const& finalSet, InsightSet const& initial)
{
    auto record = to_json(finalSet);
    record["initial"] = { { "next_id", initial.next_id() }, { "insights", insights_json(initial) } };
    detail::write_text_file(path, record.dump(2) + "\n");
}

InsightSet load_insights(std::filesystem::path const& path)
{
    auto const record = detail::read_json_file(path);
    try
    {
        return insight_set_from_json(record);
    }
    catch (std::exception const& e)
    {
        throw ConfigError(fmt::format("'{}': {}", path.string(), e.what()));
    }
}

} // namespace expel
