// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"
#include "rng.hpp"

#include <expel/error.hpp>
#include <expel/retrieval.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

namespace expel
{

namespace
{
    constexpr auto kFnvOffset = std::uint64_t { 14695981039346656037ULL };
    constexpr auto kFnvPrime = std::uint64_t { 1099511628211ULL };
    constexpr auto kWordProbes = 4;
    constexpr auto kTrigramWeight = 0.5f;

    std::uint64_t fnv1a(std::uint64_t seed, std::string_view token)
    {
        auto hash = kFnvOffset;
        for (auto i = 0; i < 8; ++i)
        {
            hash ^= (seed >> (8 * i)) & 0xFF;
            hash *= kFnvPrime;
        }
        for (auto const c: token)
        {
            hash ^= static_cast<unsigned char>(c);
            hash *= kFnvPrime;
        }
        // FNV's low bits mix poorly; finish with a splitmix64 round.
        hash ^= hash >> 30;
        hash *= 0xbf58476d1ce4e5b9ULL;
        hash ^= hash >> 27;
        hash *= 0x94d049bb133111ebULL;
        hash ^= hash >> 31;
        return hash;
    }

    std::vector<std::string> hash_tokens(std::string_view text)
    {
        auto tokens = std::vector<std::string> {};
        auto current = std::string {};
        for (auto const c: text)
        {
            auto const u = static_cast<unsigned char>(c);
            if (std::isalnum(u))
                current.push_back(static_cast<char>(std::tolower(u)));
            else if (!current.empty())
                tokens.push_back(std::exchange(current, {}));
        }
        if (!current.empty())
            tokens.push_back(std::move(current));
        return tokens;
    }

    double dot(std::span<float const> a, std::span<float const> b)
    {
        auto sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        return sum;
    }
} // namespace

HashEmbedder::HashEmbedder(std::uint64_t seed, std::size_t dimension):
    _seed(seed), _dimension(dimension), _id(fmt::format("hash-d{}-s{}", dimension, seed))
{
    if (dimension == 0)
        throw UsageError("embedding dimension must be >= 1");
}

std::vector<float> HashEmbedder::embed(std::string_view text) const
{
    auto v = std::vector<float>(_dimension, 0.0f);
    auto const scatter = [&](std::string const& feature, float weight) {
        auto const h = fnv1a(_seed, feature);
        v[static_cast<std::size_t>(h % _dimension)] += (h >> 63) != 0 ? -weight : weight;
    };
    for (auto const& token: hash_tokens(text))
    {
        // A single bucket per word makes distinct words collide once the vocabulary approaches
        // the dimension; several probes plus character trigrams keep them apart.
        for (auto probe = 0; probe < kWordProbes; ++probe)
            scatter(fmt::format("w{}:{}", probe, token), 1.0f);
        auto const padded = "^" + token + "$";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
            scatter("c:" + padded.substr(i, 3), kTrigramWeight);
    }
    return v;
}

std::vector<float> embed_normalized(Embedder const& embedder, std::string_view text)
{
    if (text.empty())
        throw UsageError("cannot embed empty text");
    auto v = embedder.embed(text);
    if (v.size() != embedder.dimension())
        throw BackendError(fmt::format("embedder '{}' returned {} values, expected {}", embedder.id(), v.size(),
                                       embedder.dimension()),
                           false);
    auto const norm = std::sqrt(dot(v, v));
    if (norm == 0.0 || !std::isfinite(norm))
        throw BackendError(fmt::format("embedder '{}' produced a zero vector for text '{}'", embedder.id(), text), false);
    for (auto& x: v)
        x = static_cast<float>(static_cast<double>(x) / norm);
    return v;
}

EmbeddingIndex::EmbeddingIndex(std::string embedderId,
                               std::size_t dimension,
                               std::vector<TrajectoryRef> refs,
                               std::vector<float> vectors):
    _embedderId(std::move(embedderId)), _dimension(dimension), _refs(std::move(refs)), _vectors(std::move(vectors))
{
    if (_dimension == 0)
        throw UsageError("index dimension must be >= 1");
    if (_vectors.size() != _refs.size() * _dimension)
        throw UsageError(fmt::format("index holds {} floats for {} entries of dimension {}", _vectors.size(),
                                     _refs.size(), _dimension));
    for (std::size_t i = 0; i < _refs.size(); ++i)
    {
        auto const v = vector(i);
        auto const norm = std::sqrt(dot(v, v));
        if (std::abs(norm - 1.0) > 1e-6)
            throw UsageError(fmt::format("index entry {} has norm {}, expected 1", i, norm));
    }
}

std::span<float const> EmbeddingIndex::vector(std::size_t entry) const
{
    return std::span<float const>(_vectors).subspan(entry * _dimension, _dimension);
}

EmbeddingIndex EmbeddingIndex::build(ExperiencePool const& pool, Embedder const& embedder, bool includeManual)
{
    auto refs = std::vector<TrajectoryRef> {};
    auto vectors = std::vector<float> {};
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        auto const& t = pool[i];
        if (!t.succeeded() || (!includeManual && t.manual()))
            continue;
        auto const v = embed_normalized(embedder, t.task().description);
        vectors.insert(vectors.end(), v.begin(), v.end());
        refs.push_back(TrajectoryRef { i, t.task_id(), t.trial_index() });
    }
    return EmbeddingIndex(embedder.id(), embedder.dimension(), std::move(refs), std::move(vectors));
}

EmbeddingIndex EmbeddingIndex::build_thoughts(ExperiencePool const& pool, Embedder const& embedder, bool includeManual)
{
    auto refs = std::vector<TrajectoryRef> {};
    auto vectors = std::vector<float> {};
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        auto const& t = pool[i];
        if (!t.succeeded() || (!includeManual && t.manual()))
            continue;
        for (auto const& step: t.steps())
            for (auto const& thought: step.thoughts)
            {
                if (trim(thought).empty())
                    continue;
                auto const v = embed_normalized(embedder, thought);
                vectors.insert(vectors.end(), v.begin(), v.end());
                refs.push_back(TrajectoryRef { i, t.task_id(), t.trial_index() });
            }
    }
    return EmbeddingIndex(embedder.id(), embedder.dimension(), std::move(refs), std::move(vectors));
}

std::vector<ScoredRef> EmbeddingIndex::query(std::span<float const> unitQuery, std::size_t k) const
{
    if (k < 1)
        throw UsageError("k must be >= 1");
    if (unitQuery.size() != _dimension)
        throw UsageError(fmt::format("query has dimension {}, index has {}", unitQuery.size(), _dimension));

    auto scores = std::vector<double>(_refs.size());
    for (std::size_t i = 0; i < _refs.size(); ++i)
        scores[i] = dot(vector(i), unitQuery);

    auto order = std::vector<std::size_t>(_refs.size());
    std::iota(order.begin(), order.end(), std::size_t { 0 });
    auto const n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(n), order.end(), [&](auto a, auto b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });

    auto result = std::vector<ScoredRef> {};
    for (std::size_t i = 0; i < n; ++i)
        result.push_back(ScoredRef { _refs[order[i]], scores[order[i]], order[i] });
    return result;
}

void EmbeddingIndex::check_against(ExperiencePool const& pool) const
{
    for (auto const& ref: _refs)
    {
        if (ref.pool_index >= pool.size())
            throw UsageError(fmt::format("index refers to pool entry {} but the pool has {}", ref.pool_index, pool.size()));
        auto const& t = pool[ref.pool_index];
        if (t.task_id() != ref.task_id || t.trial_index() != ref.trial_index || !t.succeeded())
            throw UsageError(fmt::format("index entry for task '{}' does not match pool entry {}", ref.task_id, ref.pool_index));
    }
}

// Binary layout, little-endian throughout:
//   "EXPLIDX1"  u32 id_len  id bytes  u32 D  u64 count
//   count * D   f32 vectors
//   count *     { u64 pool_index  i32 trial_index  u32 task_len  task bytes }

namespace
{
    constexpr auto kMagic = std::string_view("EXPLIDX1");

    template <typename T>
    void put(std::string& out, T value)
    {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        auto bits = std::bit_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i)
            out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }

    class Reader
    {
      public:
        Reader(std::string data, std::filesystem::path path): _data(std::move(data)), _path(std::move(path)) {}

        template <typename T>
        T get()
        {
            using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
            auto const bytes = take(sizeof(U));
            auto bits = U { 0 };
            for (std::size_t i = 0; i < sizeof(U); ++i)
                bits |= static_cast<U>(static_cast<unsigned char>(bytes[i])) << (8 * i);
            return std::bit_cast<T>(bits);
        }

        std::string_view take(std::size_t n)
        {
            if (_data.size() - _pos < n)
                throw ConfigError(fmt::format("index file '{}' is truncated", _path.string()));
            auto const view = std::string_view(_data).substr(_pos, n);
            _pos += n;
            return view;
        }

        [[nodiscard]] bool at_end() const noexcept { return _pos == _data.size(); }

      private:
        std::string _data;
        std::filesystem::path _path;
        std::size_t _pos = 0;
    };
} // namespace

void EmbeddingIndex::save(std::filesystem::path const& path) const
{
    auto out = std::string(kMagic);
    put(out, static_cast<std::uint32_t>(_embedderId.size()));
    out += _embedderId;
    put(out, static_cast<std::uint32_t>(_dimension));
    put(out, static_cast<std::uint64_t>(_refs.size()));
    for (auto const x: _vectors)
        put(out, x);
    for (auto const& ref: _refs)
    {
        put(out, static_cast<std::uint64_t>(ref.pool_index));
        put(out, static_cast<std::int32_t>(ref.trial_index));
        put(out, static_cast<std::uint32_t>(ref.task_id.size()));
        out += ref.task_id;
    }
    detail::write_text_file(path, out);
}

EmbeddingIndex EmbeddingIndex::load(std::filesystem::path const& path)
{
    auto reader = Reader(detail::read_text_file(path), path);
    if (reader.take(kMagic.size()) != kMagic)
        throw ConfigError(fmt::format("'{}' is not an index file", path.string()));
    auto embedderId = std::string(reader.take(reader.get<std::uint32_t>()));
    auto const dimension = reader.get<std::uint32_t>();
    auto const count = reader.get<std::uint64_t>();
    auto vectors = std::vector<float> {};
    vectors.reserve(count * dimension);
    for (std::uint64_t i = 0; i < count * dimension; ++i)
        vectors.push_back(reader.get<float>());
    auto refs = std::vector<TrajectoryRef> {};
    for (std::uint64_t i = 0; i < count; ++i)
    {
        auto ref = TrajectoryRef {};
        ref.pool_index = static_cast<std::size_t>(reader.get<std::uint64_t>());
        ref.trial_index = reader.get<std::int32_t>();
        ref.task_id = std::string(reader.take(reader.get<std::uint32_t>()));
        refs.push_back(std::move(ref));
    }
    if (!reader.at_end())
        throw ConfigError(fmt::format("index file '{}' has trailing bytes", path.string()));
    try
    {
        return EmbeddingIndex(std::move(embedderId), dimension, std::move(refs), std::move(vectors));
    }
    catch (UsageError const& e)
    {
        throw ConfigError(fmt::format("index file '{}': {}", path.string(), e.what()));
    }
}

namespace
{
    void require_same_embedder(EmbeddingIndex const& index, Embedder const& embedder)
    {
        if (!index.empty() && index.embedder_id() != embedder.id())
            throw UsageError(fmt::format("index was built with embedder '{}' but queried with '{}'", index.embedder_id(),
                                         embedder.id()));
    }
} // namespace

std::vector<TrajectoryRef> query_topk(EmbeddingIndex const& index, Embedder const& embedder, std::string_view queryText, std::size_t k)
{
    if (k < 1)
        throw UsageError("k must be >= 1");
    if (index.empty())
        return {};
    require_same_embedder(index, embedder);
    auto result = std::vector<TrajectoryRef> {};
    for (auto& scored: index.query(embed_normalized(embedder, queryText), k))
        result.push_back(std::move(scored.ref));
    return result;
}

std::vector<TrajectoryRef> query_by_reason(EmbeddingIndex const& thoughtIndex,
                                           Embedder const& embedder,
                                           std::string_view thought,
                                           std::size_t k)
{
    if (k < 1)
        throw UsageError("k must be >= 1");
    if (thoughtIndex.empty())
        return {};
    require_same_embedder(thoughtIndex, embedder);
    auto result = std::vector<TrajectoryRef> {};
    auto seen = std::set<std::size_t> {};
    for (auto& scored: thoughtIndex.query(embed_normalized(embedder, thought), thoughtIndex.size()))
    {
        if (!seen.insert(scored.ref.pool_index).second)
            continue;
        result.push_back(std::move(scored.ref));
        if (result.size() == k)
            break;
    }
    return result;
}

std::vector<TrajectoryRef> sample_random(EmbeddingIndex const& index, std::size_t k, std::uint64_t seed)
{
    auto order = std::vector<std::size_t>(index.size());
    std::iota(order.begin(), order.end(), std::size_t { 0 });
    auto rng = detail::Rng(seed);
    auto const n = std::min(k, order.size());
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const j = i + static_cast<std::size_t>(detail::uniform_below(rng, order.size() - i));
        std::swap(order[i], order[j]);
    }
    auto result = std::vector<TrajectoryRef> {};
    for (std::size_t i = 0; i < n; ++i)
        result.push_back(index.refs()[order[i]]);
    return result;
}

} // namespace expel
