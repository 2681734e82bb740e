// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/core.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expel
{

/// Maps text to a fixed-length vector. Must be deterministic.
class Embedder
{
  public:
    virtual ~Embedder() = default;

    [[nodiscard]] virtual std::string const& id() const noexcept = 0;
    [[nodiscard]] virtual std::size_t dimension() const noexcept = 0;
    [[nodiscard]] virtual std::vector<float> embed(std::string_view text) const = 0;
};

/// Feature-hashing embedder: every lowercase alphanumeric token is hashed (seeded FNV-1a) into
/// several signed buckets, and its character trigrams into one bucket each at half weight.
class HashEmbedder final: public Embedder
{
  public:
    static constexpr std::size_t kDefaultDimension = 256;

    explicit HashEmbedder(std::uint64_t seed = 0, std::size_t dimension = kDefaultDimension);

    [[nodiscard]] std::string const& id() const noexcept override { return _id; }
    [[nodiscard]] std::size_t dimension() const noexcept override { return _dimension; }
    [[nodiscard]] std::vector<float> embed(std::string_view text) const override;

  private:
    std::uint64_t _seed;
    std::size_t _dimension;
    std::string _id;
};

/// Embedder output scaled to unit norm. Throws UsageError for empty text and
/// BackendError naming the text when the embedding is the zero vector.
[[nodiscard]] std::vector<float> embed_normalized(Embedder const& embedder, std::string_view text);

struct TrajectoryRef
{
    std::size_t pool_index = 0;
    std::string task_id;
    int trial_index = 0;

    bool operator==(TrajectoryRef const&) const = default;
};

struct ScoredRef
{
    TrajectoryRef ref;
    double score = 0.0;
    std::size_t entry = 0; // insertion index within the index
};

/// Exact flat inner-product index over unit vectors. Immutable after construction.
class EmbeddingIndex
{
  public:
    EmbeddingIndex() = default;
    /// `vectors` holds refs.size() rows of `dimension` floats, each of unit norm (checked to 1e-6).
    EmbeddingIndex(std::string embedderId, std::size_t dimension, std::vector<TrajectoryRef> refs, std::vector<float> vectors);

    /// One entry per successful trajectory, keyed by its task description.
    [[nodiscard]] static EmbeddingIndex build(ExperiencePool const& pool, Embedder const& embedder, bool includeManual = true);
    /// One entry per thought of every successful trajectory, for reasoning-similarity lookups.
    [[nodiscard]] static EmbeddingIndex build_thoughts(ExperiencePool const& pool, Embedder const& embedder, bool includeManual = true);

    [[nodiscard]] std::string const& embedder_id() const noexcept { return _embedderId; }
    [[nodiscard]] std::size_t dimension() const noexcept { return _dimension; }
    [[nodiscard]] std::size_t size() const noexcept { return _refs.size(); }
    [[nodiscard]] bool empty() const noexcept { return _refs.empty(); }
    [[nodiscard]] std::span<TrajectoryRef const> refs() const noexcept { return _refs; }
    [[nodiscard]] std::span<float const> vector(std::size_t entry) const;

    /// Descending inner product, ties by ascending insertion index; min(k, size) results.
    [[nodiscard]] std::vector<ScoredRef> query(std::span<float const> unitQuery, std::size_t k) const;

    /// Throws UsageError if a reference does not point at a matching successful pool entry.
    void check_against(ExperiencePool const& pool) const;

    void save(std::filesystem::path const& path) const;
    [[nodiscard]] static EmbeddingIndex load(std::filesystem::path const& path);

    bool operator==(EmbeddingIndex const&) const = default;

  private:
    std::string _embedderId;
    std::size_t _dimension = 0;
    std::vector<TrajectoryRef> _refs;
    std::vector<float> _vectors;
};

/// Top-k successful trajectories by task-description similarity.
[[nodiscard]] std::vector<TrajectoryRef> query_topk(EmbeddingIndex const& index,
                                                    Embedder const& embedder,
                                                    std::string_view queryText,
                                                    std::size_t k);

/// Top-k trajectories by similarity of any of their thoughts to `thought`; each trajectory appears once.
[[nodiscard]] std::vector<TrajectoryRef> query_by_reason(EmbeddingIndex const& thoughtIndex,
                                                         Embedder const& embedder,
                                                         std::string_view thought,
                                                         std::size_t k);

/// min(k, size) distinct entries chosen uniformly with the given seed, in sampled order.
[[nodiscard]] std::vector<TrajectoryRef> sample_random(EmbeddingIndex const& index, std::size_t k, std::uint64_t seed);

} // namespace expel
