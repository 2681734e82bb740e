// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace expel::detail
{

using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection; identical across standard libraries, unlike
/// std::uniform_int_distribution.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound)
{
    auto const limit = Rng::max() - Rng::max() % bound;
    for (;;)
    {
        auto const value = rng();
        if (value < limit)
            return value % bound;
    }
}

/// Fisher-Yates, portable for the same reason as above.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng)
{
    for (auto i = items.size(); i > 1; --i)
    {
        auto const j = uniform_below(rng, i);
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace expel::detail
