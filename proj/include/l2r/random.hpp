#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace l2r {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mixes a base seed with a path of stream identifiers into an independent sub-seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(base);
    for (auto p : path) {
        s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

// Stream tags, so independent consumers of one run seed never share a generator.
enum class Stream : std::uint64_t {
    model_init = 1,
    batch_order = 2,
    rff_bank = 3,
    clustering = 4,
    dataset = 5,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream) {
    return derive_seed(base, {static_cast<std::uint64_t>(stream)});
}

}  // namespace l2r
