#pragma once

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <random>

namespace qdgrasp {

    using Rng = std::mt19937_64;

    constexpr std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    /// Order-sensitive hash of a tuple of integers. Every per-rollout seed in
    /// the library is derived through this, never from shared generator state.
    constexpr std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts)
    {
        std::uint64_t h = 0x243F6A8885A308D3ULL;
        for (std::uint64_t p : parts)
            h = splitmix64(h ^ splitmix64(p));
        return h;
    }

    /// FNV-1a over raw bytes.
    inline std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t h = 0xCBF29CE484222325ULL)
    {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            h ^= bytes[i];
            h *= 0x100000001B3ULL;
        }
        return h;
    }

} // namespace qdgrasp
