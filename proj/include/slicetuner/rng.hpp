#pragma once

#include <cstdint>
#include <initializer_list>

namespace slicetuner {

// splitmix64 finalizer. Used to derive independent child seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// seed_child = splitmix64(parent ^ splitmix64(k1) ...), folded left over the keys.
constexpr std::uint64_t mix_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t s = splitmix64(parent);
    for (auto k : keys) s = splitmix64(s ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return s;
}

}  // namespace slicetuner
