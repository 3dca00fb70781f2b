#pragma once

#include <array>
#include <cstdint>

namespace peer {

/// splitmix64 finalizer, used to derive keys.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Key for (master seed, replicate, stream); a pure function of its inputs.
std::uint64_t derive_key(std::uint64_t master_seed, std::uint64_t replicate, std::uint64_t stream) noexcept;

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based stream over Philox4x32-10 with hand-rolled uniform and
/// Box-Muller normal draws, so sequences do not depend on the standard library.
class Philox {
public:
    explicit Philox(std::uint64_t key) noexcept;

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double low, double high) noexcept;
    double normal() noexcept;

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace peer
