#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

namespace mleig {

/// Philox4x32-10 counter-based block cipher (Salmon et al., SC'11).
///
/// Maps a 128-bit counter and a 64-bit key to 128 pseudo-random bits. The
/// output depends only on (counter, key), so any block can be produced out of
/// order and by any worker.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) noexcept;
};

class NormalEngine;

/// Immutable handle naming one independent random stream.
///
/// A stream is identified by a master seed and a path of integers, e.g.
/// (purpose, level, outer index, inner index). Two handles with equal seed and
/// path produce identical output; distinct paths are keyed differently and
/// produce independent output. Handles are cheap values and may be freely
/// copied between threads.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t master_seed) : seed_(master_seed) {}
    RandomStream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path)
        : seed_(master_seed), path_(path) {}

    /// Stream whose path is this path extended by one component.
    RandomStream child(std::uint64_t component) const;

    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<std::uint64_t>& path() const noexcept { return path_; }

    /// 64-bit Philox key derived from (seed, path).
    std::uint64_t key() const noexcept;

    /// Fresh engine positioned at the start of this stream.
    NormalEngine engine() const;

    friend bool operator==(const RandomStream&, const RandomStream&) = default;

private:
    std::uint64_t seed_;
    std::vector<std::uint64_t> path_;
};

/// Sequential reader over one RandomStream: uniforms in (0,1) and standard
/// normals via Box-Muller. Not thread-safe; create one per worker.
class NormalEngine {
public:
    explicit NormalEngine(std::uint64_t key);

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform();
    double normal();
    Eigen::VectorXd normal_vector(Eigen::Index n);

private:
    Philox4x32::Key key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// Purpose tags used as the first path component of estimator streams.
enum class StreamPurpose : std::uint64_t {
    kLevelSample = 1,
    kNmcSample = 2,
    kPilot = 3,
    kTest = 99,
};

/// Sub-stream tags inside one outer sample.
namespace substream {
inline constexpr std::uint64_t kOuterTheta = 0;
inline constexpr std::uint64_t kNoise = 1;
inline constexpr std::uint64_t kInner = 2;
}  // namespace substream

}  // namespace mleig
