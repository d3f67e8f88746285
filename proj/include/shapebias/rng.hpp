#pragma once

#include <cstdint>

namespace shapebias {

// Counter-style splitmix64 stream. One u64 of state, so checkpointing a
// stream is trivial and per-item substreams can be forked cheaply without
// touching the parent. std::mt19937 would work for the draws but its
// distributions are implementation-defined and its state is awkward to
// serialize bit-exactly, which the resume contract needs.
class RngStream {
  public:
    RngStream() = default;
    explicit RngStream(uint64_t seed) : state_(seed) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // [0, n). Multiply-shift map; the residual bias is ~n/2^64 and is the
    // price of keeping the draw a single deterministic step.
    uint64_t bounded(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next()) * n) >> 64);
    }

    // Child stream decorrelated from this one; does not advance the parent.
    RngStream fork(uint64_t tag) const { return RngStream(mix(state_ ^ mix(tag))); }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

  private:
    uint64_t state_ = 0;
};

// Named substream for purpose `tag` of a master seed.
inline RngStream substream(uint64_t seed, uint64_t tag) {
    return RngStream(RngStream::mix(RngStream::mix(seed) ^ (tag * 0xd6e8feb86659fd93ULL)));
}

} // namespace shapebias
