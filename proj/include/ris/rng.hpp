#ifndef RIS_RNG_HPP
#define RIS_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

#include "ris/tensor.hpp"

namespace ris::inline RIS_PRECISION {

// Deterministic random stream. State is the engine only (no cached normals),
// so serialize()/deserialize() capture it completely.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }
    // Box-Muller; consumes two uniforms per draw.
    double normal();
    void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0);

    // Independent child stream keyed by `stream`; does not advance this stream.
    Rng split(std::uint64_t stream) const;

    std::string serialize() const;
    static Rng deserialize(const std::string& state);

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ris

#endif  // RIS_RNG_HPP
