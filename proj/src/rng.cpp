#include "ris/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ris::inline RIS_PRECISION {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
        r = engine_();
    } while (r >= limit);
    return r % n;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::fill_normal(Tensor& t, double mean, double stddev) {
    for (auto& v : t.values()) v = static_cast<Real>(mean + stddev * normal());
}

Rng Rng::split(std::uint64_t stream) const {
    std::mt19937_64 copy = engine_;
    const std::uint64_t base = copy();
    return Rng(splitmix64(base ^ splitmix64(stream + 0x51ed27ULL)));
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

Rng Rng::deserialize(const std::string& state) {
    Rng r;
    std::istringstream is(state);
    is >> r.engine_;
    if (!is) throw std::runtime_error("corrupt rng state");
    return r;
}

}  // namespace ris
