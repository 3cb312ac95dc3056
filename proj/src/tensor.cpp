#include "segen/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace seg {

int64_t Tensor::numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("tensor: negative dimension");
        n *= d;
    }
    return n;
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// RandomStream

namespace {
// splitmix64, used to decorrelate derived seeds
uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

RandomStream::RandomStream(uint64_t seed) : seed_(seed) { state_ = splitmix64(seed ^ 0x632be59bd9b4e019ULL); }

uint64_t RandomStream::next_u64() {
    // xorshift64* on a splitmix-initialized state; fast and reproducible
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
}

float RandomStream::u01() {
    return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);  // 24-bit mantissa
}

float RandomStream::uniform(float lo, float hi) { return lo + (hi - lo) * u01(); }

float RandomStream::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    float u1 = 0.0f;
    do {
        u1 = u01();
    } while (u1 <= 1e-12f);
    float u2 = u01();
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

int RandomStream::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

uint64_t RandomStream::derive(uint64_t stream_id) const { return splitmix64(seed_ ^ splitmix64(stream_id)); }

void RandomStream::fill_normal(Tensor& t, float mean, float stddev) {
    for (float& v : t.data) v = mean + stddev * normal();
}

void RandomStream::fill_uniform(Tensor& t, float lo, float hi) {
    for (float& v : t.data) v = uniform(lo, hi);
}

}  // namespace seg
