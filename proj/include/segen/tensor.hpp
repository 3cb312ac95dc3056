#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seg {

// Dense float32 tensor with a small dynamic shape. Row-major; the last
// dimension is contiguous.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) { data.assign(numel_of(shape), 0.0f); }
    Tensor(std::vector<int> s, float fill) : shape(std::move(s)) { data.assign(numel_of(shape), fill); }
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

    static int64_t numel_of(const std::vector<int>& s);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 2D accessors, valid when ndim()==2
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }
    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float v) { return Tensor(std::move(s), v); }
};

// Deterministic random stream: mt19937 plus explicit Box-Muller / fixed-point
// uniforms so results do not depend on libstdc++ distribution internals.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed);

    float u01();                     // uniform [0,1)
    float uniform(float lo, float hi);
    float normal();                  // standard normal
    int uniform_int(int n);          // uniform {0,...,n-1}
    uint64_t derive(uint64_t stream_id) const;  // child seed, stable

    void fill_normal(Tensor& t, float mean = 0.0f, float stddev = 1.0f);
    void fill_uniform(Tensor& t, float lo, float hi);

private:
    uint64_t state_;
    uint64_t seed_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
    uint64_t next_u64();
};

}  // namespace seg
