#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "dspsd/errors.hpp"

namespace dspsd {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 tensors.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);
    Tensor2(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor2 zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
    static Tensor2 identity(std::size_t n);
    static Tensor2 row_vector(std::span<const double> values);
    static Tensor2 column_vector(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const;
    double squared_norm() const;
    void fill(double v);

    Tensor2& operator+=(const Tensor2& other);
    Tensor2& operator*=(double s);

    bool operator==(const Tensor2&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what);

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// a b^T
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
// out += a^T b
void add_matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out);
Tensor2 transpose(const Tensor2& a);

enum class Nonlinearity { Tanh, Sigmoid, Exp };

double sigmoid(double x);
// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x);
// log(1 + e^x).
double softplus(double x);
double apply(Nonlinearity op, double x);
Tensor2 elementwise(Nonlinearity op, const Tensor2& t);

// Four partial sums; the summation order is fixed, so results are
// reproducible.
inline double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size() < b.size() ? a.size() : b.size();
    const double* x = a.data();
    const double* y = b.data();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    for (; i < n; ++i) s0 += x[i] * y[i];
    return (s0 + s1) + (s2 + s3);
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    const std::size_t n = x.size() < y.size() ? x.size() : y.size();
    const double* xp = x.data();
    double* yp = y.data();
    for (std::size_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

Tensor2 sgd_step(const Tensor2& param, const Tensor2& grad, double lr);
// In-place form used by the trainers.
void sgd_update(Tensor2& param, const Tensor2& grad, double lr);

// Central-difference gradient check. Returns the largest
// |analytic - numeric| / max(1, |numeric|) over all coordinates.
double check_gradient(const std::function<double(const Tensor2&)>& f, const Tensor2& x,
                      const Tensor2& analytic_grad, double eps = 1e-5);

// Seeded PRNG. The engine is mt19937_64, whose output sequence is fixed by the
// C++ standard; all conversions to doubles and bounded integers are done here
// so draws are identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent stream derived from (seed, stream) by splitmix64 mixing.
    Rng derive(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Fills every entry uniformly in [lo, hi].
void fill_uniform(Tensor2& t, Rng& rng, double lo, double hi);
// Glorot/Xavier uniform for a fan_out x fan_in weight matrix.
void fill_glorot(Tensor2& t, Rng& rng);

}  // namespace dspsd
