#include "dspsd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dspsd {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("tensor data length does not match rows*cols");
    }
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged initializer for Tensor2");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
    return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

Tensor2 Tensor2::column_vector(std::span<const double> values) {
    return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

bool Tensor2::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor2::squared_norm() const { return dot(data_, data_); }

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor2& Tensor2::operator+=(const Tensor2& other) {
    require_same_shape(*this, other, "tensor add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor2& Tensor2::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream msg;
        msg << what << ": shape " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
            << b.cols();
        throw ShapeError(msg.str());
    }
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream msg;
        msg << "matmul: " << a.rows() << "x" << a.cols() << " times " << b.rows() << "x"
            << b.cols();
        throw ShapeError(msg.str());
    }
    Tensor2 out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            axpy(aik, b.row(k), out_row);
        }
    }
    return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Tensor2 out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

void add_matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
        throw ShapeError("add_matmul_tn: shapes disagree");
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ak = a.row(k);
        const auto bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i)
            if (ak[i] != 0.0) axpy(ak[i], bk, out.row(i));
    }
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) { return -softplus(-x); }

double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double apply(Nonlinearity op, double x) {
    switch (op) {
        case Nonlinearity::Tanh: return std::tanh(x);
        case Nonlinearity::Sigmoid: return sigmoid(x);
        case Nonlinearity::Exp: return std::exp(x);
    }
    return x;
}

Tensor2 elementwise(Nonlinearity op, const Tensor2& t) {
    Tensor2 out = t;
    for (double& v : out.values()) v = apply(op, v);
    return out;
}

Tensor2 sgd_step(const Tensor2& param, const Tensor2& grad, double lr) {
    Tensor2 out = param;
    sgd_update(out, grad, lr);
    return out;
}

void sgd_update(Tensor2& param, const Tensor2& grad, double lr) {
    require_same_shape(param, grad, "sgd_step");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    axpy(-lr, grad.values(), param.values());
}

double check_gradient(const std::function<double(const Tensor2&)>& f, const Tensor2& x,
                      const Tensor2& analytic_grad, double eps) {
    require_same_shape(x, analytic_grad, "check_gradient");
    Tensor2 probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + eps;
        const double up = f(probe);
        probe.values()[i] = orig - eps;
        const double down = f(probe);
        probe.values()[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("check_gradient: function is not finite near x");
        }
        const double numeric = (up - down) / (2.0 * eps);
        const double err =
            std::abs(analytic_grad.values()[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::below requires n > 0");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

Rng Rng::derive(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x9E3779B97F4A7C15ULL)));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void fill_uniform(Tensor2& t, Rng& rng, double lo, double hi) {
    for (double& v : t.values()) v = rng.uniform(lo, hi);
}

void fill_glorot(Tensor2& t, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    fill_uniform(t, rng, -limit, limit);
}

}  // namespace dspsd
