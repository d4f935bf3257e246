#pragma once

// Minimal dense linear algebra, activations, losses, optimizer and RNG.
// Everything is double precision, runs on one thread, and is bitwise
// deterministic for a fixed seed. No BLAS, no autodiff: gradients used
// elsewhere in the library are derived by hand and verified against
// central finite differences in the test suite.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "remember/errors.hpp"

namespace remember {

// Throws NumericError if any value is NaN or infinite.
void ensure_all_finite(std::span<const double> values, const char* what);

// ---------------------------------------------------------------------------
// Dense containers. Shape is fixed at construction time.
// ---------------------------------------------------------------------------

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t size, double fill = 0.0);
  explicit Vector(std::vector<double> values);  // validates finiteness
  Vector(std::initializer_list<double> values);

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Elementary operations
// ---------------------------------------------------------------------------

double dot(const Vector& a, const Vector& b);
double norm(const Vector& a);

// cos(a, b). Throws ShapeError on length mismatch, DomainError if either
// vector has zero norm.
double cosine_sim(const Vector& a, const Vector& b);

// Numerically stable softmax (max subtraction). Throws ShapeError on empty
// input. Output sums to 1 and every entry is positive.
Vector softmax(const Vector& logits);

// a / |a|. Throws NumericError if |a| == 0.
Vector l2_normalized(const Vector& a);

Matrix matmul(const Matrix& a, const Matrix& b);              // a(n,m) * b(m,p)
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);  // a(m,n)^T * b(m,p)
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);  // a(n,m) * b(p,m)^T
Vector matvec(const Matrix& a, const Vector& x);              // a(n,m) * x(m)
Vector vecmat(const Vector& x, const Matrix& a);              // x(n) * a(n,m)

// ---------------------------------------------------------------------------
// Dense layer with explicit forward cache for the hand-written backward pass
// ---------------------------------------------------------------------------

enum class Activation { None, Relu };

struct DenseCache {
  Matrix x;               // input batch, n x in
  Matrix w;               // weights at forward time, in x out
  Matrix pre_activation;  // x*w + b, n x out
  Activation activation = Activation::None;
  bool valid = false;
};

// y = act(x*w + b). x is n x in, w is in x out, b has length out.
// When cache is non-null it is filled for a later dense_backward call.
Matrix dense_forward(const Matrix& x, const Matrix& w, const Vector& b,
                     Activation activation, DenseCache* cache = nullptr);

struct DenseGrads {
  Matrix x;  // dL/dx
  Matrix w;  // dL/dw
  Vector b;  // dL/db
};

// Backward through dense_forward. `upstream` is dL/dy with the same shape as
// the forward output. ReLU uses subgradient 0 at exactly 0. Throws StateError
// if the cache was never filled.
DenseGrads dense_backward(const Matrix& upstream, const DenseCache& cache);

// Cross-entropy of a single sample against integer class `target`.
// loss = -log softmax(logits)[target], grad = softmax(logits) - onehot.
struct CrossEntropyResult {
  double loss = 0.0;
  Vector grad;
};
CrossEntropyResult cross_entropy(const Vector& logits, std::size_t target);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, const AdamConfig& config);

  AdamConfig config;
  std::vector<double> m, v;  // first/second moment, same shape as parameter
  std::int64_t t = 0;        // completed steps
};

// One bias-corrected Adam update, in place. Throws ShapeError if sizes do
// not agree, NumericError on non-finite gradients.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state);

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 is fully specified by the standard, and
// all distributions are derived from its raw output by hand so that the same
// seed produces the same stream on every platform.
// ---------------------------------------------------------------------------

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform01();                        // [0, 1), 53-bit resolution
  double uniform(double lo, double hi);      // [lo, hi)
  double normal(double mean = 0.0, double sigma = 1.0);  // Box-Muller
  std::size_t below(std::size_t n);          // unbiased integer in [0, n)

  // Independent stream derived from (seed, salt); deterministic.
  RngStream child(std::uint64_t salt) const;

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 gen_;
};

// Fisher-Yates shuffle driven by RngStream (std::shuffle is not
// implementation-defined-free, so we roll our own).
template <typename T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    std::size_t j = rng.below(i + 1);
    std::swap(items[i], items[j]);
  }
}

// k distinct indices sampled from [0, n) in selection order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng);

// Kaiming-uniform init: entries ~ U(-bound, bound) with bound = sqrt(6/fan_in).
// fan_in is passed explicitly so callers can decouple it from the shape.
Matrix kaiming_uniform(std::size_t fan_in, std::size_t rows, std::size_t cols, RngStream& rng);

// ---------------------------------------------------------------------------
// Gradient checking support. `loss` re-evaluates the scalar objective using
// the live parameter values in `theta`; this only relies on forward passes,
// so it stays independent of any analytic gradient it is used to verify.
// ---------------------------------------------------------------------------

std::vector<double> central_differences(const std::function<double()>& loss,
                                        std::span<double> theta, double step = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-6)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace remember
