#include "remember/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace remember {

namespace {

std::string shape_msg(const char* what, std::size_t a, std::size_t b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: %zu vs %zu", what, a, b);
  return buf;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

// splitmix64; used to derive child stream seeds.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void ensure_all_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value encountered");
    }
  }
}

// --- containers -------------------------------------------------------------

Vector::Vector(std::size_t size, double fill) : data_(size, fill) {
  ensure_all_finite(data_, "Vector");
}

Vector::Vector(std::vector<double> values) : data_(std::move(values)) {
  ensure_all_finite(data_, "Vector");
}

Vector::Vector(std::initializer_list<double> values) : data_(values) {
  ensure_all_finite(data_, "Vector");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  ensure_all_finite(data_, "Matrix");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError(shape_msg("Matrix: value count does not match shape", data_.size(), rows_ * cols_));
  }
  ensure_all_finite(data_, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::span<double> Matrix::row(std::size_t r) {
  return std::span<double>(data_.data() + r * cols_, cols_);
}

std::span<const double> Matrix::row(std::size_t r) const {
  return std::span<const double>(data_.data() + r * cols_, cols_);
}

// --- elementary ops ----------------------------------------------------------

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError(shape_msg("dot: length mismatch", a.size(), b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

double cosine_sim(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw ShapeError(shape_msg("cosine_sim: length mismatch", a.size(), b.size()));
  }
  double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_sim: zero vector");
  double value = dot(a, b) / (na * nb);
  if (!std::isfinite(value)) throw NumericError("cosine_sim: non-finite result");
  return value;
}

Vector softmax(const Vector& logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  double max = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) max = std::max(max, logits[i]);
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
  ensure_all_finite(out.data(), "softmax");
  return out;
}

Vector l2_normalized(const Vector& a) {
  double n = norm(a);
  if (n == 0.0) throw NumericError("l2_normalized: zero vector");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
  ensure_all_finite(out.data(), "l2_normalized");
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError(shape_msg("matmul: inner dims", a.cols(), b.rows()));
  Matrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError(shape_msg("matmul_transpose_a: outer dims", a.rows(), b.rows()));
  }
  Matrix out(a.cols(), b.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(shape_msg("matmul_transpose_b: inner dims", a.cols(), b.cols()));
  }
  Matrix out(a.rows(), b.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) throw ShapeError(shape_msg("matvec: dims", a.cols(), x.size()));
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

Vector vecmat(const Vector& x, const Matrix& a) {
  if (x.size() != a.rows()) throw ShapeError(shape_msg("vecmat: dims", x.size(), a.rows()));
  Vector out(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += xi * a(i, j);
  }
  return out;
}

// --- dense layer -------------------------------------------------------------

Matrix dense_forward(const Matrix& x, const Matrix& w, const Vector& b,
                     Activation activation, DenseCache* cache) {
  if (x.cols() != w.rows()) throw ShapeError(shape_msg("dense_forward: x/w", x.cols(), w.rows()));
  if (w.cols() != b.size()) throw ShapeError(shape_msg("dense_forward: w/b", w.cols(), b.size()));
  Matrix pre = matmul(x, w);
  for (std::size_t i = 0; i < pre.rows(); ++i) {
    for (std::size_t j = 0; j < pre.cols(); ++j) pre(i, j) += b[j];
  }
  ensure_all_finite(pre.data(), "dense_forward");
  Matrix out = pre;
  if (activation == Activation::Relu) {
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  }
  if (cache) {
    cache->x = x;
    cache->w = w;
    cache->pre_activation = std::move(pre);
    cache->activation = activation;
    cache->valid = true;
  }
  return out;
}

DenseGrads dense_backward(const Matrix& upstream, const DenseCache& cache) {
  if (!cache.valid) throw StateError("dense_backward: no forward cache");
  const Matrix& pre = cache.pre_activation;
  if (upstream.rows() != pre.rows() || upstream.cols() != pre.cols()) {
    throw ShapeError("dense_backward: upstream shape does not match forward output");
  }
  // d(activation) | ReLU subgradient at 0 is 0.
  Matrix g_pre = upstream;
  if (cache.activation == Activation::Relu) {
    for (std::size_t i = 0; i < g_pre.rows(); ++i) {
      for (std::size_t j = 0; j < g_pre.cols(); ++j) {
        if (pre(i, j) <= 0.0) g_pre(i, j) = 0.0;
      }
    }
  }
  DenseGrads grads;
  grads.w = matmul_transpose_a(cache.x, g_pre);  // x^T * g_pre
  grads.x = matmul_transpose_b(g_pre, cache.w);  // g_pre * w^T
  grads.b = Vector(g_pre.cols());
  for (std::size_t i = 0; i < g_pre.rows(); ++i) {
    for (std::size_t j = 0; j < g_pre.cols(); ++j) grads.b[j] += g_pre(i, j);
  }
  return grads;
}

CrossEntropyResult cross_entropy(const Vector& logits, std::size_t target) {
  if (logits.empty()) throw ShapeError("cross_entropy: empty logits");
  if (target >= logits.size()) throw DomainError("cross_entropy: target class out of range");
  double max = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) max = std::max(max, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - max);
  double lse = max + std::log(sum);

  CrossEntropyResult r;
  r.loss = lse - logits[target];
  r.grad = Vector(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.grad[i] = std::exp(logits[i] - lse) - (i == target ? 1.0 : 0.0);
  }
  if (!std::isfinite(r.loss)) throw NumericError("cross_entropy: non-finite loss");
  return r;
}

// --- Adam ---------------------------------------------------------------------

AdamState::AdamState(std::size_t n, const AdamConfig& c)
    : config(c), m(n, 0.0), v(n, 0.0) {}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state) {
  if (param.size() != grad.size()) {
    throw ShapeError(shape_msg("adam_step: param/grad", param.size(), grad.size()));
  }
  if (param.size() != state.m.size() || param.size() != state.v.size()) {
    throw ShapeError(shape_msg("adam_step: state shape", param.size(), state.m.size()));
  }
  ensure_all_finite(grad, "adam_step: grad");
  const AdamConfig& c = state.config;
  state.t += 1;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
  ensure_all_finite(param, "adam_step: param");
}

// --- RNG -----------------------------------------------------------------------

RngStream::RngStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

std::uint64_t RngStream::next_u64() { return gen_(); }

double RngStream::uniform01() {
  // Top 53 bits -> [0, 1). Exact on every IEEE-754 platform.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  if (!(lo < hi)) throw DomainError("RngStream::uniform: empty range");
  return lo + uniform01() * (hi - lo);
}

double RngStream::normal(double mean, double sigma) {
  // Box-Muller. Two uniforms per call, no cached spare, so the mapping from
  // call sequence to raw draws is trivial to reason about.
  double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sigma * r * std::cos(kTwoPi * u2);
}

std::size_t RngStream::below(std::size_t n) {
  if (n == 0) throw DomainError("RngStream::below: n == 0");
  // Rejection sampling to avoid modulo bias.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

RngStream RngStream::child(std::uint64_t salt) const {
  return RngStream(mix64(seed_ ^ mix64(salt)));
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng) {
  if (k > n) throw DomainError("sample_without_replacement: k > n");
  // Partial Fisher-Yates over an index array.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
    out.push_back(idx[i]);
  }
  return out;
}

Matrix kaiming_uniform(std::size_t fan_in, std::size_t rows, std::size_t cols, RngStream& rng) {
  if (fan_in == 0) throw DomainError("kaiming_uniform: fan_in == 0");
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

// --- gradient checking -----------------------------------------------------------

std::vector<double> central_differences(const std::function<double()>& loss,
                                        std::span<double> theta, double step) {
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double saved = theta[i];
    theta[i] = saved + step;
    double up = loss();
    theta[i] = saved - step;
    double down = loss();
    theta[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError(shape_msg("max_relative_error: length mismatch", analytic.size(), numeric.size()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-6});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace remember
