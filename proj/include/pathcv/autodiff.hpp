#pragma once

// Reverse-mode automatic differentiation on a scalar Wengert tape.
//
// Every arithmetic result is recorded as a node holding the indices of its
// parents and the local partial derivative with respect to each parent. A
// single reverse sweep from a seeded output accumulates adjoints for every
// node reachable from it. Tapes are single-owner; use one per thread.
//
// The math functions below are overloaded for both `double` and `Var` so
// that model code can be written once as a template and evaluated either
// plainly or on a tape. Both paths apply the same input clamping and the
// same non-finite checks, so their values agree bit for bit.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathcv/errors.hpp"

namespace pathcv::ad {

enum class Op : std::uint8_t {
  input,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  tanh,
  relu,
  square,
  sqrt,
  softplus,
  dot,
  sum,
};

const char* op_name(Op op) noexcept;

/// exp and tanh clamp their argument to [-kClampBound, kClampBound].
inline constexpr double kClampBound = 60.0;

class Tape;

/// A scalar that is either a constant (no tape) or a node on a tape.
struct Var {
  double val = 0.0;
  std::int32_t id = -1;
  Tape* tape = nullptr;

  Var() = default;
  Var(double constant) : val(constant) {}  // NOLINT: constants mix implicitly
  Var(double v, std::int32_t node, Tape* t) : val(v), id(node), tape(t) {}

  bool is_constant() const noexcept { return tape == nullptr; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers an independent variable.
  Var variable(double value);
  std::vector<Var> variables(std::span<const double> values);

  Var unary(Op op, double value, const Var& a, double da);
  Var binary(Op op, double value, const Var& a, double da, const Var& b, double db);
  /// Node whose parents are `xs` with partials `dxs` (constant entries skipped).
  Var nary(Op op, double value, std::span<const Var> xs, std::span<const double> dxs);
  /// Inner product; parents are the non-constant entries of both operands.
  Var dot(std::span<const Var> w, std::span<const Var> x);
  Var dot(std::span<const Var> w, std::span<const double> x);

  /// Reverse sweep seeded at `output`. Overwrites any previous adjoints.
  void backward(const Var& output);
  double adjoint(const Var& v) const;

  /// Drops all nodes but keeps allocated capacity.
  void clear() noexcept;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::uint32_t first;
    std::uint32_t count;
    Op op;
  };

  Var open(Op op, double value);
  void edge(const Var& parent, double partial);

  std::vector<Node> nodes_;
  std::vector<std::int32_t> parents_;
  std::vector<double> partials_;
  std::vector<double> adjoints_;
};

[[noreturn]] void throw_non_finite(Op op);

inline double checked(Op op, double v) {
  if (!std::isfinite(v)) throw_non_finite(op);
  return v;
}

inline double value(double x) noexcept { return x; }
inline double value(const Var& x) noexcept { return x.val; }

Tape* common_tape(const Var& a, const Var& b);

// ---- arithmetic -----------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  double v = checked(Op::add, a.val + b.val);
  Tape* t = common_tape(a, b);
  return t ? t->binary(Op::add, v, a, 1.0, b, 1.0) : Var(v);
}
inline Var operator-(const Var& a, const Var& b) {
  double v = checked(Op::sub, a.val - b.val);
  Tape* t = common_tape(a, b);
  return t ? t->binary(Op::sub, v, a, 1.0, b, -1.0) : Var(v);
}
inline Var operator*(const Var& a, const Var& b) {
  double v = checked(Op::mul, a.val * b.val);
  Tape* t = common_tape(a, b);
  return t ? t->binary(Op::mul, v, a, b.val, b, a.val) : Var(v);
}
inline Var operator/(const Var& a, const Var& b) {
  double v = checked(Op::div, a.val / b.val);
  Tape* t = common_tape(a, b);
  return t ? t->binary(Op::div, v, a, 1.0 / b.val, b, -v / b.val) : Var(v);
}
inline Var operator-(const Var& a) {
  return a.tape ? a.tape->unary(Op::neg, -a.val, a, -1.0) : Var(-a.val);
}

inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

// ---- elementary functions --------------------------------------------------

inline bool clamped(double x) noexcept { return x < -kClampBound || x > kClampBound; }
inline double clamp_arg(double x) noexcept {
  return x < -kClampBound ? -kClampBound : (x > kClampBound ? kClampBound : x);
}

inline double exp(double x) { return checked(Op::exp, std::exp(clamp_arg(x))); }
inline Var exp(const Var& x) {
  double v = exp(x.val);
  return x.tape ? x.tape->unary(Op::exp, v, x, clamped(x.val) ? 0.0 : v) : Var(v);
}

inline double log(double x) { return checked(Op::log, std::log(x)); }
inline Var log(const Var& x) {
  double v = log(x.val);
  return x.tape ? x.tape->unary(Op::log, v, x, 1.0 / x.val) : Var(v);
}

inline double tanh(double x) { return checked(Op::tanh, std::tanh(clamp_arg(x))); }
inline Var tanh(const Var& x) {
  double v = tanh(x.val);
  return x.tape ? x.tape->unary(Op::tanh, v, x, clamped(x.val) ? 0.0 : 1.0 - v * v) : Var(v);
}

/// max(x, 0); the derivative at exactly 0 is taken to be 0.
inline double relu(double x) { return checked(Op::relu, x > 0.0 ? x : 0.0); }
inline Var relu(const Var& x) {
  double v = relu(x.val);
  return x.tape ? x.tape->unary(Op::relu, v, x, x.val > 0.0 ? 1.0 : 0.0) : Var(v);
}

inline double square(double x) { return checked(Op::square, x * x); }
inline Var square(const Var& x) {
  double v = square(x.val);
  return x.tape ? x.tape->unary(Op::square, v, x, 2.0 * x.val) : Var(v);
}

inline double sqrt(double x) { return checked(Op::sqrt, std::sqrt(x)); }
inline Var sqrt(const Var& x) {
  double v = sqrt(x.val);
  return x.tape ? x.tape->unary(Op::sqrt, v, x, checked(Op::sqrt, 0.5 / v)) : Var(v);
}

/// log(1 + e^x), evaluated stably.
inline double softplus(double x) {
  return checked(Op::softplus, std::log1p(std::exp(-std::abs(x))) + (x > 0.0 ? x : 0.0));
}
inline Var softplus(const Var& x) {
  double v = softplus(x.val);
  if (!x.tape) return Var(v);
  double sig = x.val >= 0.0 ? 1.0 / (1.0 + std::exp(-x.val))
                            : std::exp(x.val) / (1.0 + std::exp(x.val));
  return x.tape->unary(Op::softplus, v, x, sig);
}

// ---- reductions -------------------------------------------------------------

inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return checked(Op::sum, s);
}
Var sum(std::span<const Var> xs);

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArityError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return checked(Op::dot, s);
}
Var dot(std::span<const Var> a, std::span<const Var> b);
Var dot(std::span<const Var> a, std::span<const double> b);

// ---- drivers ------------------------------------------------------------------

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Value and gradient of a scalar function `f(std::span<const Var>) -> Var`.
/// The tape is cleared first and left holding the recorded graph.
template <class F>
ValueAndGradient grad(Tape& tape, F&& f, std::span<const double> x) {
  tape.clear();
  std::vector<Var> vars = tape.variables(x);
  Var out = f(std::span<const Var>(vars));
  ValueAndGradient result{out.val, std::vector<double>(x.size(), 0.0)};
  if (out.tape == nullptr) return result;
  tape.backward(out);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    result.gradient[i] = checked(Op::input, tape.adjoint(vars[i]));
  }
  return result;
}

template <class F>
ValueAndGradient grad(F&& f, std::span<const double> x) {
  Tape tape;
  return grad(tape, std::forward<F>(f), x);
}

/// Max over coordinates of |AD - central FD| / (|central FD| + 1e-12).
/// `f` must be callable with both `std::span<const Var>` and
/// `std::span<const double>` (a generic lambda).
template <class F>
double check_gradient_fd(F&& f, std::span<const double> x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient_fd: step must be positive");
  ValueAndGradient ad_result = grad(f, x);
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    double up = f(std::span<const double>(probe));
    probe[i] = x[i] - step;
    double down = f(std::span<const double>(probe));
    probe[i] = x[i];
    double fd = (up - down) / (2.0 * step);
    double err = std::abs(ad_result.gradient[i] - fd) / (std::abs(fd) + 1e-12);
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace pathcv::ad
