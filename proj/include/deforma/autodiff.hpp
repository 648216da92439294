#pragma once

// Reverse-mode differentiation over a linear tape.
//
// Scalar operations record one node with at most two parents and their local
// partial derivatives. Vector-valued kernels (the coordinate networks) record
// a single custom node with many inputs and outputs and supply their own
// vector-Jacobian product. Operations on Vars use the tape that is active on
// the calling thread; see Tape::Scope.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "deforma/common.hpp"

namespace deforma {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_prime(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}
inline double silu_second(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
}
inline double square(double x) { return x * x; }
inline double value_of(double x) { return x; }

namespace ad {

class Tape;

/// A scalar that is either a constant or a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: constants convert implicitly

  double value() const { return value_; }
  bool recorded() const { return index_ >= 0; }
  std::int32_t index() const { return index_; }
  std::uint32_t tape_id() const { return tape_id_; }

 private:
  friend class Tape;
  double value_ = 0.0;
  std::int32_t index_ = -1;
  std::uint32_t tape_id_ = 0;
};

/// Adjoints of every recorded node after a backward sweep.
class Adjoints {
 public:
  Adjoints() = default;
  Adjoints(std::vector<double> adj, std::uint32_t tape_id) : adj_(std::move(adj)), tape_id_(tape_id) {}

  /// d(output)/d(v). Throws InvalidArgument for values never recorded on
  /// the tape that produced these adjoints.
  double operator[](const Var& v) const;
  std::vector<double> of(std::span<const Var> vs) const;
  std::span<const double> raw() const { return adj_; }

 private:
  std::vector<double> adj_;
  std::uint32_t tape_id_ = 0;
};

/// Vector-Jacobian product for a multi-output node. `output_adjoints` holds
/// the adjoints of the node's outputs; implementations add their input
/// contributions into `adjoints` at the input indices they captured.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual void backward(std::span<const double> output_adjoints, std::span<double> adjoints) = 0;
};

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Makes a tape the active one for the current thread for the lifetime
  /// of the scope; restores the previous tape on exit.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    ~Scope();

   private:
    Tape* previous_;
  };

  static Tape* active();
  /// The active tape; throws if none is active.
  static Tape& require_active();

  Var variable(double value);
  std::vector<Var> variables(std::span<const double> values);

  Var record(double value, const Var& a, double da);
  Var record(double value, const Var& a, double da, const Var& b, double db);

  /// Records a node with `out_values.size()` outputs; `op` receives their
  /// adjoints once every consumer has been swept.
  std::vector<Var> record_custom(std::span<const double> out_values, std::unique_ptr<CustomOp> op);

  /// Reverse sweep seeded with d(output)/d(output) = 1.
  Adjoints backward(const Var& output) const;

  std::size_t size() const { return nodes_.size(); }
  std::uint32_t id() const { return id_; }
  void clear();

  /// Index of `v` on this tape, -1 for constants; throws for foreign values.
  std::int32_t checked_index(const Var& v) const;

 private:
  struct Node {
    std::int32_t a = -1;
    std::int32_t b = -1;
    double da = 0.0;
    double db = 0.0;
    std::int32_t custom = -1;  // set on the first output of a custom op
  };
  struct CustomEntry {
    std::int32_t first_output;
    std::int32_t count;
    std::unique_ptr<CustomOp> op;
  };

  Var make(double value, std::int32_t index) const;

  std::vector<Node> nodes_;
  std::vector<CustomEntry> customs_;
  std::uint32_t id_;
};

// Scalar operators. Constant-only expressions are folded without recording.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var silu(const Var& a);
Var silu_prime(const Var& a);
Var square(const Var& a);

inline double value_of(const Var& v) { return v.value(); }

}  // namespace ad

using ad::Var;

}  // namespace deforma
