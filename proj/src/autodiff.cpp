#include "deforma/autodiff.hpp"

#include <atomic>
#include <string>

namespace deforma::ad {

namespace {

thread_local Tape* g_active = nullptr;
std::atomic<std::uint32_t> g_next_tape_id{1};

}  // namespace

double Adjoints::operator[](const Var& v) const {
  if (!v.recorded() || v.tape_id() != tape_id_ || static_cast<std::size_t>(v.index()) >= adj_.size()) {
    throw InvalidArgument("gradient requested for a value that was not recorded on this tape");
  }
  return adj_[static_cast<std::size_t>(v.index())];
}

std::vector<double> Adjoints::of(std::span<const Var> vs) const {
  std::vector<double> out;
  out.reserve(vs.size());
  for (const Var& v : vs) out.push_back((*this)[v]);
  return out;
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tape::~Tape() {
  if (g_active == this) g_active = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active) { g_active = &tape; }
Tape::Scope::~Scope() { g_active = previous_; }

Tape* Tape::active() { return g_active; }

Tape& Tape::require_active() {
  if (g_active == nullptr) throw std::logic_error("no active tape on this thread");
  return *g_active;
}

Var Tape::make(double value, std::int32_t index) const {
  Var v(value);
  v.index_ = index;
  v.tape_id_ = id_;
  return v;
}

std::int32_t Tape::checked_index(const Var& v) const {
  if (!v.recorded()) return -1;
  if (v.tape_id_ != id_ || static_cast<std::size_t>(v.index_) >= nodes_.size()) {
    throw InvalidArgument("value belongs to a different tape");
  }
  return v.index_;
}

Var Tape::variable(double value) {
  nodes_.push_back(Node{});
  return make(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(variable(v));
  return out;
}

Var Tape::record(double value, const Var& a, double da) {
  const std::int32_t ia = checked_index(a);
  if (ia < 0) return Var(value);
  nodes_.push_back(Node{ia, -1, da, 0.0, -1});
  return make(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::record(double value, const Var& a, double da, const Var& b, double db) {
  const std::int32_t ia = checked_index(a);
  const std::int32_t ib = checked_index(b);
  if (ia < 0 && ib < 0) return Var(value);
  if (ia < 0) {
    nodes_.push_back(Node{ib, -1, db, 0.0, -1});
  } else if (ib < 0) {
    nodes_.push_back(Node{ia, -1, da, 0.0, -1});
  } else {
    nodes_.push_back(Node{ia, ib, da, db, -1});
  }
  return make(value, static_cast<std::int32_t>(nodes_.size() - 1));
}

std::vector<Var> Tape::record_custom(std::span<const double> out_values, std::unique_ptr<CustomOp> op) {
  std::vector<Var> out;
  out.reserve(out_values.size());
  if (out_values.empty()) return out;
  const auto first = static_cast<std::int32_t>(nodes_.size());
  for (double v : out_values) {
    nodes_.push_back(Node{});
    out.push_back(make(v, static_cast<std::int32_t>(nodes_.size() - 1)));
  }
  nodes_[static_cast<std::size_t>(first)].custom = static_cast<std::int32_t>(customs_.size());
  customs_.push_back(CustomEntry{first, static_cast<std::int32_t>(out_values.size()), std::move(op)});
  return out;
}

Adjoints Tape::backward(const Var& output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  const std::int32_t start = checked_index(output);
  if (start < 0) return Adjoints(std::move(adj), id_);
  adj[static_cast<std::size_t>(start)] = 1.0;
  for (std::int32_t i = start; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.custom >= 0) {
      const CustomEntry& c = customs_[static_cast<std::size_t>(n.custom)];
      std::span<const double> out_adj(adj.data() + c.first_output, static_cast<std::size_t>(c.count));
      bool any = false;
      for (double g : out_adj) any = any || g != 0.0;
      if (any) c.op->backward(out_adj, adj);
      continue;
    }
    const double g = adj[static_cast<std::size_t>(i)];
    if (g == 0.0) continue;
    if (n.a >= 0) adj[static_cast<std::size_t>(n.a)] += g * n.da;
    if (n.b >= 0) adj[static_cast<std::size_t>(n.b)] += g * n.db;
  }
  return Adjoints(std::move(adj), id_);
}

void Tape::clear() {
  nodes_.clear();
  customs_.clear();
  id_ = g_next_tape_id.fetch_add(1);
}

namespace {

inline bool constant(const Var& a) { return !a.recorded(); }
inline bool constant(const Var& a, const Var& b) { return !a.recorded() && !b.recorded(); }

}  // namespace

Var operator+(const Var& a, const Var& b) {
  const double v = a.value() + b.value();
  if (constant(a, b)) return Var(v);
  return Tape::require_active().record(v, a, 1.0, b, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  const double v = a.value() - b.value();
  if (constant(a, b)) return Var(v);
  return Tape::require_active().record(v, a, 1.0, b, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  const double v = a.value() * b.value();
  if (constant(a, b)) return Var(v);
  return Tape::require_active().record(v, a, b.value(), b, a.value());
}

Var operator/(const Var& a, const Var& b) {
  const double v = a.value() / b.value();
  if (constant(a, b)) return Var(v);
  const double inv = 1.0 / b.value();
  return Tape::require_active().record(v, a, inv, b, -v * inv);
}

Var operator-(const Var& a) {
  if (constant(a)) return Var(-a.value());
  return Tape::require_active().record(-a.value(), a, -1.0);
}

#define DEFORMA_UNARY(name, value_expr, partial_expr)             \
  Var name(const Var& a) {                                        \
    const double x = a.value();                                   \
    const double v = (value_expr);                                \
    if (constant(a)) return Var(v);                               \
    return Tape::require_active().record(v, a, (partial_expr));   \
  }

DEFORMA_UNARY(sin, std::sin(x), std::cos(x))
DEFORMA_UNARY(cos, std::cos(x), -std::sin(x))
DEFORMA_UNARY(exp, std::exp(x), v)
DEFORMA_UNARY(log, std::log(x), 1.0 / x)
DEFORMA_UNARY(sqrt, std::sqrt(x), 0.5 / v)
DEFORMA_UNARY(tanh, std::tanh(x), 1.0 - v * v)
DEFORMA_UNARY(sigmoid, deforma::sigmoid(x), v * (1.0 - v))
DEFORMA_UNARY(softplus, deforma::softplus(x), deforma::sigmoid(x))
DEFORMA_UNARY(silu, deforma::silu(x), deforma::silu_prime(x))
DEFORMA_UNARY(silu_prime, deforma::silu_prime(x), deforma::silu_second(x))
DEFORMA_UNARY(square, x * x, 2.0 * x)

#undef DEFORMA_UNARY

}  // namespace deforma::ad
