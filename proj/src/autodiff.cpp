#include "pathcv/autodiff.hpp"

namespace pathcv::ad {

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::input: return "input";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::square: return "square";
    case Op::sqrt: return "sqrt";
    case Op::softplus: return "softplus";
    case Op::dot: return "dot";
    case Op::sum: return "sum";
  }
  return "unknown";
}

void throw_non_finite(Op op) {
  throw NumericError(std::string("non-finite value in primitive '") + op_name(op) + "'");
}

Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape && b.tape && a.tape != b.tape) {
    throw std::logic_error("autodiff: operands recorded on different tapes");
  }
  return a.tape ? a.tape : b.tape;
}

Var Tape::open(Op op, double value) {
  checked(op, value);
  nodes_.push_back(Node{static_cast<std::uint32_t>(parents_.size()), 0, op});
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1), this);
}

void Tape::edge(const Var& parent, double partial) {
  if (parent.tape == nullptr) return;
  if (parent.tape != this) throw std::logic_error("autodiff: operand recorded on a different tape");
  checked(nodes_.back().op, partial);
  parents_.push_back(parent.id);
  partials_.push_back(partial);
  ++nodes_.back().count;
}

Var Tape::variable(double value) { return open(Op::input, value); }

std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(variable(v));
  return out;
}

Var Tape::unary(Op op, double value, const Var& a, double da) {
  Var out = open(op, value);
  edge(a, da);
  return out;
}

Var Tape::binary(Op op, double value, const Var& a, double da, const Var& b, double db) {
  Var out = open(op, value);
  edge(a, da);
  edge(b, db);
  return out;
}

Var Tape::nary(Op op, double value, std::span<const Var> xs, std::span<const double> dxs) {
  if (xs.size() != dxs.size()) throw ArityError("autodiff: parent/partial count mismatch");
  Var out = open(op, value);
  for (std::size_t i = 0; i < xs.size(); ++i) edge(xs[i], dxs[i]);
  return out;
}

Var Tape::dot(std::span<const Var> w, std::span<const Var> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i].val * x[i].val;
  Var out = open(Op::dot, s);
  for (std::size_t i = 0; i < w.size(); ++i) {
    edge(w[i], x[i].val);
    edge(x[i], w[i].val);
  }
  return out;
}

Var Tape::dot(std::span<const Var> w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i].val * x[i];
  Var out = open(Op::dot, s);
  for (std::size_t i = 0; i < w.size(); ++i) edge(w[i], x[i]);
  return out;
}

void Tape::backward(const Var& output) {
  if (output.tape != this) throw std::logic_error("autodiff: output not recorded on this tape");
  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_[static_cast<std::size_t>(output.id)] = 1.0;
  for (std::int64_t i = output.id; i >= 0; --i) {
    const double a = adjoints_[static_cast<std::size_t>(i)];
    if (a == 0.0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const std::uint32_t end = n.first + n.count;
    for (std::uint32_t k = n.first; k < end; ++k) {
      adjoints_[static_cast<std::size_t>(parents_[k])] += a * partials_[k];
    }
  }
}

double Tape::adjoint(const Var& v) const {
  if (v.tape == nullptr) return 0.0;
  auto idx = static_cast<std::size_t>(v.id);
  return idx < adjoints_.size() ? adjoints_[idx] : 0.0;
}

void Tape::clear() noexcept {
  nodes_.clear();
  parents_.clear();
  partials_.clear();
  adjoints_.clear();
}

namespace {

Tape* find_tape(std::span<const Var> xs) {
  Tape* t = nullptr;
  for (const Var& x : xs) {
    if (x.tape) {
      if (t && t != x.tape) throw std::logic_error("autodiff: operands recorded on different tapes");
      t = x.tape;
    }
  }
  return t;
}

}  // namespace

Var sum(std::span<const Var> xs) {
  Tape* t = find_tape(xs);
  double s = 0.0;
  for (const Var& x : xs) s += x.val;
  if (!t) return Var(checked(Op::sum, s));
  std::vector<double> ones(xs.size(), 1.0);
  return t->nary(Op::sum, s, xs, ones);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw ArityError("dot: length mismatch");
  Tape* ta = find_tape(a);
  Tape* tb = find_tape(b);
  if (ta && tb && ta != tb) throw std::logic_error("autodiff: operands recorded on different tapes");
  Tape* t = ta ? ta : tb;
  if (!t) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].val * b[i].val;
    return Var(checked(Op::dot, s));
  }
  return t->dot(a, b);
}

Var dot(std::span<const Var> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArityError("dot: length mismatch");
  Tape* t = find_tape(a);
  if (!t) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].val * b[i];
    return Var(checked(Op::dot, s));
  }
  return t->dot(a, b);
}

}  // namespace pathcv::ad
