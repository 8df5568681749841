#include "nhaff/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace nhaff {

struct ExprNode {
  NodeKind kind = NodeKind::Number;
  double value = 0.0;
  std::string name;
  Func func = Func::Sin;
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
};

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

namespace {

const std::string& empty_string() {
  static const std::string s;
  return s;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string node_to_string(const ExprNode& n) {
  switch (n.kind) {
    case NodeKind::Number: {
      std::string s = format_number(n.value);
      return n.value < 0 || std::signbit(n.value) ? "(" + s + ")" : s;
    }
    case NodeKind::Variable:
      return n.name;
    case NodeKind::Negate:
      return "(-" + node_to_string(*n.lhs) + ")";
    case NodeKind::Call:
      return std::string(func_name(n.func)) + "(" + node_to_string(*n.lhs) + ")";
    default:
      break;
  }
  const char* op = "+";
  switch (n.kind) {
    case NodeKind::Sub: op = " - "; break;
    case NodeKind::Mul: op = "*"; break;
    case NodeKind::Div: op = "/"; break;
    case NodeKind::Pow: op = "^"; break;
    default: op = " + "; break;
  }
  return "(" + node_to_string(*n.lhs) + op + node_to_string(*n.rhs) + ")";
}

[[noreturn]] void domain_error(const char* what, const ExprNode* source) {
  throw EvalError(std::string(what) + " in '" + (source ? node_to_string(*source) : "?") + "'");
}

double checked_div(double a, double b, const ExprNode* src) {
  if (b == 0.0) domain_error("division by zero", src);
  return a / b;
}

double checked_pow(double a, double b, const ExprNode* src) {
  double r = std::pow(a, b);
  if (std::isnan(r) && !std::isnan(a) && !std::isnan(b)) domain_error("non-real power", src);
  if (a == 0.0 && b < 0.0) domain_error("division by zero", src);
  return r;
}

double apply_func(Func f, double x, const ExprNode* src) {
  switch (f) {
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
    case Func::Tan: return std::tan(x);
    case Func::Sqrt:
      if (x < 0.0) domain_error("sqrt of negative value", src);
      return std::sqrt(x);
    case Func::Exp: return std::exp(x);
    case Func::Log:
      if (!(x > 0.0)) domain_error("log of non-positive value", src);
      return std::log(x);
  }
  return 0.0;
}

// ---------------------------------------------------------------- parser

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  // expr := term (("+"|"-") term)*
  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      if (accept('+')) e = Expr::binary(NodeKind::Add, e, parse_term());
      else if (accept('-')) e = Expr::binary(NodeKind::Sub, e, parse_term());
      else return e;
    }
  }

  // term := unary (("*"|"/") unary)*
  Expr parse_term() {
    Expr e = parse_unary();
    for (;;) {
      if (accept('*')) e = Expr::binary(NodeKind::Mul, e, parse_unary());
      else if (accept('/')) e = Expr::binary(NodeKind::Div, e, parse_unary());
      else return e;
    }
  }

  // unary := "-" unary | power
  Expr parse_unary() {
    if (accept('-')) return Expr::unary(NodeKind::Negate, parse_unary());
    return parse_power();
  }

  // power := atom ("^" unary)?     right-associative, binds tighter than unary minus
  Expr parse_power() {
    Expr base = parse_atom();
    if (accept('^')) return Expr::binary(NodeKind::Pow, base, parse_unary());
    return base;
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == '(') {
        static constexpr std::array<std::pair<std::string_view, Func>, 6> table{{
            {"sin", Func::Sin}, {"cos", Func::Cos}, {"tan", Func::Tan},
            {"sqrt", Func::Sqrt}, {"exp", Func::Exp}, {"log", Func::Log}}};
        const Func* found = nullptr;
        for (const auto& [fname, f] : table)
          if (fname == name) found = &f;
        if (!found) throw ParseError("unknown function '" + name + "'", start);
        ++pos_;
        Expr arg = parse_expr();
        if (!accept(')')) fail("expected ')' after function argument");
        return Expr::call(*found, arg);
      }
      return Expr::variable(std::move(name));
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr parse_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::number(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------- Expr

Expr::Expr() {
  static const std::shared_ptr<const ExprNode> zero = std::make_shared<const ExprNode>();
  node_ = zero;
}

Expr Expr::number(double value) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Number;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Variable;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::unary(NodeKind kind, Expr operand) {
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->lhs = operand.node_;
  return Expr(std::move(n));
}

Expr Expr::binary(NodeKind kind, Expr lhs, Expr rhs) {
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->lhs = lhs.node_;
  n->rhs = rhs.node_;
  return Expr(std::move(n));
}

Expr Expr::call(Func func, Expr arg) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Call;
  n->func = func;
  n->lhs = arg.node_;
  return Expr(std::move(n));
}

NodeKind Expr::kind() const noexcept { return node_->kind; }
bool Expr::is_zero() const noexcept { return is_number() && node_->value == 0.0; }
bool Expr::is_one() const noexcept { return is_number() && node_->value == 1.0; }
double Expr::number_value() const noexcept { return node_->value; }
const std::string& Expr::name() const noexcept {
  return kind() == NodeKind::Variable ? node_->name : empty_string();
}
Func Expr::func() const noexcept { return node_->func; }
Expr Expr::lhs() const { return node_->lhs ? Expr(node_->lhs) : Expr(); }
Expr Expr::rhs() const { return node_->rhs ? Expr(node_->rhs) : Expr(); }

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.number_value() + b.number_value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return Expr::binary(NodeKind::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.number_value() - b.number_value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return Expr::binary(NodeKind::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.number_value() * b.number_value());
  if (a.is_zero() || b.is_zero()) return Expr::number(0.0);
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  return Expr::binary(NodeKind::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number() && b.number_value() != 0.0)
    return Expr::number(a.number_value() / b.number_value());
  if (a.is_zero() && !(b.is_zero())) return Expr::number(0.0);
  if (b.is_one()) return a;
  return Expr::binary(NodeKind::Div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_number()) return Expr::number(-a.number_value());
  if (a.kind() == NodeKind::Negate) return a.lhs();
  return Expr::unary(NodeKind::Negate, a);
}

Expr pow(const Expr& base, const Expr& exponent) {
  if (exponent.is_zero()) return Expr::number(1.0);
  if (exponent.is_one()) return base;
  if (base.is_number() && exponent.is_number()) {
    double r = std::pow(base.number_value(), exponent.number_value());
    if (std::isfinite(r)) return Expr::number(r);
  }
  return Expr::binary(NodeKind::Pow, base, exponent);
}

Expr apply(Func func, const Expr& arg) {
  if (arg.is_number()) {
    double x = arg.number_value();
    bool ok = !(func == Func::Sqrt && x < 0) && !(func == Func::Log && !(x > 0));
    if (ok) return Expr::number(apply_func(func, x, nullptr));
  }
  return Expr::call(func, arg);
}

std::string_view func_name(Func f) {
  switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Tan: return "tan";
    case Func::Sqrt: return "sqrt";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
  }
  return "?";
}

Expr parse(std::string_view text) { return Parser(text).parse_all(); }

double eval(const Expr& e, const Bindings& bindings) {
  const ExprNode* n = e.node();
  switch (n->kind) {
    case NodeKind::Number: return n->value;
    case NodeKind::Variable: {
      auto it = bindings.find(n->name);
      if (it == bindings.end()) throw EvalError("unbound name '" + n->name + "'");
      return it->second;
    }
    case NodeKind::Negate: return -eval(e.lhs(), bindings);
    case NodeKind::Add: return eval(e.lhs(), bindings) + eval(e.rhs(), bindings);
    case NodeKind::Sub: return eval(e.lhs(), bindings) - eval(e.rhs(), bindings);
    case NodeKind::Mul: return eval(e.lhs(), bindings) * eval(e.rhs(), bindings);
    case NodeKind::Div: return checked_div(eval(e.lhs(), bindings), eval(e.rhs(), bindings), n);
    case NodeKind::Pow: return checked_pow(eval(e.lhs(), bindings), eval(e.rhs(), bindings), n);
    case NodeKind::Call: return apply_func(n->func, eval(e.lhs(), bindings), n);
  }
  return 0.0;
}

bool depends_on(const Expr& e, std::string_view var) {
  switch (e.kind()) {
    case NodeKind::Number: return false;
    case NodeKind::Variable: return e.name() == var;
    case NodeKind::Negate:
    case NodeKind::Call: return depends_on(e.lhs(), var);
    default: return depends_on(e.lhs(), var) || depends_on(e.rhs(), var);
  }
}

Expr diff(const Expr& e, std::string_view var) {
  switch (e.kind()) {
    case NodeKind::Number: return Expr::number(0.0);
    case NodeKind::Variable: return Expr::number(e.name() == var ? 1.0 : 0.0);
    case NodeKind::Negate: return -diff(e.lhs(), var);
    case NodeKind::Add: return diff(e.lhs(), var) + diff(e.rhs(), var);
    case NodeKind::Sub: return diff(e.lhs(), var) - diff(e.rhs(), var);
    case NodeKind::Mul: {
      const Expr& u = e.lhs();
      const Expr& w = e.rhs();
      return diff(u, var) * w + u * diff(w, var);
    }
    case NodeKind::Div: {
      const Expr& u = e.lhs();
      const Expr& w = e.rhs();
      Expr du = diff(u, var);
      Expr dw = diff(w, var);
      if (dw.is_zero()) return du / w;
      return (du * w - u * dw) / pow(w, Expr::number(2.0));
    }
    case NodeKind::Pow: {
      const Expr& u = e.lhs();
      const Expr& w = e.rhs();
      Expr du = diff(u, var);
      Expr result = Expr::number(0.0);
      if (!du.is_zero()) result = w * pow(u, w - Expr::number(1.0)) * du;
      if (depends_on(w, var)) result = result + e * apply(Func::Log, u) * diff(w, var);
      return result;
    }
    case NodeKind::Call: {
      const Expr& u = e.lhs();
      Expr du = diff(u, var);
      if (du.is_zero()) return du;
      switch (e.func()) {
        case Func::Sin: return apply(Func::Cos, u) * du;
        case Func::Cos: return -(apply(Func::Sin, u) * du);
        case Func::Tan: return du / pow(apply(Func::Cos, u), Expr::number(2.0));
        case Func::Sqrt: return du / (Expr::number(2.0) * e);
        case Func::Exp: return e * du;
        case Func::Log: return du / u;
      }
    }
  }
  return Expr::number(0.0);
}

Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& repl) {
  switch (e.kind()) {
    case NodeKind::Number: return e;
    case NodeKind::Variable: {
      auto it = repl.find(e.name());
      return it == repl.end() ? e : it->second;
    }
    case NodeKind::Negate: return -substitute(e.lhs(), repl);
    case NodeKind::Call: return apply(e.func(), substitute(e.lhs(), repl));
    case NodeKind::Add: return substitute(e.lhs(), repl) + substitute(e.rhs(), repl);
    case NodeKind::Sub: return substitute(e.lhs(), repl) - substitute(e.rhs(), repl);
    case NodeKind::Mul: return substitute(e.lhs(), repl) * substitute(e.rhs(), repl);
    case NodeKind::Div: return substitute(e.lhs(), repl) / substitute(e.rhs(), repl);
    case NodeKind::Pow: return pow(substitute(e.lhs(), repl), substitute(e.rhs(), repl));
  }
  return e;
}

std::string to_string(const Expr& e) { return node_to_string(*e.node()); }

namespace {
void collect_names(const Expr& e, std::set<std::string, std::less<>>& out) {
  switch (e.kind()) {
    case NodeKind::Number: return;
    case NodeKind::Variable: out.insert(e.name()); return;
    case NodeKind::Negate:
    case NodeKind::Call: collect_names(e.lhs(), out); return;
    default:
      collect_names(e.lhs(), out);
      collect_names(e.rhs(), out);
  }
}
}  // namespace

std::set<std::string, std::less<>> free_names(const Expr& e) {
  std::set<std::string, std::less<>> out;
  collect_names(e, out);
  return out;
}

// ---------------------------------------------------------------- compiled

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> slots) {
  keepalive_.push_back(e);
  std::size_t depth = 0;
  emit(e, slots, depth, max_depth_);
  constant_ = e.is_number();
  value_ = constant_ ? e.number_value() : 0.0;
}

void CompiledExpr::emit(const Expr& e, std::span<const std::string> slots, std::size_t& depth,
                        std::size_t& max_depth) {
  const ExprNode* n = e.node();
  auto push = [&](Instr ins) {
    code_.push_back(ins);
  };
  switch (n->kind) {
    case NodeKind::Number:
      push({Op::Const, 0, n->value, n});
      max_depth = std::max(max_depth, ++depth);
      return;
    case NodeKind::Variable: {
      std::size_t idx = 0;
      while (idx < slots.size() && slots[idx] != n->name) ++idx;
      if (idx == slots.size()) throw EvalError("unbound name '" + n->name + "'");
      push({Op::Load, idx, 0.0, n});
      max_depth = std::max(max_depth, ++depth);
      return;
    }
    case NodeKind::Negate:
      emit(e.lhs(), slots, depth, max_depth);
      push({Op::Neg, 0, 0.0, n});
      return;
    case NodeKind::Call: {
      emit(e.lhs(), slots, depth, max_depth);
      Op op = Op::Sin;
      switch (n->func) {
        case Func::Sin: op = Op::Sin; break;
        case Func::Cos: op = Op::Cos; break;
        case Func::Tan: op = Op::Tan; break;
        case Func::Sqrt: op = Op::Sqrt; break;
        case Func::Exp: op = Op::Exp; break;
        case Func::Log: op = Op::Log; break;
      }
      push({op, 0, 0.0, n});
      return;
    }
    default:
      break;
  }
  emit(e.lhs(), slots, depth, max_depth);
  emit(e.rhs(), slots, depth, max_depth);
  Op op = Op::Add;
  switch (n->kind) {
    case NodeKind::Sub: op = Op::Sub; break;
    case NodeKind::Mul: op = Op::Mul; break;
    case NodeKind::Div: op = Op::Div; break;
    case NodeKind::Pow: op = Op::Pow; break;
    default: op = Op::Add; break;
  }
  push({op, 0, 0.0, n});
  --depth;
}

double CompiledExpr::operator()(std::span<const double> values) const {
  if (constant_) return value_;
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> inline_stack{};
  std::vector<double> heap_stack;
  double* stack = inline_stack.data();
  if (max_depth_ > kInline) {
    heap_stack.resize(max_depth_);
    stack = heap_stack.data();
  }
  std::size_t top = 0;
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case Op::Const: stack[top++] = ins.value; break;
      case Op::Load: stack[top++] = values[ins.slot]; break;
      case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
      case Op::Add: --top; stack[top - 1] += stack[top]; break;
      case Op::Sub: --top; stack[top - 1] -= stack[top]; break;
      case Op::Mul: --top; stack[top - 1] *= stack[top]; break;
      case Op::Div: --top; stack[top - 1] = checked_div(stack[top - 1], stack[top], ins.source); break;
      case Op::Pow: --top; stack[top - 1] = checked_pow(stack[top - 1], stack[top], ins.source); break;
      case Op::Sin: stack[top - 1] = std::sin(stack[top - 1]); break;
      case Op::Cos: stack[top - 1] = std::cos(stack[top - 1]); break;
      case Op::Tan: stack[top - 1] = std::tan(stack[top - 1]); break;
      case Op::Sqrt: stack[top - 1] = apply_func(Func::Sqrt, stack[top - 1], ins.source); break;
      case Op::Exp: stack[top - 1] = std::exp(stack[top - 1]); break;
      case Op::Log: stack[top - 1] = apply_func(Func::Log, stack[top - 1], ins.source); break;
    }
  }
  return stack[0];
}

}  // namespace nhaff
