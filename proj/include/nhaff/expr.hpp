#pragma once

// Small expression language: parse, evaluate, differentiate.
//
// Expressions are immutable trees shared by pointer. Model ingredients
// (kinetic matrix, gyrostatic form, potential, constraint rows) are stored as
// Expr so that exact partial derivatives are available downstream.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nhaff {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Func { Sin, Cos, Tan, Sqrt, Exp, Log };

enum class NodeKind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };

struct ExprNode;

class Expr {
 public:
  /// The literal 0.
  Expr();

  static Expr number(double value);
  static Expr variable(std::string name);
  static Expr unary(NodeKind kind, Expr operand);
  static Expr binary(NodeKind kind, Expr lhs, Expr rhs);
  static Expr call(Func func, Expr arg);

  NodeKind kind() const noexcept;
  bool is_number() const noexcept { return kind() == NodeKind::Number; }
  bool is_zero() const noexcept;
  bool is_one() const noexcept;
  double number_value() const noexcept;
  const std::string& name() const noexcept;
  Func func() const noexcept;
  Expr lhs() const;  // operand for Negate / Call
  Expr rhs() const;

  const ExprNode* node() const noexcept { return node_.get(); }
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<const ExprNode> node_;
};

// Arithmetic with constant folding of literal operands and the identities
// 0+x, x*1, 0*x, x^1, x^0. Nothing beyond that is simplified.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);
Expr apply(Func func, const Expr& arg);

Expr parse(std::string_view text);

using Bindings = std::map<std::string, double, std::less<>>;

/// Reference tree-walking evaluator. Throws EvalError on unbound names and
/// domain errors (division by zero, log/sqrt out of domain, non-real power).
double eval(const Expr& e, const Bindings& bindings);

/// Exact symbolic partial derivative.
Expr diff(const Expr& e, std::string_view var);

/// Simultaneous substitution of names by expressions.
Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& repl);

/// Fully parenthesized text that parses back to an equivalent tree.
std::string to_string(const Expr& e);

std::set<std::string, std::less<>> free_names(const Expr& e);
bool depends_on(const Expr& e, std::string_view var);

std::string_view func_name(Func f);

/// Expression compiled to a postfix program over indexed slots. Evaluation is
/// re-entrant; the slot layout is fixed at compile time.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& e, std::span<const std::string> slots);

  double operator()(std::span<const double> values) const;

  bool is_constant() const noexcept { return constant_; }
  double constant_value() const noexcept { return value_; }

 private:
  enum class Op : unsigned char {
    Const, Load, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Tan, Sqrt, Exp, Log
  };
  struct Instr {
    Op op;
    std::size_t slot = 0;
    double value = 0.0;
    const ExprNode* source = nullptr;
  };
  void emit(const Expr& e, std::span<const std::string> slots, std::size_t& depth,
            std::size_t& max_depth);

  std::vector<Instr> code_;
  std::vector<Expr> keepalive_;
  std::size_t max_depth_ = 0;
  bool constant_ = true;
  double value_ = 0.0;
};

}  // namespace nhaff
