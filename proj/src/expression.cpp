#include "dform/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace dform {

struct Expression::Node {
  enum class Kind { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Abs, Sign, Log, Exp, Sqrt };
  Kind kind;
  double value = 0.0;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
};

namespace {

using Node = Expression::Node;
using Kind = Node::Kind;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_const(double v) { return std::make_shared<const Node>(Node{Kind::Const, v, nullptr, nullptr}); }
NodePtr make_var() { return std::make_shared<const Node>(Node{Kind::Var, 0.0, nullptr, nullptr}); }

bool is_const(const NodePtr& n, double v) { return n->kind == Kind::Const && n->value == v; }

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::EvaluationFailure, what); }

double checked(double v, const char* op) {
  if (!std::isfinite(v)) fail(std::string(op) + " produced a non-finite value");
  return v;
}

double eval(const Node& n, double x);

double eval_pow(double base, double exponent) {
  if (base < 0.0 && exponent != std::floor(exponent)) fail("non-integral power of a negative number");
  if (base == 0.0 && exponent < 0.0) fail("negative power of zero");
  return checked(std::pow(base, exponent), "power");
}

double eval(const Node& n, double x) {
  switch (n.kind) {
    case Kind::Const: return n.value;
    case Kind::Var: return checked(x, "variable");
    case Kind::Neg: return -eval(*n.a, x);
    case Kind::Add: return checked(eval(*n.a, x) + eval(*n.b, x), "sum");
    case Kind::Sub: return checked(eval(*n.a, x) - eval(*n.b, x), "difference");
    case Kind::Mul: return checked(eval(*n.a, x) * eval(*n.b, x), "product");
    case Kind::Div: {
      const double num = eval(*n.a, x);
      const double den = eval(*n.b, x);
      if (den == 0.0) fail("division by zero");
      return checked(num / den, "quotient");
    }
    case Kind::Pow: return eval_pow(eval(*n.a, x), eval(*n.b, x));
    case Kind::Abs: return std::abs(eval(*n.a, x));
    case Kind::Sign: {
      const double v = eval(*n.a, x);
      return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    case Kind::Log: {
      const double v = eval(*n.a, x);
      if (v <= 0.0) fail("log of a nonpositive number");
      return std::log(v);
    }
    case Kind::Exp: return checked(std::exp(eval(*n.a, x)), "exp");
    case Kind::Sqrt: {
      const double v = eval(*n.a, x);
      if (v < 0.0) fail("sqrt of a negative number");
      return std::sqrt(v);
    }
  }
  fail("unknown node");
}

// Smart constructors fold constants and drop neutral elements.
NodePtr unary(Kind k, NodePtr a) {
  if (a->kind == Kind::Const) {
    try {
      return make_const(eval(Node{k, 0.0, a, nullptr}, 0.0));
    } catch (const Error&) {
      // keep the node so the failure surfaces at evaluation time
    }
  }
  if (k == Kind::Neg && a->kind == Kind::Neg) return a->a;
  return std::make_shared<const Node>(Node{k, 0.0, std::move(a), nullptr});
}

NodePtr binary(Kind k, NodePtr a, NodePtr b) {
  if (a->kind == Kind::Const && b->kind == Kind::Const) {
    try {
      return make_const(eval(Node{k, 0.0, a, b}, 0.0));
    } catch (const Error&) {
    }
  }
  switch (k) {
    case Kind::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Kind::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return unary(Kind::Neg, b);
      break;
    case Kind::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case Kind::Div:
      if (is_const(b, 1.0)) return a;
      if (is_const(a, 0.0)) return make_const(0.0);
      break;
    case Kind::Pow:
      if (is_const(b, 1.0)) return a;
      if (is_const(b, 0.0)) return make_const(1.0);
      break;
    default: break;
  }
  return std::make_shared<const Node>(Node{k, 0.0, std::move(a), std::move(b)});
}

NodePtr differentiate(const NodePtr& n) {
  switch (n->kind) {
    case Kind::Const: return make_const(0.0);
    case Kind::Var: return make_const(1.0);
    case Kind::Neg: return unary(Kind::Neg, differentiate(n->a));
    case Kind::Add: return binary(Kind::Add, differentiate(n->a), differentiate(n->b));
    case Kind::Sub: return binary(Kind::Sub, differentiate(n->a), differentiate(n->b));
    case Kind::Mul:
      return binary(Kind::Add, binary(Kind::Mul, differentiate(n->a), n->b),
                    binary(Kind::Mul, n->a, differentiate(n->b)));
    case Kind::Div:
      return binary(Kind::Div,
                    binary(Kind::Sub, binary(Kind::Mul, differentiate(n->a), n->b),
                           binary(Kind::Mul, n->a, differentiate(n->b))),
                    binary(Kind::Pow, n->b, make_const(2.0)));
    case Kind::Pow: {
      if (n->b->kind == Kind::Const) {
        const double c = n->b->value;
        return binary(Kind::Mul, binary(Kind::Mul, make_const(c), binary(Kind::Pow, n->a, make_const(c - 1.0))),
                      differentiate(n->a));
      }
      // d(a^b) = a^b (b' log a + b a' / a)
      return binary(Kind::Mul, n,
                    binary(Kind::Add, binary(Kind::Mul, differentiate(n->b), unary(Kind::Log, n->a)),
                           binary(Kind::Div, binary(Kind::Mul, n->b, differentiate(n->a)), n->a)));
    }
    case Kind::Abs: return binary(Kind::Mul, unary(Kind::Sign, n->a), differentiate(n->a));
    case Kind::Sign: return make_const(0.0);
    case Kind::Log: return binary(Kind::Div, differentiate(n->a), n->a);
    case Kind::Exp: return binary(Kind::Mul, n, differentiate(n->a));
    case Kind::Sqrt:
      return binary(Kind::Div, differentiate(n->a), binary(Kind::Mul, make_const(2.0), n));
  }
  return make_const(0.0);
}

bool constant_tree(const Node& n) {
  if (n.kind == Kind::Var) return false;
  if (n.a && !constant_tree(*n.a)) return false;
  if (n.b && !constant_tree(*n.b)) return false;
  return true;
}

int precedence(const Node& n) {
  switch (n.kind) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    default: return 5;
  }
}

std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string render(const Node& n);

std::string wrap(const Node& child, int min_prec) {
  std::string s = render(child);
  return precedence(child) < min_prec ? "(" + s + ")" : s;
}

std::string render(const Node& n) {
  switch (n.kind) {
    case Kind::Const: return n.value < 0.0 ? "(" + format_number(n.value) + ")" : format_number(n.value);
    case Kind::Var: return "x";
    case Kind::Neg: return "-" + wrap(*n.a, 4);
    case Kind::Add: return wrap(*n.a, 1) + " + " + wrap(*n.b, 2);
    case Kind::Sub: return wrap(*n.a, 1) + " - " + wrap(*n.b, 2);
    case Kind::Mul: return wrap(*n.a, 2) + "*" + wrap(*n.b, 3);
    case Kind::Div: return wrap(*n.a, 2) + "/" + wrap(*n.b, 3);
    case Kind::Pow: return wrap(*n.a, 5) + "^" + wrap(*n.b, 4);
    case Kind::Abs: return "abs(" + render(*n.a) + ")";
    case Kind::Sign: return "sign(" + render(*n.a) + ")";
    case Kind::Log: return "log(" + render(*n.a) + ")";
    case Kind::Exp: return "exp(" + render(*n.a) + ")";
    case Kind::Sqrt: return "sqrt(" + render(*n.a) + ")";
  }
  return "?";
}

// Recursive descent:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | '+' unary | power
//   power   := primary ('^' unary)?
//   primary := number | variable | pi | func '(' expr ')' | '(' expr ')'
class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr run() {
    NodePtr n = expr();
    skip_space();
    if (pos_ != text_.size()) error("unexpected '" + std::string(1, text_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    std::ostringstream msg;
    msg << what << " at column " << pos_ + 1 << " in \"" << text_ << "\"";
    throw Error(ErrorCode::ParseError, msg.str());
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (accept('+')) {
        n = binary(Kind::Add, n, term());
      } else if (accept('-')) {
        n = binary(Kind::Sub, n, term());
      } else {
        return n;
      }
    }
  }

  NodePtr term() {
    NodePtr n = unary_expr();
    for (;;) {
      skip_space();
      if (pos_ + 1 < text_.size() && text_[pos_] == '*' && text_[pos_ + 1] == '*') return n;
      if (accept('*')) {
        n = binary(Kind::Mul, n, unary_expr());
      } else if (accept('/')) {
        n = binary(Kind::Div, n, unary_expr());
      } else {
        return n;
      }
    }
  }

  NodePtr unary_expr() {
    if (accept('-')) return unary(Kind::Neg, unary_expr());
    if (accept('+')) return unary_expr();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    skip_space();
    if (accept('^')) return binary(Kind::Pow, base, unary_expr());
    if (pos_ + 1 < text_.size() && text_[pos_] == '*' && text_[pos_ + 1] == '*') {
      pos_ += 2;
      return binary(Kind::Pow, base, unary_expr());
    }
    return base;
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= text_.size()) error("unexpected end of expression");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    if (accept('(')) {
      NodePtr n = expr();
      if (!accept(')')) error("expected ')'");
      return n;
    }
    error("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    double v = 0.0;
    const char* begin = text_.data() + pos_;
    const auto res = std::from_chars(begin, text_.data() + text_.size(), v);
    if (res.ec != std::errc() || !std::isfinite(v)) error("malformed number");
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    return make_const(v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    if (name == "x" || name == "k") return make_var();
    if (name == "pi") return make_const(std::numbers::pi);
    Kind kind;
    if (name == "abs") {
      kind = Kind::Abs;
    } else if (name == "sign") {
      kind = Kind::Sign;
    } else if (name == "log" || name == "ln") {
      kind = Kind::Log;
    } else if (name == "exp") {
      kind = Kind::Exp;
    } else if (name == "sqrt") {
      kind = Kind::Sqrt;
    } else {
      pos_ = start;
      error("unknown identifier '" + std::string(name) + "'");
    }
    if (!accept('(')) error("expected '(' after " + std::string(name));
    NodePtr arg = expr();
    if (!accept(')')) error("expected ')'");
    return unary(kind, std::move(arg));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text) { return Expression(Parser(text).run()); }
Expression Expression::constant(double value) { return Expression(make_const(value)); }
Expression Expression::variable() { return Expression(make_var()); }

double Expression::operator()(double x) const { return eval(*root_, x); }
Expression Expression::derivative() const { return Expression(differentiate(root_)); }
bool Expression::is_constant() const { return constant_tree(*root_); }
std::string Expression::str() const { return render(*root_); }

Expression operator+(const Expression& a, const Expression& b) { return Expression(binary(Kind::Add, a.root_, b.root_)); }
Expression operator-(const Expression& a, const Expression& b) { return Expression(binary(Kind::Sub, a.root_, b.root_)); }
Expression operator*(const Expression& a, const Expression& b) { return Expression(binary(Kind::Mul, a.root_, b.root_)); }
Expression operator/(const Expression& a, const Expression& b) { return Expression(binary(Kind::Div, a.root_, b.root_)); }
Expression operator-(const Expression& a) { return Expression(unary(Kind::Neg, a.root_)); }
Expression pow(const Expression& a, const Expression& b) { return Expression(binary(Kind::Pow, a.root_, b.root_)); }

}  // namespace dform
