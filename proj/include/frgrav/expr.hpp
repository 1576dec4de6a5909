#pragma once
// Expression mini-grammar for generating functions in run configs.
//
//   expr  := term (('+' | '-') term)*
//   term  := unary (('*' | '/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' unary)?           right associative
//   atom  := number | x1 | x2 | v | fn '(' expr ')' | '(' expr ')'
//   fn    := sin | cos | exp | sech

#include <array>
#include <memory>
#include <set>
#include <string>

namespace frgrav {

class Expr {
public:
    enum class Kind { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Sech };

    // Throws ConfigError with the offending column on malformed input.
    static Expr parse(const std::string& text);
    static Expr constant(double c);

    // Fully parenthesized text; parse(to_string()) reproduces the tree exactly.
    std::string to_string() const;
    // Variables bound as {x1, x2, v}.
    double eval(const std::array<double, 3>& xv) const;
    std::set<std::string> variables() const;
    bool operator==(const Expr& o) const;

    struct Node;

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
    friend class ExprParser;
};

}  // namespace frgrav
