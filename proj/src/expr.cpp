#include "frgrav/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "frgrav/errors.hpp"

namespace frgrav {

struct Expr::Node {
    Kind kind;
    double value = 0.0;
    int var = 0;  // 0 = x1, 1 = x2, 2 = v
    std::vector<std::shared_ptr<const Node>> kids;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;

const char* kVarNames[3] = {"x1", "x2", "v"};

NodeP make(Expr::Kind k, std::vector<NodeP> kids = {}, double value = 0.0, int var = 0) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    n->value = value;
    n->var = var;
    n->kids = std::move(kids);
    return n;
}

std::string number_text(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

const char* function_name(Expr::Kind k) {
    switch (k) {
        case Expr::Kind::Sin: return "sin";
        case Expr::Kind::Cos: return "cos";
        case Expr::Kind::Exp: return "exp";
        case Expr::Kind::Sech: return "sech";
        default: return nullptr;
    }
}

char op_char(Expr::Kind k) {
    switch (k) {
        case Expr::Kind::Add: return '+';
        case Expr::Kind::Sub: return '-';
        case Expr::Kind::Mul: return '*';
        case Expr::Kind::Div: return '/';
        case Expr::Kind::Pow: return '^';
        default: return '?';
    }
}

void print(const NodeP& n, std::string& out) {
    switch (n->kind) {
        case Expr::Kind::Number:
            if (std::signbit(n->value)) out += "(-" + number_text(-n->value) + ")";
            else out += number_text(n->value);
            return;
        case Expr::Kind::Variable:
            out += kVarNames[n->var];
            return;
        case Expr::Kind::Neg:
            out += "(-";
            print(n->kids[0], out);
            out += ')';
            return;
        case Expr::Kind::Sin:
        case Expr::Kind::Cos:
        case Expr::Kind::Exp:
        case Expr::Kind::Sech:
            out += function_name(n->kind);
            out += '(';
            print(n->kids[0], out);
            out += ')';
            return;
        default:
            out += '(';
            print(n->kids[0], out);
            out += ' ';
            out += op_char(n->kind);
            out += ' ';
            print(n->kids[1], out);
            out += ')';
    }
}

double eval(const NodeP& n, const std::array<double, 3>& x) {
    switch (n->kind) {
        case Expr::Kind::Number: return n->value;
        case Expr::Kind::Variable: return x[static_cast<std::size_t>(n->var)];
        case Expr::Kind::Neg: return -eval(n->kids[0], x);
        case Expr::Kind::Add: return eval(n->kids[0], x) + eval(n->kids[1], x);
        case Expr::Kind::Sub: return eval(n->kids[0], x) - eval(n->kids[1], x);
        case Expr::Kind::Mul: return eval(n->kids[0], x) * eval(n->kids[1], x);
        case Expr::Kind::Div: return eval(n->kids[0], x) / eval(n->kids[1], x);
        case Expr::Kind::Pow: return std::pow(eval(n->kids[0], x), eval(n->kids[1], x));
        case Expr::Kind::Sin: return std::sin(eval(n->kids[0], x));
        case Expr::Kind::Cos: return std::cos(eval(n->kids[0], x));
        case Expr::Kind::Exp: return std::exp(eval(n->kids[0], x));
        case Expr::Kind::Sech: return 1.0 / std::cosh(eval(n->kids[0], x));
    }
    return 0.0;
}

bool equal(const NodeP& a, const NodeP& b) {
    if (a->kind != b->kind || a->kids.size() != b->kids.size()) return false;
    if (a->kind == Expr::Kind::Number && a->value != b->value) return false;
    if (a->kind == Expr::Kind::Variable && a->var != b->var) return false;
    for (std::size_t i = 0; i < a->kids.size(); ++i)
        if (!equal(a->kids[i], b->kids[i])) return false;
    return true;
}

void collect(const NodeP& n, std::set<std::string>& out) {
    if (n->kind == Expr::Kind::Variable) out.insert(kVarNames[n->var]);
    for (const auto& k : n->kids) collect(k, out);
}

}  // namespace

class ExprParser {
public:
    explicit ExprParser(const std::string& s) : s_(s) {}

    Expr run() {
        NodeP n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return Expr(n);
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("expression \"" + s_ + "\": " + what + " at column " + std::to_string(pos_ + 1));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodeP expr() {
        NodeP lhs = term();
        for (;;) {
            if (accept('+')) lhs = make(Expr::Kind::Add, {lhs, term()});
            else if (accept('-')) lhs = make(Expr::Kind::Sub, {lhs, term()});
            else return lhs;
        }
    }

    NodeP term() {
        NodeP lhs = unary();
        for (;;) {
            if (accept('*')) lhs = make(Expr::Kind::Mul, {lhs, unary()});
            else if (accept('/')) lhs = make(Expr::Kind::Div, {lhs, unary()});
            else return lhs;
        }
    }

    NodeP unary() {
        if (accept('-')) return make(Expr::Kind::Neg, {unary()});
        return power();
    }

    NodeP power() {
        NodeP base = atom();
        if (accept('^')) return make(Expr::Kind::Pow, {base, unary()});
        return base;
    }

    NodeP atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        if (accept('(')) {
            NodeP n = expr();
            expect(')');
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double x = std::strtod(begin, &end);
            if (end == begin) fail("malformed number");
            pos_ += static_cast<std::size_t>(end - begin);
            return make(Expr::Kind::Number, {}, x);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const std::string id = s_.substr(start, pos_ - start);
            for (int i = 0; i < 3; ++i)
                if (id == kVarNames[i]) return make(Expr::Kind::Variable, {}, 0.0, i);
            for (Expr::Kind k : {Expr::Kind::Sin, Expr::Kind::Cos, Expr::Kind::Exp, Expr::Kind::Sech})
                if (id == function_name(k)) {
                    expect('(');
                    NodeP arg = expr();
                    expect(')');
                    return make(k, {arg});
                }
            pos_ = start;
            fail("unknown identifier '" + id + "'");
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

Expr Expr::parse(const std::string& text) { return ExprParser(text).run(); }

Expr Expr::constant(double c) { return Expr(make(Kind::Number, {}, c)); }

std::string Expr::to_string() const {
    std::string out;
    print(node_, out);
    return out;
}

double Expr::eval(const std::array<double, 3>& xv) const { return frgrav::eval(node_, xv); }

std::set<std::string> Expr::variables() const {
    std::set<std::string> out;
    collect(node_, out);
    return out;
}

bool Expr::operator==(const Expr& o) const { return equal(node_, o.node_); }

}  // namespace frgrav
