#pragma once

// Expression language for vector fields, barrier candidates and set predicates.
//
// Grammar (usual precedence, ^ right associative and binding tighter than
// unary minus):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | x<k> | func '(' expr ')' | '(' expr ')'
//
// Only smooth constructs are accepted; abs/min/max and friends are rejected
// at parse time.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safecert/errors.hpp"
#include "safecert/state.hpp"

namespace safecert {

enum class Func { sin, cos, exp, sqrt, log };

inline const char* func_name(Func f) noexcept {
    switch (f) {
        case Func::sin: return "sin";
        case Func::cos: return "cos";
        case Func::exp: return "exp";
        case Func::sqrt: return "sqrt";
        case Func::log: return "log";
    }
    return "?";
}

/// Immutable expression tree with shared structure. Variables are stored
/// 0-based; x1 in the surface syntax is index 0.
class Expr {
public:
    enum class Kind { number, variable, negate, add, sub, mul, div, pow, call };

    Expr() : Expr(number(0.0)) {}

    static Expr number(double v);
    static Expr variable(std::size_t index);
    static Expr negate(Expr a);
    static Expr binary(Kind k, Expr a, Expr b);
    static Expr call(Func f, Expr a);

    Kind kind() const noexcept;
    double value() const noexcept;
    std::size_t index() const noexcept;
    Func func() const noexcept;
    const Expr& lhs() const noexcept;
    const Expr& rhs() const noexcept;

    bool is_number() const noexcept { return kind() == Kind::number; }
    bool is_number(double v) const noexcept { return is_number() && value() == v; }

    /// One past the largest variable index used (0 for constants).
    std::size_t arity() const noexcept;

    double eval(std::span<const double> x) const;
    double eval(const State& x) const { return eval(x.span()); }

private:
    struct Node;
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

struct Expr::Node {
    Kind kind = Kind::number;
    double value = 0.0;
    std::size_t index = 0;
    Func func = Func::sin;
    Expr a;
    Expr b;
    std::size_t arity = 0;

    // Leaves must not default-construct children (that would recurse).
    struct Leaf {};
    explicit Node(Leaf) : a(nullptr_tag()), b(nullptr_tag()) {}
    Node(Kind k, Expr x, Expr y) : kind(k), a(std::move(x)), b(std::move(y)) {}

private:
    static Expr nullptr_tag() { return Expr(std::shared_ptr<const Node>{}); }
};

inline Expr Expr::number(double v) {
    auto n = std::make_shared<Node>(Node::Leaf{});
    n->kind = Kind::number;
    n->value = v;
    return Expr(std::move(n));
}

inline Expr Expr::variable(std::size_t index) {
    auto n = std::make_shared<Node>(Node::Leaf{});
    n->kind = Kind::variable;
    n->index = index;
    n->arity = index + 1;
    return Expr(std::move(n));
}

inline Expr Expr::negate(Expr a) {
    auto ar = a.arity();
    auto n = std::make_shared<Node>(Kind::negate, std::move(a), number(0.0));
    n->arity = ar;
    return Expr(std::move(n));
}

inline Expr Expr::binary(Kind k, Expr a, Expr b) {
    auto ar = std::max(a.arity(), b.arity());
    auto n = std::make_shared<Node>(k, std::move(a), std::move(b));
    n->arity = ar;
    return Expr(std::move(n));
}

inline Expr Expr::call(Func f, Expr a) {
    auto ar = a.arity();
    auto n = std::make_shared<Node>(Kind::call, std::move(a), number(0.0));
    n->func = f;
    n->arity = ar;
    return Expr(std::move(n));
}

inline Expr::Kind Expr::kind() const noexcept { return node_->kind; }
inline double Expr::value() const noexcept { return node_->value; }
inline std::size_t Expr::index() const noexcept { return node_->index; }
inline Func Expr::func() const noexcept { return node_->func; }
inline const Expr& Expr::lhs() const noexcept { return node_->a; }
inline const Expr& Expr::rhs() const noexcept { return node_->b; }
inline std::size_t Expr::arity() const noexcept { return node_->arity; }

inline double apply(Func f, double v) noexcept {
    switch (f) {
        case Func::sin: return std::sin(v);
        case Func::cos: return std::cos(v);
        case Func::exp: return std::exp(v);
        case Func::sqrt: return std::sqrt(v);
        case Func::log: return std::log(v);
    }
    return 0.0;
}

inline double Expr::eval(std::span<const double> x) const {
    switch (kind()) {
        case Kind::number: return value();
        case Kind::variable: return x[index()];
        case Kind::negate: return -lhs().eval(x);
        case Kind::add: return lhs().eval(x) + rhs().eval(x);
        case Kind::sub: return lhs().eval(x) - rhs().eval(x);
        case Kind::mul: return lhs().eval(x) * rhs().eval(x);
        case Kind::div: return lhs().eval(x) / rhs().eval(x);
        case Kind::pow: return std::pow(lhs().eval(x), rhs().eval(x));
        case Kind::call: return apply(func(), lhs().eval(x));
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline int precedence(const Expr& e) noexcept {
    switch (e.kind()) {
        case Expr::Kind::add:
        case Expr::Kind::sub: return 1;
        case Expr::Kind::mul:
        case Expr::Kind::div: return 2;
        case Expr::Kind::negate: return 3;
        case Expr::Kind::pow: return 4;
        case Expr::Kind::number: return e.value() < 0 ? 0 : 5;
        default: return 5;
    }
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    return v < 0 ? "(" + s + ")" : s;
}

inline std::string paren(const std::string& s) { return "(" + s + ")"; }

}  // namespace detail

/// Prints an expression so that parsing the result reproduces the same tree
/// evaluation order (and hence bit-identical values).
inline std::string to_string(const Expr& e) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::number: return detail::format_number(e.value());
        case K::variable: return "x" + std::to_string(e.index() + 1);
        case K::negate: {
            auto inner = to_string(e.lhs());
            return "-" + (detail::precedence(e.lhs()) < 3 ? detail::paren(inner) : inner);
        }
        case K::call: return std::string(func_name(e.func())) + "(" + to_string(e.lhs()) + ")";
        case K::pow: {
            auto l = to_string(e.lhs());
            auto r = to_string(e.rhs());
            if (detail::precedence(e.lhs()) <= 4) l = detail::paren(l);
            if (detail::precedence(e.rhs()) < 4) r = detail::paren(r);
            return l + "^" + r;
        }
        default: {
            const int p = detail::precedence(e);
            auto l = to_string(e.lhs());
            auto r = to_string(e.rhs());
            if (detail::precedence(e.lhs()) < p) l = detail::paren(l);
            if (detail::precedence(e.rhs()) <= p) r = detail::paren(r);
            const char* op = e.kind() == K::add   ? " + "
                             : e.kind() == K::sub ? " - "
                             : e.kind() == K::mul ? "*"
                                                  : "/";
            return l + op + r;
        }
    }
}

// ---------------------------------------------------------------------------
// Lexing and parsing

namespace detail {

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, comma, le, lt, ge, gt, and_, or_, end };

struct Token {
    Tok kind;
    std::string text;
    double value = 0.0;
    std::size_t column = 0;  // 1-based
};

inline std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        const std::size_t col = i + 1;
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            std::size_t j = i;
            while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
            if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
                if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
                    j = k;
                    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
                }
            }
            std::string text(s.substr(i, j - i));
            if (std::count(text.begin(), text.end(), '.') > 1) throw ParseError("malformed number '" + text + "'", 0, col);
            out.push_back({Tok::number, text, std::stod(text), col});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
            std::string text(s.substr(i, j - i));
            Tok k = text == "and" ? Tok::and_ : text == "or" ? Tok::or_ : Tok::ident;
            out.push_back({k, text, 0.0, col});
            i = j;
            continue;
        }
        auto two = s.substr(i, 2);
        if (two == "<=") { out.push_back({Tok::le, "<=", 0, col}); i += 2; continue; }
        if (two == ">=") { out.push_back({Tok::ge, ">=", 0, col}); i += 2; continue; }
        if (two == "&&") { out.push_back({Tok::and_, "&&", 0, col}); i += 2; continue; }
        if (two == "||") { out.push_back({Tok::or_, "||", 0, col}); i += 2; continue; }
        Tok k;
        switch (c) {
            case '+': k = Tok::plus; break;
            case '-': k = Tok::minus; break;
            case '*': k = Tok::star; break;
            case '/': k = Tok::slash; break;
            case '^': k = Tok::caret; break;
            case '(': k = Tok::lparen; break;
            case ')': k = Tok::rparen; break;
            case ',': k = Tok::comma; break;
            case '<': k = Tok::lt; break;
            case '>': k = Tok::gt; break;
            default: throw ParseError(std::string("unexpected character '") + c + "'", 0, col);
        }
        out.push_back({k, std::string(1, c), 0.0, col});
        ++i;
    }
    out.push_back({Tok::end, "", 0.0, s.size() + 1});
    return out;
}

inline bool is_nonsmooth_name(const std::string& s) {
    static constexpr std::array names{"abs", "min", "max", "floor", "ceil", "round", "trunc", "sign", "sgn", "fmod", "mod", "step", "heaviside"};
    for (const char* n : names)
        if (s == n) return true;
    return false;
}

class Parser {
public:
    Parser(std::string_view text, std::size_t dim) : toks_(tokenize(text)), dim_(dim) {}

    Expr parse_full_expr() {
        Expr e = expr();
        expect_end();
        return e;
    }

    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }
    std::size_t position() const { return pos_; }
    void rewind(std::size_t p) { pos_ = p; }
    bool accept(Tok k) {
        if (peek().kind != k) return false;
        ++pos_;
        return true;
    }
    void expect(Tok k, const char* what) {
        if (!accept(k)) throw error(std::string("expected ") + what);
    }
    void expect_end() {
        if (peek().kind != Tok::end) throw error("unexpected '" + peek().text + "'");
    }
    ParseError error(const std::string& msg) const { return ParseError(msg, 0, peek().column); }

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (accept(Tok::plus)) e = Expr::binary(Expr::Kind::add, e, term());
            else if (accept(Tok::minus)) e = Expr::binary(Expr::Kind::sub, e, term());
            else return e;
        }
    }

private:
    Expr term() {
        Expr e = unary();
        for (;;) {
            if (accept(Tok::star)) e = Expr::binary(Expr::Kind::mul, e, unary());
            else if (accept(Tok::slash)) e = Expr::binary(Expr::Kind::div, e, unary());
            else return e;
        }
    }

    Expr unary() {
        if (accept(Tok::minus)) return Expr::negate(unary());
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept(Tok::caret)) return Expr::binary(Expr::Kind::pow, base, unary());
        return base;
    }

    Expr primary() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::number: ++pos_; return Expr::number(t.value);
            case Tok::lparen: {
                ++pos_;
                Expr e = expr();
                expect(Tok::rparen, "')'");
                return e;
            }
            case Tok::ident: return identifier();
            case Tok::end: throw error("unexpected end of expression");
            default: throw error("unexpected '" + t.text + "'");
        }
    }

    Expr identifier() {
        const Token t = next();
        const std::string& s = t.text;
        if (s.size() >= 2 && s[0] == 'x' && std::all_of(s.begin() + 1, s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            const unsigned long k = std::stoul(s.substr(1));
            if (k == 0) throw ParseError("variables are numbered from x1", 0, t.column);
            if (k > dim_) throw ParseError("dimension overflow: '" + s + "' exceeds dimension " + std::to_string(dim_), 0, t.column);
            return Expr::variable(k - 1);
        }
        if (is_nonsmooth_name(s)) throw ParseError("non-smooth construct '" + s + "' is not allowed", 0, t.column);
        Func f;
        if (s == "sin") f = Func::sin;
        else if (s == "cos") f = Func::cos;
        else if (s == "exp") f = Func::exp;
        else if (s == "sqrt") f = Func::sqrt;
        else throw ParseError("unknown identifier '" + s + "'", 0, t.column);
        expect(Tok::lparen, "'(' after function name");
        Expr arg = expr();
        expect(Tok::rparen, "')'");
        return Expr::call(f, arg);
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::size_t dim_;
};

}  // namespace detail

/// Parses `text` as an expression over x1..x`dim`.
inline Expr parse_expression(std::string_view text, std::size_t dim) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw ParseError("empty expression", 0, 1);
    detail::Parser p(text, dim);
    return p.parse_full_expr();
}

// ---------------------------------------------------------------------------
// Symbolic differentiation with light constant folding

namespace detail {

inline bool is_constant(const Expr& e) { return e.arity() == 0; }

inline Expr s_add(const Expr& a, const Expr& b) {
    if (a.is_number(0.0)) return b;
    if (b.is_number(0.0)) return a;
    if (a.is_number() && b.is_number()) return Expr::number(a.value() + b.value());
    return Expr::binary(Expr::Kind::add, a, b);
}
inline Expr s_neg(const Expr& a) {
    if (a.is_number()) return Expr::number(-a.value());
    if (a.kind() == Expr::Kind::negate) return a.lhs();
    return Expr::negate(a);
}
inline Expr s_sub(const Expr& a, const Expr& b) {
    if (b.is_number(0.0)) return a;
    if (a.is_number(0.0)) return s_neg(b);
    if (a.is_number() && b.is_number()) return Expr::number(a.value() - b.value());
    return Expr::binary(Expr::Kind::sub, a, b);
}
inline Expr s_mul(const Expr& a, const Expr& b) {
    if (a.is_number(0.0) || b.is_number(0.0)) return Expr::number(0.0);
    if (a.is_number(1.0)) return b;
    if (b.is_number(1.0)) return a;
    if (a.is_number() && b.is_number()) return Expr::number(a.value() * b.value());
    return Expr::binary(Expr::Kind::mul, a, b);
}
inline Expr s_div(const Expr& a, const Expr& b) {
    if (a.is_number(0.0)) return Expr::number(0.0);
    if (b.is_number(1.0)) return a;
    return Expr::binary(Expr::Kind::div, a, b);
}
inline Expr s_pow(const Expr& a, const Expr& b) {
    if (b.is_number(1.0)) return a;
    if (b.is_number(0.0)) return Expr::number(1.0);
    return Expr::binary(Expr::Kind::pow, a, b);
}

}  // namespace detail

/// d e / d x_{var+1}
inline Expr derivative(const Expr& e, std::size_t var) {
    using K = Expr::Kind;
    using namespace detail;
    if (e.arity() <= var) return Expr::number(0.0);
    switch (e.kind()) {
        case K::number: return Expr::number(0.0);
        case K::variable: return Expr::number(e.index() == var ? 1.0 : 0.0);
        case K::negate: return s_neg(derivative(e.lhs(), var));
        case K::add: return s_add(derivative(e.lhs(), var), derivative(e.rhs(), var));
        case K::sub: return s_sub(derivative(e.lhs(), var), derivative(e.rhs(), var));
        case K::mul:
            return s_add(s_mul(derivative(e.lhs(), var), e.rhs()), s_mul(e.lhs(), derivative(e.rhs(), var)));
        case K::div: {
            auto num = s_sub(s_mul(derivative(e.lhs(), var), e.rhs()), s_mul(e.lhs(), derivative(e.rhs(), var)));
            return s_div(num, s_pow(e.rhs(), Expr::number(2.0)));
        }
        case K::pow: {
            const Expr& a = e.lhs();
            const Expr& b = e.rhs();
            auto da = derivative(a, var);
            if (is_constant(b)) {
                // c * a^(c-1) * a'
                auto c = b.is_number() ? b : Expr::number(b.eval(std::span<const double>{}));
                auto cm1 = Expr::number(c.value() - 1.0);
                return s_mul(s_mul(c, s_pow(a, cm1)), da);
            }
            auto db = derivative(b, var);
            auto inner = s_add(s_mul(db, Expr::call(Func::log, a)), s_div(s_mul(b, da), a));
            return s_mul(e, inner);
        }
        case K::call: {
            const Expr& a = e.lhs();
            auto da = derivative(a, var);
            switch (e.func()) {
                case Func::sin: return s_mul(Expr::call(Func::cos, a), da);
                case Func::cos: return s_mul(s_neg(Expr::call(Func::sin, a)), da);
                case Func::exp: return s_mul(e, da);
                case Func::sqrt: return s_div(da, s_mul(Expr::number(2.0), e));
                case Func::log: return s_div(da, a);
            }
        }
    }
    return Expr::number(0.0);
}

// ---------------------------------------------------------------------------
// Compiled form: a flat stack program for the hot loops.

class CompiledExpr {
public:
    CompiledExpr() = default;
    explicit CompiledExpr(const Expr& e) {
        std::size_t depth = 0;
        emit(e, depth);
    }

    double operator()(std::span<const double> x) const noexcept {
        std::array<double, kStack> stack;
        std::size_t sp = 0;
        for (const Instr& in : code_) {
            switch (in.op) {
                case Op::push: stack[sp++] = in.value; break;
                case Op::load: stack[sp++] = x[in.index]; break;
                case Op::neg: stack[sp - 1] = -stack[sp - 1]; break;
                case Op::add: --sp; stack[sp - 1] += stack[sp]; break;
                case Op::sub: --sp; stack[sp - 1] -= stack[sp]; break;
                case Op::mul: --sp; stack[sp - 1] *= stack[sp]; break;
                case Op::div: --sp; stack[sp - 1] /= stack[sp]; break;
                case Op::pow: --sp; stack[sp - 1] = std::pow(stack[sp - 1], stack[sp]); break;
                case Op::square: stack[sp - 1] *= stack[sp - 1]; break;
                case Op::call: stack[sp - 1] = apply(in.func, stack[sp - 1]); break;
            }
        }
        return sp ? stack[0] : 0.0;
    }

    double operator()(const State& x) const noexcept { return (*this)(x.span()); }

private:
    static constexpr std::size_t kStack = 64;
    enum class Op : unsigned char { push, load, neg, add, sub, mul, div, pow, square, call };
    struct Instr {
        Op op;
        Func func = Func::sin;
        std::size_t index = 0;
        double value = 0.0;
    };

    void emit(const Expr& e, std::size_t& depth) {
        using K = Expr::Kind;
        auto push = [&](Instr in) { code_.push_back(in); };
        auto grow = [&](std::size_t d) {
            if (d > kStack) throw Error("expression too deeply nested");
        };
        switch (e.kind()) {
            case K::number: push({Op::push, Func::sin, 0, e.value()}); grow(++depth); return;
            case K::variable: push({Op::load, Func::sin, e.index(), 0.0}); grow(++depth); return;
            case K::negate: emit(e.lhs(), depth); push({Op::neg}); return;
            case K::call: emit(e.lhs(), depth); push({Op::call, e.func()}); return;
            default: break;
        }
        // std::pow(x, 2.0) is exact, so x*x preserves evaluation semantics
        if (e.kind() == K::pow && e.rhs().is_number(2.0)) {
            emit(e.lhs(), depth);
            push({Op::square});
            return;
        }
        emit(e.lhs(), depth);
        emit(e.rhs(), depth);
        --depth;
        Op op = e.kind() == K::add ? Op::add : e.kind() == K::sub ? Op::sub : e.kind() == K::mul ? Op::mul : e.kind() == K::div ? Op::div : Op::pow;
        push({op});
    }

    std::vector<Instr> code_;
};

}  // namespace safecert
