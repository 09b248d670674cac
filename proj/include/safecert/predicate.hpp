#pragma once

// Set predicates: and/or combinations of inequalities g(x) <= 0 or g(x) < 0.
//
//   pred := conj (('or' | '||') conj)*
//   conj := atom (('and' | '&&') atom)*
//   atom := 'true' | 'false' | '(' pred ')' | expr cmp expr
//   cmp  := '<=' | '<' | '>=' | '>'

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safecert/expr.hpp"

namespace safecert {

class SetPredicate {
public:
    enum class Kind { constant, atom, conjunction, disjunction };

    static SetPredicate constant(bool v) {
        SetPredicate p;
        p.kind_ = Kind::constant;
        p.truth_ = v;
        return p;
    }

    /// g(x) <= 0, or g(x) < 0 when `strict`.
    static SetPredicate atom(Expr g, bool strict) {
        SetPredicate p;
        p.kind_ = Kind::atom;
        p.g_ = std::move(g);
        p.compiled_ = std::make_shared<CompiledExpr>(p.g_);
        p.strict_ = strict;
        return p;
    }

    static SetPredicate conjunction(std::vector<SetPredicate> parts) { return combine(Kind::conjunction, std::move(parts)); }
    static SetPredicate disjunction(std::vector<SetPredicate> parts) { return combine(Kind::disjunction, std::move(parts)); }

    Kind kind() const noexcept { return kind_; }
    const Expr& constraint() const noexcept { return g_; }
    bool strict() const noexcept { return strict_; }
    const std::vector<SetPredicate>& parts() const noexcept { return *parts_; }

    bool operator()(std::span<const double> x) const noexcept {
        switch (kind_) {
            case Kind::constant: return truth_;
            case Kind::atom: {
                const double v = (*compiled_)(x);
                return strict_ ? v < 0.0 : v <= 0.0;
            }
            case Kind::conjunction:
                for (const auto& p : *parts_)
                    if (!p(x)) return false;
                return true;
            case Kind::disjunction:
                for (const auto& p : *parts_)
                    if (p(x)) return true;
                return false;
        }
        return false;
    }

    bool operator()(const State& x) const noexcept { return (*this)(x.span()); }

private:
    static SetPredicate combine(Kind k, std::vector<SetPredicate> parts) {
        if (parts.size() == 1) return std::move(parts.front());
        SetPredicate p;
        p.kind_ = k;
        p.parts_ = std::make_shared<const std::vector<SetPredicate>>(std::move(parts));
        return p;
    }

    Kind kind_ = Kind::constant;
    bool truth_ = false;
    Expr g_;
    std::shared_ptr<const CompiledExpr> compiled_;
    bool strict_ = false;
    std::shared_ptr<const std::vector<SetPredicate>> parts_;
};

inline std::string to_string(const SetPredicate& p) {
    using K = SetPredicate::Kind;
    switch (p.kind()) {
        case K::constant: return p(std::span<const double>{}) ? "true" : "false";
        case K::atom: return to_string(p.constraint()) + (p.strict() ? " < 0" : " <= 0");
        default: {
            std::string s;
            const char* sep = p.kind() == K::conjunction ? " and " : " or ";
            for (std::size_t i = 0; i < p.parts().size(); ++i) {
                if (i) s += sep;
                s += "(" + to_string(p.parts()[i]) + ")";
            }
            return s;
        }
    }
}

namespace detail {

class PredicateParser {
public:
    PredicateParser(std::string_view text, std::size_t dim) : p_(text, dim) {}

    SetPredicate parse() {
        auto r = disjunction();
        p_.expect_end();
        return r;
    }

private:
    SetPredicate disjunction() {
        std::vector<SetPredicate> parts{conjunction()};
        while (p_.accept(Tok::or_)) parts.push_back(conjunction());
        return SetPredicate::disjunction(std::move(parts));
    }

    SetPredicate conjunction() {
        std::vector<SetPredicate> parts{atom()};
        while (p_.accept(Tok::and_)) parts.push_back(atom());
        return SetPredicate::conjunction(std::move(parts));
    }

    SetPredicate atom() {
        const Token& t = p_.peek();
        if (t.kind == Tok::ident && (t.text == "true" || t.text == "false")) {
            p_.next();
            return SetPredicate::constant(t.text == "true");
        }
        if (t.kind == Tok::lparen) {
            // "(" may open a nested predicate or an arithmetic sub-expression.
            const auto mark = p_.position();
            try {
                p_.next();
                auto inner = disjunction();
                p_.expect(Tok::rparen, "')'");
                const Tok k = p_.peek().kind;
                if (k == Tok::end || k == Tok::rparen || k == Tok::and_ || k == Tok::or_) return inner;
            } catch (const ParseError&) {
            }
            p_.rewind(mark);
        }
        return comparison();
    }

    SetPredicate comparison() {
        Expr lhs = p_.expr();
        const Token op = p_.next();
        if (op.kind != Tok::le && op.kind != Tok::lt && op.kind != Tok::ge && op.kind != Tok::gt) {
            p_.rewind(p_.position() - 1);
            throw p_.error("expected comparison operator (<=, <, >=, >)");
        }
        Expr rhs = p_.expr();
        const bool strict = op.kind == Tok::lt || op.kind == Tok::gt;
        const bool flip = op.kind == Tok::ge || op.kind == Tok::gt;
        Expr g = flip ? (lhs.is_number(0.0) ? rhs : Expr::binary(Expr::Kind::sub, rhs, lhs))
                      : (rhs.is_number(0.0) ? lhs : Expr::binary(Expr::Kind::sub, lhs, rhs));
        return SetPredicate::atom(std::move(g), strict);
    }

    Parser p_;
};

}  // namespace detail

inline SetPredicate parse_predicate(std::string_view text, std::size_t dim) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw ParseError("empty predicate", 0, 1);
    detail::PredicateParser p(text, dim);
    return p.parse();
}

}  // namespace safecert
