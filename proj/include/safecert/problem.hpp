#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "safecert/errors.hpp"
#include "safecert/expr.hpp"
#include "safecert/predicate.hpp"
#include "safecert/state.hpp"

namespace safecert {

/// Number of samples per face axis used by the boundedness check.
inline constexpr std::size_t kDefaultFaceSamples = 33;

/// The triple (f, I, U) together with the bounded analysis domain.
///
/// Every point of the domain box that is not unsafe lies strictly inside the
/// box; this is checked on construction by sampling the faces.
class SafetyProblem {
public:
    SafetyProblem(std::vector<Expr> field, SetPredicate init, SetPredicate unsafe, Box domain,
                  std::size_t face_samples = kDefaultFaceSamples)
        : field_(std::move(field)), init_(std::move(init)), unsafe_(std::move(unsafe)), domain_(std::move(domain)) {
        if (field_.empty()) throw ProblemError("dimension must be at least 1");
        if (field_.size() != domain_.dim())
            throw ProblemError("field has " + std::to_string(field_.size()) + " components but domain has " +
                               std::to_string(domain_.dim()) + " axes");
        for (const auto& e : field_)
            if (e.arity() > field_.size()) throw ProblemError("field component references a variable beyond the dimension");
        auto compiled = std::make_shared<std::vector<CompiledExpr>>();
        for (const auto& e : field_) compiled->emplace_back(e);
        compiled_ = std::move(compiled);
        check_boundedness(face_samples);
    }

    std::size_t dim() const noexcept { return field_.size(); }
    const std::vector<Expr>& field() const noexcept { return field_; }
    const SetPredicate& init() const noexcept { return init_; }
    const SetPredicate& unsafe() const noexcept { return unsafe_; }
    const Box& domain() const noexcept { return domain_; }

    /// f(x), componentwise.
    State eval_field(const State& x) const noexcept {
        State out(dim());
        const auto& c = *compiled_;
        for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i](x);
        return out;
    }

private:
    void check_boundedness(std::size_t face_samples) const {
        const std::size_t n = dim();
        // keep the per-face budget bounded in higher dimensions
        std::size_t m = std::max<std::size_t>(face_samples, 2);
        if (n > 1) {
            const double cap = std::pow(4096.0, 1.0 / static_cast<double>(n - 1));
            m = std::min<std::size_t>(m, std::max<std::size_t>(2, static_cast<std::size_t>(cap)));
        }
        const std::size_t per_face = n == 1 ? 1 : static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(m), static_cast<double>(n - 1))));
        for (std::size_t axis = 0; axis < n; ++axis) {
            for (int side = 0; side < 2; ++side) {
                for (std::size_t s = 0; s < per_face; ++s) {
                    State x(n);
                    std::size_t rem = s;
                    for (std::size_t k = 0; k < n; ++k) {
                        const auto& iv = domain_[k];
                        if (k == axis) {
                            x[k] = side ? iv.hi : iv.lo;
                        } else {
                            const std::size_t j = rem % m;
                            rem /= m;
                            x[k] = iv.lo + iv.width() * static_cast<double>(j) / static_cast<double>(m - 1);
                        }
                    }
                    if (!unsafe_(x)) {
                        std::ostringstream os;
                        os << "boundedness violated: safe state on box face x" << axis + 1 << "="
                           << (side ? domain_[axis].hi : domain_[axis].lo) << " at (";
                        for (std::size_t k = 0; k < n; ++k) os << (k ? ", " : "") << x[k];
                        os << "); the unsafe set must cover every face of the domain";
                        throw ProblemError(os.str());
                    }
                }
            }
        }
    }

    std::vector<Expr> field_;
    std::shared_ptr<const std::vector<CompiledExpr>> compiled_;
    SetPredicate init_;
    SetPredicate unsafe_;
    Box domain_;
};

/// f(x) for problem `p`.
inline State eval_field(const SafetyProblem& p, const State& x) { return p.eval_field(x); }

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Strips a '#' comment that is not inside a double-quoted string.
inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

}  // namespace detail

/// Parses the line-oriented problem format:
///
///   dim = 2
///   field = [ "-x2 - 0.5*x1", "x1 - 0.5*x2" ]
///   domain = [ [-3.3, 3.3], [-3.3, 3.3] ]
///   init = "(x1 - 1)^2 + x2^2 <= 0.04"
///   unsafe = "x1^2 + x2^2 >= 9"
///
/// Values are JSON literals. Errors carry the 1-based line and column.
inline SafetyProblem parse_problem(std::string_view text, std::size_t face_samples = kDefaultFaceSamples) {
    struct Entry {
        nlohmann::json value;
        std::size_t line = 0;
        std::size_t value_column = 0;
        bool present = false;
    };
    Entry dim_e, field_e, domain_e, init_e, unsafe_e;

    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = detail::strip_comment(raw);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno, line.find_first_not_of(" \t") + 1);
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string val = detail::trim(std::string_view(line).substr(eq + 1));
        const std::size_t val_col = line.find_first_not_of(" \t", eq + 1) + 1;
        Entry* e = key == "dim"      ? &dim_e
                   : key == "field"  ? &field_e
                   : key == "domain" ? &domain_e
                   : key == "init"   ? &init_e
                   : key == "unsafe" ? &unsafe_e
                                     : nullptr;
        if (!e) throw ParseError("unknown key '" + key + "'", lineno, line.find_first_not_of(" \t") + 1);
        if (e->present) throw ParseError("duplicate key '" + key + "'", lineno, 1);
        try {
            e->value = nlohmann::json::parse(val);
        } catch (const nlohmann::json::parse_error& ex) {
            throw ParseError("malformed value for '" + key + "'", lineno, val_col + (ex.byte > 0 ? ex.byte - 1 : 0));
        }
        e->line = lineno;
        e->value_column = val_col;
        e->present = true;
    }

    auto require = [&](const Entry& e, const char* key) {
        if (!e.present) throw ParseError(std::string("missing key '") + key + "'", lineno + 1, 1);
    };
    require(dim_e, "dim");
    require(field_e, "field");
    require(domain_e, "domain");
    require(init_e, "init");
    require(unsafe_e, "unsafe");

    if (!dim_e.value.is_number_integer() || dim_e.value.get<long long>() < 1)
        throw ParseError("dim must be a positive integer", dim_e.line, dim_e.value_column);
    const auto n = static_cast<std::size_t>(dim_e.value.get<long long>());
    if (n > kMaxDim) throw ParseError("dim exceeds the supported maximum " + std::to_string(kMaxDim), dim_e.line, dim_e.value_column);

    if (!field_e.value.is_array() || field_e.value.size() != n)
        throw ParseError("field must be a list of " + std::to_string(n) + " expression strings", field_e.line, field_e.value_column);
    std::vector<Expr> field;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = field_e.value[i];
        if (!v.is_string()) throw ParseError("field entries must be strings", field_e.line, field_e.value_column);
        try {
            field.push_back(parse_expression(v.get<std::string>(), n));
        } catch (const ParseError& pe) {
            throw ParseError("field[" + std::to_string(i) + "]: " + pe.message(), field_e.line, pe.column());
        }
    }

    if (!domain_e.value.is_array() || domain_e.value.size() != n)
        throw ParseError("domain must be a list of " + std::to_string(n) + " [lo, hi] pairs", domain_e.line, domain_e.value_column);
    std::vector<Interval> axes;
    for (const auto& v : domain_e.value) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ParseError("domain entries must be [lo, hi] number pairs", domain_e.line, domain_e.value_column);
        Interval iv{v[0].get<double>(), v[1].get<double>()};
        if (!(iv.lo < iv.hi)) throw ParseError("domain axis must satisfy lo < hi", domain_e.line, domain_e.value_column);
        axes.push_back(iv);
    }

    auto predicate = [&](const Entry& e, const char* key) {
        if (!e.value.is_string()) throw ParseError(std::string(key) + " must be a predicate string", e.line, e.value_column);
        try {
            return parse_predicate(e.value.get<std::string>(), n);
        } catch (const ParseError& pe) {
            // +1 for the opening quote
            throw ParseError(std::string(key) + ": " + pe.message(), e.line, e.value_column + pe.column());
        }
    };
    auto init = predicate(init_e, "init");
    auto unsafe = predicate(unsafe_e, "unsafe");

    return SafetyProblem(std::move(field), std::move(init), std::move(unsafe), Box(std::move(axes)), face_samples);
}

}  // namespace safecert
