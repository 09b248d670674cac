#pragma once

// Built-in problems with closed-form oracles.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "safecert/problem.hpp"

namespace safecert {

enum class Verdict { safe, unsafe };

struct Benchmark {
    std::string name;
    std::string problem_text;
    Verdict verdict;
    /// Linear part A when f(x) = A x (row-major, n*n); empty otherwise.
    std::vector<double> linear_matrix;
    /// A known barrier function in expression syntax, if any.
    std::optional<std::string> analytic_barrier;

    SafetyProblem problem() const { return parse_problem(problem_text); }
};

inline const std::vector<Benchmark>& list_benchmarks() {
    static const std::vector<Benchmark> benches = {
        {"lin1d-stable",
         "# x' = -x, contracting to the origin\n"
         "dim = 1\n"
         "field = [ \"-x1\" ]\n"
         "domain = [ [-2.2, 2.2] ]\n"
         "init = \"x1^2 <= 0.25\"\n"
         "unsafe = \"x1^2 >= 4\"\n",
         Verdict::safe,
         {-1.0},
         "1 - x1^2"},
        {"lin1d-unstable",
         "# x' = x, every nonzero state diverges\n"
         "dim = 1\n"
         "field = [ \"x1\" ]\n"
         "domain = [ [-2.2, 2.2] ]\n"
         "init = \"x1^2 <= 0.25\"\n"
         "unsafe = \"x1^2 >= 4\"\n",
         Verdict::unsafe,
         {1.0},
         std::nullopt},
        {"spiral2d",
         "# stable focus, eigenvalues -0.5 +- i\n"
         "dim = 2\n"
         "field = [ \"-x2 - 0.5*x1\", \"x1 - 0.5*x2\" ]\n"
         "domain = [ [-3.3, 3.3], [-3.3, 3.3] ]\n"
         "init = \"(x1 - 1)^2 + x2^2 <= 0.04\"\n"
         "unsafe = \"x1^2 + x2^2 >= 9\"\n",
         Verdict::safe,
         {-0.5, -1.0, 1.0, -0.5},
         std::nullopt},
    };
    return benches;
}

inline const Benchmark* find_benchmark(std::string_view name) {
    for (const auto& b : list_benchmarks())
        if (b.name == name) return &b;
    return nullptr;
}

/// e^{At} x for the linear benchmarks (dimension 1 or 2 with A = a I + b J).
inline State linear_flow(const Benchmark& b, const State& x, double t) {
    const auto& A = b.linear_matrix;
    if (A.size() == 1) return State{x[0] * std::exp(A[0] * t)};
    if (A.size() == 4) {
        // A = [[a, -w], [w, a]]
        const double a = A[0];
        const double w = A[2];
        const double g = std::exp(a * t);
        const double c = std::cos(w * t), s = std::sin(w * t);
        return State{g * (c * x[0] - s * x[1]), g * (s * x[0] + c * x[1])};
    }
    throw Error("linear_flow: benchmark has no closed-form flow");
}

}  // namespace safecert
