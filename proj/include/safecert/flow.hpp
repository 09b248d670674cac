#pragma once

// Numerical flow of x' = f(x) in forward and reverse time, and sampled
// eps-solutions (trajectories under a bounded piecewise-constant disturbance).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "safecert/errors.hpp"
#include "safecert/problem.hpp"
#include "safecert/state.hpp"

namespace safecert {

enum class Method { rk4, rk45 };

struct IntegratorConfig {
    Method method = Method::rk45;
    /// Fixed step for rk4; also the disturbance hold time for sampled trajectories.
    double h = 0.5 / 64.0;
    double atol = 1e-8;
    double rtol = 1e-8;
    std::size_t max_steps = 1'000'000;

    void validate() const {
        if (!(h > 0.0)) throw Error("integrator step h must be positive");
        if (!(atol > 0.0) || !(rtol > 0.0)) throw Error("integrator tolerances must be positive");
        if (max_steps == 0) throw Error("integrator max_steps must be positive");
    }

    /// Slack added to geometric bounds to absorb integration error.
    double slack() const noexcept { return method == Method::rk45 ? 100.0 * (atol + rtol) : 1e-6; }
};

class TrajectoryLeftDomain : public Error {
public:
    TrajectoryLeftDomain(double time, State point)
        : Error(describe(time, point)), time_(time), point_(point) {}
    double time() const noexcept { return time_; }
    const State& point() const noexcept { return point_; }

private:
    static std::string describe(double t, const State& x) {
        std::ostringstream os;
        os << "trajectory left the domain at t=" << t << ", x=(";
        for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
        os << ")";
        return os.str();
    }
    double time_;
    State point_;
};

class StepLimitExceeded : public Error {
public:
    using Error::Error;
};

/// Result of advancing a state. `time` is the signed time actually reached.
struct FlowOutcome {
    enum class Status { ok, left_domain, step_limit };
    Status status = Status::ok;
    State state;
    double time = 0.0;

    bool ok() const noexcept { return status == Status::ok; }
};

/// Explicit Runge-Kutta integrator over an arbitrary field callable
/// `State(const State&)`. Reverse time is realized by integrating -f.
template <class Field>
class Integrator {
public:
    Integrator(const Field& f, IntegratorConfig cfg) : f_(f), cfg_(cfg) { cfg_.validate(); }

    const IntegratorConfig& config() const noexcept { return cfg_; }

    /// Advances x by signed duration t. When `box` is non-null, stops at the
    /// first accepted step that leaves it.
    FlowOutcome advance(State x, double t, const Box* box = nullptr) const {
        const double sign = t < 0.0 ? -1.0 : 1.0;
        const double total = std::abs(t);
        auto g = [&](const State& y) { return sign > 0 ? f_(y) : -f_(y); };
        FlowOutcome out{FlowOutcome::Status::ok, x, 0.0};
        if (total == 0.0) return out;

        double done = 0.0;
        std::size_t steps = 0;
        if (cfg_.method == Method::rk4) {
            while (done < total) {
                if (++steps > cfg_.max_steps) return {FlowOutcome::Status::step_limit, x, sign * done};
                double h = std::min(cfg_.h, total - done);
                if (total - done - h < 1e-14 * total) h = total - done;
                x = rk4_step(g, x, h);
                done = (h == total - done) ? total : done + h;
                if (box && !box->contains(x)) return {FlowOutcome::Status::left_domain, x, sign * done};
            }
            return {FlowOutcome::Status::ok, x, sign * total};
        }

        State k1 = g(x);
        double h = initial_step(x, k1, total);
        while (done < total) {
            if (++steps > cfg_.max_steps) return {FlowOutcome::Status::step_limit, x, sign * done};
            const bool last = h >= total - done;
            if (last) h = total - done;
            State err;
            State k7;
            State y = dopri_step(g, x, k1, h, err, k7);
            double en = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double sc = cfg_.atol + cfg_.rtol * std::max(std::abs(x[i]), std::abs(y[i]));
                en = std::max(en, std::abs(err[i]) / sc);
            }
            if (en <= 1.0 || h < 1e-14 * std::max(1.0, total)) {
                x = y;
                k1 = k7;  // first-same-as-last
                done = last ? total : done + h;
                if (box && !box->contains(x)) return {FlowOutcome::Status::left_domain, x, sign * done};
            }
            const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            h *= factor;
        }
        return {FlowOutcome::Status::ok, x, sign * total};
    }

private:
    template <class G>
    static State rk4_step(const G& g, const State& x, double h) {
        const State k1 = g(x);
        const State k2 = g(axpy(x, 0.5 * h, k1));
        const State k3 = g(axpy(x, 0.5 * h, k2));
        const State k4 = g(axpy(x, h, k3));
        State y = x;
        for (std::size_t i = 0; i < x.size(); ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        return y;
    }

    // Dormand-Prince 5(4).
    template <class G>
    static State dopri_step(const G& g, const State& x, const State& k1, double h, State& err, State& k7) {
        constexpr double a21 = 1.0 / 5.0;
        constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
        constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
        constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
        constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                         a65 = -5103.0 / 18656.0;
        constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
        constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                         e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
        const std::size_t n = x.size();
        State t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + h * a21 * k1[i];
        const State k2 = g(t);
        for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i]);
        const State k3 = g(t);
        for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        const State k4 = g(t);
        for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        const State k5 = g(t);
        for (std::size_t i = 0; i < n; ++i)
            t[i] = x[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        const State k6 = g(t);
        State y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        k7 = g(y);
        err = State(n);
        for (std::size_t i = 0; i < n; ++i)
            err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        return y;
    }

    double initial_step(const State& x, const State& fx, double total) const {
        const double d0 = norm(x) + 1e-3;
        const double d1 = norm(fx) + 1e-3;
        return std::min(total, std::max(1e-6, 0.01 * d0 / d1));
    }

    const Field& f_;
    IntegratorConfig cfg_;
};

namespace detail {

struct ProblemField {
    const SafetyProblem* p;
    State operator()(const State& x) const noexcept { return p->eval_field(x); }
};

}  // namespace detail

/// Flow of the problem's field from x0 over signed duration t, staying in the
/// domain box. Returns the outcome instead of throwing.
inline FlowOutcome propagate(const SafetyProblem& p, const State& x0, double t, const IntegratorConfig& cfg) {
    detail::ProblemField f{&p};
    return Integrator(f, cfg).advance(x0, t, &p.domain());
}

/// phi_f(x0, t). Negative t integrates the reversed field.
inline State integrate_flow(const SafetyProblem& p, const State& x0, double t, const IntegratorConfig& cfg = {}) {
    if (x0.size() != p.dim()) throw Error("integrate_flow: point has wrong dimension");
    if (!p.domain().contains(x0)) throw Error("integrate_flow: initial point outside the domain box");
    const auto out = propagate(p, x0, t, cfg);
    switch (out.status) {
        case FlowOutcome::Status::ok: return out.state;
        case FlowOutcome::Status::left_domain: throw TrajectoryLeftDomain(out.time, out.state);
        case FlowOutcome::Status::step_limit: throw StepLimitExceeded("integrate_flow: step limit exceeded");
    }
    return out.state;
}

/// A sampled eps-solution. inputs[k] is the disturbance held on
/// [times[k], times[k+1]).
struct TrajectorySample {
    std::vector<double> times;
    std::vector<State> states;
    std::vector<State> inputs;
    double epsilon = 0.0;
    bool truncated = false;  // left the domain box; the last state is the first one outside

    const State& final_state() const { return states.back(); }
};

/// Uniform point of the closed Euclidean ball of radius r in R^n.
inline State uniform_in_ball(std::size_t n, double r, std::mt19937_64& rng) {
    State d(n);
    if (r == 0.0) return d;
    std::normal_distribution<double> normal(0.0, 1.0);
    double len = 0.0;
    do {
        for (std::size_t i = 0; i < n; ++i) d[i] = normal(rng);
        len = norm(d);
    } while (len == 0.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double radius = r * std::pow(unit(rng), 1.0 / static_cast<double>(n));
    return (radius / len) * d;
}

/// Mixes a run seed and a stream index into an independent generator seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Integrates x' = f(x) + u(t) where u is constant over each hold interval of
/// length cfg.h and drawn uniformly from the eps-ball. Deterministic in seed.
/// Stops early (truncated) once the state leaves the domain box.
inline TrajectorySample sample_disturbed_trajectory(const SafetyProblem& p, const State& x0, double horizon, double eps,
                                                    std::uint64_t seed, const IntegratorConfig& cfg = {Method::rk4}) {
    if (eps < 0.0) throw Error("disturbance bound must be non-negative");
    if (!(horizon > 0.0)) throw Error("horizon must be positive");
    cfg.validate();
    std::mt19937_64 rng(seed);
    TrajectorySample tr;
    tr.epsilon = eps;
    tr.times.push_back(0.0);
    tr.states.push_back(x0);
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / cfg.h - 1e-9));
    State x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t0 = static_cast<double>(k) * cfg.h;
        const double t1 = k + 1 == steps ? horizon : static_cast<double>(k + 1) * cfg.h;
        const State u = uniform_in_ball(p.dim(), eps, rng);
        auto g = [&](const State& y) { return p.eval_field(y) + u; };
        IntegratorConfig step_cfg = cfg;
        step_cfg.h = t1 - t0;
        const auto out = Integrator(g, step_cfg).advance(x, t1 - t0);
        x = out.state;
        tr.inputs.push_back(u);
        tr.times.push_back(t1);
        tr.states.push_back(x);
        if (!p.domain().contains(x)) {
            tr.truncated = true;
            break;
        }
    }
    return tr;
}

/// Writes "t,x1,...,xn" followed by one row per recorded state.
inline void write_trajectory_csv(std::ostream& os, const TrajectorySample& tr) {
    const std::size_t n = tr.states.empty() ? 0 : tr.states.front().size();
    os << "t";
    for (std::size_t i = 0; i < n; ++i) os << ",x" << i + 1;
    os << "\n";
    os.precision(17);
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        os << tr.times[k];
        for (std::size_t i = 0; i < n; ++i) os << "," << tr.states[k][i];
        os << "\n";
    }
}

/// Radical-inverse (Halton) point `index` in [0,1)^n.
inline State halton_point(std::size_t index, std::size_t n) {
    static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    State u(n);
    for (std::size_t d = 0; d < n; ++d) {
        double f = 1.0, r = 0.0;
        std::size_t i = index + 1;
        while (i > 0) {
            f /= primes[d];
            r += f * static_cast<double>(i % primes[d]);
            i /= primes[d];
        }
        u[d] = r;
    }
    return u;
}

/// Jacobian of f at x by central differences.
inline Eigen::MatrixXd jacobian_fd(const SafetyProblem& p, const State& x) {
    const std::size_t n = p.dim();
    Eigen::MatrixXd J(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double hj = 1e-6 * std::max(1.0, p.domain()[j].width());
        State xp = x, xm = x;
        xp[j] += hj;
        xm[j] -= hj;
        const State fp = p.eval_field(xp);
        const State fm = p.eval_field(xm);
        for (std::size_t i = 0; i < n; ++i) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * hj);
    }
    return J;
}

/// Upper estimate of the Lipschitz constant of f on the domain box: the largest
/// Jacobian operator norm over `samples` Halton points, times 1.2.
inline double lipschitz_estimate(const SafetyProblem& p, std::size_t samples = 512) {
    if (samples < 2) throw Error("lipschitz_estimate needs at least two samples");
    const std::size_t n = p.dim();
    double best = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const State u = halton_point(s, n);
        State x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = p.domain()[i].lo + u[i] * p.domain()[i].width();
        const Eigen::MatrixXd J = jacobian_fd(p, x);
        const double op = Eigen::JacobiSVD<Eigen::MatrixXd>(J).singularValues()(0);
        best = std::max(best, op);
    }
    return 1.2 * best;
}

}  // namespace safecert
