#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace safecert {

/// Upper bound on the state dimension. Grid-based set representations become
/// infeasible long before this is reached.
inline constexpr std::size_t kMaxDim = 6;

/// Fixed-capacity point in R^n with inline storage, so that the integrator
/// inner loops never touch the heap.
class State {
public:
    State() = default;

    explicit State(std::size_t n, double fill = 0.0) : n_(n) {
        if (n > kMaxDim) throw std::invalid_argument("state dimension exceeds kMaxDim");
        std::fill_n(v_.begin(), n, fill);
    }

    State(std::initializer_list<double> xs) : State(xs.size()) {
        std::copy(xs.begin(), xs.end(), v_.begin());
    }

    static State from(std::span<const double> xs) {
        State s(xs.size());
        std::copy(xs.begin(), xs.end(), s.v_.begin());
        return s;
    }

    std::size_t size() const noexcept { return n_; }
    double& operator[](std::size_t i) noexcept { return v_[i]; }
    double operator[](std::size_t i) const noexcept { return v_[i]; }
    double* data() noexcept { return v_.data(); }
    const double* data() const noexcept { return v_.data(); }
    double* begin() noexcept { return v_.data(); }
    double* end() noexcept { return v_.data() + n_; }
    const double* begin() const noexcept { return v_.data(); }
    const double* end() const noexcept { return v_.data() + n_; }

    std::span<const double> span() const noexcept { return {v_.data(), n_}; }
    std::vector<double> to_vector() const { return {begin(), end()}; }

    State& operator+=(const State& o) noexcept {
        for (std::size_t i = 0; i < n_; ++i) v_[i] += o.v_[i];
        return *this;
    }
    State& operator-=(const State& o) noexcept {
        for (std::size_t i = 0; i < n_; ++i) v_[i] -= o.v_[i];
        return *this;
    }
    State& operator*=(double a) noexcept {
        for (std::size_t i = 0; i < n_; ++i) v_[i] *= a;
        return *this;
    }

    friend State operator+(State a, const State& b) noexcept { return a += b; }
    friend State operator-(State a, const State& b) noexcept { return a -= b; }
    friend State operator*(double k, State a) noexcept { return a *= k; }
    friend State operator*(State a, double k) noexcept { return a *= k; }
    friend State operator-(State a) noexcept { return a *= -1.0; }

    friend bool operator==(const State& a, const State& b) noexcept {
        return a.n_ == b.n_ && std::equal(a.begin(), a.end(), b.begin());
    }

private:
    std::array<double, kMaxDim> v_{};
    std::size_t n_ = 0;
};

inline double dot(const State& a, const State& b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const State& a) noexcept { return std::sqrt(dot(a, a)); }

inline double distance(const State& a, const State& b) noexcept { return norm(a - b); }

/// a + k*b without temporaries.
inline State axpy(const State& a, double k, const State& b) noexcept {
    State r = a;
    for (std::size_t i = 0; i < a.size(); ++i) r[i] += k * b[i];
    return r;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const noexcept { return hi - lo; }
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

/// Axis-aligned box, the bounded analysis domain.
class Box {
public:
    Box() = default;
    explicit Box(std::vector<Interval> axes) : axes_(std::move(axes)) {
        if (axes_.empty()) throw std::invalid_argument("box must have at least one axis");
        if (axes_.size() > kMaxDim) throw std::invalid_argument("box dimension exceeds kMaxDim");
        for (const auto& a : axes_)
            if (!(a.lo < a.hi)) throw std::invalid_argument("box axis must satisfy lo < hi");
    }

    std::size_t dim() const noexcept { return axes_.size(); }
    const Interval& operator[](std::size_t i) const noexcept { return axes_[i]; }
    const std::vector<Interval>& axes() const noexcept { return axes_; }

    bool contains(const State& x) const noexcept {
        for (std::size_t i = 0; i < axes_.size(); ++i)
            if (!axes_[i].contains(x[i])) return false;
        return true;
    }

    State center() const {
        State c(dim());
        for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (axes_[i].lo + axes_[i].hi);
        return c;
    }

    friend bool operator==(const Box& a, const Box& b) noexcept {
        if (a.axes_.size() != b.axes_.size()) return false;
        for (std::size_t i = 0; i < a.axes_.size(); ++i)
            if (a.axes_[i].lo != b.axes_[i].lo || a.axes_[i].hi != b.axes_[i].hi) return false;
        return true;
    }

private:
    std::vector<Interval> axes_;
};

/// "(x1, x2, ...)" with default stream precision.
inline std::string format_point(const State& x) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

}  // namespace safecert
