#pragma once

// Globally adaptive Gauss-Kronrod (31 points) built on Boost's fixed rule.
//
// Boost 1.74's recursive driver compares the unscaled [-1, 1] error of a
// subinterval against a scaled tolerance, so it over-refines narrow pieces
// until max depth. Here each piece's error is rescaled by its half-width and
// the worst piece is bisected until the summed error meets the target.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "impactlab/errors.hpp"

namespace impactlab {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;
};

namespace detail {

inline std::string quad_message(double a, double b, const QuadratureResult& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "quadrature on [%.6g, %.6g] missed tolerance: value %.6g, error %.3g, L1 %.3g",
                  a, b, r.value, r.error, r.l1);
    return buf;
}

struct Piece {
    double a;
    double b;
    QuadratureResult r;
    bool operator<(const Piece& o) const { return r.error < o.r.error; }
};

template <class F>
Piece gk_piece(F& f, double a, double b) {
    Piece p{a, b, {}};
    double err = 0.0;
    double l1 = 0.0;
    p.r.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &err, &l1);
    p.r.error = err * 0.5 * (b - a);
    p.r.l1 = l1;
    return p;
}

inline QuadratureResult sum_pieces(std::priority_queue<Piece> heap) {
    QuadratureResult t;
    for (; !heap.empty(); heap.pop()) {
        t.value += heap.top().r.value;
        t.error += heap.top().r.error;
        t.l1 += heap.top().r.l1;
    }
    return t;
}

}  // namespace detail

/// Integrates f over consecutive break points. Throws ConvergenceError when the
/// summed error cannot be brought under max(abs_tol, rel_tol * L1).
template <class F>
QuadratureResult integrate_pieces(F&& f, std::span<const double> breaks, double rel_tol, double abs_tol = 0.0,
                                  int max_pieces = 4000) {
    std::priority_queue<detail::Piece> heap;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (!(breaks[i] < breaks[i + 1])) continue;
        heap.push(detail::gk_piece(f, breaks[i], breaks[i + 1]));
    }
    QuadratureResult running = detail::sum_pieces(heap);
    int pieces = static_cast<int>(heap.size());
    while (!heap.empty() && running.error > std::max(abs_tol, rel_tol * running.l1)) {
        const detail::Piece worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (pieces >= max_pieces || !(worst.a < mid && mid < worst.b)) {
            throw ConvergenceError(detail::quad_message(breaks.front(), breaks.back(), detail::sum_pieces(heap)));
        }
        heap.pop();
        const auto left = detail::gk_piece(f, worst.a, mid);
        const auto right = detail::gk_piece(f, mid, worst.b);
        running.error += left.r.error + right.r.error - worst.r.error;
        running.l1 += left.r.l1 + right.r.l1 - worst.r.l1;
        heap.push(left);
        heap.push(right);
        ++pieces;
    }
    const QuadratureResult total = detail::sum_pieces(heap);
    if (!std::isfinite(total.value)) {
        throw ConvergenceError(detail::quad_message(breaks.front(), breaks.back(), total));
    }
    return total;
}

template <class F>
QuadratureResult integrate_gk(F&& f, double a, double b, double rel_tol, double abs_tol = 0.0) {
    if (a == b) return {};
    const double br[2] = {a, b};
    return integrate_pieces(f, std::span<const double>(br, 2), rel_tol, abs_tol);
}

}  // namespace impactlab
