#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace blowup {

/// `Line` is the real line (N = 1); `Radial3D` holds radially symmetric
/// fields in R^3 sampled at r = 0, h, 2h, ...
enum class Geometry { Line, Radial3D };

inline const char* to_string(Geometry g) { return g == Geometry::Line ? "line" : "radial3d"; }

/// Uniform nodes x_i = x_min + i h, i = 0..n-1.
struct Grid {
    Geometry geometry = Geometry::Line;
    double x_min = 0.0;
    double h = 0.0;
    std::size_t n = 0;

    double x(std::size_t i) const { return x_min + static_cast<double>(i) * h; }
    double x_max() const { return x(n - 1); }

    static Grid line(double x_min, double x_max, std::size_t n) {
        return {Geometry::Line, x_min, (x_max - x_min) / static_cast<double>(n - 1), n};
    }
    static Grid radial(double r_max, std::size_t n) {
        return {Geometry::Radial3D, 0.0, r_max / static_cast<double>(n - 1), n};
    }

    template <class F>
    std::vector<double> sample(F&& fn) const {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(x(i));
        return out;
    }
};

/// Values on a contiguous window of grid nodes [offset, offset + values.size()).
/// Radial windows that start at r = 0 are extended across the origin with the
/// given parity (+1 even, -1 odd); differentiation flips the parity.
class GridWindow {
public:
    GridWindow(const Grid& grid, std::size_t offset, std::vector<double> values, int parity = 1)
        : grid_(grid), offset_(offset), values_(std::move(values)), parity_(parity) {}

    const Grid& grid() const { return grid_; }
    std::size_t offset() const { return offset_; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    int parity() const { return parity_; }
    double node(std::size_t k) const { return values_[k]; }

    /// Value at global node index j (may be negative for radial reflection).
    double at(long j) const {
        double sign = 1.0;
        if (grid_.geometry == Geometry::Radial3D && j < 0) {
            j = -j;
            sign = parity_;
        }
        const long k = j - static_cast<long>(offset_);
        if (k < 0 || k >= static_cast<long>(values_.size()))
            throw std::out_of_range("GridWindow: stencil leaves the sampled window");
        return sign * values_[static_cast<std::size_t>(k)];
    }

    bool has(long j) const {
        if (grid_.geometry == Geometry::Radial3D && j < 0) j = -j;
        const long k = j - static_cast<long>(offset_);
        return k >= 0 && k < static_cast<long>(values_.size());
    }

    /// 4-point cubic Lagrange interpolation at position x.
    double interpolate(double x) const {
        const double q = (x - grid_.x_min) / grid_.h;
        long i = static_cast<long>(std::floor(q));
        long lo = i - 1;
        // shift the stencil inward at window edges
        while (!has(lo) && has(lo + 4)) ++lo;
        while (!has(lo + 3) && has(lo - 1)) --lo;
        const double th = q - static_cast<double>(lo);
        const double f0 = at(lo), f1 = at(lo + 1), f2 = at(lo + 2), f3 = at(lo + 3);
        const double l0 = -(th - 1) * (th - 2) * (th - 3) / 6.0;
        const double l1 = th * (th - 2) * (th - 3) / 2.0;
        const double l2 = -th * (th - 1) * (th - 3) / 2.0;
        const double l3 = th * (th - 1) * (th - 2) / 6.0;
        return l0 * f0 + l1 * f1 + l2 * f2 + l3 * f3;
    }

    /// Fourth-order central first derivative on the nodes of the window; the
    /// outermost two nodes on each side fall back to lower-order stencils.
    GridWindow derivative() const { return differentiate(1); }
    GridWindow second_derivative() const { return differentiate(2); }

private:
    GridWindow differentiate(int order) const {
        std::vector<double> d(values_.size());
        const double h = grid_.h;
        for (std::size_t k = 0; k < values_.size(); ++k) {
            const long j = static_cast<long>(offset_ + k);
            if (has(j - 2) && has(j + 2)) {
                if (order == 1)
                    d[k] = (-at(j + 2) + 8.0 * at(j + 1) - 8.0 * at(j - 1) + at(j - 2)) / (12.0 * h);
                else
                    d[k] = (-at(j + 2) + 16.0 * at(j + 1) - 30.0 * at(j) + 16.0 * at(j - 1) - at(j - 2)) / (12.0 * h * h);
            } else if (has(j - 1) && has(j + 1)) {
                d[k] = order == 1 ? (at(j + 1) - at(j - 1)) / (2.0 * h)
                                  : (at(j + 1) - 2.0 * at(j) + at(j - 1)) / (h * h);
            } else if (has(j + 2)) {
                d[k] = order == 1 ? (-3.0 * at(j) + 4.0 * at(j + 1) - at(j + 2)) / (2.0 * h)
                                  : (at(j) - 2.0 * at(j + 1) + at(j + 2)) / (h * h);
            } else {
                d[k] = order == 1 ? (3.0 * at(j) - 4.0 * at(j - 1) + at(j - 2)) / (2.0 * h)
                                  : (at(j) - 2.0 * at(j - 1) + at(j - 2)) / (h * h);
            }
        }
        return GridWindow(grid_, offset_, std::move(d), order == 1 ? -parity_ : parity_);
    }

    Grid grid_;
    std::size_t offset_;
    std::vector<double> values_;
    int parity_;
};

}  // namespace blowup
