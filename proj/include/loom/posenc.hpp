#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "loom/numerics.hpp"

namespace loom {

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CapacityExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Pos = std::array<double, 2>;

struct RotationSpec {
    double delta_requested = 0.0;
    double sin_hat = 0.0;
    double cos_hat = 1.0;
    // Maps p_{i-1} to p_i: (x, y) -> (c x + s y, -s x + c y).
    Matrix rotation = Matrix::identity(2);

    double angle() const { return std::atan2(sin_hat, cos_hat); }
};

inline RotationSpec rotation_from_pair(double s, double c, double requested = 0.0) {
    RotationSpec spec;
    spec.delta_requested = requested;
    spec.sin_hat = s;
    spec.cos_hat = c;
    spec.rotation = Matrix{{c, s}, {-s, c}};
    return spec;
}

inline RotationSpec quantize_angle(double delta) {
    if (!(delta > 0.0 && delta < std::numbers::pi / 2))
        throw DomainError("quantize_angle: delta must lie in (0, pi/2)");
    double s = std::sin(delta);
    double c = std::cos(delta);
    double norm = std::hypot(s, c);
    if (norm != 1.0) {
        s /= norm;
        c /= norm;
    }
    return rotation_from_pair(s, c, delta);
}

inline std::size_t capacity(const RotationSpec& spec) {
    double a = spec.angle();
    if (a <= 0.0) return 0;
    return static_cast<std::size_t>(std::floor(2.0 * std::numbers::pi / a));
}

// One rotation step, each coordinate correctly rounded. The increment layer
// evaluates the same exact sums, so network positions match the table bit for bit.
inline Pos rotate_step(const Pos& p, const RotationSpec& spec) {
    ExactSum x, y;
    x.add_product(spec.cos_hat, p[0]);
    x.add_product(spec.sin_hat, p[1]);
    y.add_product(-spec.sin_hat, p[0]);
    y.add_product(spec.cos_hat, p[1]);
    return {x.value(), y.value()};
}

struct PositionTable {
    std::vector<Pos> positions;
    double margin = 0.0;  // 1 - cos(delta_hat)

    std::size_t size() const { return positions.size(); }
    const Pos& operator[](std::size_t i) const { return positions[i]; }
};

inline PositionTable enumerate_positions(std::size_t n, const RotationSpec& spec) {
    if (n + 1 > capacity(spec))
        throw CapacityExceeded("enumerate_positions: " + std::to_string(n + 1) +
                               " positions exceed capacity " + std::to_string(capacity(spec)));
    PositionTable table;
    table.margin = 1.0 - spec.cos_hat;
    table.positions.reserve(n + 1);
    table.positions.push_back({0.0, 1.0});
    for (std::size_t i = 1; i <= n; ++i) table.positions.push_back(rotate_step(table.positions.back(), spec));
    return table;
}

inline double dot(const Pos& a, const Pos& b) { return a[0] * b[0] + a[1] * b[1]; }

}  // namespace loom
