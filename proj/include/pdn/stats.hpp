#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "pdn/errors.hpp"

namespace pdn {

// Heads bound their outputs, so targets are squeezed into a margin inside the
// head's range; inputs map onto [-1, 1].
enum class HeadKind { Tanh, Sigmoid };

constexpr double kTanhLo = -0.95, kTanhHi = 0.95;
constexpr double kSigmoidLo = 0.025, kSigmoidHi = 0.975;
constexpr double kInputLo = -1.0, kInputHi = 1.0;

inline std::pair<double, double> head_range(HeadKind head) {
    return head == HeadKind::Tanh ? std::pair{kTanhLo, kTanhHi} : std::pair{kSigmoidLo, kSigmoidHi};
}

struct Range {
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void expand(double v) {
        if (v < min) min = v;
        if (v > max) max = v;
    }
};

// y = scale * v + offset, with the inverse exact up to rounding.
struct Affine {
    double scale = 1.0, offset = 0.0;
    double apply(double v) const { return scale * v + offset; }
    double invert(double y) const { return (y - offset) / scale; }
};

inline Affine make_affine(const Range& r, double lo, double hi, const std::string& field) {
    if (!(r.max > r.min))
        throw ConstantFieldError("field '" + field + "' is constant (min == max == " +
                                 std::to_string(r.min) + "); no affine normalization exists");
    const double scale = (hi - lo) / (r.max - r.min);
    return Affine{scale, lo - scale * r.min};
}

// Per-field min/max over the training split: the four targets plus the model
// inputs that get normalized. Fitted once, stored in the manifest, reused at
// inference.
struct FieldStats {
    static constexpr std::array<const char*, 4> target_names{"u_x", "u_y", "u_z", "von_mises"};

    std::array<Range, 4> targets;
    std::array<Range, 3> coords;
    Range sdf;
    Range mass;
    Range force;

    Affine target_affine(size_t field, HeadKind head) const {
        auto [lo, hi] = head_range(head);
        return make_affine(targets[field], lo, hi, target_names[field]);
    }
    Affine coord_affine(size_t axis) const {
        static constexpr std::array<const char*, 3> names{"coord_x", "coord_y", "coord_z"};
        return make_affine(coords[axis], kInputLo, kInputHi, names[axis]);
    }
    Affine sdf_affine() const { return make_affine(sdf, kInputLo, kInputHi, "sdf"); }
    Affine mass_affine() const { return make_affine(mass, kInputLo, kInputHi, "mass"); }
    Affine force_affine() const { return make_affine(force, kInputLo, kInputHi, "force"); }
};

}  // namespace pdn
