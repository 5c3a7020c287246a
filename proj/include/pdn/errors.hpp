#pragma once

#include <stdexcept>
#include <string>

namespace pdn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches; messages name both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid domain values: non-unit directions, bad ranges, inconsistent specs.
struct ValidationError : Error {
    using Error::Error;
};

// Batchnorm eval requested before any training statistics exist.
struct UninitializedStatsError : Error {
    using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NonFiniteError : Error {
    using Error::Error;
};

// Mesh is not a closed orientable surface.
struct TopologyError : Error {
    using Error::Error;
};

// Rejection sampling acceptance collapsed; shape has ~no interior volume.
struct DegenerateShapeError : Error {
    using Error::Error;
};

// A field has max == min, so no affine normalization exists.
struct ConstantFieldError : Error {
    using Error::Error;
};

// R^2 requested on a zero-variance target vector.
struct ZeroVarianceError : Error {
    using Error::Error;
};

// Malformed or truncated on-disk payload; messages carry the byte offset.
struct FormatError : Error {
    using Error::Error;
};

// Inputs do not match the schema a model/checkpoint expects.
struct SchemaError : Error {
    using Error::Error;
};

// Operation requires a point count the model was not trained for.
struct UnsupportedResolutionError : Error {
    using Error::Error;
};

}  // namespace pdn
