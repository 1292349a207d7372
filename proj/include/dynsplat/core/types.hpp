#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynsplat {

template <typename T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T> using Vec4 = Eigen::Matrix<T, 4, 1>;
template <typename T> using Mat2 = Eigen::Matrix<T, 2, 2>;
template <typename T> using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T> using Mat4 = Eigen::Matrix<T, 4, 4>;
template <typename T> using Mat23 = Eigen::Matrix<T, 2, 3>;
template <typename T> using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T> using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent or out-of-range configuration (sizes, degrees, dimensions).
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Raised when a backward pass receives state that does not belong to the
/// forward pass it is asked to differentiate.
class StateMismatchError : public Error {
public:
    using Error::Error;
};

/// A named, contiguous block of trainable values and the matching gradient
/// buffer. Optimizers and checkpoints iterate over these.
template <typename T> struct ParamBlock {
    std::string name;
    std::span<T> values;
    std::span<T> grads;
    /// Number of scalars per item (e.g. 3 for per-Gaussian positions). Used
    /// when items are inserted or removed (densification).
    std::size_t item_width = 1;
};

/// Axis-aligned box in world coordinates.
struct BoundingBox {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();

    Eigen::Vector3d extent() const { return hi - lo; }
    bool degenerate() const { return !((hi - lo).array() > 0.0).all(); }
    /// Grows each side by `fraction` of the extent.
    BoundingBox expanded(double fraction) const {
        const Eigen::Vector3d pad = extent() * fraction;
        return {lo - pad, hi + pad};
    }
};

/// Threading contract shared by every parallel pass.
struct ExecPolicy {
    int threads = 1;
    /// Fixed work partition and fixed-order reductions. Bit-identical output
    /// for a fixed thread count.
    bool deterministic = true;
};

} // namespace dynsplat
