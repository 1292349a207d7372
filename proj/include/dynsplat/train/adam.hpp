#pragma once

#include "dynsplat/core/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dynsplat {

struct AdamConfig {
    double lr = 1.6e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// First and second moments of one parameter block. `step` counts the
/// updates this block has received (bias correction is per block).
template <typename T> struct AdamMoments {
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t step = 0;
};

/// Adam keyed by parameter-block name.
template <typename T> class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }

    /// One update of `block` with learning rate config().lr * multiplier. A
    /// multiplier of 0 leaves values, moments and step count untouched.
    void step(const ParamBlock<T>& block, double multiplier);
    /// Updates every block; `multiplier(name)` selects its learning rate.
    void step(const std::vector<ParamBlock<T>>& blocks, const std::function<double(const std::string&)>& multiplier);

    /// Keeps moments of items with keep[i] and appends `appended` zeroed items.
    void remap(const std::string& name, std::size_t item_width, const std::vector<bool>& keep, std::size_t appended);

    const std::map<std::string, AdamMoments<T>>& moments() const { return moments_; }
    std::map<std::string, AdamMoments<T>>& moments() { return moments_; }

private:
    AdamConfig config_;
    std::map<std::string, AdamMoments<T>> moments_;
};

} // namespace dynsplat
