#include "dynsplat/train/adam.hpp"

#include <cmath>

namespace dynsplat {

template <typename T> void Adam<T>::step(const ParamBlock<T>& block, double multiplier) {
    if (block.values.size() != block.grads.size())
        throw StateMismatchError("adam: block '" + block.name + "' has mismatched value and gradient sizes");
    if (multiplier == 0.0) return;
    auto& st = moments_[block.name];
    if (st.m.size() != block.values.size()) {
        if (!st.m.empty())
            throw StateMismatchError("adam: block '" + block.name + "' changed size without remap()");
        st.m.assign(block.values.size(), T(0));
        st.v.assign(block.values.size(), T(0));
    }
    ++st.step;
    const double lr = config_.lr * multiplier;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(st.step));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(config_.eps);
    for (std::size_t k = 0; k < block.values.size(); ++k) {
        const T g = block.grads[k];
        st.m[k] = b1 * st.m[k] + (T(1) - b1) * g;
        st.v[k] = b2 * st.v[k] + (T(1) - b2) * g * g;
        block.values[k] -= step_size * st.m[k] / (std::sqrt(st.v[k]) * inv_sqrt_bc2 + eps);
    }
}

template <typename T>
void Adam<T>::step(const std::vector<ParamBlock<T>>& blocks, const std::function<double(const std::string&)>& multiplier) {
    for (const auto& b : blocks) step(b, multiplier(b.name));
}

template <typename T>
void Adam<T>::remap(const std::string& name, std::size_t item_width, const std::vector<bool>& keep, std::size_t appended) {
    auto it = moments_.find(name);
    if (it == moments_.end()) return;
    auto& st = it->second;
    if (st.m.size() != keep.size() * item_width)
        throw StateMismatchError("adam: remap of '" + name + "' does not match its item count");
    auto apply = [&](std::vector<T>& v) {
        std::size_t out = 0;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (!keep[i]) continue;
            for (std::size_t k = 0; k < item_width; ++k) v[out * item_width + k] = v[i * item_width + k];
            ++out;
        }
        v.resize((out + appended) * item_width);
        std::fill(v.begin() + static_cast<std::ptrdiff_t>(out * item_width), v.end(), T(0));
    };
    apply(st.m);
    apply(st.v);
}

template class Adam<float>;
template class Adam<double>;

} // namespace dynsplat
