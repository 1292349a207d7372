#pragma once

#include "dynsplat/core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dynsplat {

/// Activations kept by Mlp::forward for the backward pass.
template <typename T> struct MlpCache {
    /// layer_inputs[l] is the input of linear layer l (post-activation of
    /// layer l - 1). Column j is sample j.
    std::vector<MatX<T>> layer_inputs;
    MatX<T> output;
};

/// Fully connected network with ReLU between layers. Samples are columns.
template <typename T> class Mlp {
public:
    Mlp() = default;
    /// `widths` lists every layer's output size, the last one being the
    /// network output. Hidden layers use PyTorch's default uniform
    /// initialization; `zero_output` zeroes the last layer's weights and bias.
    Mlp(int in_dim, const std::vector<int>& widths, std::uint64_t seed, bool zero_output = false,
        bool relu_output = false);

    int in_dim() const { return in_dim_; }
    int out_dim() const { return weights.empty() ? in_dim_ : static_cast<int>(weights.back().rows()); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;

    MatX<T> forward(const MatX<T>& x, MlpCache<T>* cache = nullptr) const;
    /// Accumulates parameter gradients and returns dL/dx.
    MatX<T> backward(const MlpCache<T>& cache, const MatX<T>& d_out);

    void zero_grad();
    std::vector<ParamBlock<T>> parameter_blocks(const std::string& prefix);

    std::vector<MatX<T>> weights;
    std::vector<VecX<T>> biases;
    std::vector<MatX<T>> weight_grads;
    std::vector<VecX<T>> bias_grads;
    bool relu_output = false;

private:
    int in_dim_ = 0;
};

} // namespace dynsplat
