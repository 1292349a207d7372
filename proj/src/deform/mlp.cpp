#include "dynsplat/deform/mlp.hpp"

#include <cmath>
#include <random>

namespace dynsplat {

template <typename T>
Mlp<T>::Mlp(int in_dim, const std::vector<int>& widths, std::uint64_t seed, bool zero_output, bool relu_out)
    : relu_output(relu_out), in_dim_(in_dim) {
    if (in_dim < 1 || widths.empty()) throw ConfigError("MLP needs a positive input size and at least one layer");
    std::mt19937_64 rng(seed);
    int fan_in = in_dim;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const int out = widths[l];
        if (out < 1) throw ConfigError("MLP layer widths must be positive");
        MatX<T> w(out, fan_in);
        VecX<T> b(out);
        const bool last = l + 1 == widths.size();
        if (last && zero_output) {
            w.setZero();
            b.setZero();
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<T>(dist(rng));
            for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<T>(dist(rng));
        }
        weights.push_back(std::move(w));
        biases.push_back(std::move(b));
        weight_grads.push_back(MatX<T>::Zero(out, fan_in));
        bias_grads.push_back(VecX<T>::Zero(out));
        fan_in = out;
    }
}

template <typename T> std::size_t Mlp<T>::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

template <typename T> MatX<T> Mlp<T>::forward(const MatX<T>& x, MlpCache<T>* cache) const {
    if (x.rows() != in_dim_)
        throw ConfigError("MLP input has " + std::to_string(x.rows()) + " features, expected " + std::to_string(in_dim_));
    if (cache) cache->layer_inputs.clear();
    MatX<T> h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (cache) cache->layer_inputs.push_back(h);
        MatX<T> z = weights[l] * h;
        z.colwise() += biases[l];
        const bool last = l + 1 == weights.size();
        if (!last || relu_output) z = z.cwiseMax(T(0));
        h = std::move(z);
    }
    if (cache) cache->output = h;
    return h;
}

template <typename T> MatX<T> Mlp<T>::backward(const MlpCache<T>& cache, const MatX<T>& d_out) {
    if (cache.layer_inputs.size() != weights.size() || d_out.rows() != out_dim() ||
        d_out.cols() != cache.output.cols())
        throw StateMismatchError("MLP backward: cache does not match this network or gradient shape");
    MatX<T> grad = d_out;
    for (std::size_t l = weights.size(); l-- > 0;) {
        const bool last = l + 1 == weights.size();
        // Post-activation of layer l is the input of l + 1 (or the output).
        const MatX<T>& post = last ? cache.output : cache.layer_inputs[l + 1];
        if (!last || relu_output) grad = grad.cwiseProduct((post.array() > T(0)).matrix().template cast<T>());
        weight_grads[l].noalias() += grad * cache.layer_inputs[l].transpose();
        bias_grads[l] += grad.rowwise().sum();
        grad = weights[l].transpose() * grad;
    }
    return grad;
}

template <typename T> void Mlp<T>::zero_grad() {
    for (auto& g : weight_grads) g.setZero();
    for (auto& g : bias_grads) g.setZero();
}

template <typename T> std::vector<ParamBlock<T>> Mlp<T>::parameter_blocks(const std::string& prefix) {
    std::vector<ParamBlock<T>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const std::string tag = prefix + ".layer" + std::to_string(l);
        out.push_back({tag + ".weight", std::span<T>(weights[l].data(), static_cast<std::size_t>(weights[l].size())),
                       std::span<T>(weight_grads[l].data(), static_cast<std::size_t>(weight_grads[l].size()))});
        out.push_back({tag + ".bias", std::span<T>(biases[l].data(), static_cast<std::size_t>(biases[l].size())),
                       std::span<T>(bias_grads[l].data(), static_cast<std::size_t>(bias_grads[l].size()))});
    }
    return out;
}

template class Mlp<float>;
template class Mlp<double>;

} // namespace dynsplat
