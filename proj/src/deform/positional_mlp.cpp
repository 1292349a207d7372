#include "dynsplat/deform/positional_mlp.hpp"

#include <cmath>
#include <numbers>

namespace dynsplat {

void PositionalMlpConfig::validate() const {
    if (frequencies < 0) throw ConfigError("positional MLP: frequencies must be >= 0");
    if (width < 1 || hidden_layers < 1 || out_features < 1)
        throw ConfigError("positional MLP: width, hidden_layers and out_features must be positive");
}

namespace {

std::vector<int> layer_widths(const PositionalMlpConfig& c) {
    std::vector<int> w(static_cast<std::size_t>(c.hidden_layers), c.width);
    w.push_back(c.out_features);
    return w;
}

} // namespace

template <typename T>
PositionalMlpEncoder<T>::PositionalMlpEncoder(const PositionalMlpConfig& config, const BoundingBox& bounds,
                                              std::uint64_t seed)
    : config_(config), bounds_(bounds) {
    config_.validate();
    if (bounds_.degenerate()) throw ConfigError("positional MLP: spatial bounds have zero volume");
    // ReLU on the output keeps the feature non-negative like the plane products.
    mlp_ = Mlp<T>(config_.encoding_dim(), layer_widths(config_), seed, false, true);
}

template <typename T> std::size_t PositionalMlpEncoder<T>::expected_parameter_count(const PositionalMlpConfig& c) {
    std::size_t n = 0;
    std::size_t fan_in = static_cast<std::size_t>(c.encoding_dim());
    for (int w : layer_widths(c)) {
        n += (fan_in + 1) * static_cast<std::size_t>(w);
        fan_in = static_cast<std::size_t>(w);
    }
    return n;
}

template <typename T> int PositionalMlpEncoder<T>::width_for_budget(PositionalMlpConfig config, std::size_t budget) {
    int best = 1;
    for (int w = 1; w <= 4096; ++w) {
        config.width = w;
        if (expected_parameter_count(config) > budget) break;
        best = w;
    }
    return best;
}

template <typename T>
MatX<T> PositionalMlpEncoder<T>::encode(std::span<const T> positions, T t, PositionalMlpCache<T>* cache) const {
    if (positions.size() % 3 != 0) throw ConfigError("positional MLP: positions must be N x 3");
    const auto n = static_cast<Eigen::Index>(positions.size() / 3);
    const int f = config_.frequencies;
    MatX<T> enc(config_.encoding_dim(), n);
    MatX<T> coords(4, n);
    std::vector<std::array<bool, 4>> clamped(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec4<T> u;
        for (int a = 0; a < 3; ++a)
            u[a] = (positions[static_cast<std::size_t>(3 * i + a)] - static_cast<T>(bounds_.lo[a])) /
                   static_cast<T>(bounds_.hi[a] - bounds_.lo[a]);
        u[3] = t;
        for (int a = 0; a < 4; ++a) {
            const bool out = !(u[a] >= T(0) && u[a] <= T(1));
            clamped[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] = out;
            if (out) u[a] = u[a] > T(1) ? T(1) : T(0);
        }
        coords.col(i) = u;
        for (int a = 0; a < 4; ++a) {
            enc(a, i) = u[a];
            T freq = std::numbers::pi_v<T>;
            for (int k = 0; k < f; ++k, freq *= T(2)) {
                enc(4 + 8 * k + a, i) = std::sin(freq * u[a]);
                enc(4 + 8 * k + 4 + a, i) = std::cos(freq * u[a]);
            }
        }
    }
    if (cache) {
        cache->count = static_cast<std::size_t>(n);
        cache->coords = coords;
        cache->clamped = std::move(clamped);
        return mlp_.forward(enc, &cache->mlp);
    }
    return mlp_.forward(enc);
}

template <typename T>
void PositionalMlpEncoder<T>::backward(const PositionalMlpCache<T>& cache, const MatX<T>& d_features,
                                       std::span<T> d_positions) {
    const MatX<T> d_enc = mlp_.backward(cache.mlp, d_features);
    if (d_positions.empty()) return;
    if (d_positions.size() != 3 * cache.count)
        throw StateMismatchError("positional MLP backward: position gradient buffer has the wrong size");
    for (std::size_t i = 0; i < cache.count; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        for (int a = 0; a < 3; ++a) {
            if (cache.clamped[i][static_cast<std::size_t>(a)]) continue;
            const T u = cache.coords(a, col);
            T d_u = d_enc(a, col);
            T freq = std::numbers::pi_v<T>;
            for (int k = 0; k < config_.frequencies; ++k, freq *= T(2)) {
                d_u += d_enc(4 + 8 * k + a, col) * freq * std::cos(freq * u);
                d_u -= d_enc(4 + 8 * k + 4 + a, col) * freq * std::sin(freq * u);
            }
            d_positions[3 * i + static_cast<std::size_t>(a)] += d_u / static_cast<T>(bounds_.hi[a] - bounds_.lo[a]);
        }
    }
}

template class PositionalMlpEncoder<float>;
template class PositionalMlpEncoder<double>;

} // namespace dynsplat
