#include "dynsplat/deform/deformation.hpp"

namespace dynsplat {

std::string to_string(EncoderKind kind) { return kind == EncoderKind::HexPlane ? "hexplane" : "mlp"; }

EncoderKind encoder_kind_from_string(const std::string& s) {
    if (s == "hexplane") return EncoderKind::HexPlane;
    if (s == "mlp") return EncoderKind::PositionalMlp;
    throw ConfigError("unknown deformation encoder '" + s + "' (expected hexplane or mlp)");
}

template <typename T>
DeformationDecoders<T>::DeformationDecoders(int feature_dim, const DecoderConfig& config, std::uint64_t seed)
    : config_(config), feature_dim_(feature_dim) {
    if (feature_dim < 1 || config.hidden_width < 1 || (config.shared_trunk && config.trunk_width < 1))
        throw ConfigError("decoder sizes must be positive");
    int head_in = feature_dim;
    if (config.shared_trunk) {
        trunk_ = Mlp<T>(feature_dim, {config.trunk_width}, seed ^ 0x7472756e6bULL, false, true);
        head_in = config.trunk_width;
    }
    for (std::size_t k = 0; k < 4; ++k)
        heads_[k] = Mlp<T>(head_in, {config.hidden_width, kHeadOutputs[k]}, seed + 0x9e3779b97f4a7c15ULL * (k + 1), true);
}

template <typename T> MatX<T> DeformationDecoders<T>::decode(const MatX<T>& features, DecoderCache<T>* cache) const {
    if (features.rows() != feature_dim_)
        throw ConfigError("decoder input has " + std::to_string(features.rows()) + " features, expected " +
                          std::to_string(feature_dim_));
    const MatX<T> h = config_.shared_trunk ? trunk_.forward(features, cache ? &cache->trunk : nullptr) : features;
    MatX<T> out(DeltaLayout::kRows, features.cols());
    int row = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        out.middleRows(row, kHeadOutputs[k]) = heads_[k].forward(h, cache ? &cache->heads[k] : nullptr);
        row += kHeadOutputs[k];
    }
    return out;
}

template <typename T> MatX<T> DeformationDecoders<T>::backward(const DecoderCache<T>& cache, const MatX<T>& d_deltas) {
    if (d_deltas.rows() != DeltaLayout::kRows) throw StateMismatchError("decoder backward: wrong delta gradient shape");
    MatX<T> d_h;
    int row = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        MatX<T> d = heads_[k].backward(cache.heads[k], d_deltas.middleRows(row, kHeadOutputs[k]));
        if (k == 0) d_h = std::move(d);
        else d_h += d;
        row += kHeadOutputs[k];
    }
    return config_.shared_trunk ? trunk_.backward(cache.trunk, d_h) : d_h;
}

template <typename T> void DeformationDecoders<T>::zero_grad() {
    if (config_.shared_trunk) trunk_.zero_grad();
    for (auto& h : heads_) h.zero_grad();
}

template <typename T> std::vector<ParamBlock<T>> DeformationDecoders<T>::parameter_blocks() {
    std::vector<ParamBlock<T>> out;
    if (config_.shared_trunk) out = trunk_.parameter_blocks("decoder.trunk");
    for (std::size_t k = 0; k < 4; ++k) {
        auto b = heads_[k].parameter_blocks(std::string("decoder.") + kHeadNames[k]);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

template <typename T> std::size_t DeformationDecoders<T>::parameter_count() const {
    std::size_t n = config_.shared_trunk ? trunk_.parameter_count() : 0;
    for (const auto& h : heads_) n += h.parameter_count();
    return n;
}

template <typename T>
DeformationField<T>::DeformationField(const DeformationConfig& config, const BoundingBox& bounds, std::uint64_t seed)
    : config_(config), bounds_(bounds) {
    if (config.encoder == EncoderKind::HexPlane) encoder_ = HexPlaneField<T>(config.hexplane, bounds, seed);
    else encoder_ = PositionalMlpEncoder<T>(config.positional, bounds, seed);
    decoders_ = DeformationDecoders<T>(feature_dim(), config.decoder, seed ^ 0xdec0de5ULL);
}

template <typename T> int DeformationField<T>::feature_dim() const {
    return std::visit([](const auto& e) { return e.feature_dim(); }, encoder_);
}

template <typename T> HexPlaneField<T>& DeformationField<T>::hexplane() {
    if (auto* h = std::get_if<HexPlaneField<T>>(&encoder_)) return *h;
    throw ConfigError("deformation field does not use a HexPlane encoder");
}

template <typename T> const HexPlaneField<T>& DeformationField<T>::hexplane() const {
    if (const auto* h = std::get_if<HexPlaneField<T>>(&encoder_)) return *h;
    throw ConfigError("deformation field does not use a HexPlane encoder");
}

template <typename T> PositionalMlpEncoder<T>& DeformationField<T>::positional() {
    if (auto* p = std::get_if<PositionalMlpEncoder<T>>(&encoder_)) return *p;
    throw ConfigError("deformation field does not use a positional MLP encoder");
}

template <typename T>
MatX<T> DeformationField<T>::features(const GaussianCloud<T>& canonical, T t, DeformationCache<T>* cache,
                                      const ExecPolicy& exec) const {
    const std::span<const T> pos(canonical.positions);
    if (const auto* h = std::get_if<HexPlaneField<T>>(&encoder_)) return h->encode(pos, t, cache ? &cache->hexplane : nullptr, exec);
    return std::get<PositionalMlpEncoder<T>>(encoder_).encode(pos, t, cache ? &cache->positional : nullptr);
}

template <typename T>
GaussianCloud<T> DeformationField<T>::deform(const GaussianCloud<T>& canonical, T t, DeformationCache<T>* cache,
                                             const ExecPolicy& exec) const {
    const MatX<T> f = features(canonical, t, cache, exec);
    const MatX<T> d = decoders_.decode(f, cache ? &cache->decoders : nullptr);
    if (cache) {
        cache->count = canonical.size();
        cache->time = t;
    }
    GaussianCloud<T> out = canonical;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        for (int a = 0; a < 3; ++a) {
            out.positions[3 * i + a] += d(DeltaLayout::kPosition + a, c);
            out.log_scales[3 * i + a] += d(DeltaLayout::kLogScale + a, c);
        }
        for (int a = 0; a < 4; ++a) out.rotations[4 * i + a] += d(DeltaLayout::kRotation + a, c);
        out.opacity_logits[i] += d(DeltaLayout::kOpacity, c);
    }
    return out;
}

template <typename T>
void DeformationField<T>::backward(const DeformationCache<T>& cache, const GaussianCloud<T>& d_deformed,
                                   GaussianCloud<T>& d_canonical, const ExecPolicy& exec) {
    const std::size_t n = cache.count;
    if (d_deformed.size() != n || d_canonical.size() != n || d_deformed.sh_coeffs.size() != d_canonical.sh_coeffs.size())
        throw StateMismatchError("deformation backward: gradient clouds do not match the forward pass");

    // Additive deltas: every deformed gradient passes straight to the canonical
    // attribute and to the matching decoder output.
    MatX<T> d_deltas(DeltaLayout::kRows, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        for (int a = 0; a < 3; ++a) {
            d_deltas(DeltaLayout::kPosition + a, c) = d_deformed.positions[3 * i + a];
            d_deltas(DeltaLayout::kLogScale + a, c) = d_deformed.log_scales[3 * i + a];
        }
        for (int a = 0; a < 4; ++a) d_deltas(DeltaLayout::kRotation + a, c) = d_deformed.rotations[4 * i + a];
        d_deltas(DeltaLayout::kOpacity, c) = d_deformed.opacity_logits[i];
    }
    for (std::size_t k = 0; k < d_canonical.positions.size(); ++k) d_canonical.positions[k] += d_deformed.positions[k];
    for (std::size_t k = 0; k < d_canonical.rotations.size(); ++k) d_canonical.rotations[k] += d_deformed.rotations[k];
    for (std::size_t k = 0; k < d_canonical.log_scales.size(); ++k) d_canonical.log_scales[k] += d_deformed.log_scales[k];
    for (std::size_t k = 0; k < n; ++k) d_canonical.opacity_logits[k] += d_deformed.opacity_logits[k];
    for (std::size_t k = 0; k < d_canonical.sh_coeffs.size(); ++k) d_canonical.sh_coeffs[k] += d_deformed.sh_coeffs[k];

    const MatX<T> d_features = decoders_.backward(cache.decoders, d_deltas);
    const std::span<T> d_pos(d_canonical.positions);
    if (auto* h = std::get_if<HexPlaneField<T>>(&encoder_)) h->backward(cache.hexplane, d_features, d_pos, exec);
    else std::get<PositionalMlpEncoder<T>>(encoder_).backward(cache.positional, d_features, d_pos);
}

template <typename T> void DeformationField<T>::zero_grad() {
    std::visit([](auto& e) { e.zero_grad(); }, encoder_);
    decoders_.zero_grad();
}

template <typename T> std::vector<ParamBlock<T>> DeformationField<T>::parameter_blocks() {
    auto out = std::visit([](auto& e) { return e.parameter_blocks(); }, encoder_);
    auto d = decoders_.parameter_blocks();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

template <typename T> std::size_t DeformationField<T>::encoder_parameter_count() const {
    return std::visit([](const auto& e) { return e.parameter_count(); }, encoder_);
}

template class DeformationDecoders<float>;
template class DeformationDecoders<double>;
template class DeformationField<float>;
template class DeformationField<double>;

} // namespace dynsplat
