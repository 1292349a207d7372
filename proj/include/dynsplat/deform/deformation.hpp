#pragma once

#include "dynsplat/core/gaussian_cloud.hpp"
#include "dynsplat/core/types.hpp"
#include "dynsplat/deform/hexplane.hpp"
#include "dynsplat/deform/mlp.hpp"
#include "dynsplat/deform/positional_mlp.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace dynsplat {

enum class EncoderKind { HexPlane, PositionalMlp };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& s);

struct DecoderConfig {
    int hidden_width = 64;
    /// One shared Linear + ReLU in front of the heads.
    bool shared_trunk = false;
    int trunk_width = 64;
};

struct DeformationConfig {
    EncoderKind encoder = EncoderKind::HexPlane;
    HexPlaneConfig hexplane;
    PositionalMlpConfig positional;
    DecoderConfig decoder;
};

/// Output rows of DeformationDecoders::decode.
struct DeltaLayout {
    static constexpr int kPosition = 0;  // 3
    static constexpr int kRotation = 3;  // 4
    static constexpr int kLogScale = 7;  // 3
    static constexpr int kOpacity = 10;  // 1
    static constexpr int kRows = 11;
};

template <typename T> struct DecoderCache {
    MlpCache<T> trunk;
    std::array<MlpCache<T>, 4> heads;
};

/// Four heads mapping a latent feature to (dmu, dq, dlog_scale, dopacity).
/// Each head is Linear -> ReLU -> Linear with a zeroed output layer.
template <typename T> class DeformationDecoders {
public:
    static constexpr std::array<int, 4> kHeadOutputs{3, 4, 3, 1};
    static constexpr std::array<const char*, 4> kHeadNames{"position", "rotation", "scale", "opacity"};

    DeformationDecoders() = default;
    DeformationDecoders(int feature_dim, const DecoderConfig& config, std::uint64_t seed);

    int feature_dim() const { return feature_dim_; }
    Mlp<T>& head(int k) { return heads_[static_cast<std::size_t>(k)]; }
    const Mlp<T>& head(int k) const { return heads_[static_cast<std::size_t>(k)]; }
    bool has_trunk() const { return config_.shared_trunk; }
    Mlp<T>& trunk() { return trunk_; }

    /// Deltas (DeltaLayout::kRows x N) for features (feature_dim x N).
    MatX<T> decode(const MatX<T>& features, DecoderCache<T>* cache = nullptr) const;
    /// Returns dL/dfeatures.
    MatX<T> backward(const DecoderCache<T>& cache, const MatX<T>& d_deltas);

    void zero_grad();
    std::vector<ParamBlock<T>> parameter_blocks();
    std::size_t parameter_count() const;

private:
    DecoderConfig config_;
    int feature_dim_ = 0;
    Mlp<T> trunk_;
    std::array<Mlp<T>, 4> heads_;
};

template <typename T> struct DeformationCache {
    std::size_t count = 0;
    T time = 0;
    HexPlaneCache<T> hexplane;
    PositionalMlpCache<T> positional;
    DecoderCache<T> decoders;
};

/// Encoder plus decoders. deform() adds the decoded deltas to the canonical
/// attributes: positions, raw quaternions (normalized where consumed),
/// log-scales and opacity logits. SH coefficients are copied unchanged.
template <typename T> class DeformationField {
public:
    DeformationField() = default;
    DeformationField(const DeformationConfig& config, const BoundingBox& bounds, std::uint64_t seed);

    const DeformationConfig& config() const { return config_; }
    const BoundingBox& bounds() const { return bounds_; }
    EncoderKind encoder_kind() const { return config_.encoder; }
    int feature_dim() const;

    /// Throws ConfigError when the encoder is not a HexPlane.
    HexPlaneField<T>& hexplane();
    const HexPlaneField<T>& hexplane() const;
    PositionalMlpEncoder<T>& positional();
    DeformationDecoders<T>& decoders() { return decoders_; }
    const DeformationDecoders<T>& decoders() const { return decoders_; }

    /// Latent features (feature_dim x N) for canonical positions at time t.
    MatX<T> features(const GaussianCloud<T>& canonical, T t, DeformationCache<T>* cache = nullptr,
                     const ExecPolicy& exec = {}) const;

    GaussianCloud<T> deform(const GaussianCloud<T>& canonical, T t, DeformationCache<T>* cache = nullptr,
                            const ExecPolicy& exec = {}) const;

    /// Accumulates field parameter gradients and adds dL/d(canonical) into
    /// `d_canonical` given dL/d(deformed).
    void backward(const DeformationCache<T>& cache, const GaussianCloud<T>& d_deformed,
                  GaussianCloud<T>& d_canonical, const ExecPolicy& exec = {});

    void zero_grad();
    std::vector<ParamBlock<T>> parameter_blocks();
    std::size_t encoder_parameter_count() const;
    std::size_t parameter_count() const { return encoder_parameter_count() + decoders_.parameter_count(); }

private:
    DeformationConfig config_;
    BoundingBox bounds_;
    std::variant<HexPlaneField<T>, PositionalMlpEncoder<T>> encoder_;
    DeformationDecoders<T> decoders_;
};

} // namespace dynsplat
