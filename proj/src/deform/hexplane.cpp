#include "dynsplat/deform/hexplane.hpp"

#include "dynsplat/core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dynsplat {

int HexPlaneConfig::spatial_resolution(int level) const {
    int r = base_spatial;
    for (int l = 0; l < level; ++l) r *= spatial_growth;
    return r;
}

int HexPlaneConfig::temporal_resolution(int level) const {
    int r = base_temporal;
    for (int l = 0; l < level; ++l) r *= temporal_growth;
    return r;
}

void HexPlaneConfig::validate() const {
    if (levels < 1) throw ConfigError("hexplane: levels must be >= 1");
    if (base_spatial < 2 || base_temporal < 2) throw ConfigError("hexplane: resolutions must be >= 2");
    if (spatial_growth < 1 || temporal_growth < 1) throw ConfigError("hexplane: growth factors must be >= 1");
    if (channels < 1) throw ConfigError("hexplane: channels must be >= 1");
    if (!(init_low <= init_high)) throw ConfigError("hexplane: init range is empty");
}

template <typename T> BilinearTap<T> bilinear_tap(const FeaturePlane<T>& plane, T ua, T ub) {
    BilinearTap<T> tap;
    const T pa = ua * static_cast<T>(plane.res_a - 1);
    const T pb = ub * static_cast<T>(plane.res_b - 1);
    tap.i0 = std::clamp(static_cast<int>(std::floor(pa)), 0, plane.res_a - 2);
    tap.j0 = std::clamp(static_cast<int>(std::floor(pb)), 0, plane.res_b - 2);
    tap.wa = pa - static_cast<T>(tap.i0);
    tap.wb = pb - static_cast<T>(tap.j0);
    return tap;
}

template <typename T> void sample_plane(const FeaturePlane<T>& plane, const BilinearTap<T>& tap, T* out) {
    const T* v00 = plane.values.data() + plane.node_offset(tap.i0, tap.j0);
    const T* v10 = plane.values.data() + plane.node_offset(tap.i0 + 1, tap.j0);
    const T* v01 = plane.values.data() + plane.node_offset(tap.i0, tap.j0 + 1);
    const T* v11 = plane.values.data() + plane.node_offset(tap.i0 + 1, tap.j0 + 1);
    const T w00 = (T(1) - tap.wa) * (T(1) - tap.wb), w10 = tap.wa * (T(1) - tap.wb);
    const T w01 = (T(1) - tap.wa) * tap.wb, w11 = tap.wa * tap.wb;
    for (int c = 0; c < plane.channels; ++c) out[c] = w00 * v00[c] + w10 * v10[c] + w01 * v01[c] + w11 * v11[c];
}

template <typename T>
HexPlaneField<T>::HexPlaneField(const HexPlaneConfig& config, const BoundingBox& bounds, std::uint64_t seed)
    : config_(config), bounds_(bounds) {
    config_.validate();
    if (bounds_.degenerate()) throw ConfigError("hexplane: spatial bounds have zero volume");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(config_.init_low, config_.init_high);
    const int ch = config_.channels;
    for (int level = 0; level < config_.levels; ++level) {
        const int rs = config_.spatial_resolution(level), rt = config_.temporal_resolution(level);
        for (int p = 0; p < 6; ++p) {
            FeaturePlane<T> plane;
            plane.axis_a = kPlaneAxes[static_cast<std::size_t>(p)][0];
            plane.axis_b = kPlaneAxes[static_cast<std::size_t>(p)][1];
            plane.res_a = rs;
            plane.res_b = plane.axis_b == 3 ? rt : rs;
            plane.channels = ch;
            const std::size_t n = static_cast<std::size_t>(plane.res_a) * plane.res_b * ch;
            plane.values.resize(n);
            plane.grads.assign(n, T(0));
            // Time planes start at 1 so the initial feature is time-independent.
            if (plane.is_temporal()) std::fill(plane.values.begin(), plane.values.end(), T(1));
            else
                for (auto& v : plane.values) v = static_cast<T>(dist(rng));
            planes_.push_back(std::move(plane));
        }
        mix_.emplace_back(static_cast<std::size_t>(3 * ch), T(1));
        mix_grads_.emplace_back(static_cast<std::size_t>(3 * ch), T(0));
    }
}

template <typename T> std::size_t HexPlaneField<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : planes_) n += p.values.size();
    for (const auto& m : mix_) n += m.size();
    return n;
}

template <typename T> std::size_t HexPlaneField<T>::spatial_plane_parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : planes_) {
        if (!p.is_temporal()) n += p.values.size();
    }
    return n;
}

template <typename T> std::size_t HexPlaneField<T>::expected_parameter_count(const HexPlaneConfig& config) {
    std::size_t n = 0;
    const auto ch = static_cast<std::size_t>(config.channels);
    for (int level = 0; level < config.levels; ++level) {
        const auto rs = static_cast<std::size_t>(config.spatial_resolution(level));
        const auto rt = static_cast<std::size_t>(config.temporal_resolution(level));
        n += (3 * rs * rs + 3 * rs * rt) * ch + 3 * ch;
    }
    return n;
}

template <typename T> Vec4<T> HexPlaneField<T>::normalize(const Vec3<T>& position, T t, std::array<bool, 4>* clamped) const {
    Vec4<T> u;
    for (int a = 0; a < 3; ++a)
        u[a] = (position[a] - static_cast<T>(bounds_.lo[a])) / static_cast<T>(bounds_.hi[a] - bounds_.lo[a]);
    u[3] = t;
    for (int a = 0; a < 4; ++a) {
        const bool out = !(u[a] >= T(0) && u[a] <= T(1));
        if (clamped) (*clamped)[static_cast<std::size_t>(a)] = out;
        if (out) u[a] = u[a] < T(0) || std::isnan(u[a]) ? T(0) : T(1);
    }
    return u;
}

template <typename T>
MatX<T> HexPlaneField<T>::encode(std::span<const T> positions, T t, HexPlaneCache<T>* cache, const ExecPolicy& exec) const {
    if (positions.size() % 3 != 0) throw ConfigError("hexplane: positions must be N x 3");
    const auto n = positions.size() / 3;
    const int ch = config_.channels, levels = config_.levels;
    if (!(t >= T(0) && t <= T(1))) clamped_time_ += n;

    MatX<T> features(feature_dim(), static_cast<Eigen::Index>(n));
    if (cache) {
        cache->count = n;
        cache->coords.resize(4, static_cast<Eigen::Index>(n));
        cache->clamped.assign(n, {false, false, false, false});
        cache->samples.resize(6 * levels * ch, static_cast<Eigen::Index>(n));
    }
    parallel_for(static_cast<int>(n), exec, [&](int i, int) {
        std::array<bool, 4> cl{};
        const Vec3<T> pos(positions[3 * static_cast<std::size_t>(i)], positions[3 * static_cast<std::size_t>(i) + 1],
                          positions[3 * static_cast<std::size_t>(i) + 2]);
        const Vec4<T> u = normalize(pos, t, &cl);
        std::vector<T> local(static_cast<std::size_t>(6 * ch));
        for (int level = 0; level < levels; ++level) {
            T* s = cache ? cache->samples.col(i).data() + 6 * level * ch : local.data();
            for (int p = 0; p < 6; ++p) {
                const auto& pl = plane(level, p);
                sample_plane(pl, bilinear_tap(pl, u[pl.axis_a], u[pl.axis_b]), s + p * ch);
            }
            const auto& m = mix(level);
            for (int c = 0; c < ch; ++c) {
                T f = 0;
                for (int k = 0; k < 3; ++k) {
                    const auto& pr = kProducts[static_cast<std::size_t>(k)];
                    f += m[static_cast<std::size_t>(k * ch + c)] * s[pr[0] * ch + c] * s[pr[1] * ch + c];
                }
                features(level * ch + c, i) = f;
            }
        }
        if (cache) {
            cache->coords.col(i) = u;
            cache->clamped[static_cast<std::size_t>(i)] = cl;
        }
    });
    return features;
}

template <typename T> VecX<T> HexPlaneField<T>::query(const Vec3<T>& position, T t) const {
    const T p[3] = {position.x(), position.y(), position.z()};
    return encode(std::span<const T>(p, 3), t).col(0);
}

template <typename T>
void HexPlaneField<T>::backward(const HexPlaneCache<T>& cache, const MatX<T>& d_features, std::span<T> d_positions,
                                const ExecPolicy& exec) {
    const int ch = config_.channels, levels = config_.levels;
    const auto n = cache.count;
    if (d_features.rows() != feature_dim() || static_cast<std::size_t>(d_features.cols()) != n ||
        static_cast<std::size_t>(cache.coords.cols()) != n || cache.samples.rows() != 6 * levels * ch)
        throw StateMismatchError("hexplane backward: cache or gradient shape mismatch");
    if (!d_positions.empty() && d_positions.size() != 3 * n)
        throw StateMismatchError("hexplane backward: position gradient buffer has the wrong size");

    const int workers = worker_count(static_cast<int>(n), exec);
    // Worker 0 writes straight into the field; others use private buffers
    // merged below in worker order.
    struct Buffers {
        std::vector<std::vector<T>> planes;
        std::vector<std::vector<T>> mix;
    };
    std::vector<Buffers> extra(static_cast<std::size_t>(std::max(0, workers - 1)));
    for (auto& b : extra) {
        for (const auto& p : planes_) b.planes.emplace_back(p.values.size(), T(0));
        for (const auto& m : mix_) b.mix.emplace_back(m.size(), T(0));
    }
    const Vec3<T> extent = bounds_.extent().template cast<T>();

    parallel_for(static_cast<int>(n), exec, [&](int i, int worker) {
        auto plane_grad = [&](int level, int p) -> T* {
            const auto idx = static_cast<std::size_t>(6 * level + p);
            return worker == 0 ? planes_[idx].grads.data() : extra[static_cast<std::size_t>(worker - 1)].planes[idx].data();
        };
        auto mix_grad_ptr = [&](int level) -> T* {
            return worker == 0 ? mix_grads_[static_cast<std::size_t>(level)].data()
                               : extra[static_cast<std::size_t>(worker - 1)].mix[static_cast<std::size_t>(level)].data();
        };
        const Vec4<T> u = cache.coords.col(i);
        Vec4<T> d_u = Vec4<T>::Zero();
        std::vector<T> ds(static_cast<std::size_t>(6 * ch));
        for (int level = 0; level < levels; ++level) {
            const T* s = cache.samples.col(i).data() + 6 * level * ch;
            const auto& m = mix(level);
            T* dm = mix_grad_ptr(level);
            std::fill(ds.begin(), ds.end(), T(0));
            for (int c = 0; c < ch; ++c) {
                const T df = d_features(level * ch + c, i);
                if (df == T(0)) continue;
                for (int k = 0; k < 3; ++k) {
                    const auto& pr = kProducts[static_cast<std::size_t>(k)];
                    const T a = s[pr[0] * ch + c], b = s[pr[1] * ch + c];
                    const T mk = m[static_cast<std::size_t>(k * ch + c)];
                    dm[k * ch + c] += df * a * b;
                    ds[static_cast<std::size_t>(pr[0] * ch + c)] += df * mk * b;
                    ds[static_cast<std::size_t>(pr[1] * ch + c)] += df * mk * a;
                }
            }
            for (int p = 0; p < 6; ++p) {
                const auto& pl = plane(level, p);
                const BilinearTap<T> tap = bilinear_tap(pl, u[pl.axis_a], u[pl.axis_b]);
                T* g = plane_grad(level, p);
                const T w00 = (T(1) - tap.wa) * (T(1) - tap.wb), w10 = tap.wa * (T(1) - tap.wb);
                const T w01 = (T(1) - tap.wa) * tap.wb, w11 = tap.wa * tap.wb;
                const std::size_t o00 = pl.node_offset(tap.i0, tap.j0), o10 = pl.node_offset(tap.i0 + 1, tap.j0);
                const std::size_t o01 = pl.node_offset(tap.i0, tap.j0 + 1), o11 = pl.node_offset(tap.i0 + 1, tap.j0 + 1);
                T d_wa = 0, d_wb = 0;
                for (int c = 0; c < ch; ++c) {
                    const T d = ds[static_cast<std::size_t>(p * ch + c)];
                    if (d == T(0)) continue;
                    g[o00 + c] += w00 * d;
                    g[o10 + c] += w10 * d;
                    g[o01 + c] += w01 * d;
                    g[o11 + c] += w11 * d;
                    const T v00 = pl.values[o00 + c], v10 = pl.values[o10 + c];
                    const T v01 = pl.values[o01 + c], v11 = pl.values[o11 + c];
                    d_wa += d * ((T(1) - tap.wb) * (v10 - v00) + tap.wb * (v11 - v01));
                    d_wb += d * ((T(1) - tap.wa) * (v01 - v00) + tap.wa * (v11 - v10));
                }
                d_u[pl.axis_a] += d_wa * static_cast<T>(pl.res_a - 1);
                d_u[pl.axis_b] += d_wb * static_cast<T>(pl.res_b - 1);
            }
        }
        if (!d_positions.empty()) {
            const auto& cl = cache.clamped[static_cast<std::size_t>(i)];
            for (int a = 0; a < 3; ++a) {
                if (!cl[static_cast<std::size_t>(a)])
                    d_positions[3 * static_cast<std::size_t>(i) + static_cast<std::size_t>(a)] += d_u[a] / extent[a];
            }
        }
    });

    for (const auto& b : extra) {
        for (std::size_t p = 0; p < planes_.size(); ++p) {
            auto& g = planes_[p].grads;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += b.planes[p][k];
        }
        for (std::size_t l = 0; l < mix_grads_.size(); ++l) {
            for (std::size_t k = 0; k < mix_grads_[l].size(); ++k) mix_grads_[l][k] += b.mix[l][k];
        }
    }
}

template <typename T> void HexPlaneField<T>::zero_grad() {
    for (auto& p : planes_) std::fill(p.grads.begin(), p.grads.end(), T(0));
    for (auto& m : mix_grads_) std::fill(m.begin(), m.end(), T(0));
}

template <typename T> std::vector<ParamBlock<T>> HexPlaneField<T>::parameter_blocks() {
    std::vector<ParamBlock<T>> out;
    for (int level = 0; level < config_.levels; ++level) {
        const std::string tag = "hexplane.l" + std::to_string(level) + ".";
        for (int p = 0; p < 6; ++p) {
            auto& pl = plane(level, p);
            out.push_back({tag + kPlaneNames[static_cast<std::size_t>(p)], pl.values, pl.grads});
        }
        out.push_back({tag + "mix", mix_[static_cast<std::size_t>(level)], mix_grads_[static_cast<std::size_t>(level)]});
    }
    return out;
}

template BilinearTap<float> bilinear_tap(const FeaturePlane<float>&, float, float);
template BilinearTap<double> bilinear_tap(const FeaturePlane<double>&, double, double);
template void sample_plane(const FeaturePlane<float>&, const BilinearTap<float>&, float*);
template void sample_plane(const FeaturePlane<double>&, const BilinearTap<double>&, double*);
template class HexPlaneField<float>;
template class HexPlaneField<double>;

} // namespace dynsplat
