#include "dynsplat/init/initializer.hpp"

#include "dynsplat/core/geometry.hpp"
#include "dynsplat/core/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>

namespace dynsplat {

std::string to_string(DepthMode mode) { return mode == DepthMode::Binocular ? "binocular" : "monocular"; }

DepthMode depth_mode_from_string(const std::string& s) {
    if (s == "binocular") return DepthMode::Binocular;
    if (s == "monocular") return DepthMode::Monocular;
    throw ConfigError("unknown depth mode '" + s + "' (expected binocular or monocular)");
}

std::size_t FrameRecord::kept_pixels() const {
    return static_cast<std::size_t>(std::count_if(mask.data.begin(), mask.data.end(), [](auto m) { return m != 0; }));
}

void FrameRecord::validate() const {
    const int w = image.width, h = image.height;
    const std::string tag = "frame " + std::to_string(index) + ": ";
    if (image.channels != 3) throw ConfigError(tag + "image must have 3 channels");
    if (!depth.same_shape(w, h) || depth.channels != 1) throw ConfigError(tag + "depth raster size differs from image");
    if (!mask.same_shape(w, h) || mask.channels != 1) throw ConfigError(tag + "mask raster size differs from image");
    if (camera.width != w || camera.height != h) throw ConfigError(tag + "camera size differs from image");
    camera.validate();
    for (std::size_t p = 0; p < depth.data.size(); ++p) {
        if (mask.data[p] != 0 && depth.data[p] < 0.0f) throw ConfigError(tag + "negative depth at a kept pixel");
    }
}

BoundingBox PointCloud::bounds() const {
    BoundingBox b;
    if (positions.empty()) return b;
    b.lo = b.hi = positions.front();
    for (const auto& p : positions) {
        b.lo = b.lo.cwiseMin(p);
        b.hi = b.hi.cwiseMax(p);
    }
    return b;
}

std::optional<PointCloud> reproject_frame(const FrameRecord& frame) {
    const Camera<double> cam = frame.camera.cast<double>();
    const Eigen::Matrix3d rot = cam.camera_to_world.topLeftCorner<3, 3>();
    const Eigen::Vector3d origin = cam.center();
    PointCloud out;
    for (int v = 0; v < frame.height(); ++v) {
        for (int u = 0; u < frame.width(); ++u) {
            if (frame.mask.at(u, v) == 0) continue;
            const double d = frame.depth.at(u, v);
            if (!(d > 0.0) || !std::isfinite(d)) continue;
            const Eigen::Vector3d ray((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
            out.positions.push_back(rot * (d * ray) + origin);
            out.colors.emplace_back(frame.image.at(u, v, 0), frame.image.at(u, v, 1), frame.image.at(u, v, 2));
            out.sources.push_back({frame.index, u, v});
        }
    }
    if (out.empty()) {
        spdlog::warn("frame {} has no kept pixel with positive depth; skipped for initialization", frame.index);
        return std::nullopt;
    }
    return out;
}

std::vector<PointCloud> reproject_frames(const std::vector<FrameRecord>& frames, const ExecPolicy& exec) {
    std::vector<std::optional<PointCloud>> partial(frames.size());
    parallel_for(static_cast<int>(frames.size()), exec,
                 [&](int i, int) { partial[static_cast<std::size_t>(i)] = reproject_frame(frames[static_cast<std::size_t>(i)]); });
    std::vector<PointCloud> out;
    for (auto& p : partial) {
        if (p) out.push_back(std::move(*p));
    }
    return out;
}

std::size_t holistic_keep_count(std::size_t total, double keep_fraction) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0) throw ConfigError("keep fraction must be in (0, 1]");
    const double raw = keep_fraction * static_cast<double>(total);
    const double nearest = std::round(raw);
    // Products like 0.001 * 1e6 must not round up past the exact count.
    const double count = std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw);
    return std::min(total, static_cast<std::size_t>(count));
}

PointCloud combine_holistic(const std::vector<PointCloud>& clouds, double keep_fraction, std::uint64_t seed) {
    PointCloud all;
    for (const auto& c : clouds) {
        all.positions.insert(all.positions.end(), c.positions.begin(), c.positions.end());
        all.colors.insert(all.colors.end(), c.colors.begin(), c.colors.end());
        all.sources.insert(all.sources.end(), c.sources.begin(), c.sources.end());
    }
    if (all.empty()) throw InitializationError("holistic initialization: no reprojected points in any frame");
    const std::size_t keep = holistic_keep_count(all.size(), keep_fraction);
    if (keep == all.size()) return all;

    std::vector<std::size_t> index(all.size());
    std::iota(index.begin(), index.end(), 0);
    std::vector<std::size_t> chosen;
    chosen.reserve(keep);
    std::mt19937_64 rng(seed);
    std::sample(index.begin(), index.end(), std::back_inserter(chosen), keep, rng);

    const bool has_sources = all.sources.size() == all.size();
    PointCloud out;
    out.positions.reserve(keep);
    out.colors.reserve(keep);
    for (std::size_t i : chosen) {
        out.positions.push_back(all.positions[i]);
        out.colors.push_back(all.colors[i]);
        if (has_sources) out.sources.push_back(all.sources[i]);
    }
    return out;
}

namespace {

/// Static k-d tree over a point set for small-k nearest-neighbour queries.
class KdTree {
public:
    explicit KdTree(const std::vector<Eigen::Vector3d>& points) : points_(points), order_(points.size()) {
        std::iota(order_.begin(), order_.end(), 0);
        nodes_.reserve(2 * points.size() / kLeafSize + 2);
        build(0, points.size());
    }

    /// Squared distances to the k nearest points other than `self`, ascending.
    std::vector<double> nearest(std::size_t self, int k) const {
        std::priority_queue<double> heap;
        search(0, points_[self], self, static_cast<std::size_t>(k), heap);
        std::vector<double> out;
        while (!heap.empty()) {
            out.push_back(heap.top());
            heap.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

private:
    static constexpr std::size_t kLeafSize = 8;

    struct Node {
        std::size_t begin, end;
        int axis = -1;
        double split = 0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end});
        if (end - begin <= kLeafSize) return id;
        Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        const double split = points_[order_[mid]][axis];
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void search(std::size_t node_id, const Eigen::Vector3d& q, std::size_t self, std::size_t k,
                std::priority_queue<double>& heap) const {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t j = order_[i];
                if (j == self) continue;
                const double d2 = (points_[j] - q).squaredNorm();
                if (heap.size() < k) heap.push(d2);
                else if (d2 < heap.top()) {
                    heap.pop();
                    heap.push(d2);
                }
            }
            return;
        }
        const double delta = q[node.axis] - node.split;
        const std::size_t near_child = delta < 0 ? node.left : node.right;
        const std::size_t far_child = delta < 0 ? node.right : node.left;
        search(near_child, q, self, k, heap);
        if (heap.size() < k || delta * delta < heap.top()) search(far_child, q, self, k, heap);
    }

    const std::vector<Eigen::Vector3d>& points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

template <typename T>
GaussianCloud<T> gaussians_at(const std::vector<Eigen::Vector3d>& positions, const std::vector<Eigen::Vector3f>* colors,
                              const GaussianInitOptions& options) {
    if (positions.empty()) throw InitializationError("cannot instantiate Gaussians from an empty point cloud");
    if (!(options.initial_opacity > 0.0 && options.initial_opacity < 1.0))
        throw ConfigError("initial opacity must be in (0, 1)");
    GaussianCloud<T> cloud(positions.size(), options.sh_degree);

    std::vector<double> log_scale(positions.size(), options.fallback_log_scale);
    if (positions.size() >= 4) {
        const auto dist = mean_neighbor_distance(positions, 3);
        for (std::size_t i = 0; i < dist.size(); ++i) log_scale[i] = std::log(std::max(dist[i], 1e-7));
    }

    const T opacity_logit = static_cast<T>(logit(options.initial_opacity));
    for (std::size_t i = 0; i < positions.size(); ++i) {
        cloud.position(i) = positions[i].cast<T>();
        cloud.rotation(i) = Vec4<T>(1, 0, 0, 0);
        cloud.log_scale(i).setConstant(static_cast<T>(log_scale[i]));
        cloud.opacity_logits[i] = opacity_logit;
        const Vec3<T> rgb = colors ? Vec3<T>((*colors)[i].cast<T>()) : Vec3<T>(Vec3<T>::Constant(T(kShColorOffset)));
        const Vec3<T> dc = rgb_to_sh0<T>(rgb);
        auto sh = cloud.sh(i);
        for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c)] = dc[c];
    }
    return cloud;
}

} // namespace

std::vector<double> mean_neighbor_distance(const std::vector<Eigen::Vector3d>& points, int k) {
    if (points.size() < static_cast<std::size_t>(k) + 1)
        throw InitializationError("nearest-neighbour scale needs at least k + 1 points");
    KdTree tree(points);
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto d2 = tree.nearest(i, k);
        double sum = 0;
        for (double v : d2) sum += std::sqrt(v);
        out[i] = sum / static_cast<double>(d2.size());
    }
    return out;
}

template <typename T> GaussianCloud<T> instantiate_gaussians(const PointCloud& points, const GaussianInitOptions& options) {
    if (points.colors.size() != points.positions.size())
        throw InitializationError("point cloud colors and positions differ in count");
    return gaussians_at<T>(points.positions, &points.colors, options);
}

template <typename T>
GaussianCloud<T> random_init(std::size_t count, const BoundingBox& bounds, std::uint64_t seed,
                             const GaussianInitOptions& options) {
    if (count == 0) throw InitializationError("random initialization needs at least one Gaussian");
    if (bounds.degenerate()) throw InitializationError("random initialization box has zero volume");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Eigen::Vector3d> positions(count);
    for (auto& p : positions) {
        for (int a = 0; a < 3; ++a) p[a] = bounds.lo[a] + unit(rng) * (bounds.hi[a] - bounds.lo[a]);
    }
    return gaussians_at<T>(positions, nullptr, options);
}

template GaussianCloud<float> instantiate_gaussians(const PointCloud&, const GaussianInitOptions&);
template GaussianCloud<double> instantiate_gaussians(const PointCloud&, const GaussianInitOptions&);
template GaussianCloud<float> random_init(std::size_t, const BoundingBox&, std::uint64_t, const GaussianInitOptions&);
template GaussianCloud<double> random_init(std::size_t, const BoundingBox&, std::uint64_t, const GaussianInitOptions&);

} // namespace dynsplat
