#include "dynsplat/io/scene.hpp"

#include "dynsplat/core/parallel.hpp"
#include "dynsplat/io/png.hpp"

#include "json.hpp"

#include <fstream>

namespace dynsplat {

using nlohmann::json;

Camera<float> SceneManifest::camera(std::size_t frame) const {
    Camera<double> c;
    c.fx = fx;
    c.fy = fy;
    c.cx = cx;
    c.cy = cy;
    c.width = width;
    c.height = height;
    c.near_plane = near_plane;
    c.far_plane = far_plane;
    c.camera_to_world = frames.at(frame).camera_to_world;
    return c.cast<float>();
}

namespace {

template <typename V> V required(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw IoError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<V>();
    } catch (const json::exception& e) {
        throw IoError(where + ": bad '" + key + "': " + e.what());
    }
}

} // namespace

SceneManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    const std::string where = "manifest '" + path.string() + "'";
    SceneManifest m;
    m.root = path.parent_path();
    const json intr = required<json>(j, "intrinsics", where);
    m.fx = required<double>(intr, "fx", where);
    m.fy = required<double>(intr, "fy", where);
    m.cx = required<double>(intr, "cx", where);
    m.cy = required<double>(intr, "cy", where);
    m.width = required<int>(intr, "width", where);
    m.height = required<int>(intr, "height", where);
    m.near_plane = j.value("near", m.near_plane);
    m.far_plane = j.value("far", m.far_plane);
    m.depth_mode = depth_mode_from_string(j.value("depth_mode", std::string("binocular")));
    m.depth_scale = j.value("depth_scale", m.depth_scale);
    const std::string time_mode = j.value("time_mode", std::string("index"));
    if (time_mode == "index") m.time_mode = TimeMode::Index;
    else if (time_mode == "timestamp") m.time_mode = TimeMode::Timestamp;
    else throw IoError(where + ": unknown time_mode '" + time_mode + "'");
    if (!(m.depth_scale > 0.0)) throw IoError(where + ": depth_scale must be positive");

    const json frames = required<json>(j, "frames", where);
    if (!frames.is_array() || frames.empty()) throw IoError(where + ": 'frames' must be a non-empty array");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const json& f = frames[i];
        const std::string fw = where + " frame " + std::to_string(i);
        FrameEntry e;
        e.image = required<std::string>(f, "image", fw);
        e.depth = required<std::string>(f, "depth", fw);
        e.mask = f.value("mask", std::string());
        if (f.contains("camera_to_world")) {
            const auto v = required<std::vector<double>>(f, "camera_to_world", fw);
            if (v.size() != 16) throw IoError(fw + ": camera_to_world needs 16 row-major values");
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) e.camera_to_world(r, c) = v[static_cast<std::size_t>(4 * r + c)];
        }
        if (f.contains("timestamp")) e.timestamp = required<double>(f, "timestamp", fw);
        m.frames.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const SceneManifest& m) {
    json j;
    j["intrinsics"] = {{"fx", m.fx}, {"fy", m.fy}, {"cx", m.cx}, {"cy", m.cy}, {"width", m.width}, {"height", m.height}};
    j["near"] = m.near_plane;
    j["far"] = m.far_plane;
    j["depth_mode"] = to_string(m.depth_mode);
    j["depth_scale"] = m.depth_scale;
    j["time_mode"] = m.time_mode == TimeMode::Index ? "index" : "timestamp";
    json frames = json::array();
    for (const auto& e : m.frames) {
        json f{{"image", e.image}, {"depth", e.depth}};
        if (!e.mask.empty()) f["mask"] = e.mask;
        std::vector<double> t;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) t.push_back(e.camera_to_world(r, c));
        f["camera_to_world"] = t;
        if (e.timestamp) f["timestamp"] = *e.timestamp;
        frames.push_back(std::move(f));
    }
    j["frames"] = std::move(frames);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing manifest '" + path.string() + "'");
}

std::vector<float> normalized_times(const SceneManifest& m) {
    const std::size_t n = m.frames.size();
    std::vector<float> t(n, 0.0f);
    if (m.time_mode == TimeMode::Index) {
        for (std::size_t i = 0; i < n && n > 1; ++i) t[i] = static_cast<float>(static_cast<double>(i) / static_cast<double>(n - 1));
        return t;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!m.frames[i].timestamp) throw IoError("frame " + std::to_string(i) + ": time_mode timestamp needs a timestamp");
        if (i > 0 && !(*m.frames[i].timestamp > *m.frames[i - 1].timestamp))
            throw IoError("frame " + std::to_string(i) + ": timestamps must be strictly increasing");
    }
    const double t0 = *m.frames.front().timestamp, t1 = *m.frames.back().timestamp;
    for (std::size_t i = 0; i < n && n > 1; ++i) t[i] = static_cast<float>((*m.frames[i].timestamp - t0) / (t1 - t0));
    return t;
}

std::vector<FrameRecord> Scene::train_frames() const {
    std::vector<FrameRecord> out;
    for (int i : train) out.push_back(frames[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<FrameRecord> Scene::test_frames() const {
    std::vector<FrameRecord> out;
    for (int i : test) out.push_back(frames[static_cast<std::size_t>(i)]);
    return out;
}

Scene load_scene(const std::filesystem::path& manifest_path, const ExecPolicy& exec) {
    Scene scene;
    scene.manifest = read_manifest(manifest_path);
    const SceneManifest& m = scene.manifest;
    const std::vector<float> times = normalized_times(m);
    scene.frames.resize(m.frames.size());
    parallel_for(static_cast<int>(m.frames.size()), exec, [&](int i, int) {
        const auto& e = m.frames[static_cast<std::size_t>(i)];
        const std::string where = "frame " + std::to_string(i) + ": ";
        FrameRecord f;
        f.index = i;
        f.time = times[static_cast<std::size_t>(i)];
        try {
            f.camera = m.camera(static_cast<std::size_t>(i));
            f.image = read_png_rgb(m.root / e.image);
            f.depth = read_png_depth(m.root / e.depth, m.depth_scale);
            if (e.mask.empty()) f.mask = Raster<std::uint8_t>(f.image.width, f.image.height, 1, 1);
            else f.mask = read_png_mask(m.root / e.mask);
            if (!f.image.same_shape(m.width, m.height))
                throw IoError("image is " + std::to_string(f.image.width) + "x" + std::to_string(f.image.height) +
                              ", manifest says " + std::to_string(m.width) + "x" + std::to_string(m.height));
            f.validate();
        } catch (const Error& err) {
            throw IoError(where + err.what());
        }
        scene.frames[static_cast<std::size_t>(i)] = std::move(f);
    });
    for (std::size_t i = 0; i < scene.frames.size(); ++i)
        (is_test_frame(static_cast<int>(i)) ? scene.test : scene.train).push_back(static_cast<int>(i));
    return scene;
}

} // namespace dynsplat
