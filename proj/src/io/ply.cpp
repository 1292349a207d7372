#include "dynsplat/io/ply.hpp"

#include "dynsplat/io/png.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dynsplat {

static_assert(std::endian::native == std::endian::little, "PLY and checkpoint I/O assume a little-endian host");

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        char rec[15];
        for (int a = 0; a < 3; ++a) {
            const auto v = static_cast<float>(cloud.positions[i][a]);
            std::memcpy(rec + 4 * a, &v, 4);
        }
        for (int c = 0; c < 3; ++c)
            rec[12 + c] = static_cast<char>(byte_from_unit(i < cloud.colors.size() ? cloud.colors[i][c] : 0.5f));
        out.write(rec, sizeof rec);
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

PointCloud read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    std::size_t count = 0;
    bool binary = false;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream ss(line);
        std::string a, b;
        ss >> a >> b;
        if (a == "format") binary = b == "binary_little_endian";
        if (a == "element" && b == "vertex") ss >> count;
    }
    if (!binary || !in) throw IoError("'" + path.string() + "' is not a binary little-endian PLY written by write_ply");
    PointCloud cloud;
    for (std::size_t i = 0; i < count; ++i) {
        char rec[15];
        if (!in.read(rec, sizeof rec)) throw IoError("'" + path.string() + "' is truncated");
        Eigen::Vector3d p;
        Eigen::Vector3f c;
        for (int a = 0; a < 3; ++a) {
            float v;
            std::memcpy(&v, rec + 4 * a, 4);
            p[a] = v;
            c[a] = unit_from_byte(static_cast<std::uint8_t>(rec[12 + a]));
        }
        cloud.positions.push_back(p);
        cloud.colors.push_back(c);
    }
    return cloud;
}

} // namespace dynsplat
