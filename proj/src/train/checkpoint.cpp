#include "dynsplat/train/trainer.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dynsplat {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'F'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    template <typename V> void put(V v) {
        char b[sizeof(V)];
        std::memcpy(b, &v, sizeof(V));
        buf_.append(b, sizeof(V));
    }
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void str16(const std::string& s) {
        put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void str32(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::size_t end) : data_(data), end_(end) {}
    template <typename V> V get() {
        need(sizeof(V));
        V v;
        std::memcpy(&v, data_.data() + pos_, sizeof(V));
        pos_ += sizeof(V);
        return v;
    }
    void bytes(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    std::string str16() { return str(get<std::uint16_t>()); }
    std::string str32() { return str(get<std::uint32_t>()); }
    bool at_end() const { return pos_ == end_; }

private:
    std::string str(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n) const {
        if (end_ - pos_ < n) throw CheckpointError("checkpoint is truncated");
    }
    const std::string& data_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

struct FieldRecord {
    std::vector<float> values, m, v;
    std::uint64_t step = 0;
    bool has_moments = false;
};

} // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    TrainState copy = state; // parameter_blocks needs mutable access
    Writer w;
    w.bytes(kMagic, 4);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint64_t>(copy.config.structure_hash());
    w.put<std::uint64_t>(copy.iteration);
    w.put<std::uint32_t>(copy.depth_mode == DepthMode::Binocular ? 0 : 1);
    w.str32(copy.config.to_kv().to_string());
    const BoundingBox& b = copy.field.bounds();
    for (int a = 0; a < 3; ++a) w.put<double>(b.lo[a]);
    for (int a = 0; a < 3; ++a) w.put<double>(b.hi[a]);
    w.put<double>(copy.scene_extent);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(copy.cloud.sh_degree));
    w.put<std::uint64_t>(copy.cloud.size());

    auto blocks = copy.cloud.parameter_blocks(copy.cloud_grads);
    const auto field_blocks = copy.field.parameter_blocks();
    blocks.insert(blocks.end(), field_blocks.begin(), field_blocks.end());
    std::vector<float> visible(copy.densify.visible.begin(), copy.densify.visible.end());
    std::vector<float> accum = copy.densify.grad_accum;
    blocks.push_back({"densify.grad_accum", accum, accum});
    blocks.push_back({"densify.visible", visible, visible});

    w.put<std::uint32_t>(static_cast<std::uint32_t>(blocks.size()));
    for (const auto& blk : blocks) {
        w.str16(blk.name);
        w.put<std::uint64_t>(blk.values.size());
        const auto it = copy.optimizer.moments().find(blk.name);
        const bool has = it != copy.optimizer.moments().end() && it->second.m.size() == blk.values.size();
        w.put<std::uint64_t>(has ? it->second.step : 0);
        w.put<std::uint8_t>(has ? 1 : 0);
        w.bytes(blk.values.data(), blk.values.size() * sizeof(float));
        if (has) {
            w.bytes(it->second.m.data(), it->second.m.size() * sizeof(float));
            w.bytes(it->second.v.data(), it->second.v.size() * sizeof(float));
        }
    }
    w.put<std::uint64_t>(fnv1a(w.buffer().data(), w.buffer().size()));

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
        out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
        out.flush();
        if (!out) throw IoError("failed writing checkpoint '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    if (data.size() < 4 + sizeof(std::uint64_t) || std::memcmp(data.data(), kMagic, 4) != 0)
        throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic or truncated)");
    const std::size_t body = data.size() - sizeof(std::uint64_t);
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, data.data() + body, sizeof stored_sum);
    if (fnv1a(data.data(), body) != stored_sum)
        throw CheckpointError("checkpoint '" + path.string() + "' is truncated or corrupt (checksum mismatch)");

    Reader r(data, body);
    char magic[4];
    r.bytes(magic, 4);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kVersion) + ")");
    const auto hash = r.get<std::uint64_t>();
    const auto iteration = r.get<std::uint64_t>();
    const auto depth_mode = r.get<std::uint32_t>();
    const std::string config_text = r.str32();

    TrainConfig cfg;
    const KeyValueConfig kv = KeyValueConfig::parse(config_text, path.string() + " (embedded config)");
    cfg.apply(kv);
    kv.require_all_used();
    if (cfg.structure_hash() != hash) throw CheckpointError("checkpoint header and embedded config disagree");
    if (expected && expected->structure_hash() != hash)
        throw CheckpointError("checkpoint '" + path.string() +
                              "' was written for a different model structure (SH degree, encoder or decoder sizes)");

    BoundingBox bounds;
    for (int a = 0; a < 3; ++a) bounds.lo[a] = r.get<double>();
    for (int a = 0; a < 3; ++a) bounds.hi[a] = r.get<double>();
    const double extent = r.get<double>();
    const auto sh_degree = r.get<std::uint32_t>();
    const auto count = r.get<std::uint64_t>();
    if (sh_degree > static_cast<std::uint32_t>(kMaxShDegree) || count == 0 || count > (1ULL << 32))
        throw CheckpointError("checkpoint header is inconsistent");

    std::map<std::string, FieldRecord> fields;
    const auto field_count = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < field_count; ++k) {
        const std::string name = r.str16();
        const auto n = r.get<std::uint64_t>();
        if (n > body) throw CheckpointError("checkpoint field '" + name + "' has an impossible size");
        FieldRecord f;
        f.step = r.get<std::uint64_t>();
        f.has_moments = r.get<std::uint8_t>() != 0;
        f.values.resize(n);
        r.bytes(f.values.data(), n * sizeof(float));
        if (f.has_moments) {
            f.m.resize(n);
            f.v.resize(n);
            r.bytes(f.m.data(), n * sizeof(float));
            r.bytes(f.v.data(), n * sizeof(float));
        }
        if (!fields.emplace(name, std::move(f)).second) throw CheckpointError("duplicate checkpoint field '" + name + "'");
    }
    if (!r.at_end()) throw CheckpointError("checkpoint has trailing bytes");

    TrainState s;
    s.config = cfg;
    s.depth_mode = depth_mode == 0 ? DepthMode::Binocular : DepthMode::Monocular;
    s.iteration = iteration;
    s.scene_extent = extent;
    s.cloud = GaussianCloud<float>(count, static_cast<int>(sh_degree));
    s.cloud_grads = s.cloud.zeros_like();
    s.field = DeformationField<float>(cfg.deformation, bounds, 0);
    s.optimizer = Adam<float>(cfg.adam);
    s.densify.reset(count);

    auto blocks = s.cloud.parameter_blocks(s.cloud_grads);
    const auto field_blocks = s.field.parameter_blocks();
    blocks.insert(blocks.end(), field_blocks.begin(), field_blocks.end());
    std::vector<float> accum(count), visible(count);
    blocks.push_back({"densify.grad_accum", accum, accum});
    blocks.push_back({"densify.visible", visible, visible});
    if (blocks.size() != fields.size()) throw CheckpointError("checkpoint field table does not match the model");
    for (const auto& blk : blocks) {
        const auto it = fields.find(blk.name);
        if (it == fields.end()) throw CheckpointError("checkpoint lacks field '" + blk.name + "'");
        const FieldRecord& f = it->second;
        if (f.values.size() != blk.values.size())
            throw CheckpointError("checkpoint field '" + blk.name + "' has " + std::to_string(f.values.size()) +
                                  " values, the model expects " + std::to_string(blk.values.size()));
        std::copy(f.values.begin(), f.values.end(), blk.values.begin());
        if (f.has_moments) s.optimizer.moments()[blk.name] = AdamMoments<float>{f.m, f.v, f.step};
    }
    s.densify.grad_accum = accum;
    for (std::size_t i = 0; i < count; ++i) s.densify.visible[i] = static_cast<std::uint32_t>(visible[i]);
    return s;
}

} // namespace dynsplat
