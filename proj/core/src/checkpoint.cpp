#include "synthvit/checkpoint.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "serde.hpp"
#include "synthvit/errors.hpp"

namespace synthvit {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::string& buf, const void* src, std::size_t n) {
    buf.append(static_cast<const char*>(src), n);
}

void put_u16(std::string& buf, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    put_bytes(buf, b, 2);
}

void put_u32(std::string& buf, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(buf, b, 4);
}

void put_u64(std::string& buf, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(buf, b, 8);
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open checkpoint '" + path + "'");
    }

    std::size_t offset() const { return offset_; }

    void read(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw IntegrityError("checkpoint '" + path_ + "': truncated while reading " + what,
                                 offset_);
        }
        crc_ = crc32(crc_, reinterpret_cast<const Bytef*>(dst), static_cast<uInt>(n));
        offset_ += n;
    }

    std::uint16_t read_u16(const char* what) {
        unsigned char b[2];
        read(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t read_u32(const char* what) {
        unsigned char b[4];
        read(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    std::uint64_t read_u64(const char* what) {
        unsigned char b[8];
        read(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    // CRC of everything consumed so far, excluding bytes read after snapshot().
    std::uint32_t crc() const { return static_cast<std::uint32_t>(crc_); }

    void expect_eof() {
        char c;
        in_.read(&c, 1);
        if (!in_.eof()) {
            throw IntegrityError("checkpoint '" + path_ + "': trailing bytes", offset_);
        }
    }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
    uLong crc_ = crc32(0L, Z_NULL, 0);
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& e : tensors) {
        if (e.name == name) return &e.tensor;
    }
    return nullptr;
}

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::string buf;
    put_bytes(buf, kMagic, 4);
    put_u32(buf, kVersion);
    put_u64(buf, config_json.size());
    put_bytes(buf, config_json.data(), config_json.size());
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > 0xffff) throw ParameterError("checkpoint: tensor name too long");
        put_u16(buf, static_cast<std::uint16_t>(name.size()));
        put_bytes(buf, name.data(), name.size());
        buf.push_back(0);  // dtype: float64
        buf.push_back(static_cast<char>(tensor->rank()));
        for (std::size_t d : tensor->shape()) put_u64(buf, d);
        for (double v : tensor->values()) put_f64(buf, v);
    }
    const auto crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(buf.data()),
                           static_cast<uInt>(buf.size()));
    put_u32(buf, static_cast<std::uint32_t>(crc));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw IntegrityError("checkpoint '" + path + "': bad magic", 0);
    }
    const std::uint32_t version = r.read_u32("version");
    if (version != kVersion) {
        throw IntegrityError("checkpoint '" + path + "': unsupported version " +
                                 std::to_string(version),
                             4);
    }
    const std::uint64_t cfg_len = r.read_u64("config length");
    Checkpoint ckpt;
    ckpt.config_json.resize(cfg_len);
    if (cfg_len > 0) r.read(ckpt.config_json.data(), cfg_len, "config");
    const std::uint32_t count = r.read_u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry entry;
        const std::uint16_t name_len = r.read_u16("tensor name length");
        entry.name.resize(name_len);
        r.read(entry.name.data(), name_len, "tensor name");
        unsigned char dtype;
        r.read(&dtype, 1, "dtype");
        if (dtype != 0) {
            throw IntegrityError("checkpoint '" + path + "': unknown dtype " +
                                     std::to_string(dtype),
                                 r.offset() - 1);
        }
        unsigned char rank;
        r.read(&rank, 1, "rank");
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.read_u64("dim");
            numel *= d;
        }
        std::vector<double> values(numel);
        for (auto& v : values) {
            const std::uint64_t bits = r.read_u64("tensor payload");
            std::memcpy(&v, &bits, 8);
        }
        entry.tensor = Tensor::from_data(std::move(shape), std::move(values));
        ckpt.tensors.push_back(std::move(entry));
    }
    const std::uint32_t computed = r.crc();
    const std::uint32_t stored = r.read_u32("checksum");
    if (stored != computed) {
        throw IntegrityError("checkpoint '" + path + "': checksum mismatch", r.offset() - 4);
    }
    r.expect_eof();
    return ckpt;
}

void save_vit_checkpoint(const std::string& path, ViTParams& params) {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& np : params.named_params()) tensors.emplace_back(np.name, np.tensor);
    save_checkpoint(path, serde::vit_config_to_json(params.config).dump(), tensors);
}

namespace {

void fill_vit_params_from(const Checkpoint& ckpt, const std::string& path, ViTParams& params) {
    for (auto& np : params.named_params()) {
        const Tensor* stored = ckpt.find(np.name);
        if (stored == nullptr) {
            throw IntegrityError("checkpoint '" + path + "': missing tensor '" + np.name + "'", 0);
        }
        if (stored->shape() != np.tensor->shape()) {
            throw DimensionError("checkpoint '" + path + "': tensor '" + np.name + "' has shape " +
                                 shape_str(stored->shape()) + ", expected " +
                                 shape_str(np.tensor->shape()));
        }
        np.tensor->values() = stored->values();
    }
}

}  // namespace

ViTParams load_vit_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ckpt.config_json);
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("checkpoint '" + path + "': config is not valid JSON", 0);
    }
    if (j.value("kind", "") != "vit") {
        throw ConfigError("checkpoint '" + path + "' is not a classifier checkpoint (kind '" +
                          j.value("kind", "?") + "')");
    }
    const ViTConfig cfg = serde::vit_config_from_json(j);
    Rng rng(0);  // values are overwritten below
    ViTParams params = ViTParams::init(cfg, rng);
    fill_vit_params_from(ckpt, path, params);
    return params;
}

void load_vit_checkpoint_into(const std::string& path, ViTParams& params) {
    ViTParams loaded = load_vit_checkpoint(path);
    if (!(loaded.config == params.config)) {
        throw ConfigError("checkpoint '" + path + "' config does not match the target model");
    }
    fill_vit_params_from(load_checkpoint(path), path, params);
}

}  // namespace synthvit
