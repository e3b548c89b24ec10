#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <zlib.h>

#include "safin/trainer.hpp"

namespace safin {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'F', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t len) {
        need(len);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
        pos_ += len;
        return s;
    }

    bool done() const { return pos_ == n_; }

private:
    void need(std::size_t k) const {
        if (pos_ + k > n_) {
            throw CheckpointCorruptionError("checkpoint record extends past end of file");
        }
    }
    const std::uint8_t* data_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

void put_record(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto e : t.shape()) {
        put_u64(out, static_cast<std::uint64_t>(e));
    }
    for (double v : t.values()) {
        put_f64(out, v);
    }
}

Tensor scalar_record(double v) { return Tensor({1}, {v}); }

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

// u64 values are stored as two exactly representable 32-bit halves.
double lo_half(std::uint64_t v) { return static_cast<double>(v & 0xffffffffull); }
double hi_half(std::uint64_t v) { return static_cast<double>(v >> 32); }
std::uint64_t join_halves(double lo, double hi) {
    return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
}

std::map<std::string, Tensor> config_records(const TrainConfig& cfg) {
    std::map<std::string, Tensor> r;
    r.emplace("config/seed_lo", scalar_record(lo_half(cfg.seed)));
    r.emplace("config/seed_hi", scalar_record(hi_half(cfg.seed)));
    r.emplace("config/steps", scalar_record(static_cast<double>(cfg.steps)));
    r.emplace("config/batch_size", scalar_record(static_cast<double>(cfg.batch_size)));
    r.emplace("config/learning_rate", scalar_record(cfg.learning_rate));
    r.emplace("config/lambda_s", scalar_record(cfg.lambda_s));
    r.emplace("config/image_size", scalar_record(static_cast<double>(cfg.image_size)));
    r.emplace("config/attention", scalar_record(cfg.attention_enabled ? 1.0 : 0.0));
    r.emplace("config/epsilon", scalar_record(cfg.epsilon));
    Tensor widths = Tensor::zeros({4});
    for (std::size_t i = 0; i < 4; ++i) {
        widths.values()[i] = static_cast<double>(cfg.widths[i]);
    }
    r.emplace("config/widths", std::move(widths));
    return r;
}

} // namespace

std::uint64_t config_fingerprint(const TrainConfig& cfg) {
    std::vector<std::uint8_t> bytes;
    for (const auto& [name, t] : config_records(cfg)) {
        put_record(bytes, name, t);
    }
    return fnv1a(bytes);
}

void save_checkpoint(const TrainState& state, const std::string& path) {
    std::vector<std::uint8_t> body;
    body.insert(body.end(), kMagic, kMagic + 4);
    put_u32(body, kVersion);
    put_u64(body, config_fingerprint(state.cfg));

    for (const auto& [name, t] : config_records(state.cfg)) {
        put_record(body, name, t);
    }
    put_record(body, "state/step", scalar_record(static_cast<double>(state.step)));
    put_record(body, "state/rng_lo", scalar_record(lo_half(state.rng_state)));
    put_record(body, "state/rng_hi", scalar_record(hi_half(state.rng_state)));

    const auto learnables = named_learnables(state.model);
    for (std::size_t i = 0; i < learnables.size(); ++i) {
        put_record(body, "param/" + learnables[i].first, *learnables[i].second);
        put_record(body, "adam_m/" + learnables[i].first, state.moments[i].m);
        put_record(body, "adam_v/" + learnables[i].first, state.moments[i].v);
    }

    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    put_u32(body, crc);

    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot create " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
        if (!out) {
            throw std::runtime_error("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, target);
}

TrainState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 4 + 8 + 4) {
        throw CheckpointCorruptionError("checkpoint is truncated: " + path);
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointVersionError("bad magic bytes, not a checkpoint of this format: " + path);
    }
    Reader header(bytes.data() + 4, bytes.size() - 4);
    const std::uint32_t version = header.u32();
    if (version != kVersion) {
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
    }

    const std::size_t body_len = bytes.size() - 4;
    const auto stored_crc = static_cast<std::uint32_t>(bytes[body_len]) |
                            (static_cast<std::uint32_t>(bytes[body_len + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[body_len + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[body_len + 3]) << 24);
    const auto actual_crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body_len)));
    if (stored_crc != actual_crc) {
        throw CheckpointCorruptionError("checkpoint CRC mismatch: " + path);
    }

    Reader r(bytes.data() + 16, body_len - 16);
    std::map<std::string, Tensor> records;
    const std::uint64_t stored_fingerprint = [&] {
        Reader fp_reader(bytes.data() + 8, 8);
        return fp_reader.u64();
    }();
    while (!r.done()) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        if (rank > 8) {
            throw CheckpointCorruptionError("checkpoint record '" + name + "' has absurd rank");
        }
        Shape shape;
        std::int64_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto e = static_cast<std::int64_t>(r.u64());
            if (e < 1 || e > (1 << 24)) {
                throw CheckpointCorruptionError("checkpoint record '" + name + "' has invalid extent");
            }
            shape.push_back(e);
            total *= e;
        }
        std::vector<double> values(static_cast<std::size_t>(total));
        for (auto& v : values) {
            v = r.f64();
        }
        records.emplace(name, Tensor(std::move(shape), std::move(values)));
    }

    auto take = [&](const std::string& name) -> Tensor {
        auto it = records.find(name);
        if (it == records.end()) {
            throw CheckpointCorruptionError("checkpoint misses record '" + name + "'");
        }
        return it->second;
    };

    TrainConfig cfg;
    cfg.seed = join_halves(take("config/seed_lo").item(), take("config/seed_hi").item());
    cfg.steps = static_cast<std::int64_t>(take("config/steps").item());
    cfg.batch_size = static_cast<std::int64_t>(take("config/batch_size").item());
    cfg.learning_rate = take("config/learning_rate").item();
    cfg.lambda_s = take("config/lambda_s").item();
    cfg.image_size = static_cast<std::int64_t>(take("config/image_size").item());
    cfg.attention_enabled = take("config/attention").item() != 0.0;
    cfg.epsilon = take("config/epsilon").item();
    const Tensor widths = take("config/widths");
    for (std::size_t i = 0; i < 4; ++i) {
        cfg.widths[i] = static_cast<std::int64_t>(widths.values()[i]);
    }
    if (config_fingerprint(cfg) != stored_fingerprint) {
        throw CheckpointCorruptionError("checkpoint fingerprint does not match its config records");
    }

    TrainState st = make_train_state(cfg);
    st.step = static_cast<std::int64_t>(take("state/step").item());
    st.rng_state = join_halves(take("state/rng_lo").item(), take("state/rng_hi").item());

    const auto learnables = named_learnables(st.model);
    for (std::size_t i = 0; i < learnables.size(); ++i) {
        const Tensor p = take("param/" + learnables[i].first);
        if (p.shape() != learnables[i].second->shape()) {
            throw CheckpointCorruptionError("checkpoint tensor '" + learnables[i].first +
                                            "' has shape " + shape_str(p.shape()) + ", expected " +
                                            shape_str(learnables[i].second->shape()));
        }
        learnables[i].second->values() = p.values();
        st.moments[i].m.values() = take("adam_m/" + learnables[i].first).values();
        st.moments[i].v.values() = take("adam_v/" + learnables[i].first).values();
    }
    return st;
}

} // namespace safin
