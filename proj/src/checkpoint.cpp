#include <cstring>
#include <fstream>

#include "ul/model.hpp"

#include <nlohmann/json.hpp>

namespace ul {

namespace {

constexpr char kMagic[4] = {'U', 'L', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated checkpoint");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_blob(std::ostream& out, const std::string& blob) {
    write_u32(out, static_cast<uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

std::string read_blob(std::istream& in) {
    const uint32_t len = read_u32(in);
    std::string blob(len, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("truncated checkpoint");
    return blob;
}

std::string config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["vocab_size"] = c.vocab_size;
    j["embed_dim"] = c.embed_dim;
    j["layers"] = c.layers;
    j["heads"] = c.heads;
    j["feedforward_dim"] = c.feedforward_dim;
    j["max_seq_len"] = c.max_seq_len;
    j["dropout"] = c.dropout;
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.feedforward_dim = j.at("feedforward_dim").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.dropout = j.at("dropout").get<float>();
    c.validate();
    return c;
}

static_assert(sizeof(float) == 4, "checkpoint format assumes 4-byte floats");

}  // namespace

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_blob(out, config_to_json(cfg));
    write_blob(out, vocab.to_text());

    uint32_t count = 0;
    params.for_each([&](const std::string&, const Array&) { ++count; });
    write_u32(out, count);
    params.for_each([&](const std::string& name, const Array& a) {
        write_blob(out, name);
        write_u32(out, static_cast<uint32_t>(a.shape.size()));
        for (int d : a.shape) write_u32(out, static_cast<uint32_t>(d));
        // little-endian f32; this toolkit only targets little-endian hosts
        out.write(reinterpret_cast<const char*>(a.v.data()),
                  static_cast<std::streamsize>(a.v.size() * sizeof(float)));
    });
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("incompatible checkpoint");
    if (read_u32(in) != kVersion) throw std::runtime_error("incompatible checkpoint");

    Checkpoint ck;
    ck.config = config_from_json(read_blob(in));
    ck.vocab = Vocabulary::from_text(read_blob(in));
    if (ck.vocab.size() != ck.config.vocab_size) {
        throw std::runtime_error("incompatible checkpoint");
    }

    Rng dummy(0);
    ck.params = ModelParams::init(ck.config, dummy);  // shapes only; values overwritten

    const uint32_t count = read_u32(in);
    uint32_t seen = 0;
    ck.params.for_each([&](const std::string& name, Array& a) {
        if (seen++ >= count) throw std::runtime_error("truncated checkpoint");
        const std::string stored = read_blob(in);
        if (stored != name) throw std::runtime_error("incompatible checkpoint");
        const uint32_t ndim = read_u32(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_u32(in));
        if (shape != a.shape) throw std::runtime_error("incompatible checkpoint");
        in.read(reinterpret_cast<char*>(a.v.data()),
                static_cast<std::streamsize>(a.v.size() * sizeof(float)));
        if (!in) throw std::runtime_error("truncated checkpoint");
    });
    if (seen != count) throw std::runtime_error("incompatible checkpoint");
    if (!ck.params.all_finite()) throw std::runtime_error("checkpoint: non-finite parameters");
    return ck;
}

}  // namespace ul
