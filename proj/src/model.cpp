#include "segen/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace seg {

namespace {
constexpr uint32_t kMagic = 0x4e474553;  // "SEGN"
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
}  // namespace

GenerationModel::GenerationModel(const DenoiserConfig& cfg_, int vocab_size_, uint64_t init_seed)
    : cfg(cfg_), vocab_size(vocab_size_) {
    RandomStream rng(init_seed);
    codec = LatentCodec(params, "codec", rng);
    text_encoder = TextEncoder(params, "text", vocab_size, cfg.text_dim, cfg.text_max_len, rng);
    image_encoder = ImageEncoder(params, "image", cfg.text_dim, rng);
    unet = Denoiser(params, "unet", cfg, rng);
    Tensor nt({2, cfg.text_dim});
    rng.fill_normal(nt, 0.0f, 0.02f);
    null_text = params.make("null_text", std::move(nt));
}

uint64_t GenerationModel::arch_hash() const {
    uint64_t h = fnv1a(cfg.arch_string());
    h = fnv1a("v" + std::to_string(vocab_size), h);
    for (const auto& [name, p] : params.items) h = fnv1a(name + p->value.shape_str(), h);
    return h;
}

void GenerationModel::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    write_pod(os, kMagic);
    write_pod(os, kVersion);
    write_pod(os, arch_hash());
    int32_t fields[10] = {cfg.latent_channels, cfg.latent_size, cfg.ch0, cfg.ch1, cfg.ch2,
                          cfg.text_dim, cfg.key_dim, cfg.heads, cfg.time_dim, cfg.text_max_len};
    os.write(reinterpret_cast<const char*>(fields), sizeof(fields));
    write_pod(os, static_cast<int32_t>(vocab_size));
    os.write(reinterpret_cast<const char*>(codec.latent_mean.data.data()), 4 * sizeof(float));
    os.write(reinterpret_cast<const char*>(codec.latent_std.data.data()), 4 * sizeof(float));

    write_pod(os, static_cast<uint64_t>(params.items.size()));
    for (const auto& [name, p] : params.items) {
        write_pod(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<uint32_t>(p->value.shape.size()));
        for (int d : p->value.shape) write_pod(os, static_cast<int32_t>(d));
        os.write(reinterpret_cast<const char*>(p->value.data.data()),
                 static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::unique_ptr<GenerationModel> GenerationModel::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    if (read_pod<uint32_t>(is) != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
    if (read_pod<uint32_t>(is) != kVersion) throw std::runtime_error("checkpoint: unsupported version in " + path);
    uint64_t stored_hash = read_pod<uint64_t>(is);

    int32_t fields[10];
    is.read(reinterpret_cast<char*>(fields), sizeof(fields));
    DenoiserConfig cfg;
    cfg.latent_channels = fields[0];
    cfg.latent_size = fields[1];
    cfg.ch0 = fields[2];
    cfg.ch1 = fields[3];
    cfg.ch2 = fields[4];
    cfg.text_dim = fields[5];
    cfg.key_dim = fields[6];
    cfg.heads = fields[7];
    cfg.time_dim = fields[8];
    cfg.text_max_len = fields[9];
    int vocab_size = read_pod<int32_t>(is);

    auto model = std::make_unique<GenerationModel>(cfg, vocab_size, 0);
    is.read(reinterpret_cast<char*>(model->codec.latent_mean.data.data()), 4 * sizeof(float));
    is.read(reinterpret_cast<char*>(model->codec.latent_std.data.data()), 4 * sizeof(float));

    if (model->arch_hash() != stored_hash) throw std::runtime_error("checkpoint: architecture hash mismatch in " + path);

    uint64_t n = read_pod<uint64_t>(is);
    if (n != model->params.items.size()) throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
    for (auto& [name, p] : model->params.items) {
        uint32_t len = read_pod<uint32_t>(is);
        std::string stored(len, '\0');
        is.read(stored.data(), len);
        if (stored != name) throw std::runtime_error("checkpoint: parameter order mismatch at " + name);
        uint32_t nd = read_pod<uint32_t>(is);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = read_pod<int32_t>(is);
        if (shape != p->value.shape) throw std::runtime_error("checkpoint: shape mismatch at " + name);
        is.read(reinterpret_cast<char*>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor data at " + name);
    }
    // loaded models are inference-ready; training re-enables grads explicitly
    model->params.set_requires_grad(false);
    return model;
}

}  // namespace seg
