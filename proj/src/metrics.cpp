#include "segen/metrics.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "segen/dataset.hpp"

namespace seg {

ConvEmbedder::ConvEmbedder(Vocabulary vocab, int embed_dim, uint64_t init_seed, std::string name)
    : name_(std::move(name)), vocab_(std::move(vocab)), embed_dim_(embed_dim) {
    RandomStream rng(init_seed);
    c1_ = Conv2d(params_, "img.c1", 3, 16, 3, 2, 1, rng);
    c2_ = Conv2d(params_, "img.c2", 16, 32, 3, 2, 1, rng);
    c3_ = Conv2d(params_, "img.c3", 32, 64, 3, 2, 1, rng);
    n1_ = ChannelNorm(params_, "img.n1", 16);
    n2_ = ChannelNorm(params_, "img.n2", 32);
    n3_ = ChannelNorm(params_, "img.n3", 64);
    img_proj_ = Linear(params_, "img.proj", 64, embed_dim, rng);

    int d = 48;
    Tensor te({vocab_.size(), d});
    rng.fill_normal(te, 0.0f, 0.02f);
    tok_emb_ = params_.make("txt.tok_emb", std::move(te));
    Tensor pe({16, d});
    rng.fill_normal(pe, 0.0f, 0.02f);
    pos_emb_ = params_.make("txt.pos_emb", std::move(pe));
    txt_norm_ = RowNorm(params_, "txt.norm", d);
    txt_q_ = Linear(params_, "txt.q", d, d, rng, false);
    txt_k_ = Linear(params_, "txt.k", d, d, rng, false);
    txt_v_ = Linear(params_, "txt.v", d, d, rng, false);
    txt_o_ = Linear(params_, "txt.o", d, d, rng);
    txt_proj_ = Linear(params_, "txt.proj", d, embed_dim, rng);
}

Var ConvEmbedder::embed_image_var(const Var& image) const {
    Var x = silu(n1_.forward(c1_.forward(image)));  // [16,32,32]
    x = silu(n2_.forward(c2_.forward(x)));          // [32,16,16]
    x = silu(n3_.forward(c3_.forward(x)));          // [64,8,8]
    x = avgpool2(avgpool2(avgpool2(x)));            // [64,1,1]
    Var v = img_proj_.forward(chw_to_tokens(x));    // [1, e]
    return l2norm_rows(v);
}

Var ConvEmbedder::embed_text_var(const std::vector<int>& ids) const {
    int n = static_cast<int>(ids.size());
    if (n < 1 || n > 16) throw std::invalid_argument("embedder: bad token count");
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) pos[i] = i;
    Var x = add(embedding_rows(tok_emb_, ids), embedding_rows(pos_emb_, pos));
    Var hn = txt_norm_.forward(x);
    Var q = txt_q_.forward(hn), k = txt_k_.forward(hn), v = txt_v_.forward(hn);
    float sc = 1.0f / std::sqrt(static_cast<float>(x->value.cols()));
    Var probs = softmax_rows(scale(matmul(q, transpose(k)), sc));
    x = add(x, txt_o_.forward(matmul(probs, v)));
    // mean pool tokens -> [1, d]
    Tensor pool({1, n}, 1.0f / static_cast<float>(n));
    Var pooled = matmul(constant(pool), x);
    return l2norm_rows(txt_proj_.forward(pooled));
}

Tensor ConvEmbedder::embed_image(const Tensor& image) const {
    if (image.ndim() != 3 || image.shape[0] != 3) throw std::invalid_argument("embed_image: expected [3,H,W]");
    NoGradGuard ng;
    Tensor in = (image.shape[1] == 64 && image.shape[2] == 64) ? image : resize_bilinear(image, 64, 64);
    Var e = embed_image_var(constant(in));
    return Tensor({embed_dim_}, e->value.data);
}

Tensor ConvEmbedder::embed_text(const std::string& prompt) const {
    NoGradGuard ng;
    std::vector<int> ids = {vocab_.sot_id()};
    auto rest = vocab_.encode_words(prompt);
    ids.insert(ids.end(), rest.begin(), rest.end());
    Var e = embed_text_var(ids);
    return Tensor({embed_dim_}, e->value.data);
}

void ConvEmbedder::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("embedder: cannot write " + path);
    uint32_t magic = 0x424d4553;  // "SEMB"
    os.write(reinterpret_cast<const char*>(&magic), 4);
    auto wr_u32 = [&](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto wr_str = [&](const std::string& s) {
        wr_u32(static_cast<uint32_t>(s.size()));
        os.write(s.data(), static_cast<std::streamsize>(s.size()));
    };
    wr_str(name_);
    wr_u32(static_cast<uint32_t>(embed_dim_));
    wr_u32(static_cast<uint32_t>(vocab_.tokens.size()));
    for (const auto& t : vocab_.tokens) wr_str(t);
    wr_u32(static_cast<uint32_t>(params_.items.size()));
    for (const auto& [name, p] : params_.items) {
        wr_str(name);
        wr_u32(static_cast<uint32_t>(p->value.shape.size()));
        for (int d : p->value.shape) wr_u32(static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(p->value.data.data()),
                 static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("embedder: write failed " + path);
}

std::unique_ptr<ConvEmbedder> ConvEmbedder::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("embedder: cannot open " + path);
    auto rd_u32 = [&]() {
        uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 4);
        if (!is) throw std::runtime_error("embedder: truncated file " + path);
        return v;
    };
    auto rd_str = [&]() {
        uint32_t n = rd_u32();
        std::string s(n, '\0');
        is.read(s.data(), n);
        return s;
    };
    if (rd_u32() != 0x424d4553) throw std::runtime_error("embedder: bad magic in " + path);
    std::string name = rd_str();
    int embed_dim = static_cast<int>(rd_u32());
    uint32_t vn = rd_u32();
    std::vector<std::string> toks(vn);
    for (auto& t : toks) t = rd_str();
    auto emb = std::make_unique<ConvEmbedder>(Vocabulary::from_tokens(std::move(toks)), embed_dim, 0, name);
    uint32_t pn = rd_u32();
    if (pn != emb->params_.items.size()) throw std::runtime_error("embedder: parameter count mismatch in " + path);
    for (auto& [pname, p] : emb->params_.items) {
        if (rd_str() != pname) throw std::runtime_error("embedder: parameter order mismatch in " + path);
        uint32_t nd = rd_u32();
        std::vector<int> shape(nd);
        for (auto& d : shape) d = static_cast<int>(rd_u32());
        if (shape != p->value.shape) throw std::runtime_error("embedder: shape mismatch at " + pname);
        is.read(reinterpret_cast<char*>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    }
    emb->freeze();
    return emb;
}

float cosine_similarity(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("cosine_similarity: shape mismatch");
    double num = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        num += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    double d = std::sqrt(na) * std::sqrt(nb);
    return d > 0 ? static_cast<float>(num / d) : 0.0f;
}

float text_alignment(const Tensor& image, const std::string& prompt, const Embedder& emb) {
    return cosine_similarity(emb.embed_image(image), emb.embed_text(prompt));
}

float image_alignment(const Tensor& gen, const Tensor& src, const Embedder& emb) {
    return cosine_similarity(emb.embed_image(gen), emb.embed_image(src));
}

GroundingResult grounding_score_detailed(const Tensor& gen,
                                         const std::vector<std::pair<std::string, Tensor>>& sources,
                                         const std::map<std::string, std::string>& phrases,
                                         const Detector& det, const Embedder& emb,
                                         float box_threshold, float text_threshold) {
    if (sources.empty()) throw std::invalid_argument("grounding_score: empty subject list");
    GroundingResult result;
    double total = 0.0;
    for (const auto& [sid, src] : sources) {
        auto pit = phrases.find(sid);
        if (pit == phrases.end()) throw std::invalid_argument("grounding_score: no phrase for subject " + sid);
        auto dets = det.detect(gen, {pit->second}, box_threshold, text_threshold);
        if (dets.empty()) {
            result.per_subject.emplace_back(sid, std::nullopt);
            continue;  // missing subject contributes 0
        }
        const Detection& best = dets.front();  // highest confidence
        Tensor crop = crop_resize_pad(gen, best.box, 64);
        float sim = image_alignment(crop, src, emb);
        result.per_subject.emplace_back(sid, SubjectGrounding{best.box, sim});
        total += sim;
    }
    result.score = static_cast<float>(total / sources.size());
    return result;
}

float grounding_score(const Tensor& gen, const std::vector<std::pair<std::string, Tensor>>& sources,
                      const std::map<std::string, std::string>& phrases, const Detector& det,
                      const Embedder& emb, float box_threshold, float text_threshold) {
    return grounding_score_detailed(gen, sources, phrases, det, emb, box_threshold, text_threshold).score;
}

}  // namespace seg
