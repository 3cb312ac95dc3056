#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "segen/detector.hpp"
#include "segen/nn.hpp"
#include "segen/text.hpp"

namespace seg {

// Twin-tower similarity scorer: unit-norm image and text embeddings.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Tensor embed_image(const Tensor& image) const = 0;      // [e], unit norm
    virtual Tensor embed_text(const std::string& prompt) const = 0;
    virtual std::string name() const = 0;
};

// Contrastively trained conv/text towers over the synthetic world. Two
// independently seeded checkpoints play the roles of the two reference
// encoders in reports.
class ConvEmbedder : public Embedder {
public:
    ConvEmbedder(Vocabulary vocab, int embed_dim, uint64_t init_seed, std::string name);

    // training path (params carry grads until frozen)
    Var embed_image_var(const Var& image) const;
    Var embed_text_var(const std::vector<int>& ids) const;
    ParamStore& parameters() { return params_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    void freeze() { params_.set_requires_grad(false); }

    Tensor embed_image(const Tensor& image) const override;
    Tensor embed_text(const std::string& prompt) const override;
    std::string name() const override { return name_; }

    void save(const std::string& path) const;
    static std::unique_ptr<ConvEmbedder> load(const std::string& path);

private:
    std::string name_;
    Vocabulary vocab_;
    int embed_dim_ = 32;
    ParamStore params_;
    Conv2d c1_, c2_, c3_;
    ChannelNorm n1_, n2_, n3_;
    Linear img_proj_;
    Var tok_emb_, pos_emb_;
    Linear txt_q_, txt_k_, txt_v_, txt_o_, txt_proj_;
    RowNorm txt_norm_;
};

float cosine_similarity(const Tensor& a, const Tensor& b);

float text_alignment(const Tensor& image, const std::string& prompt, const Embedder& emb);
float image_alignment(const Tensor& gen, const Tensor& src, const Embedder& emb);

struct SubjectGrounding {
    std::array<int, 4> box{};
    float crop_score = 0.0f;
};

struct GroundingResult {
    // absent optional => subject not detected, contributes 0
    std::vector<std::pair<std::string, std::optional<SubjectGrounding>>> per_subject;
    float score = 0.0f;
};

// Detect each subject's phrase, crop the best box, embed, compare with that
// subject's source; undetected subjects score 0; mean over subjects.
GroundingResult grounding_score_detailed(const Tensor& gen,
                                         const std::vector<std::pair<std::string, Tensor>>& sources,
                                         const std::map<std::string, std::string>& phrases,
                                         const Detector& det, const Embedder& emb,
                                         float box_threshold, float text_threshold);

float grounding_score(const Tensor& gen, const std::vector<std::pair<std::string, Tensor>>& sources,
                      const std::map<std::string, std::string>& phrases, const Detector& det,
                      const Embedder& emb, float box_threshold = 0.35f, float text_threshold = 0.25f);

}  // namespace seg
