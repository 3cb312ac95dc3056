#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "segen/nn.hpp"

namespace seg {

// Plain-text vocabulary, one token per line; line number is the token id.
// Words are split greedily into the longest matching vocabulary tokens, so a
// word like "pinwheel" can tokenize to ["pin","wheel"] when only the parts
// appear in the vocabulary.
struct Vocabulary {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index;

    static Vocabulary from_tokens(std::vector<std::string> toks);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(tokens.size()); }
    int sot_id() const;
    std::vector<int> split_word(const std::string& word) const;  // throws listing the word on OOV
    std::vector<int> encode_words(const std::string& text) const;  // no <SoT>
};

struct Subject {
    std::string id;
    std::string phrase;                    // text snippet carrying the subject tokens
    std::vector<Tensor> reference_images;  // [3,64,64] each; >=1 at generation time
};

struct SubjectSet {
    std::vector<Subject> subjects;
    void validate() const;  // unique ids, non-empty phrases
    const Subject* find(const std::string& id) const;
};

struct TextEmbedding {
    std::vector<int> tokens;  // ids, tokens[0] == <SoT>
    Var features;             // [N, d]
    int sot_index = 0;
    // subject id -> indices of its tokens in `tokens` (multi-token words span a range)
    std::vector<std::pair<std::string, std::vector<int>>> subject_spans;

    int length() const { return static_cast<int>(tokens.size()); }
    const std::vector<int>* span_of(const std::string& id) const;
};

// Two self-attention layers over learned token+position embeddings.
struct TextEncoder {
    int dmodel = 64;
    int max_len = 16;
    Var tok_emb, pos_emb;
    struct Layer {
        RowNorm n1, n2;
        Linear wq, wk, wv, wo, fc1, fc2;
    };
    std::vector<Layer> layers;
    RowNorm out_norm;

    TextEncoder() = default;
    TextEncoder(ParamStore& ps, const std::string& prefix, int vocab_size, int d, int max_len_, RandomStream& rng);
    Var forward(const std::vector<int>& ids) const;
};

// Tokenizes the prompt, prepends <SoT>, locates subject spans by exact token
// subsequence match. Throws on empty prompts, OOV words, or unmatched
// subject phrases.
TextEmbedding encode_text(const std::string& prompt, const Vocabulary& vocab, const TextEncoder& enc,
                          const SubjectSet* subjects = nullptr);

}  // namespace seg
