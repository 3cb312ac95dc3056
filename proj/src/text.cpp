#include "segen/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seg {

namespace {
const char* kSot = "<sot>";

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(lower(text));
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}
}  // namespace

Vocabulary Vocabulary::from_tokens(std::vector<std::string> toks) {
    Vocabulary v;
    v.tokens = std::move(toks);
    for (size_t i = 0; i < v.tokens.size(); ++i) {
        if (v.index.count(v.tokens[i])) throw std::invalid_argument("vocabulary: duplicate token " + v.tokens[i]);
        v.index[v.tokens[i]] = static_cast<int>(i);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("vocabulary: cannot open " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) toks.push_back(line);
    }
    return from_tokens(std::move(toks));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("vocabulary: cannot write " + path);
    for (const auto& t : tokens) f << t << "\n";
}

int Vocabulary::sot_id() const {
    auto it = index.find(kSot);
    if (it == index.end()) throw std::runtime_error("vocabulary: missing <sot> token");
    return it->second;
}

std::vector<int> Vocabulary::split_word(const std::string& word) const {
    // greedy longest-match cover of the word by vocabulary tokens
    std::vector<int> ids;
    size_t pos = 0;
    while (pos < word.size()) {
        int best = -1;
        size_t best_len = 0;
        for (size_t len = word.size() - pos; len >= 1; --len) {
            auto it = index.find(word.substr(pos, len));
            if (it != index.end()) {
                best = it->second;
                best_len = len;
                break;
            }
        }
        if (best < 0) throw std::invalid_argument("out-of-vocabulary word: " + word);
        ids.push_back(best);
        pos += best_len;
    }
    return ids;
}

std::vector<int> Vocabulary::encode_words(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : words_of(text)) {
        auto part = split_word(w);
        ids.insert(ids.end(), part.begin(), part.end());
    }
    return ids;
}

void SubjectSet::validate() const {
    for (size_t i = 0; i < subjects.size(); ++i) {
        if (subjects[i].id.empty()) throw std::invalid_argument("subject set: empty id");
        if (subjects[i].phrase.empty()) throw std::invalid_argument("subject set: empty phrase for " + subjects[i].id);
        for (size_t j = i + 1; j < subjects.size(); ++j)
            if (subjects[i].id == subjects[j].id) throw std::invalid_argument("subject set: duplicate id " + subjects[i].id);
    }
}

const Subject* SubjectSet::find(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return &s;
    return nullptr;
}

const std::vector<int>* TextEmbedding::span_of(const std::string& id) const {
    for (const auto& [sid, span] : subject_spans)
        if (sid == id) return &span;
    return nullptr;
}

TextEncoder::TextEncoder(ParamStore& ps, const std::string& prefix, int vocab_size, int d, int max_len_, RandomStream& rng)
    : dmodel(d), max_len(max_len_) {
    Tensor te({vocab_size, d});
    rng.fill_normal(te, 0.0f, 0.02f);
    tok_emb = ps.make(prefix + ".tok_emb", std::move(te));
    Tensor pe({max_len, d});
    rng.fill_normal(pe, 0.0f, 0.02f);
    pos_emb = ps.make(prefix + ".pos_emb", std::move(pe));
    layers.resize(2);
    for (int i = 0; i < 2; ++i) {
        auto lp = prefix + ".layer" + std::to_string(i);
        auto& l = layers[i];
        l.n1 = RowNorm(ps, lp + ".n1", d);
        l.n2 = RowNorm(ps, lp + ".n2", d);
        l.wq = Linear(ps, lp + ".wq", d, d, rng, false);
        l.wk = Linear(ps, lp + ".wk", d, d, rng, false);
        l.wv = Linear(ps, lp + ".wv", d, d, rng, false);
        l.wo = Linear(ps, lp + ".wo", d, d, rng);
        l.fc1 = Linear(ps, lp + ".fc1", d, 2 * d, rng);
        l.fc2 = Linear(ps, lp + ".fc2", 2 * d, d, rng);
    }
    out_norm = RowNorm(ps, prefix + ".out_norm", d);
}

Var TextEncoder::forward(const std::vector<int>& ids) const {
    int n = static_cast<int>(ids.size());
    if (n < 1) throw std::invalid_argument("text encoder: empty token sequence");
    if (n > max_len) throw std::invalid_argument("text encoder: sequence longer than max_len");
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) pos[i] = i;
    Var x = add(embedding_rows(tok_emb, ids), embedding_rows(pos_emb, pos));
    float sc = 1.0f / std::sqrt(static_cast<float>(dmodel));
    for (const auto& l : layers) {
        Var h = l.n1.forward(x);
        Var q = l.wq.forward(h), k = l.wk.forward(h), v = l.wv.forward(h);
        Var probs = softmax_rows(scale(matmul(q, transpose(k)), sc));
        x = add(x, l.wo.forward(matmul(probs, v)));
        Var m = l.n2.forward(x);
        x = add(x, l.fc2.forward(silu(l.fc1.forward(m))));
    }
    return out_norm.forward(x);
}

TextEmbedding encode_text(const std::string& prompt, const Vocabulary& vocab, const TextEncoder& enc,
                          const SubjectSet* subjects) {
    auto ws = words_of(prompt);
    if (ws.empty()) throw std::invalid_argument("encode_text: empty prompt");

    TextEmbedding emb;
    emb.tokens.push_back(vocab.sot_id());
    for (const auto& w : ws) {
        auto part = vocab.split_word(w);
        emb.tokens.insert(emb.tokens.end(), part.begin(), part.end());
    }
    emb.sot_index = 0;

    if (subjects) {
        subjects->validate();
        for (const auto& s : subjects->subjects) {
            std::vector<int> needle = vocab.encode_words(s.phrase);
            if (needle.empty()) throw std::invalid_argument("encode_text: subject phrase tokenizes to nothing: " + s.id);
            int found = -1;
            for (int i = 1; i + static_cast<int>(needle.size()) <= emb.length(); ++i) {
                bool ok = true;
                for (size_t j = 0; j < needle.size(); ++j)
                    if (emb.tokens[i + j] != needle[j]) { ok = false; break; }
                if (ok) { found = i; break; }
            }
            if (found < 0) throw std::invalid_argument("encode_text: subject phrase not in prompt: '" + s.phrase + "'");
            std::vector<int> span(needle.size());
            for (size_t j = 0; j < needle.size(); ++j) span[j] = found + static_cast<int>(j);
            emb.subject_spans.emplace_back(s.id, std::move(span));
        }
    }

    emb.features = enc.forward(emb.tokens);
    return emb;
}

}  // namespace seg
