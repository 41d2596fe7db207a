#include "scw/text_encoder.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace scw::model {

int TokenLexicon::find(const std::string& t) const {
    for (size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == t) return static_cast<int>(i);
    return -1;
}

int TokenLexicon::id_or_unk(const std::string& t) const {
    const int id = find(t);
    return id < 0 ? 0 : id;
}

std::vector<int> TokenLexicon::encode(const std::vector<std::string>& caption) const {
    std::vector<int> ids;
    ids.reserve(caption.size());
    for (const auto& t : caption) ids.push_back(id_or_unk(t));
    return ids;
}

TokenLexicon build_token_lexicon(const data::Dataset& ds) {
    std::set<std::string> seen;
    for (uint32_t id : ds.train) {
        const data::Clip clip = ds.load_clip(id);
        seen.insert(clip.tokens.begin(), clip.tokens.end());
    }
    if (seen.empty()) throw std::runtime_error("token lexicon needs a non-empty train split");
    TokenLexicon lex;
    lex.tokens.push_back("<unk>");
    lex.tokens.insert(lex.tokens.end(), seen.begin(), seen.end());
    return lex;
}

TextEncoder TextEncoder::create(nn::ParamSet& ps, Rng& rng, const std::string& name, int vocab,
                                TextEncoderConfig cfg) {
    if (vocab < 1) throw std::invalid_argument("text encoder needs at least one token");
    TextEncoder enc;
    enc.cfg = cfg;
    enc.embed = nn::Embedding::create(ps, rng, name + ".embed", vocab, cfg.embed_dim);
    enc.fwd = nn::LstmCell::create(ps, rng, name + ".fwd", cfg.embed_dim, cfg.hidden);
    if (cfg.bidirectional)
        enc.bwd = nn::LstmCell::create(ps, rng, name + ".bwd", cfg.embed_dim, cfg.hidden);
    return enc;
}

std::vector<ad::Value> TextEncoder::operator()(const std::vector<int>& token_ids) const {
    if (token_ids.empty()) throw std::invalid_argument("text encoder: empty caption");
    const int T = static_cast<int>(token_ids.size());
    std::vector<ad::Value> xs;
    xs.reserve(T);
    for (int id : token_ids) xs.push_back(embed(id));
    std::vector<ad::Value> hf = nn::lstm_run(fwd, xs);
    if (!cfg.bidirectional) return hf;
    std::vector<ad::Value> rev(xs.rbegin(), xs.rend());
    std::vector<ad::Value> hb = nn::lstm_run(bwd, rev);
    std::vector<ad::Value> out;
    out.reserve(T);
    for (int t = 0; t < T; ++t) out.push_back(ad::concat_vec({hf[t], hb[T - 1 - t]}));
    return out;
}

}  // namespace scw::model
