#pragma once

#include <string>
#include <vector>

#include "scw/layers.hpp"
#include "scw/sprite_world.hpp"

namespace scw::model {

// Caption-token id table built from train-split captions. Index 0 is the
// unknown token; everything else is sorted. Distinct from the annotation
// lexicon, which covers content words across all splits.
struct TokenLexicon {
    std::vector<std::string> tokens;

    int size() const { return static_cast<int>(tokens.size()); }
    int find(const std::string& t) const;        // -1 when absent
    int id_or_unk(const std::string& t) const;   // 0 when absent
    std::vector<int> encode(const std::vector<std::string>& caption) const;
};

TokenLexicon build_token_lexicon(const data::Dataset& ds);

struct TextEncoderConfig {
    int embed_dim = 32;
    int hidden = 32;           // per direction
    bool bidirectional = true;
};

// Token embedding plus an LSTM over the caption; emits one vector per token
// position. Output width is hidden (forward-only) or 2*hidden.
struct TextEncoder {
    TextEncoderConfig cfg;
    nn::Embedding embed;
    nn::LstmCell fwd, bwd;  // bwd is unused when forward-only

    static TextEncoder create(nn::ParamSet& ps, Rng& rng, const std::string& name, int vocab,
                              TextEncoderConfig cfg);
    int out_dim() const { return cfg.bidirectional ? 2 * cfg.hidden : cfg.hidden; }

    // one [out_dim] state per position; token ids must be inside the table
    std::vector<ad::Value> operator()(const std::vector<int>& token_ids) const;
};

}  // namespace scw::model
