#pragma once

#include <string>
#include <vector>

#include "scw/embed_index.hpp"
#include "scw/layers.hpp"
#include "scw/optim.hpp"
#include "scw/retriever.hpp"
#include "scw/text_encoder.hpp"
#include "scw/video.hpp"

namespace scw::model {

struct BackgroundConfig {
    int frames = 8;
    int height = 64, width = 64;
    int c1 = 16, c2 = 32, c3 = 64;  // frame CNN channels
    int hidden = 32;                // temporal BiLSTM per direction; D = 2*hidden
    TextEncoderConfig text;         // bidirectional; hidden must equal `hidden`
    double gamma = 0.1;
    uint64_t seed = 1;
};

// Query is the caption encoding at the setting word; target is the whole
// entity-free video through a frame CNN, global average pooling, and a
// temporal BiLSTM. Trained with the triplet loss alone.
struct BackgroundRetriever {
    BackgroundConfig cfg;
    TokenLexicon tokens;
    nn::ParamSet ps;
    TextEncoder text;
    nn::Conv2d conv1, conv2, conv3;
    nn::BiLstm temporal;
    int gh = 0, gw = 0;

    static BackgroundRetriever create(BackgroundConfig cfg, TokenLexicon tokens);

    // one unit-norm vector replicated across frames for uniform scoring
    std::vector<ad::Value> query_states(const std::vector<int>& token_ids,
                                        int setting_pos) const;
    std::vector<ad::Value> target_states(const vid::Video& video) const;

    EmbeddingSeq query_embed(const std::vector<int>& token_ids, int setting_pos) const;
    EmbeddingSeq target_embed(const vid::Video& video) const;
};

void save_background(const BackgroundRetriever& m, const std::string& prefix);
BackgroundRetriever load_background(const std::string& prefix);

// last caption position holding the setting word; rejects captions without it
int setting_position(const std::vector<std::string>& tokens, const std::string& setting);

struct BackgroundTrainConfig {
    int epochs = 50;
    int batch = 30;
    bool ohem = false;
    nn::AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-4, .decay_factor = 0.5,
                        .decay_period = 10};
    uint64_t seed = 1;
    bool verbose = true;
    double stop_recall = 0.0;
    int eval_every = 0;
};

struct BackgroundEpochStats {
    double triplet = 0;
    double recall1 = -1;
};

std::vector<BackgroundEpochStats> train_background(BackgroundRetriever& m,
                                                   const data::Dataset& ds,
                                                   const BackgroundTrainConfig& tc);

// one record per clip over ids, entity-id fixed to 0
EmbedIndex build_background_index(const BackgroundRetriever& m, const data::Dataset& ds,
                                  const std::vector<uint32_t>& ids);

double background_self_recall_at_1(const BackgroundRetriever& m, const data::Dataset& ds,
                                   const std::vector<uint32_t>& ids, const EmbedIndex& idx);

}  // namespace scw::model
