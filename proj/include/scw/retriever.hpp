#pragma once

#include <string>
#include <vector>

#include "scw/embed_index.hpp"
#include "scw/layers.hpp"
#include "scw/optim.hpp"
#include "scw/text_encoder.hpp"
#include "scw/video.hpp"

namespace scw::model {

struct RetrieverConfig {
    int frames = 8;
    int height = 64, width = 64;
    int c1 = 16, c2 = 32, c3 = 64;  // frame CNN channels
    int embed_dim = 64;             // D: temporal LSTM hidden size
    int aux_hidden = 64;            // word-prediction MLP hidden size
    TextEncoderConfig text;
    bool use_coords = true;   // query-side coordinate channels
    bool mask_target = true;  // false keeps database context pixels
    double gamma = 0.1;       // triplet margin
    uint64_t seed = 1;
};

// Query network Q conditions on caption, noun position, boxes, and the
// partial video; target network R sees only the masked full video and boxes.
struct EntityRetriever {
    RetrieverConfig cfg;
    TokenLexicon tokens;
    data::Vocab words;  // aux-label vocabulary (train split)
    nn::ParamSet ps;
    TextEncoder text;
    nn::Conv2d q_conv1, q_conv2, q_conv3;
    nn::Conv2d r_conv1, r_conv2, r_conv3;
    nn::LstmCell q_lstm, r_lstm;
    nn::Linear aux_hid, aux_out;  // one MLP shared by query and target sides
    int gh = 0, gw = 0;           // frame CNN output grid

    static EntityRetriever create(RetrieverConfig cfg, TokenLexicon tokens, data::Vocab words);

    // grid cells covered by the box, inclusive; a box whose extent rounds to
    // zero pixels expands to the single cell under its center (logged)
    ad::GridRect quantize_box(const data::Box& b) const;

    // graph outputs for training: one unit-norm [D] value per frame
    std::vector<ad::Value> query_states(const vid::Video& prev, const std::vector<int>& token_ids,
                                        int e_pos, const std::vector<data::Box>& boxes) const;
    std::vector<ad::Value> target_states(const vid::Video& video,
                                         const std::vector<data::Box>& boxes,
                                         const std::vector<Tensor>& masks) const;

    EmbeddingSeq query_embed(const vid::Video& prev, const std::vector<int>& token_ids,
                             int e_pos, const std::vector<data::Box>& boxes) const;
    EmbeddingSeq target_embed(const vid::Video& video, const std::vector<data::Box>& boxes,
                              const std::vector<Tensor>& masks) const;
};

void save_retriever(const EntityRetriever& m, const std::string& prefix);
EntityRetriever load_retriever(const std::string& prefix);

// per-frame [H,W] 0/1 tensors from the clip's packed mask bytes
std::vector<Tensor> entity_masks(const data::Clip& clip, int entity);

// dense model-vocabulary ids for one entity's word set; rejects words the
// vocabulary does not cover
std::vector<int> entity_word_ids(const data::Clip& clip, const data::Vocab& lexicon,
                                 int entity, const data::Vocab& words);

// s[a][b] = (1/F) sum_f q_a[f].r_b[f], the frame-averaged dot product
std::vector<std::vector<ad::Value>> pair_scores(
    const std::vector<std::vector<ad::Value>>& q, const std::vector<std::vector<ad::Value>>& r);

// mean over all B(B-1) ordered pairs of the two hinge terms per pair
ad::Value triplet_all_pairs(const std::vector<std::vector<ad::Value>>& scores, double gamma);

// keeps only the most-violating negative per anchor per direction, mean of 2B
ad::Value triplet_ohem(const std::vector<std::vector<ad::Value>>& scores, double gamma);

// multi-label word loss on the temporal mean of query and target embeddings,
// summed over the batch; literal_negative reproduces the -log P absent-word
// form instead of -log(1-P)
ad::Value aux_word_loss(const EntityRetriever& m,
                        const std::vector<std::vector<ad::Value>>& q,
                        const std::vector<std::vector<ad::Value>>& r,
                        const std::vector<std::vector<int>>& word_sets, bool literal_negative);

// per-word probabilities from one embedding sequence (temporal mean + MLP)
std::vector<double> aux_word_probs(const EntityRetriever& m,
                                   const std::vector<ad::Value>& states);

struct RetrieverTrainConfig {
    int epochs = 50;
    int batch = 30;
    bool ohem = false;
    bool use_aux = true;
    bool literal_aux_negative = false;
    nn::AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-4, .decay_factor = 0.5,
                        .decay_period = 10};
    uint64_t seed = 1;
    bool verbose = true;
    double stop_recall = 0.0;  // early stop once train self-recall reaches this
    int eval_every = 0;        // epochs between recall probes (0 = never)
};

struct RetrieverEpochStats {
    double triplet = 0, aux = 0;  // batch means
    double recall1 = -1;          // train self-recall when probed, else -1
};

std::vector<RetrieverEpochStats> train_retriever(EntityRetriever& m, const data::Dataset& ds,
                                                 const RetrieverTrainConfig& tc);

// one record per (clip, entity) over ids, embedded with the target network
EmbedIndex build_entity_index(const EntityRetriever& m, const data::Dataset& ds,
                              const std::vector<uint32_t>& ids);

// fraction of (clip, entity) queries whose own record is the top hit
double self_recall_at_1(const EntityRetriever& m, const data::Dataset& ds,
                        const std::vector<uint32_t>& ids, const EmbedIndex& idx);

}  // namespace scw::model
