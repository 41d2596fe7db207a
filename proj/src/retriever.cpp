#include "scw/retriever.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "scw/checkpoint.hpp"
#include "scw/ops.hpp"

namespace scw::model {

using ad::Value;

namespace {

int thrice_halved(int n) {
    for (int i = 0; i < 3; ++i) n = (n + 1) / 2;
    return n;
}

Tensor coord_grid(int gh, int gw) {
    Tensor t({2, gh, gw});
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            t[y * gw + x] = gw > 1 ? x / double(gw - 1) : 0.0;
            t[gh * gw + y * gw + x] = gh > 1 ? y / double(gh - 1) : 0.0;
        }
    return t;
}

void check_video(const vid::Video& v, const RetrieverConfig& cfg, const char* who) {
    if (static_cast<int>(v.size()) != cfg.frames)
        throw std::invalid_argument(std::string(who) + ": expected " +
                                    std::to_string(cfg.frames) + " frames, got " +
                                    std::to_string(v.size()));
    for (const auto& fr : v)
        if (fr.rank() != 3 || fr.dim(0) != 3 || fr.dim(1) != cfg.height ||
            fr.dim(2) != cfg.width)
            throw std::invalid_argument(std::string(who) + ": frame shape mismatch");
}

EmbeddingSeq to_seq(const std::vector<Value>& hs) {
    EmbeddingSeq e;
    for (const auto& h : hs) e.vectors.push_back(h->val.data);
    return e;
}

Value temporal_mean(const std::vector<Value>& hs) {
    Value acc = hs[0];
    for (size_t f = 1; f < hs.size(); ++f) acc = ad::add(acc, hs[f]);
    return ad::smul(acc, 1.0 / hs.size());
}

}  // namespace

EntityRetriever EntityRetriever::create(RetrieverConfig cfg, TokenLexicon tokens,
                                        data::Vocab words) {
    if (cfg.frames < 1 || cfg.height < 16 || cfg.width < 16)
        throw std::invalid_argument("retriever config: bad frame geometry");
    if (cfg.c1 < 1 || cfg.c2 < 1 || cfg.c3 < 1 || cfg.embed_dim < 1 || cfg.aux_hidden < 1)
        throw std::invalid_argument("retriever config: bad channel sizes");
    if (cfg.gamma <= 0) throw std::invalid_argument("retriever config: margin must be positive");
    if (tokens.size() < 1) throw std::invalid_argument("retriever config: empty token table");
    words.validate();

    EntityRetriever m;
    m.cfg = std::move(cfg);
    m.tokens = std::move(tokens);
    m.words = std::move(words);
    Rng rng(Rng::mix(m.cfg.seed, 0x5e7eULL));
    m.gh = thrice_halved(m.cfg.height);
    m.gw = thrice_halved(m.cfg.width);
    m.text = TextEncoder::create(m.ps, rng, "entity.text", m.tokens.size(), m.cfg.text);
    m.q_conv1 = nn::Conv2d::create(m.ps, rng, "entity.q_conv1", 3, m.cfg.c1, 3, 2, 1);
    m.q_conv2 = nn::Conv2d::create(m.ps, rng, "entity.q_conv2", m.cfg.c1, m.cfg.c2, 3, 2, 1);
    m.q_conv3 = nn::Conv2d::create(m.ps, rng, "entity.q_conv3", m.cfg.c2, m.cfg.c3, 3, 2, 1);
    m.r_conv1 = nn::Conv2d::create(m.ps, rng, "entity.r_conv1", 3, m.cfg.c1, 3, 2, 1);
    m.r_conv2 = nn::Conv2d::create(m.ps, rng, "entity.r_conv2", m.cfg.c1, m.cfg.c2, 3, 2, 1);
    m.r_conv3 = nn::Conv2d::create(m.ps, rng, "entity.r_conv3", m.cfg.c2, m.cfg.c3, 3, 2, 1);
    const int q_in = m.cfg.c3 + m.text.out_dim() + 2;
    m.q_lstm = nn::LstmCell::create(m.ps, rng, "entity.q_lstm", q_in, m.cfg.embed_dim);
    m.r_lstm = nn::LstmCell::create(m.ps, rng, "entity.r_lstm", m.cfg.c3, m.cfg.embed_dim);
    m.aux_hid = nn::Linear::create(m.ps, rng, "entity.aux_hidden", m.cfg.embed_dim,
                                   m.cfg.aux_hidden);
    m.aux_out = nn::Linear::create(m.ps, rng, "entity.aux_out", m.cfg.aux_hidden,
                                   std::max(m.words.size(), 1));
    return m;
}

ad::GridRect EntityRetriever::quantize_box(const data::Box& b) const {
    const int W = cfg.width, H = cfg.height;
    const data::Rect r = data::rect_from_box(b, W, H);
    int x0, x1, y0, y1;
    if (r.x1 < r.x0 || r.y1 < r.y0) {  // extent rounded to zero pixels
        if (b.x < 0 || b.x >= W || b.y < 0 || b.y >= H)
            throw std::invalid_argument("roi: box does not intersect the frame");
        std::fprintf(stderr, "roi: degenerate box expanded to one grid cell\n");
        x0 = x1 = b.x;
        y0 = y1 = b.y;
    } else {
        if (r.x1 < 0 || r.x0 >= W || r.y1 < 0 || r.y0 >= H)
            throw std::invalid_argument("roi: box does not intersect the frame");
        x0 = std::max(r.x0, 0);
        x1 = std::min(r.x1, W - 1);
        y0 = std::max(r.y0, 0);
        y1 = std::min(r.y1, H - 1);
    }
    ad::GridRect g;
    g.x0 = x0 * gw / W;
    g.x1 = x1 * gw / W;
    g.y0 = y0 * gh / H;
    g.y1 = y1 * gh / H;
    return g;
}

std::vector<Value> EntityRetriever::query_states(const vid::Video& prev,
                                                 const std::vector<int>& token_ids, int e_pos,
                                                 const std::vector<data::Box>& boxes) const {
    check_video(prev, cfg, "query");
    if (boxes.size() != prev.size()) throw std::invalid_argument("query: boxes/frames mismatch");
    if (e_pos < 0 || e_pos >= static_cast<int>(token_ids.size()))
        throw std::invalid_argument("query: entity position " + std::to_string(e_pos) +
                                    " outside a caption of " + std::to_string(token_ids.size()) +
                                    " tokens");
    Value txt = text(token_ids)[e_pos];
    Value coords = ad::constant(cfg.use_coords ? coord_grid(gh, gw) : Tensor({2, gh, gw}));
    std::vector<Value> xs;
    for (size_t f = 0; f < prev.size(); ++f) {
        Value h = ad::relu(q_conv1(ad::constant(prev[f])));
        h = ad::relu(q_conv2(h));
        h = ad::relu(q_conv3(h));
        Value feat = ad::concat_channels({h, ad::tile_spatial(txt, gh, gw), coords});
        Value roi = ad::roi_align7(feat, quantize_box(boxes[f]));
        xs.push_back(ad::spatial_mean(roi));
    }
    auto hs = nn::lstm_run(q_lstm, xs);
    for (auto& h : hs) h = ad::l2_normalize(h);
    return hs;
}

std::vector<Value> EntityRetriever::target_states(const vid::Video& video,
                                                  const std::vector<data::Box>& boxes,
                                                  const std::vector<Tensor>& masks) const {
    check_video(video, cfg, "target");
    if (boxes.size() != video.size() || masks.size() != video.size())
        throw std::invalid_argument("target: boxes/masks/frames mismatch");
    const int H = cfg.height, W = cfg.width;
    long covered = 0;
    for (size_t f = 0; f < masks.size(); ++f) {
        if (masks[f].rank() != 2 || masks[f].dim(0) != H || masks[f].dim(1) != W)
            throw std::invalid_argument("target: mask shape mismatch");
        data::Rect r = data::rect_from_box(boxes[f], W, H);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double v = masks[f][y * W + x];
                if (v != 0.0 && v != 1.0)
                    throw std::invalid_argument("target: mask must be binary");
                if (v == 1.0) {
                    ++covered;
                    if (x < r.x0 || x > r.x1 || y < r.y0 || y > r.y1)
                        throw std::invalid_argument(
                            "target: mask extends outside the box at frame " +
                            std::to_string(f));
                }
            }
    }
    if (covered == 0) throw std::invalid_argument("target: mask empty at every frame");

    std::vector<Value> xs;
    for (size_t f = 0; f < video.size(); ++f) {
        Tensor in = video[f];
        if (cfg.mask_target) {
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < H * W; ++i) in[c * H * W + i] *= masks[f][i];
        }
        Value h = ad::relu(r_conv1(ad::constant(in)));
        h = ad::relu(r_conv2(h));
        h = ad::relu(r_conv3(h));
        Value roi = ad::roi_align7(h, quantize_box(boxes[f]));
        xs.push_back(ad::spatial_mean(roi));
    }
    auto hs = nn::lstm_run(r_lstm, xs);
    for (auto& h : hs) h = ad::l2_normalize(h);
    return hs;
}

EmbeddingSeq EntityRetriever::query_embed(const vid::Video& prev,
                                          const std::vector<int>& token_ids, int e_pos,
                                          const std::vector<data::Box>& boxes) const {
    return to_seq(query_states(prev, token_ids, e_pos, boxes));
}

EmbeddingSeq EntityRetriever::target_embed(const vid::Video& video,
                                           const std::vector<data::Box>& boxes,
                                           const std::vector<Tensor>& masks) const {
    return to_seq(target_states(video, boxes, masks));
}

std::vector<Tensor> entity_masks(const data::Clip& clip, int entity) {
    if (entity < 0 || entity >= static_cast<int>(clip.entities.size()))
        throw std::invalid_argument("entity_masks: entity index out of range");
    const auto& bytes = clip.entities[entity].mask;
    std::vector<Tensor> out;
    for (int f = 0; f < clip.F; ++f) {
        Tensor m({clip.H, clip.W});
        const size_t base = static_cast<size_t>(f) * clip.mask_bytes();
        for (size_t i = 0; i < clip.mask_bytes(); ++i) m[i] = bytes[base + i];
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<int> entity_word_ids(const data::Clip& clip, const data::Vocab& lexicon,
                                 int entity, const data::Vocab& words) {
    if (entity < 0 || entity >= static_cast<int>(clip.entities.size()))
        throw std::invalid_argument("entity_word_ids: entity index out of range");
    std::vector<int> out;
    for (uint32_t lex_id : clip.entities[entity].words) {
        const int id = words.find(lexicon.words.at(lex_id));
        if (id < 0)
            throw std::invalid_argument("entity_word_ids: word '" + lexicon.words.at(lex_id) +
                                        "' not in the model vocabulary");
        out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<Value>> pair_scores(const std::vector<std::vector<Value>>& q,
                                            const std::vector<std::vector<Value>>& r) {
    if (q.size() != r.size() || q.empty())
        throw std::invalid_argument("pair_scores: batch mismatch");
    const size_t B = q.size(), F = q[0].size();
    std::vector<std::vector<Value>> s(B, std::vector<Value>(B));
    for (size_t a = 0; a < B; ++a)
        for (size_t b = 0; b < B; ++b) {
            if (q[a].size() != F || r[b].size() != F)
                throw std::invalid_argument("pair_scores: frame count mismatch");
            Value acc = ad::dot(q[a][0], r[b][0]);
            for (size_t f = 1; f < F; ++f) acc = ad::add(acc, ad::dot(q[a][f], r[b][f]));
            s[a][b] = ad::smul(acc, 1.0 / F);
        }
    return s;
}

ad::Value triplet_all_pairs(const std::vector<std::vector<Value>>& s, double gamma) {
    const size_t B = s.size();
    if (B < 2) throw std::invalid_argument("triplet loss needs a batch of at least 2");
    Value sum;
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < B; ++c) {
            if (c == b) continue;
            Value t1 = ad::relu(ad::sadd(ad::sub(s[b][c], s[b][b]), gamma));
            Value t2 = ad::relu(ad::sadd(ad::sub(s[c][b], s[b][b]), gamma));
            Value both = ad::add(t1, t2);
            sum = sum ? ad::add(sum, both) : both;
        }
    return ad::smul(sum, 1.0 / double(B * (B - 1)));
}

ad::Value triplet_ohem(const std::vector<std::vector<Value>>& s, double gamma) {
    const size_t B = s.size();
    if (B < 2) throw std::invalid_argument("triplet loss needs a batch of at least 2");
    Value sum;
    for (size_t b = 0; b < B; ++b) {
        size_t cq = b == 0 ? 1 : 0, ct = cq;  // hardest negatives by forward value
        for (size_t c = 0; c < B; ++c) {
            if (c == b) continue;
            if (s[b][c]->val[0] > s[b][cq]->val[0]) cq = c;
            if (s[c][b]->val[0] > s[ct][b]->val[0]) ct = c;
        }
        Value t1 = ad::relu(ad::sadd(ad::sub(s[b][cq], s[b][b]), gamma));
        Value t2 = ad::relu(ad::sadd(ad::sub(s[ct][b], s[b][b]), gamma));
        Value both = ad::add(t1, t2);
        sum = sum ? ad::add(sum, both) : both;
    }
    return ad::smul(sum, 1.0 / double(2 * B));
}

namespace {

// positives use -log sigmoid(s) = softplus(-s); absent words use
// -log(1-sigmoid(s)) = softplus(s), or softplus(-s) in literal mode
Value aux_side_loss(const EntityRetriever& m, const std::vector<Value>& states,
                    const std::vector<int>& word_set, bool literal_negative) {
    Value logits = m.aux_out(ad::relu(m.aux_hid(temporal_mean(states))));
    Tensor sign(std::vector<int>{m.words.size()});
    for (int w = 0; w < m.words.size(); ++w) sign[w] = literal_negative ? -1.0 : 1.0;
    for (int w : word_set) {
        if (w < 0 || w >= m.words.size())
            throw std::invalid_argument("aux loss: word id outside the vocabulary");
        sign[w] = -1.0;
    }
    return ad::reduce_sum(ad::softplus(ad::mul(logits, ad::constant(sign))));
}

}  // namespace

ad::Value aux_word_loss(const EntityRetriever& m, const std::vector<std::vector<Value>>& q,
                        const std::vector<std::vector<Value>>& r,
                        const std::vector<std::vector<int>>& word_sets, bool literal_negative) {
    if (m.words.size() == 0) throw std::invalid_argument("aux loss: empty vocabulary");
    if (q.size() != r.size() || q.size() != word_sets.size())
        throw std::invalid_argument("aux loss: batch mismatch");
    Value sum;
    for (size_t b = 0; b < q.size(); ++b) {
        Value lq = aux_side_loss(m, q[b], word_sets[b], literal_negative);
        Value lr = aux_side_loss(m, r[b], word_sets[b], literal_negative);
        Value both = ad::add(lq, lr);
        sum = sum ? ad::add(sum, both) : both;
    }
    return sum;
}

std::vector<double> aux_word_probs(const EntityRetriever& m,
                                   const std::vector<Value>& states) {
    Value p = ad::sigmoid(m.aux_out(ad::relu(m.aux_hid(temporal_mean(states)))));
    return p->val.data;
}

void save_retriever(const EntityRetriever& m, const std::string& prefix) {
    nlohmann::json j;
    j["kind"] = "entity-retriever";
    nlohmann::json c;
    c["frames"] = m.cfg.frames;
    c["height"] = m.cfg.height;
    c["width"] = m.cfg.width;
    c["c1"] = m.cfg.c1;
    c["c2"] = m.cfg.c2;
    c["c3"] = m.cfg.c3;
    c["embed_dim"] = m.cfg.embed_dim;
    c["aux_hidden"] = m.cfg.aux_hidden;
    c["text_embed_dim"] = m.cfg.text.embed_dim;
    c["text_hidden"] = m.cfg.text.hidden;
    c["text_bidirectional"] = m.cfg.text.bidirectional;
    c["use_coords"] = m.cfg.use_coords;
    c["mask_target"] = m.cfg.mask_target;
    c["gamma"] = m.cfg.gamma;
    c["seed"] = m.cfg.seed;
    j["config"] = c;
    j["tokens"] = m.tokens.tokens;
    j["words"] = m.words.words;
    nlohmann::json roles = nlohmann::json::array();
    for (auto r : m.words.roles) roles.push_back(static_cast<int>(r));
    j["roles"] = roles;
    std::ofstream out(prefix + ".json");
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("cannot write " + prefix + ".json");
    nn::save_checkpoint(m.ps, prefix + ".ckpt");
}

EntityRetriever load_retriever(const std::string& prefix) {
    std::ifstream in(prefix + ".json");
    if (!in) throw std::runtime_error("cannot open " + prefix + ".json");
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("kind", "") != "entity-retriever")
        throw std::runtime_error(prefix + ".json: not an entity retriever");
    const auto& c = j.at("config");
    RetrieverConfig cfg;
    cfg.frames = c.at("frames");
    cfg.height = c.at("height");
    cfg.width = c.at("width");
    cfg.c1 = c.at("c1");
    cfg.c2 = c.at("c2");
    cfg.c3 = c.at("c3");
    cfg.embed_dim = c.at("embed_dim");
    cfg.aux_hidden = c.at("aux_hidden");
    cfg.text.embed_dim = c.at("text_embed_dim");
    cfg.text.hidden = c.at("text_hidden");
    cfg.text.bidirectional = c.at("text_bidirectional");
    cfg.use_coords = c.at("use_coords");
    cfg.mask_target = c.at("mask_target");
    cfg.gamma = c.at("gamma");
    cfg.seed = c.at("seed");
    TokenLexicon tokens;
    tokens.tokens = j.at("tokens").get<std::vector<std::string>>();
    data::Vocab words;
    words.words = j.at("words").get<std::vector<std::string>>();
    for (int r : j.at("roles").get<std::vector<int>>()) {
        if (r < 0 || r > 2) throw std::runtime_error(prefix + ".json: bad role");
        words.roles.push_back(static_cast<data::Role>(r));
    }
    EntityRetriever m = EntityRetriever::create(cfg, std::move(tokens), std::move(words));
    nn::load_checkpoint(m.ps, prefix + ".ckpt");
    return m;
}

namespace {

struct PairRef {
    uint32_t clip_id = 0;
    int entity = 0;
};

struct ClipCache {
    const data::Dataset& ds;
    std::unordered_map<uint32_t, data::Clip> clips;
    std::unordered_map<uint32_t, vid::Video> full;

    explicit ClipCache(const data::Dataset& d) : ds(d) {}
    const data::Clip& clip(uint32_t id) {
        auto it = clips.find(id);
        if (it == clips.end()) it = clips.emplace(id, ds.load_clip(id)).first;
        return it->second;
    }
    const vid::Video& full_video(uint32_t id) {
        auto it = full.find(id);
        if (it == full.end()) {
            const data::Clip& c = clip(id);
            it = full.emplace(id, vid::video_from_bytes(c.frames, c.F, c.H, c.W)).first;
        }
        return it->second;
    }
};

std::vector<PairRef> collect_pairs(ClipCache& cache, const std::vector<uint32_t>& ids) {
    std::vector<PairRef> pairs;
    for (uint32_t id : ids) {
        const data::Clip& c = cache.clip(id);
        for (size_t e = 0; e < c.entities.size(); ++e)
            pairs.push_back({id, static_cast<int>(e)});
    }
    return pairs;
}

}  // namespace

EmbedIndex build_entity_index(const EntityRetriever& m, const data::Dataset& ds,
                              const std::vector<uint32_t>& ids) {
    EmbedIndex idx;
    idx.dataset_dir = ds.dir;
    for (uint32_t id : ids) {
        const data::Clip clip = ds.load_clip(id);
        const vid::Video full = vid::video_from_bytes(clip.frames, clip.F, clip.H, clip.W);
        for (size_t e = 0; e < clip.entities.size(); ++e) {
            IndexRecord rec;
            rec.clip_id = id;
            rec.entity_id = static_cast<uint32_t>(e);
            rec.emb = m.target_embed(full, clip.entities[e].boxes,
                                     entity_masks(clip, static_cast<int>(e)));
            idx.records.push_back(std::move(rec));
            idx.record_files.push_back(ds.files.at(id));
        }
    }
    idx.validate();
    return idx;
}

double self_recall_at_1(const EntityRetriever& m, const data::Dataset& ds,
                        const std::vector<uint32_t>& ids, const EmbedIndex& idx) {
    long hit = 0, total = 0;
    for (uint32_t id : ids) {
        const data::Clip clip = ds.load_clip(id);
        const std::vector<int> token_ids = m.tokens.encode(clip.tokens);
        for (size_t e = 0; e < clip.entities.size(); ++e) {
            const EmbeddingSeq q =
                m.query_embed(vid::partial_video(clip, e), token_ids,
                              static_cast<int>(clip.entities[e].noun_pos),
                              clip.entities[e].boxes);
            const auto hits = retrieve(idx, q, 1);
            hit += hits[0].clip_id == id && hits[0].entity_id == e;
            ++total;
        }
    }
    return total ? double(hit) / double(total) : 0.0;
}

std::vector<RetrieverEpochStats> train_retriever(EntityRetriever& m, const data::Dataset& ds,
                                                 const RetrieverTrainConfig& tc) {
    ClipCache cache(ds);
    std::vector<PairRef> pairs = collect_pairs(cache, ds.train);
    if (pairs.size() < 2) throw std::runtime_error("train_retriever: need at least 2 pairs");
    int batch = tc.batch;
    if (batch > static_cast<int>(pairs.size())) {
        std::fprintf(stderr, "train_retriever: batch %d clamped to %zu pairs\n", batch,
                     pairs.size());
        batch = static_cast<int>(pairs.size());
    }
    if (batch < 2) batch = 2;

    nn::Adam opt(m.ps.params, tc.adam);
    Rng order(Rng::mix(tc.seed, 0x0e11ULL));
    std::vector<size_t> perm(pairs.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    std::vector<RetrieverEpochStats> stats;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        opt.set_epoch(epoch);
        order.shuffle(perm);
        RetrieverEpochStats es;
        int batches = 0;
        for (size_t at = 0; at < perm.size(); at += batch) {
            const size_t n = std::min(perm.size() - at, static_cast<size_t>(batch));
            if (n < 2) continue;  // triplet loss is undefined on a lone pair
            std::vector<std::vector<Value>> q, r;
            std::vector<std::vector<int>> word_sets;
            for (size_t i = 0; i < n; ++i) {
                const PairRef& p = pairs[perm[at + i]];
                const data::Clip& clip = cache.clip(p.clip_id);
                const auto& ent = clip.entities[p.entity];
                q.push_back(m.query_states(vid::partial_video(clip, p.entity),
                                           m.tokens.encode(clip.tokens),
                                           static_cast<int>(ent.noun_pos), ent.boxes));
                r.push_back(m.target_states(cache.full_video(p.clip_id), ent.boxes,
                                            entity_masks(clip, p.entity)));
                if (tc.use_aux)
                    word_sets.push_back(entity_word_ids(clip, ds.lexicon, p.entity, m.words));
            }
            auto s = pair_scores(q, r);
            Value loss = tc.ohem ? triplet_ohem(s, m.cfg.gamma)
                                 : triplet_all_pairs(s, m.cfg.gamma);
            es.triplet += loss->val[0];
            if (tc.use_aux) {
                // per-sample mean keeps the word loss on the triplet's scale
                // regardless of batch size
                Value aux = ad::smul(
                    aux_word_loss(m, q, r, word_sets, tc.literal_aux_negative),
                    1.0 / double(n));
                es.aux += aux->val[0];
                loss = ad::add(loss, aux);
            }
            m.ps.zero_grad();
            ad::backward(loss);
            opt.step();
            ++batches;
        }
        if (batches) {
            es.triplet /= batches;
            es.aux /= batches;
        }
        const bool probe = tc.eval_every > 0 && (epoch + 1) % tc.eval_every == 0;
        if (probe) {
            EmbedIndex idx = build_entity_index(m, ds, ds.train);
            es.recall1 = self_recall_at_1(m, ds, ds.train, idx);
        }
        if (tc.verbose) {
            std::printf("entity epoch %3d lr %.2e triplet %.4f aux %.4f", epoch,
                        opt.effective_lr(), es.triplet, es.aux);
            if (es.recall1 >= 0) std::printf(" recall@1 %.3f", es.recall1);
            std::printf("\n");
            std::fflush(stdout);
        }
        stats.push_back(es);
        if (probe && tc.stop_recall > 0 && es.recall1 >= tc.stop_recall) break;
    }
    return stats;
}

}  // namespace scw::model
