#include "scw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "scw/rng.hpp"

namespace scw::model {

double uniform_distance_closed_form() {
    return (std::sqrt(2.0) + std::log(1.0 + std::sqrt(2.0))) / 6.0;
}

// Gauss-Legendre nodes and weights on [-1,1], Newton on the recurrence
static void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double p1 = 0.0, p0 = 0.0;
        for (int it = 0; it < 100; ++it) {
            p0 = 1.0;
            p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (t * p1 - p0) / (t * t - 1.0);
            double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        p0 = 1.0;
        p1 = t;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (t * p1 - p0) / (t * t - 1.0);
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

double uniform_distance_quadrature(int nodes) {
    if (nodes < 1) throw std::invalid_argument("uniform_distance_quadrature: nodes >= 1");
    // E || (x - 1/2, y - 1/2) || over the unit square. Eightfold symmetry
    // folds the square onto the triangle 0 <= v <= u <= 1/2; polar coordinates
    // there make the integrand r * r, smooth everywhere, so the tensor rule
    // converges spectrally (the corner kink never enters the domain).
    std::vector<double> gx, gw;
    gauss_legendre(nodes, gx, gw);
    double total = 0.0;
    for (int i = 0; i < nodes; ++i) {
        double theta = (gx[i] + 1.0) * (M_PI / 8.0);
        double wt = gw[i] * (M_PI / 8.0);
        double rmax = 0.5 / std::cos(theta);
        for (int j = 0; j < nodes; ++j) {
            double r = (gx[j] + 1.0) * (rmax / 2.0);
            double wr = gw[j] * (rmax / 2.0);
            total += 8.0 * wt * wr * r * r;
        }
    }
    return total;
}

double uniform_distance_mc(uint64_t samples, uint64_t seed) {
    if (samples == 0) throw std::invalid_argument("uniform_distance_mc: samples >= 1");
    Rng rng(seed);
    double acc = 0.0;
    for (uint64_t s = 0; s < samples; ++s) {
        double u = rng.uniform() - 0.5;
        double v = rng.uniform() - 0.5;
        acc += std::sqrt(u * u + v * v);
    }
    return acc / static_cast<double>(samples);
}

UniformBaselines uniform_baselines(int H, int W) {
    if (H < 1 || W < 1) throw std::invalid_argument("uniform_baselines: H, W >= 1");
    UniformBaselines b;
    b.nll = std::log(static_cast<double>(H) * static_cast<double>(W));
    b.pixel = uniform_distance_quadrature(32);
    return b;
}

std::vector<std::string> entity_words(const data::Clip& clip, int entity,
                                      const data::Vocab& lexicon) {
    if (entity < 0 || entity >= static_cast<int>(clip.entities.size()))
        throw std::out_of_range("entity_words: entity index");
    std::vector<std::string> out;
    for (uint32_t w : clip.entities[entity].words) {
        if (w >= lexicon.words.size()) throw std::out_of_range("entity_words: word id");
        out.push_back(lexicon.words[w]);
    }
    return out;
}

std::string entity_role_word(const data::Clip& clip, int entity, const data::Vocab& lexicon,
                             data::Role role) {
    if (entity < 0 || entity >= static_cast<int>(clip.entities.size()))
        throw std::out_of_range("entity_role_word: entity index");
    for (uint32_t w : clip.entities[entity].words) {
        if (w >= lexicon.roles.size()) throw std::out_of_range("entity_role_word: word id");
        if (lexicon.roles[w] == role) return lexicon.words[w];
    }
    return "";
}

std::vector<std::vector<std::string>> index_word_sets(const EmbedIndex& idx,
                                                      const data::Dataset& ds) {
    std::map<uint32_t, data::Clip> cache;
    std::vector<std::vector<std::string>> out;
    out.reserve(idx.records.size());
    for (const IndexRecord& r : idx.records) {
        auto it = cache.find(r.clip_id);
        if (it == cache.end()) it = cache.emplace(r.clip_id, ds.load_clip(r.clip_id)).first;
        out.push_back(entity_words(it->second, static_cast<int>(r.entity_id), ds.lexicon));
    }
    return out;
}

double recall_at_k(const EmbedIndex& idx, const std::vector<std::vector<std::string>>& rec_words,
                   const std::vector<EmbeddingSeq>& queries,
                   const std::vector<std::string>& required, int k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k >= 1");
    if (queries.size() != required.size())
        throw std::invalid_argument("recall_at_k: one required word per query");
    if (rec_words.size() != idx.records.size())
        throw std::invalid_argument("recall_at_k: one word set per index record");
    if (queries.empty()) throw std::invalid_argument("recall_at_k: no queries");
    int hits = 0;
    for (size_t q = 0; q < queries.size(); ++q) {
        if (required[q].empty())
            throw std::invalid_argument("recall_at_k: query carries no word of the role");
        bool hit = false;
        for (const RetrievalHit& h : retrieve(idx, queries[q], k)) {
            const std::vector<std::string>& ws = rec_words[h.record];
            if (std::find(ws.begin(), ws.end(), required[q]) != ws.end()) {
                hit = true;
                break;
            }
        }
        hits += hit ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<int>>& labels) {
    size_t n = scores.size();
    if (n == 0 || labels.size() != n)
        throw std::invalid_argument("mean_average_precision: score/label row mismatch");
    size_t cols = scores[0].size();
    for (size_t i = 0; i < n; ++i)
        if (scores[i].size() != cols || labels[i].size() != cols)
            throw std::invalid_argument("mean_average_precision: ragged rows");
    double ap_sum = 0.0;
    int kept = 0;
    for (size_t j = 0; j < cols; ++j) {
        int positives = 0;
        for (size_t i = 0; i < n; ++i) positives += labels[i][j] ? 1 : 0;
        if (positives == 0) continue;  // label absent from this set, skip
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return scores[a][j] > scores[b][j];  // ties keep the smaller row
        });
        double ap = 0.0;
        int seen = 0;
        for (size_t r = 0; r < n; ++r) {
            if (!labels[order[r]][j]) continue;
            ++seen;
            ap += static_cast<double>(seen) / static_cast<double>(r + 1);
        }
        ap_sum += ap / positives;
        ++kept;
    }
    if (kept == 0) throw std::invalid_argument("mean_average_precision: no positive labels");
    return ap_sum / kept;
}

double bleu1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    if (hyp.empty() || ref.empty()) return 0.0;
    std::map<std::string, int> rc, hc;
    for (const std::string& w : ref) ++rc[w];
    for (const std::string& w : hyp) ++hc[w];
    double clipped = 0.0;
    for (const auto& [w, c] : hc) {
        auto it = rc.find(w);
        if (it != rc.end()) clipped += std::min(c, it->second);
    }
    double precision = clipped / static_cast<double>(hyp.size());
    double bp = hyp.size() >= ref.size()
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size()));
    return precision * bp;
}

size_t bleu1_retrieve(const std::vector<std::string>& query,
                      const std::vector<std::vector<std::string>>& db) {
    if (db.empty()) throw std::invalid_argument("bleu1_retrieve: empty database");
    size_t best = 0;
    double best_score = -1.0;
    for (size_t i = 0; i < db.size(); ++i) {
        double s = bleu1(db[i], query);  // database caption scored against the query
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

Bleu1Recalls bleu1_baseline(const data::Dataset& ds, const std::vector<uint32_t>& test_ids,
                            const std::vector<uint32_t>& db_ids) {
    if (db_ids.empty()) throw std::invalid_argument("bleu1_baseline: empty database");
    if (test_ids.empty()) throw std::invalid_argument("bleu1_baseline: empty test split");
    std::vector<data::Clip> db;
    std::vector<std::vector<std::string>> captions;
    db.reserve(db_ids.size());
    for (uint32_t id : db_ids) {
        db.push_back(ds.load_clip(id));
        captions.push_back(db.back().tokens);
    }
    Bleu1Recalls out;
    int noun_hits = 0, adj_hits = 0, verb_hits = 0;
    int noun_n = 0, adj_n = 0, verb_n = 0;
    for (uint32_t id : test_ids) {
        data::Clip q = ds.load_clip(id);
        const data::Clip& got = db[bleu1_retrieve(q.tokens, captions)];
        std::vector<std::string> anno;  // union of the returned video's entity word sets
        for (size_t e = 0; e < got.entities.size(); ++e)
            for (const std::string& w : entity_words(got, static_cast<int>(e), ds.lexicon))
                anno.push_back(w);
        auto contains = [&](const std::string& w) {
            return std::find(anno.begin(), anno.end(), w) != anno.end();
        };
        for (size_t e = 0; e < q.entities.size(); ++e) {
            ++out.entities;
            struct RoleSlot {
                data::Role role;
                int* hits;
                int* count;
            };
            RoleSlot slots[] = {{data::Role::noun, &noun_hits, &noun_n},
                                {data::Role::adjective, &adj_hits, &adj_n},
                                {data::Role::verb, &verb_hits, &verb_n}};
            for (const RoleSlot& s : slots) {
                std::string w = entity_role_word(q, static_cast<int>(e), ds.lexicon, s.role);
                if (w.empty()) continue;
                ++*s.count;
                if (contains(w)) ++*s.hits;
            }
        }
    }
    out.noun = noun_n ? static_cast<double>(noun_hits) / noun_n : 0.0;
    out.adjective = adj_n ? static_cast<double>(adj_hits) / adj_n : 0.0;
    out.verb = verb_n ? static_cast<double>(verb_hits) / verb_n : 0.0;
    return out;
}

}  // namespace scw::model
