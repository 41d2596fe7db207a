#pragma once

#include <string>
#include <vector>

#include "scw/embed_index.hpp"
#include "scw/sprite_world.hpp"

namespace scw::model {

// ln(H*W) and the expected normalized distance to a uniform point from the
// image center, E || (x - 1/2, y - 1/2) ||; the distance bound is resolution
// independent and equals (sqrt(2) + ln(1 + sqrt(2))) / 6
struct UniformBaselines {
    double nll = 0;
    double pixel = 0;
};
UniformBaselines uniform_baselines(int H, int W);

double uniform_distance_closed_form();
// tensor Gauss-Legendre on the four quadrants with a square-root substitution
// that removes the corner singularity; nodes per axis
double uniform_distance_quadrature(int nodes);
double uniform_distance_mc(uint64_t samples, uint64_t seed);

// word strings of one entity annotation, and the word of one role ("" if the
// entity carries none)
std::vector<std::string> entity_words(const data::Clip& clip, int entity,
                                      const data::Vocab& lexicon);
std::string entity_role_word(const data::Clip& clip, int entity, const data::Vocab& lexicon,
                             data::Role role);

// per-record annotation word sets for an index built over ds
std::vector<std::vector<std::string>> index_word_sets(const EmbedIndex& idx,
                                                      const data::Dataset& ds);

// a query scores a hit when any top-k record's word set contains its required
// word; mean over queries
double recall_at_k(const EmbedIndex& idx, const std::vector<std::vector<std::string>>& rec_words,
                   const std::vector<EmbeddingSeq>& queries,
                   const std::vector<std::string>& required, int k);

// mean over label columns of average precision, scores[i][j] = score of
// record i on label j; columns with no positives are skipped
double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<int>>& labels);

// clipped unigram precision of hyp against ref times the standard brevity
// penalty exp(min(0, 1 - |ref|/|hyp|))
double bleu1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

// database caption with the highest BLEU-1 against the query; ties to the
// smaller position
size_t bleu1_retrieve(const std::vector<std::string>& query,
                      const std::vector<std::vector<std::string>>& db);

// whole-video retrieval by caption BLEU-1: per test entity, a role scores a
// hit when the retrieved clip's full annotation contains the entity's word of
// that role; per-entity averaging
struct Bleu1Recalls {
    double noun = 0, adjective = 0, verb = 0;
    int entities = 0;
};
Bleu1Recalls bleu1_baseline(const data::Dataset& ds, const std::vector<uint32_t>& test_ids,
                            const std::vector<uint32_t>& db_ids);

}  // namespace scw::model
