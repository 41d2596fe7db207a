#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scw::model {

// F frame vectors, each unit L2 norm (checked on load and on build).
struct EmbeddingSeq {
    std::vector<std::vector<double>> vectors;
    int frames() const { return static_cast<int>(vectors.size()); }
    int dim() const { return vectors.empty() ? 0 : static_cast<int>(vectors[0].size()); }
};

// (1/F) sum_f q[f].r[f]; in [-1,1] for unit-norm rows
double seq_score(const EmbeddingSeq& q, const EmbeddingSeq& r);

struct IndexRecord {
    uint32_t clip_id = 0;
    uint32_t entity_id = 0;  // background indexes fix this to 0
    EmbeddingSeq emb;
};

struct EmbedIndex {
    std::vector<IndexRecord> records;
    std::string dataset_dir;                // companion metadata for fusion
    std::vector<std::string> record_files;  // clip file per record

    void validate() const;  // unique ids, uniform F and D, unit norms
};

struct RetrievalHit {
    double score = 0.0;
    uint32_t clip_id = 0;
    uint32_t entity_id = 0;
    size_t record = 0;
};

// Exact scoring of the query against every record, descending score, ties to
// the smaller clip-id then entity-id. k larger than the index returns all.
std::vector<RetrievalHit> retrieve(const EmbedIndex& idx, const EmbeddingSeq& q, int k);

// Binary record stream plus a <path>.json companion mapping ids to clip files.
void save_index(const EmbedIndex& idx, const std::string& path);
EmbedIndex load_index(const std::string& path);

}  // namespace scw::model
