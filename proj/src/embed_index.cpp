#include "scw/embed_index.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "scw/binio.hpp"

namespace scw::model {

double seq_score(const EmbeddingSeq& q, const EmbeddingSeq& r) {
    if (q.frames() != r.frames() || q.dim() != r.dim())
        throw std::invalid_argument("seq_score: shape mismatch");
    if (q.frames() == 0) throw std::invalid_argument("seq_score: empty embedding");
    double s = 0;
    for (int f = 0; f < q.frames(); ++f)
        for (int d = 0; d < q.dim(); ++d) s += q.vectors[f][d] * r.vectors[f][d];
    return s / q.frames();
}

void EmbedIndex::validate() const {
    std::set<std::pair<uint32_t, uint32_t>> ids;
    for (const auto& rec : records) {
        if (!ids.insert({rec.clip_id, rec.entity_id}).second)
            throw std::runtime_error("index: duplicate record id " +
                                     std::to_string(rec.clip_id) + "/" +
                                     std::to_string(rec.entity_id));
        if (rec.emb.frames() == 0 || rec.emb.dim() == 0)
            throw std::runtime_error("index: empty embedding");
        if (rec.emb.frames() != records[0].emb.frames() ||
            rec.emb.dim() != records[0].emb.dim())
            throw std::runtime_error("index: inconsistent embedding shapes");
        for (const auto& v : rec.emb.vectors) {
            double n = 0;
            for (double x : v) n += x * x;
            if (std::abs(std::sqrt(n) - 1.0) > 1e-9)
                throw std::runtime_error("index: frame embedding not unit norm");
        }
    }
    if (!record_files.empty() && record_files.size() != records.size())
        throw std::runtime_error("index: file list does not match records");
}

std::vector<RetrievalHit> retrieve(const EmbedIndex& idx, const EmbeddingSeq& q, int k) {
    if (idx.records.empty()) throw std::invalid_argument("retrieve: empty index");
    std::vector<RetrievalHit> hits(idx.records.size());
    for (size_t i = 0; i < idx.records.size(); ++i) {
        const auto& rec = idx.records[i];
        hits[i] = {seq_score(q, rec.emb), rec.clip_id, rec.entity_id, i};
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.clip_id != b.clip_id) return a.clip_id < b.clip_id;
        return a.entity_id < b.entity_id;
    });
    if (k > 0 && static_cast<size_t>(k) < hits.size()) hits.resize(k);
    return hits;
}

void save_index(const EmbedIndex& idx, const std::string& path) {
    idx.validate();
    io::Writer w(path);
    for (const auto& rec : idx.records) {
        w.u32(rec.clip_id);
        w.u32(rec.entity_id);
        w.u32(static_cast<uint32_t>(rec.emb.frames()));
        w.u32(static_cast<uint32_t>(rec.emb.dim()));
        for (const auto& v : rec.emb.vectors) w.f64s(v.data(), v.size());
    }
    w.close();

    nlohmann::json meta;
    meta["dataset"] = idx.dataset_dir;
    meta["records"] = nlohmann::json::array();
    for (size_t i = 0; i < idx.records.size(); ++i) {
        nlohmann::json r;
        r["clip"] = idx.records[i].clip_id;
        r["entity"] = idx.records[i].entity_id;
        if (i < idx.record_files.size()) r["file"] = idx.record_files[i];
        meta["records"].push_back(r);
    }
    std::ofstream out(path + ".json");
    out << meta.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("cannot write " + path + ".json");
}

EmbedIndex load_index(const std::string& path) {
    EmbedIndex idx;
    io::Reader r(path);
    while (!r.eof()) {
        IndexRecord rec;
        rec.clip_id = r.u32();
        rec.entity_id = r.u32();
        const uint32_t F = r.u32(), D = r.u32();
        if (F == 0 || F > 4096 || D == 0 || D > 65536) r.fail("implausible embedding shape");
        rec.emb.vectors.assign(F, std::vector<double>(D));
        for (auto& v : rec.emb.vectors) r.f64s(v.data(), D);
        idx.records.push_back(std::move(rec));
    }

    std::ifstream meta_in(path + ".json");
    if (meta_in) {
        nlohmann::json meta = nlohmann::json::parse(meta_in);
        idx.dataset_dir = meta.value("dataset", std::string());
        if (meta.contains("records")) {
            if (meta["records"].size() != idx.records.size())
                throw std::runtime_error(path + ".json: record count mismatch");
            for (const auto& rec : meta["records"])
                idx.record_files.push_back(rec.value("file", std::string()));
        }
    }
    idx.validate();
    return idx;
}

}  // namespace scw::model
