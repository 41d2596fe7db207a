#include "scw/checkpoint.hpp"

#include <set>

#include "scw/binio.hpp"

namespace scw::nn {

static const char kMagic[4] = {'S', 'C', 'W', '1'};

void save_checkpoint(const ParamSet& ps, const std::string& path) {
    io::Writer w(path);
    w.bytes(reinterpret_cast<const uint8_t*>(kMagic), 4);
    for (const auto& p : ps.params) {
        w.str(p->name);
        w.u32(static_cast<uint32_t>(p->val.rank()));
        for (int d : p->val.shape) w.u32(static_cast<uint32_t>(d));
        w.f64s(p->val.data.data(), p->val.data.size());
    }
    w.close();
}

void load_checkpoint(ParamSet& ps, const std::string& path) {
    io::Reader r(path);
    char magic[4];
    r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
    if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad checkpoint magic");
    std::set<std::string> filled;
    while (!r.eof()) {
        const std::string name = r.str();
        const uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) r.fail("implausible rank for parameter " + name);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        ad::Value p;
        try {
            p = ps.find(name);
        } catch (const std::exception&) {
            r.fail("checkpoint entry " + name + " has no matching parameter");
        }
        if (p->val.shape != shape)
            r.fail("parameter " + name + " has shape " + p->val.shape_str() +
                   ", checkpoint entry is " + Tensor(shape).shape_str());
        r.f64s(p->val.data.data(), p->val.data.size());
        filled.insert(name);
    }
    for (const auto& p : ps.params)
        if (!filled.count(p->name))
            throw std::runtime_error(path + ": checkpoint is missing parameter " + p->name);
}

}  // namespace scw::nn
