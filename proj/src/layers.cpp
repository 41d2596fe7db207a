#include "scw/layers.hpp"

#include <cmath>

namespace scw::nn {

Value ParamSet::create(std::vector<int> shape, int fan_in, Init init, Rng& rng,
                       std::string name) {
    for (const auto& p : params)
        if (p->name == name)
            throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor t(shape);
    if (init == Init::fan_in_uniform) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    }
    Value v = ad::param(std::move(t), std::move(name));
    params.push_back(v);
    return v;
}

Value ParamSet::find(const std::string& name) const {
    for (const auto& p : params)
        if (p->name == name) return p;
    throw std::invalid_argument("no parameter named " + name);
}

void ParamSet::zero_grad() {
    for (auto& p : params) p->zero_grad();
}

Linear Linear::create(ParamSet& ps, Rng& rng, const std::string& name, int in, int out,
                      Init init) {
    Linear l;
    l.W = ps.create({out, in}, in, init, rng, name + ".weight");
    l.b = ps.create({out}, in, init, rng, name + ".bias");
    return l;
}

Conv2d Conv2d::create(ParamSet& ps, Rng& rng, const std::string& name, int cin, int cout, int k,
                      int stride, int dilation, Init init) {
    Conv2d c;
    const int fan_in = cin * k * k;
    c.W = ps.create({cout, cin, k, k}, fan_in, init, rng, name + ".weight");
    c.b = ps.create({cout}, fan_in, init, rng, name + ".bias");
    c.stride = stride;
    c.dilation = dilation;
    c.pad = dilation * (k - 1) / 2;
    return c;
}

Embedding Embedding::create(ParamSet& ps, Rng& rng, const std::string& name, int vocab, int dim) {
    Embedding e;
    e.E = ps.create({vocab, dim}, dim, Init::fan_in_uniform, rng, name + ".table");
    return e;
}

LstmCell LstmCell::create(ParamSet& ps, Rng& rng, const std::string& name, int in, int hidden) {
    LstmCell c;
    c.hidden = hidden;
    c.Wx = ps.create({4 * hidden, in}, in, Init::fan_in_uniform, rng, name + ".wx");
    c.Wh = ps.create({4 * hidden, hidden}, hidden, Init::fan_in_uniform, rng, name + ".wh");
    c.b = ps.create({4 * hidden}, in, Init::fan_in_uniform, rng, name + ".bias");
    c.hb = ad::constant(Tensor({4 * hidden}));
    return c;
}

std::pair<Value, Value> LstmCell::step(const Value& x, const Value& h, const Value& c) const {
    using namespace ad;
    Value gates = add(linear(x, Wx, b), linear(h, Wh, hb));
    Value i = sigmoid(slice_vec(gates, 0, hidden));
    Value f = sigmoid(slice_vec(gates, hidden, hidden));
    Value g = tanh_(slice_vec(gates, 2 * hidden, hidden));
    Value o = sigmoid(slice_vec(gates, 3 * hidden, hidden));
    Value cn = add(mul(f, c), mul(i, g));
    Value hn = mul(o, tanh_(cn));
    return {hn, cn};
}

std::vector<Value> lstm_run(const LstmCell& cell, const std::vector<Value>& xs) {
    std::vector<Value> hs;
    hs.reserve(xs.size());
    Value h = ad::constant(Tensor({cell.hidden}));
    Value c = ad::constant(Tensor({cell.hidden}));
    for (const auto& x : xs) {
        auto [hn, cn] = cell.step(x, h, c);
        hs.push_back(hn);
        h = hn;
        c = cn;
    }
    return hs;
}

BiLstm BiLstm::create(ParamSet& ps, Rng& rng, const std::string& name, int in, int hidden) {
    BiLstm b;
    b.fwd = LstmCell::create(ps, rng, name + ".fwd", in, hidden);
    b.bwd = LstmCell::create(ps, rng, name + ".bwd", in, hidden);
    return b;
}

std::vector<Value> BiLstm::operator()(const std::vector<Value>& xs) const {
    std::vector<Value> hf = lstm_run(fwd, xs);
    std::vector<Value> rev(xs.rbegin(), xs.rend());
    std::vector<Value> hb = lstm_run(bwd, rev);
    std::vector<Value> out;
    out.reserve(xs.size());
    for (size_t t = 0; t < xs.size(); ++t)
        out.push_back(ad::concat_vec({hf[t], hb[xs.size() - 1 - t]}));
    return out;
}

}  // namespace scw::nn
