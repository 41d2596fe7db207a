#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scw/ops.hpp"
#include "scw/rng.hpp"

namespace scw::nn {

using ad::Value;

enum class Init { fan_in_uniform, zero };

// Named parameter leaves. Creation order is fixed by network construction and
// doubles as the checkpoint order.
struct ParamSet {
    std::vector<Value> params;

    Value create(std::vector<int> shape, int fan_in, Init init, Rng& rng, std::string name);
    Value find(const std::string& name) const;  // throws if absent
    void zero_grad();
};

struct Linear {
    Value W, b;
    static Linear create(ParamSet& ps, Rng& rng, const std::string& name, int in, int out,
                         Init init = Init::fan_in_uniform);
    Value operator()(Value x) const { return ad::linear(std::move(x), W, b); }
};

struct Conv2d {
    Value W, b;
    int stride = 1, dilation = 1, pad = 0;
    // pad defaults to dilation*(k-1)/2 so stride-s output is ceil(in/s)
    static Conv2d create(ParamSet& ps, Rng& rng, const std::string& name, int cin, int cout,
                         int k, int stride, int dilation, Init init = Init::fan_in_uniform);
    Value operator()(Value x) const { return ad::conv2d(std::move(x), W, b, stride, dilation, pad); }
};

struct Embedding {
    Value E;
    static Embedding create(ParamSet& ps, Rng& rng, const std::string& name, int vocab, int dim);
    Value operator()(int idx) const { return ad::embedding_row(E, idx); }
};

struct LstmCell {
    Value Wx, Wh, b;
    Value hb;  // shared zero bias for the recurrent matvec, not a parameter
    int hidden = 0;
    static LstmCell create(ParamSet& ps, Rng& rng, const std::string& name, int in, int hidden);
    // gate order i,f,g,o; returns (h', c')
    std::pair<Value, Value> step(const Value& x, const Value& h, const Value& c) const;
};

// Per-step hidden states, h0 = c0 = 0.
std::vector<Value> lstm_run(const LstmCell& cell, const std::vector<Value>& xs);

struct BiLstm {
    LstmCell fwd, bwd;
    static BiLstm create(ParamSet& ps, Rng& rng, const std::string& name, int in, int hidden);
    // per-step concat of forward and backward hidden states, [2*hidden]
    std::vector<Value> operator()(const std::vector<Value>& xs) const;
};

}  // namespace scw::nn
