#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scw/gradcheck.hpp"
#include "scw/layers.hpp"
#include "scw/ops.hpp"
#include "scw/rng.hpp"

using namespace scw;
using namespace scw::ad;
using scw::nn::finite_diff_check;

namespace {

Tensor randt(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// direct convolution, independent of the im2col path
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int dil,
                   int pad) {
    const int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
    const int wo = (ww + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
    Tensor y({cout, ho, wo});
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = b[oc];
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride - pad + ky * dil;
                            const int ix = ox * stride - pad + kx * dil;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                            acc += w[((oc * cin + ic) * kh + ky) * kw + kx] *
                                   x[(ic * h + iy) * ww + ix];
                        }
                y[(oc * ho + oy) * wo + ox] = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("elementwise ops forward values") {
    Rng rng(7);
    Tensor a = randt({5}, rng), b = randt({5}, rng);
    Value va = constant(a), vb = constant(b);
    Value s = add(va, vb);
    for (int i = 0; i < 5; ++i) CHECK(s->val[i] == a[i] + b[i]);
    Value m = mul(va, vb);
    for (int i = 0; i < 5; ++i) CHECK(m->val[i] == a[i] * b[i]);
    Value r = relu(va);
    for (int i = 0; i < 5; ++i) CHECK(r->val[i] == (a[i] > 0 ? a[i] : 0.0));
    Value sg = sigmoid(va);
    for (int i = 0; i < 5; ++i) CHECK(sg->val[i] == doctest::Approx(1.0 / (1.0 + std::exp(-a[i]))));
    Value sp = softplus(va);
    for (int i = 0; i < 5; ++i)
        CHECK(sp->val[i] == doctest::Approx(std::log1p(std::exp(a[i]))).epsilon(1e-12));
}

TEST_CASE("softplus is stable at large magnitudes") {
    Value x = constant(Tensor({2}));
    x->val[0] = 800.0;
    x->val[1] = -800.0;
    Value y = softplus(x);
    CHECK(y->val[0] == 800.0);
    CHECK(y->val[1] == 0.0);
    CHECK(std::isfinite(y->val[0]));
}

TEST_CASE("conv2d forward matches direct convolution") {
    Rng rng(11);
    for (auto [stride, dil] : {std::pair{1, 1}, {2, 1}, {1, 2}, {2, 2}}) {
        const int pad = dil;  // k=3 same-style padding
        Tensor x = randt({3, 10, 9}, rng);
        Tensor w = randt({4, 3, 3, 3}, rng);
        Tensor b = randt({4}, rng);
        Value y = conv2d(constant(x), constant(w), constant(b), stride, dil, pad);
        Tensor o = conv_oracle(x, w, b, stride, dil, pad);
        REQUIRE(y->val.shape == o.shape);
        for (int i = 0; i < o.numel(); ++i)
            CHECK(y->val[i] == doctest::Approx(o[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects mismatched channel counts with a diagnostic") {
    Rng rng(3);
    Tensor x = randt({3, 8, 8}, rng);
    Tensor w = randt({4, 2, 3, 3}, rng);
    Tensor b = randt({4}, rng);
    CHECK_THROWS_WITH_AS(conv2d(constant(x), constant(w), constant(b), 1, 1, 1),
                         doctest::Contains("input channels"), std::invalid_argument);
}

TEST_CASE("linear rejects mismatched shapes with a diagnostic") {
    Rng rng(4);
    Value x = constant(randt({5}, rng));
    Value W = constant(randt({3, 4}, rng));
    Value b = constant(randt({3}, rng));
    CHECK_THROWS_AS(linear(x, W, b), std::invalid_argument);
}

TEST_CASE("softmax2d forms a distribution and zero logits are exactly uniform") {
    Rng rng(5);
    Value x = constant(randt({6, 7}, rng, -3, 3));
    Value p = softmax2d(x);
    double sum = 0.0;
    for (int i = 0; i < p->val.numel(); ++i) {
        CHECK(p->val[i] > 0.0);
        sum += p->val[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    Value z = softmax2d(constant(Tensor({8, 8})));
    for (int i = 0; i < 64; ++i) CHECK(z->val[i] == 1.0 / 64.0);
}

TEST_CASE("softmax2d adjoint matches the analytic jacobian") {
    // J = diag(p) - p p^T applied to the cotangent
    Rng rng(6);
    Tensor xt = randt({3, 3}, rng, -2, 2);
    Tensor seed = randt({3, 3}, rng);
    Value x = param(xt, "x");
    Value p = softmax2d(x);
    backward(p, seed);
    const int n = 9;
    for (int i = 0; i < n; ++i) {
        double expect = 0.0;
        for (int j = 0; j < n; ++j) {
            const double jac = p->val[i] * ((i == j ? 1.0 : 0.0) - p->val[j]);
            expect += jac * seed[j];
        }
        CHECK(x->grad[i] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("bilinear resize preserves constant maps and matches hand values") {
    Tensor c({2, 3, 3}, 4.5);
    Tensor up = bilinear_resize(c, 9, 11);
    for (int i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(4.5).epsilon(1e-15));

    // 2x2 ramp [[0,1],[2,3]] to 3x3: corner-aligned midpoints
    Tensor r({1, 2, 2});
    r[0] = 0;
    r[1] = 1;
    r[2] = 2;
    r[3] = 3;
    Tensor u = bilinear_resize(r, 3, 3);
    const double expect[9] = {0, 0.5, 1, 1, 1.5, 2, 2, 2.5, 3};
    for (int i = 0; i < 9; ++i) CHECK(u[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    // identity when sizes match
    Rng rng(8);
    Tensor x = randt({3, 5, 4}, rng);
    Tensor same = bilinear_resize(x, 5, 4);
    for (int i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);
}

TEST_CASE("max pool picks the smallest flat index on ties") {
    Tensor x({1, 2, 2}, 1.0);  // all equal
    Value mp = max_pool2d(param(x, "x"), 2, 2);
    CHECK(mp->val.numel() == 1);
    CHECK(mp->val[0] == 1.0);
    backward(mp, Tensor({1, 1, 1}, 1.0));
    CHECK(mp->inputs[0]->grad[0] == 1.0);
    for (int i = 1; i < 4; ++i) CHECK(mp->inputs[0]->grad[i] == 0.0);
}

TEST_CASE("roi_align over the full frame equals bilinear resize to 7x7") {
    Rng rng(9);
    Tensor f = randt({3, 8, 8}, rng);
    Value r = roi_align7(constant(f), GridRect{0, 0, 7, 7});
    Tensor o = bilinear_resize(f, 7, 7);
    for (int i = 0; i < o.numel(); ++i) CHECK(r->val[i] == doctest::Approx(o[i]).epsilon(1e-12));
}

TEST_CASE("roi_align 2x2 worked example averages to 1.5") {
    Tensor f({1, 2, 2});
    f[0] = 0;
    f[1] = 1;
    f[2] = 2;
    f[3] = 3;
    Value r = roi_align7(constant(f), GridRect{0, 0, 1, 1});
    double mean = 0.0;
    for (int i = 0; i < 49; ++i) mean += r->val[i];
    mean /= 49.0;
    CHECK(mean == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("gradient check covers every layer kind") {
    Rng rng(1234);
    auto check = [&](const char* what, const std::function<Value()>& fn,
                     const std::vector<Value>& params) {
        auto res = finite_diff_check(fn, params);
        INFO(what << " worst " << res.worst_param << "[" << res.worst_coord << "]");
        CHECK(res.max_rel_err < 1e-4);
    };

    SUBCASE("linear") {
        Value x = param(randt({4}, rng), "x");
        Value W = param(randt({3, 4}, rng), "W");
        Value b = param(randt({3}, rng), "b");
        Tensor seedw = randt({3}, rng);
        Value sw = constant(seedw);
        check("linear", [&] { return dot(linear(x, W, b), sw); }, {x, W, b});
    }
    SUBCASE("linear batched") {
        Value x = param(randt({2, 4}, rng), "x");
        Value W = param(randt({3, 4}, rng), "W");
        Value b = param(randt({3}, rng), "b");
        check("linear batched", [&] { return reduce_sum(tanh_(linear(x, W, b))); }, {x, W, b});
    }
    SUBCASE("conv2d stride 1") {
        Value x = param(randt({2, 6, 5}, rng), "x");
        Value W = param(randt({3, 2, 3, 3}, rng), "W");
        Value b = param(randt({3}, rng), "b");
        check("conv s1", [&] { return reduce_sum(tanh_(conv2d(x, W, b, 1, 1, 1))); }, {x, W, b});
    }
    SUBCASE("conv2d stride 2 dilation 2") {
        Value x = param(randt({2, 8, 8}, rng), "x");
        Value W = param(randt({3, 2, 3, 3}, rng), "W");
        Value b = param(randt({3}, rng), "b");
        check("conv s2 d2", [&] { return reduce_sum(tanh_(conv2d(x, W, b, 2, 2, 2))); }, {x, W, b});
    }
    SUBCASE("lstm cell and sequence") {
        nn::ParamSet ps;
        auto cell = nn::LstmCell::create(ps, rng, "cell", 3, 4);
        std::vector<Value> xs;
        for (int t = 0; t < 3; ++t) xs.push_back(param(randt({3}, rng), "x" + std::to_string(t)));
        std::vector<Value> all = ps.params;
        all.insert(all.end(), xs.begin(), xs.end());
        check(
            "lstm",
            [&] {
                auto hs = nn::lstm_run(cell, xs);
                Value acc = reduce_sum(hs[0]);
                for (size_t t = 1; t < hs.size(); ++t) acc = add(acc, reduce_sum(hs[t]));
                return acc;
            },
            all);
    }
    SUBCASE("bidirectional lstm") {
        nn::ParamSet ps;
        auto bi = nn::BiLstm::create(ps, rng, "bi", 3, 3);
        std::vector<Value> xs;
        for (int t = 0; t < 3; ++t) xs.push_back(param(randt({3}, rng), "x" + std::to_string(t)));
        std::vector<Value> all = ps.params;
        all.insert(all.end(), xs.begin(), xs.end());
        check(
            "bilstm",
            [&] {
                auto hs = bi(xs);
                Value acc = reduce_sum(hs[0]);
                for (size_t t = 1; t < hs.size(); ++t) acc = add(acc, reduce_sum(hs[t]));
                return acc;
            },
            all);
    }
    SUBCASE("embedding lookup") {
        Value E = param(randt({5, 3}, rng), "E");
        check("embedding", [&] { return reduce_sum(tanh_(embedding_row(E, 2))); }, {E});
    }
    SUBCASE("relu away from the kink") {
        Tensor t = randt({6}, rng);
        for (int i = 0; i < 6; ++i)
            if (std::fabs(t[i]) < 0.05) t[i] = 0.3;
        Value x = param(t, "x");
        check("relu", [&] { return reduce_sum(relu(x)); }, {x});
    }
    SUBCASE("sigmoid tanh softplus log exp sqrt recip") {
        Value x = param(randt({5}, rng, 0.2, 1.5), "x");
        check("sigmoid", [&] { return reduce_sum(sigmoid(x)); }, {x});
        check("tanh", [&] { return reduce_sum(tanh_(x)); }, {x});
        check("softplus", [&] { return reduce_sum(softplus(x)); }, {x});
        check("log", [&] { return reduce_sum(log_(x)); }, {x});
        check("exp", [&] { return reduce_sum(exp_(x)); }, {x});
        check("sqrt", [&] { return reduce_sum(sqrt_(x)); }, {x});
        check("recip", [&] { return reduce_sum(recip(x)); }, {x});
    }
    SUBCASE("softmax over pixels") {
        Value x = param(randt({3, 4}, rng, -2, 2), "x");
        Value sel = constant(randt({3, 4}, rng));
        check(
            "softmax2d",
            [&] {
                Value p = softmax2d(x);
                Value acc = gather_pixel(p, 1, 2);
                return add(acc, log_(gather_pixel(p, 2, 3)));
            },
            {x});
        (void)sel;
    }
    SUBCASE("bilinear resize") {
        Value x = param(randt({2, 3, 4}, rng), "x");
        Value sel = constant(randt({2, 7, 9}, rng));
        check(
            "upsample",
            [&] {
                // weight each output pixel so no tap cancels out
                Value prod = mul(upsample_bilinear(x, 7, 9), sel);
                return reduce_sum(prod);
            },
            {x});
    }
    SUBCASE("avg and max pool") {
        Tensor t = randt({2, 6, 6}, rng);
        Value x = param(t, "x");
        check("avg_pool", [&] { return reduce_sum(tanh_(avg_pool2d(x, 2, 2))); }, {x});
        check("max_pool", [&] { return reduce_sum(tanh_(max_pool2d(x, 2, 2))); }, {x});
    }
    SUBCASE("roi align and spatial pooling") {
        Value f = param(randt({2, 8, 8}, rng), "f");
        Value att = param(randt({8, 8}, rng, 0.01, 1.0), "att");
        check("roi", [&] { return reduce_sum(tanh_(roi_align7(f, GridRect{1, 2, 6, 7}))); }, {f});
        check("weighted_sum", [&] { return reduce_sum(tanh_(spatial_weighted_sum(f, att))); },
              {f, att});
        check("spatial_mean", [&] { return reduce_sum(tanh_(spatial_mean(f))); }, {f});
    }
    SUBCASE("normalize concat slice emax") {
        Value a = param(randt({4}, rng, 0.3, 1.0), "a");
        Value b = param(randt({4}, rng, -1.0, -0.3), "b");
        check("l2_normalize", [&] { return reduce_sum(l2_normalize(a)); }, {a});
        check("concat+slice",
              [&] { return reduce_sum(tanh_(slice_vec(concat_vec({a, b}), 2, 4))); }, {a, b});
        check("emax", [&] { return reduce_sum(emax(a, b)); }, {a, b});
    }
    SUBCASE("tile and channel slice") {
        Value v = param(randt({3}, rng), "v");
        Value x = param(randt({3, 4, 5}, rng), "x");
        Value sel = constant(randt({3, 4, 5}, rng));
        check("tile_spatial", [&] { return reduce_sum(mul(tile_spatial(v, 4, 5), sel)); }, {v});
        check("slice_channel", [&] { return reduce_sum(tanh_(slice_channel(x, 1))); }, {x});
    }
}

TEST_CASE("tile_spatial broadcasts and slice_channel extracts") {
    Rng rng(5);
    Tensor vt = randt({3}, rng);
    Value tiled = tile_spatial(constant(vt), 2, 4);
    for (int d = 0; d < 3; ++d)
        for (int i = 0; i < 8; ++i) CHECK(tiled->val[d * 8 + i] == vt[d]);
    Tensor xt = randt({3, 2, 4}, rng);
    Value ch = slice_channel(constant(xt), 2);
    for (int i = 0; i < 8; ++i) CHECK(ch->val[i] == xt[2 * 8 + i]);
}

TEST_CASE("l2_normalize yields unit vectors") {
    Rng rng(77);
    Value a = constant(randt({9}, rng, -2, 2));
    Value n = l2_normalize(a);
    double s = 0.0;
    for (int i = 0; i < 9; ++i) s += n->val[i] * n->val[i];
    CHECK(std::fabs(std::sqrt(s) - 1.0) < 1e-9);
}

TEST_CASE("backward accumulates across shared subgraphs") {
    // y = x*x + x => dy/dx = 2x + 1
    Value x = param(Tensor::scalar(3.0), "x");
    Value y = add(mul(x, x), x);
    backward(y);
    CHECK(x->grad[0] == doctest::Approx(7.0));
}

TEST_CASE("forward and backward are bit-identical across repeat runs") {
    Rng rng(42);
    Tensor xt = randt({2, 8, 8}, rng);
    Tensor wt = randt({3, 2, 3, 3}, rng);
    Tensor bt = randt({3}, rng);
    auto run = [&](std::vector<double>& vals, std::vector<double>& grads) {
        Value x = param(xt, "x");
        Value y = reduce_sum(tanh_(conv2d(x, constant(wt), constant(bt), 2, 1, 1)));
        backward(y);
        vals.push_back(y->val[0]);
        grads.assign(x->grad.data.begin(), x->grad.data.end());
    };
    std::vector<double> v1, g1, v2, g2;
    run(v1, g1);
    run(v2, g2);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}
