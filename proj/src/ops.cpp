#include "scw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace scw::ad {

namespace {

Value make_node(Tensor val, std::vector<Value> inputs) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs)
        if (in->requires_grad) n->requires_grad = true;
    return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

// y = f(a) elementwise; dfdy given (y, a) per element
template <typename F, typename DF>
Value unary(Value a, F f, DF dfda) {
    Tensor out(a->val.shape);
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = f(a->val[i]);
    Value node = make_node(std::move(out), {a});
    if (node->requires_grad) {
        node->backward_fn = [dfda](Node& self) {
            Node* a = self.inputs[0].get();
            if (!a->requires_grad) return;
            Tensor& ga = a->g();
            const int n = self.val.numel();
            for (int i = 0; i < n; ++i) ga[i] += self.grad[i] * dfda(self.val[i], a->val[i]);
        };
    }
    return node;
}

}  // namespace

Value add(Value a, Value b) {
    const bool bcast = b->val.numel() == 1 && a->val.numel() != 1;
    if (!bcast) check_same_shape("add", a->val, b->val);
    Tensor out(a->val.shape);
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->val[i] + (bcast ? b->val[0] : b->val[i]);
    Value node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [bcast](Node& self) {
            Node* a = self.inputs[0].get();
            Node* b = self.inputs[1].get();
            const int n = self.val.numel();
            if (a->requires_grad) {
                Tensor& ga = a->g();
                for (int i = 0; i < n; ++i) ga[i] += self.grad[i];
            }
            if (b->requires_grad) {
                Tensor& gb = b->g();
                if (bcast)
                    for (int i = 0; i < n; ++i) gb[0] += self.grad[i];
                else
                    for (int i = 0; i < n; ++i) gb[i] += self.grad[i];
            }
        };
    }
    return node;
}

Value sub(Value a, Value b) {
    const bool bcast = b->val.numel() == 1 && a->val.numel() != 1;
    if (!bcast) check_same_shape("sub", a->val, b->val);
    Tensor out(a->val.shape);
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->val[i] - (bcast ? b->val[0] : b->val[i]);
    Value node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [bcast](Node& self) {
            Node* a = self.inputs[0].get();
            Node* b = self.inputs[1].get();
            const int n = self.val.numel();
            if (a->requires_grad) {
                Tensor& ga = a->g();
                for (int i = 0; i < n; ++i) ga[i] += self.grad[i];
            }
            if (b->requires_grad) {
                Tensor& gb = b->g();
                if (bcast)
                    for (int i = 0; i < n; ++i) gb[0] -= self.grad[i];
                else
                    for (int i = 0; i < n; ++i) gb[i] -= self.grad[i];
            }
        };
    }
    return node;
}

Value mul(Value a, Value b) {
    const bool bcast = b->val.numel() == 1 && a->val.numel() != 1;
    if (!bcast) check_same_shape("mul", a->val, b->val);
    Tensor out(a->val.shape);
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->val[i] * (bcast ? b->val[0] : b->val[i]);
    Value node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [bcast](Node& self) {
            Node* a = self.inputs[0].get();
            Node* b = self.inputs[1].get();
            const int n = self.val.numel();
            if (a->requires_grad) {
                Tensor& ga = a->g();
                for (int i = 0; i < n; ++i)
                    ga[i] += self.grad[i] * (bcast ? b->val[0] : b->val[i]);
            }
            if (b->requires_grad) {
                Tensor& gb = b->g();
                if (bcast)
                    for (int i = 0; i < n; ++i) gb[0] += self.grad[i] * a->val[i];
                else
                    for (int i = 0; i < n; ++i) gb[i] += self.grad[i] * a->val[i];
            }
        };
    }
    return node;
}

Value smul(Value a, double s) {
    return unary(
        a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Value sadd(Value a, double s) {
    return unary(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Value neg(Value a) {
    return unary(
        a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Value relu(Value a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(Value a) {
    return unary(
        a,
        [](double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
        },
        [](double y, double) { return y * (1.0 - y); });
}

Value tanh_(Value a) {
    return unary(
        a, [](double x) { return std::tanh(x); },
        [](double y, double) { return 1.0 - y * y; });
}

Value softplus(Value a) {
    return unary(
        a,
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
        [](double, double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
        });
}

Value log_(Value a) {
    return unary(
        a, [](double x) { return std::log(x); },
        [](double, double x) { return 1.0 / x; });
}

Value exp_(Value a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double y, double) { return y; });
}

Value sqrt_(Value a) {
    return unary(
        a, [](double x) { return std::sqrt(x); },
        [](double y, double) { return 0.5 / y; });
}

Value recip(Value a) {
    return unary(
        a, [](double x) { return 1.0 / x; },
        [](double y, double) { return -y * y; });
}

Value emax(Value a, Value b) {
    check_same_shape("emax", a->val, b->val);
    Tensor out(a->val.shape);
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = std::max(a->val[i], b->val[i]);
    Value node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [](Node& self) {
            Node* a = self.inputs[0].get();
            Node* b = self.inputs[1].get();
            const int n = self.val.numel();
            for (int i = 0; i < n; ++i) {
                if (a->val[i] >= b->val[i]) {
                    if (a->requires_grad) a->g()[i] += self.grad[i];
                } else if (b->requires_grad) {
                    b->g()[i] += self.grad[i];
                }
            }
        };
    }
    return node;
}

void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n) {
    std::memset(C, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        double* crow = C + static_cast<size_t>(i) * n;
        const double* arow = A + static_cast<size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            const double a = arow[l];
            const double* brow = B + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C [m,n] = A [m,k] * B^T where B is [n,k]
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = A + static_cast<size_t>(i) * k;
        double* crow = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = B + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] = acc;
        }
    }
}

// C [m,n] = A^T * B where A is [k,m], B is [k,n]
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    std::memset(C, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int l = 0; l < k; ++l) {
        const double* arow = A + static_cast<size_t>(l) * m;
        const double* brow = B + static_cast<size_t>(l) * n;
        for (int i = 0; i < m; ++i) {
            const double a = arow[i];
            double* crow = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

Value linear(Value x, Value W, Value b) {
    const Tensor& xs = x->val;
    if (W->val.rank() != 2) throw std::invalid_argument("linear: weight must be rank 2");
    const int out = W->val.dim(0), in = W->val.dim(1);
    if (b->val.rank() != 1 || b->val.dim(0) != out)
        throw std::invalid_argument("linear: bias shape " + b->val.shape_str() +
                                    " does not match output dim " + std::to_string(out));
    const bool batched = xs.rank() == 2;
    const int N = batched ? xs.dim(0) : 1;
    const int xin = batched ? xs.dim(1) : xs.dim(0);
    if (xs.rank() > 2 || xin != in)
        throw std::invalid_argument("linear: input shape " + xs.shape_str() +
                                    " does not match weight " + W->val.shape_str());
    Tensor y(batched ? std::vector<int>{N, out} : std::vector<int>{out});
    matmul_nt(xs.data.data(), W->val.data.data(), y.data.data(), N, in, out);
    for (int r = 0; r < N; ++r)
        for (int o = 0; o < out; ++o) y[r * out + o] += b->val[o];
    Value node = make_node(std::move(y), {x, W, b});
    if (node->requires_grad) {
        node->backward_fn = [N, in, out](Node& self) {
            Node* x = self.inputs[0].get();
            Node* W = self.inputs[1].get();
            Node* b = self.inputs[2].get();
            const double* g = self.grad.data.data();
            if (x->requires_grad) {
                Tensor gx(self.inputs[0]->val.shape);
                matmul_nn(g, W->val.data.data(), gx.data.data(), N, out, in);
                Tensor& ax = x->g();
                for (int i = 0; i < gx.numel(); ++i) ax[i] += gx[i];
            }
            if (W->requires_grad) {
                Tensor gw({out, in});
                matmul_tn(g, x->val.data.data(), gw.data.data(), out, N, in);
                Tensor& aw = W->g();
                for (int i = 0; i < gw.numel(); ++i) aw[i] += gw[i];
            }
            if (b->requires_grad) {
                Tensor& ab = b->g();
                for (int r = 0; r < N; ++r)
                    for (int o = 0; o < out; ++o) ab[o] += g[r * out + o];
            }
        };
    }
    return node;
}

namespace {

struct ConvDims {
    int cin, h, w, cout, kh, kw, ho, wo, stride, dil, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& W, int stride, int dilation, int pad) {
    if (x.rank() != 3 || W.rank() != 4)
        throw std::invalid_argument("conv2d: input must be [C,H,W], weight [Co,Ci,kh,kw]");
    ConvDims d;
    d.cin = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.cout = W.dim(0);
    d.kh = W.dim(2);
    d.kw = W.dim(3);
    d.stride = stride;
    d.dil = dilation;
    d.pad = pad;
    if (W.dim(1) != d.cin)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(W.dim(1)) +
                                    " input channels, input has " + std::to_string(d.cin));
    if (stride < 1 || dilation < 1 || pad < 0)
        throw std::invalid_argument("conv2d: stride/dilation must be >= 1, pad >= 0");
    d.ho = (d.h + 2 * pad - dilation * (d.kh - 1) - 1) / stride + 1;
    d.wo = (d.w + 2 * pad - dilation * (d.kw - 1) - 1) / stride + 1;
    if (d.h + 2 * pad < dilation * (d.kh - 1) + 1 || d.w + 2 * pad < dilation * (d.kw - 1) + 1)
        throw std::invalid_argument("conv2d: kernel does not fit input " + x.shape_str());
    return d;
}

void im2col(const double* x, const ConvDims& d, double* col) {
    const int hw = d.ho * d.wo;
    for (int ic = 0; ic < d.cin; ++ic) {
        const double* xc = x + static_cast<size_t>(ic) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                double* row = col + (static_cast<size_t>(ic) * d.kh * d.kw + ky * d.kw + kx) * hw;
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int iy = oy * d.stride - d.pad + ky * d.dil;
                    double* dst = row + static_cast<size_t>(oy) * d.wo;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(dst, 0, sizeof(double) * d.wo);
                        continue;
                    }
                    const double* src = xc + static_cast<size_t>(iy) * d.w;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const int ix = ox * d.stride - d.pad + kx * d.dil;
                        dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* col, const ConvDims& d, double* gx) {
    const int hw = d.ho * d.wo;
    for (int ic = 0; ic < d.cin; ++ic) {
        double* xc = gx + static_cast<size_t>(ic) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const double* row =
                    col + (static_cast<size_t>(ic) * d.kh * d.kw + ky * d.kw + kx) * hw;
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int iy = oy * d.stride - d.pad + ky * d.dil;
                    if (iy < 0 || iy >= d.h) continue;
                    const double* src = row + static_cast<size_t>(oy) * d.wo;
                    double* dst = xc + static_cast<size_t>(iy) * d.w;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const int ix = ox * d.stride - d.pad + kx * d.dil;
                        if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Value conv2d(Value x, Value W, Value b, int stride, int dilation, int pad) {
    const ConvDims d = conv_dims(x->val, W->val, stride, dilation, pad);
    if (b->val.rank() != 1 || b->val.dim(0) != d.cout)
        throw std::invalid_argument("conv2d: bias shape " + b->val.shape_str() +
                                    " does not match " + std::to_string(d.cout) + " filters");
    const int hw = d.ho * d.wo;
    const int krows = d.cin * d.kh * d.kw;
    auto col = std::make_shared<Tensor>(std::vector<int>{krows, hw});
    im2col(x->val.data.data(), d, col->data.data());
    Tensor y({d.cout, d.ho, d.wo});
    matmul_nn(W->val.data.data(), col->data.data(), y.data.data(), d.cout, krows, hw);
    for (int oc = 0; oc < d.cout; ++oc) {
        double* yr = y.data.data() + static_cast<size_t>(oc) * hw;
        const double bb = b->val[oc];
        for (int i = 0; i < hw; ++i) yr[i] += bb;
    }
    Value node = make_node(std::move(y), {x, W, b});
    if (node->requires_grad) {
        node->backward_fn = [d, col, hw, krows](Node& self) {
            Node* x = self.inputs[0].get();
            Node* W = self.inputs[1].get();
            Node* b = self.inputs[2].get();
            const double* g = self.grad.data.data();
            if (W->requires_grad) {
                Tensor gw({d.cout, krows});
                matmul_nt(g, col->data.data(), gw.data.data(), d.cout, hw, krows);
                Tensor& aw = W->g();
                for (int i = 0; i < gw.numel(); ++i) aw[i] += gw[i];
            }
            if (b->requires_grad) {
                Tensor& ab = b->g();
                for (int oc = 0; oc < d.cout; ++oc) {
                    const double* gr = g + static_cast<size_t>(oc) * hw;
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += gr[i];
                    ab[oc] += acc;
                }
            }
            if (x->requires_grad) {
                Tensor gcol({krows, hw});
                matmul_tn(W->val.data.data(), g, gcol.data.data(), krows, d.cout, hw);
                col2im(gcol.data.data(), d, x->g().data.data());
            }
        };
    }
    return node;
}

Value embedding_row(Value E, int row) {
    if (E->val.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2");
    const int V = E->val.dim(0), D = E->val.dim(1);
    if (row < 0 || row >= V)
        throw std::invalid_argument("embedding: index " + std::to_string(row) +
                                    " out of range for table of " + std::to_string(V));
    Tensor y({D});
    std::memcpy(y.data.data(), E->val.data.data() + static_cast<size_t>(row) * D,
                sizeof(double) * D);
    Value node = make_node(std::move(y), {E});
    if (node->requires_grad) {
        node->backward_fn = [row, D](Node& self) {
            Node* E = self.inputs[0].get();
            if (!E->requires_grad) return;
            double* ge = E->g().data.data() + static_cast<size_t>(row) * D;
            for (int i = 0; i < D; ++i) ge[i] += self.grad[i];
        };
    }
    return node;
}

Value softmax2d(Value x) {
    if (x->val.rank() != 2) throw std::invalid_argument("softmax2d: input must be [H,W]");
    Tensor y(x->val.shape);
    const int n = y.numel();
    double mx = x->val[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x->val[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x->val[i] - mx);
        sum += y[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) y[i] *= inv;
    Value node = make_node(std::move(y), {x});
    if (node->requires_grad) {
        node->backward_fn = [](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            const int n = self.val.numel();
            double dotgy = 0.0;
            for (int i = 0; i < n; ++i) dotgy += self.grad[i] * self.val[i];
            Tensor& gx = x->g();
            for (int i = 0; i < n; ++i) gx[i] += self.val[i] * (self.grad[i] - dotgy);
        };
    }
    return node;
}

namespace {

// corner-aligned source coordinate helpers shared by resize ops
inline double resize_scale(int src, int dst) {
    return dst > 1 ? static_cast<double>(src - 1) / (dst - 1) : 0.0;
}

struct Tap {
    int lo, hi;
    double w_hi;
};

inline Tap tap_at(double coord, int limit) {
    int lo = static_cast<int>(std::floor(coord));
    lo = std::clamp(lo, 0, limit - 1);
    int hi = std::min(lo + 1, limit - 1);
    return {lo, hi, coord - lo};
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int H, int W) {
    if (x.rank() != 3) throw std::invalid_argument("bilinear_resize: input must be [C,h,w]");
    const int C = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y({C, H, W});
    const double sy = resize_scale(h, H), sx = resize_scale(w, W);
    for (int oy = 0; oy < H; ++oy) {
        const Tap ty = tap_at(oy * sy, h);
        for (int ox = 0; ox < W; ++ox) {
            const Tap tx = tap_at(ox * sx, w);
            for (int c = 0; c < C; ++c) {
                const double* xc = x.data.data() + static_cast<size_t>(c) * h * w;
                const double v00 = xc[ty.lo * w + tx.lo], v01 = xc[ty.lo * w + tx.hi];
                const double v10 = xc[ty.hi * w + tx.lo], v11 = xc[ty.hi * w + tx.hi];
                const double top = v00 + (v01 - v00) * tx.w_hi;
                const double bot = v10 + (v11 - v10) * tx.w_hi;
                y.data[(static_cast<size_t>(c) * H + oy) * W + ox] = top + (bot - top) * ty.w_hi;
            }
        }
    }
    return y;
}

Value upsample_bilinear(Value x, int H, int W) {
    Tensor y = bilinear_resize(x->val, H, W);
    const int C = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    Value node = make_node(std::move(y), {x});
    if (node->requires_grad) {
        node->backward_fn = [C, h, w, H, W](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            Tensor& gx = x->g();
            const double sy = resize_scale(h, H), sx = resize_scale(w, W);
            for (int oy = 0; oy < H; ++oy) {
                const Tap ty = tap_at(oy * sy, h);
                for (int ox = 0; ox < W; ++ox) {
                    const Tap tx = tap_at(ox * sx, w);
                    for (int c = 0; c < C; ++c) {
                        const double g =
                            self.grad.data[(static_cast<size_t>(c) * H + oy) * W + ox];
                        double* gc = gx.data.data() + static_cast<size_t>(c) * h * w;
                        gc[ty.lo * w + tx.lo] += g * (1 - ty.w_hi) * (1 - tx.w_hi);
                        gc[ty.lo * w + tx.hi] += g * (1 - ty.w_hi) * tx.w_hi;
                        gc[ty.hi * w + tx.lo] += g * ty.w_hi * (1 - tx.w_hi);
                        gc[ty.hi * w + tx.hi] += g * ty.w_hi * tx.w_hi;
                    }
                }
            }
        };
    }
    return node;
}

namespace {

struct PoolDims {
    int c, h, w, k, s, ho, wo;
};

PoolDims pool_dims(const Tensor& x, int k, int s, const char* op) {
    if (x.rank() != 3) throw std::invalid_argument(std::string(op) + ": input must be [C,H,W]");
    if (k < 1 || s < 1) throw std::invalid_argument(std::string(op) + ": kernel and stride must be >= 1");
    PoolDims d{x.dim(0), x.dim(1), x.dim(2), k, s, 0, 0};
    if (d.h < k || d.w < k)
        throw std::invalid_argument(std::string(op) + ": kernel " + std::to_string(k) +
                                    " exceeds input " + x.shape_str());
    d.ho = (d.h - k) / s + 1;
    d.wo = (d.w - k) / s + 1;
    return d;
}

}  // namespace

Value avg_pool2d(Value x, int k, int s) {
    const PoolDims d = pool_dims(x->val, k, s, "avg_pool2d");
    Tensor y({d.c, d.ho, d.wo});
    const double inv = 1.0 / (k * k);
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->val.data.data() + static_cast<size_t>(c) * d.h * d.w;
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
                double acc = 0.0;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                        acc += xc[(oy * s + ky) * d.w + ox * s + kx];
                y.data[(static_cast<size_t>(c) * d.ho + oy) * d.wo + ox] = acc * inv;
            }
    }
    Value node = make_node(std::move(y), {x});
    if (node->requires_grad) {
        node->backward_fn = [d, inv](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            Tensor& gx = x->g();
            for (int c = 0; c < d.c; ++c) {
                double* gc = gx.data.data() + static_cast<size_t>(c) * d.h * d.w;
                for (int oy = 0; oy < d.ho; ++oy)
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const double g =
                            self.grad.data[(static_cast<size_t>(c) * d.ho + oy) * d.wo + ox] * inv;
                        for (int ky = 0; ky < d.k; ++ky)
                            for (int kx = 0; kx < d.k; ++kx)
                                gc[(oy * d.s + ky) * d.w + ox * d.s + kx] += g;
                    }
            }
        };
    }
    return node;
}

Value max_pool2d(Value x, int k, int s) {
    const PoolDims d = pool_dims(x->val, k, s, "max_pool2d");
    Tensor y({d.c, d.ho, d.wo});
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(d.c) * d.ho * d.wo);
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->val.data.data() + static_cast<size_t>(c) * d.h * d.w;
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
                double best = -1e300;
                int besti = 0;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int idx = (oy * s + ky) * d.w + ox * s + kx;
                        if (xc[idx] > best) {
                            best = xc[idx];
                            besti = idx;
                        }
                    }
                const size_t o = (static_cast<size_t>(c) * d.ho + oy) * d.wo + ox;
                y.data[o] = best;
                (*arg)[o] = besti;
            }
    }
    Value node = make_node(std::move(y), {x});
    if (node->requires_grad) {
        node->backward_fn = [d, arg](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            Tensor& gx = x->g();
            const size_t per = static_cast<size_t>(d.ho) * d.wo;
            for (int c = 0; c < d.c; ++c) {
                double* gc = gx.data.data() + static_cast<size_t>(c) * d.h * d.w;
                for (size_t i = 0; i < per; ++i) {
                    const size_t o = static_cast<size_t>(c) * per + i;
                    gc[(*arg)[o]] += self.grad.data[o];
                }
            }
        };
    }
    return node;
}

Value concat_vec(const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_vec: empty input list");
    int total = 0;
    for (const auto& x : xs) {
        if (x->val.rank() != 1) throw std::invalid_argument("concat_vec: pieces must be rank 1");
        total += x->val.numel();
    }
    Tensor y({total});
    int off = 0;
    for (const auto& x : xs) {
        std::memcpy(y.data.data() + off, x->val.data.data(), sizeof(double) * x->val.numel());
        off += x->val.numel();
    }
    Value node = make_node(std::move(y), xs);
    if (node->requires_grad) {
        node->backward_fn = [](Node& self) {
            int off = 0;
            for (auto& in : self.inputs) {
                const int n = in->val.numel();
                if (in->requires_grad) {
                    Tensor& g = in->g();
                    for (int i = 0; i < n; ++i) g[i] += self.grad[off + i];
                }
                off += n;
            }
        };
    }
    return node;
}

Value slice_vec(Value x, int off, int len) {
    if (x->val.rank() != 1) throw std::invalid_argument("slice_vec: input must be rank 1");
    if (off < 0 || len <= 0 || off + len > x->val.numel())
        throw std::invalid_argument("slice_vec: range [" + std::to_string(off) + "," +
                                    std::to_string(off + len) + ") out of bounds for " +
                                    x->val.shape_str());
    Tensor y({len});
    std::memcpy(y.data.data(), x->val.data.data() + off, sizeof(double) * len);
    Value node = make_node(std::move(y), {x});
    if (node->requires_grad) {
        node->backward_fn = [off, len](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            Tensor& g = x->g();
            for (int i = 0; i < len; ++i) g[off + i] += self.grad[i];
        };
    }
    return node;
}

Value concat_channels(const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    const int h = xs[0]->val.dim(1), w = xs[0]->val.dim(2);
    int ctotal = 0;
    for (const auto& x : xs) {
        if (x->val.rank() != 3 || x->val.dim(1) != h || x->val.dim(2) != w)
            throw std::invalid_argument("concat_channels: piece " + x->val.shape_str() +
                                        " does not match spatial dims " + std::to_string(h) +
                                        "x" + std::to_string(w));
        ctotal += x->val.dim(0);
    }
    Tensor y({ctotal, h, w});
    size_t off = 0;
    for (const auto& x : xs) {
        std::memcpy(y.data.data() + off, x->val.data.data(), sizeof(double) * x->val.numel());
        off += x->val.numel();
    }
    Value node = make_node(std::move(y), xs);
    if (node->requires_grad) {
        node->backward_fn = [](Node& self) {
            size_t off = 0;
            for (auto& in : self.inputs) {
                const int n = in->val.numel();
                if (in->requires_grad) {
                    Tensor& g = in->g();
                    for (int i = 0; i < n; ++i) g[i] += self.grad[off + i];
                }
                off += n;
            }
        };
    }
    return node;
}

Value reduce_sum(Value x) {
    double acc = 0.0;
    for (int i = 0; i < x->val.numel(); ++i) acc += x->val[i];
    Value node = make_node(Tensor::scalar(acc), {x});
    if (node->requires_grad) {
        node->backward_fn = [](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            Tensor& g = x->g();
            for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
        };
    }
    return node;
}

Value reduce_mean(Value x) { return smul(reduce_sum(x), 1.0 / x->val.numel()); }

Value gather_pixel(Value x, int y, int xcol) {
    if (x->val.rank() != 2) throw std::invalid_argument("gather_pixel: input must be [H,W]");
    const int H = x->val.dim(0), W = x->val.dim(1);
    if (y < 0 || y >= H || xcol < 0 || xcol >= W)
        throw std::invalid_argument("gather_pixel: (" + std::to_string(xcol) + "," +
                                    std::to_string(y) + ") outside " + x->val.shape_str());
    Value node = make_node(Tensor::scalar(x->val.at(y, xcol)), {x});
    if (node->requires_grad) {
        node->backward_fn = [y, xcol](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            x->g().at(y, xcol) += self.grad[0];
        };
    }
    return node;
}

Value dot(Value a, Value b) {
    if (a->val.rank() != 1 || b->val.rank() != 1 || a->val.numel() != b->val.numel())
        throw std::invalid_argument("dot: need equal-length vectors, got " + a->val.shape_str() +
                                    " and " + b->val.shape_str());
    double acc = 0.0;
    for (int i = 0; i < a->val.numel(); ++i) acc += a->val[i] * b->val[i];
    Value node = make_node(Tensor::scalar(acc), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [](Node& self) {
            Node* a = self.inputs[0].get();
            Node* b = self.inputs[1].get();
            const double g = self.grad[0];
            const int n = a->val.numel();
            if (a->requires_grad) {
                Tensor& ga = a->g();
                for (int i = 0; i < n; ++i) ga[i] += g * b->val[i];
            }
            if (b->requires_grad) {
                Tensor& gb = b->g();
                for (int i = 0; i < n; ++i) gb[i] += g * a->val[i];
            }
        };
    }
    return node;
}

Value spatial_weighted_sum(Value f, Value att) {
    if (f->val.rank() != 3 || att->val.rank() != 2 || f->val.dim(1) != att->val.dim(0) ||
        f->val.dim(2) != att->val.dim(1))
        throw std::invalid_argument("spatial_weighted_sum: features " + f->val.shape_str() +
                                    " vs attention " + att->val.shape_str());
    const int C = f->val.dim(0), hw = f->val.dim(1) * f->val.dim(2);
    Tensor y({C});
    for (int c = 0; c < C; ++c) {
        const double* fc = f->val.data.data() + static_cast<size_t>(c) * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += fc[i] * att->val[i];
        y[c] = acc;
    }
    Value node = make_node(std::move(y), {f, att});
    if (node->requires_grad) {
        node->backward_fn = [C, hw](Node& self) {
            Node* f = self.inputs[0].get();
            Node* att = self.inputs[1].get();
            if (f->requires_grad) {
                Tensor& gf = f->g();
                for (int c = 0; c < C; ++c) {
                    double* gc = gf.data.data() + static_cast<size_t>(c) * hw;
                    const double g = self.grad[c];
                    for (int i = 0; i < hw; ++i) gc[i] += g * att->val[i];
                }
            }
            if (att->requires_grad) {
                Tensor& ga = att->g();
                for (int c = 0; c < C; ++c) {
                    const double* fc = f->val.data.data() + static_cast<size_t>(c) * hw;
                    const double g = self.grad[c];
                    for (int i = 0; i < hw; ++i) ga[i] += g * fc[i];
                }
            }
        };
    }
    return node;
}

Value spatial_mean(Value f) {
    if (f->val.rank() != 3) throw std::invalid_argument("spatial_mean: input must be [C,H,W]");
    const int C = f->val.dim(0), hw = f->val.dim(1) * f->val.dim(2);
    Tensor y({C});
    const double inv = 1.0 / hw;
    for (int c = 0; c < C; ++c) {
        const double* fc = f->val.data.data() + static_cast<size_t>(c) * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += fc[i];
        y[c] = acc * inv;
    }
    Value node = make_node(std::move(y), {f});
    if (node->requires_grad) {
        node->backward_fn = [C, hw, inv](Node& self) {
            Node* f = self.inputs[0].get();
            if (!f->requires_grad) return;
            Tensor& gf = f->g();
            for (int c = 0; c < C; ++c) {
                double* gc = gf.data.data() + static_cast<size_t>(c) * hw;
                const double g = self.grad[c] * inv;
                for (int i = 0; i < hw; ++i) gc[i] += g;
            }
        };
    }
    return node;
}

Value tile_spatial(Value v, int H, int W) {
    if (v->val.rank() != 1) throw std::invalid_argument("tile_spatial: input must be [D]");
    const int D = v->val.dim(0), hw = H * W;
    Tensor y({D, H, W});
    for (int d = 0; d < D; ++d) {
        double* yd = y.data.data() + static_cast<size_t>(d) * hw;
        const double x = v->val[d];
        for (int i = 0; i < hw; ++i) yd[i] = x;
    }
    Value node = make_node(std::move(y), {v});
    if (node->requires_grad) {
        node->backward_fn = [D, hw](Node& self) {
            Node* v = self.inputs[0].get();
            if (!v->requires_grad) return;
            Tensor& gv = v->g();
            for (int d = 0; d < D; ++d) {
                const double* gd = self.grad.data.data() + static_cast<size_t>(d) * hw;
                double acc = 0.0;
                for (int i = 0; i < hw; ++i) acc += gd[i];
                gv[d] += acc;
            }
        };
    }
    return node;
}

Value slice_channel(Value x, int c) {
    if (x->val.rank() != 3) throw std::invalid_argument("slice_channel: input must be [C,H,W]");
    const int C = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    if (c < 0 || c >= C)
        throw std::invalid_argument("slice_channel: channel " + std::to_string(c) + " outside " +
                                    x->val.shape_str());
    const int hw = h * w;
    Tensor y({h, w});
    std::memcpy(y.data.data(), x->val.data.data() + static_cast<size_t>(c) * hw,
                sizeof(double) * hw);
    Value node = make_node(std::move(y), {x});
    if (node->requires_grad) {
        node->backward_fn = [c, hw](Node& self) {
            Node* x = self.inputs[0].get();
            if (!x->requires_grad) return;
            double* gx = x->g().data.data() + static_cast<size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) gx[i] += self.grad[i];
        };
    }
    return node;
}

Value roi_align7(Value f, GridRect r) {
    if (f->val.rank() != 3) throw std::invalid_argument("roi_align7: input must be [C,H,W]");
    const int C = f->val.dim(0), H = f->val.dim(1), W = f->val.dim(2);
    if (r.x0 < 0 || r.y0 < 0 || r.x1 >= W || r.y1 >= H || r.x1 < r.x0 || r.y1 < r.y0)
        throw std::invalid_argument("roi_align7: rect outside feature grid " + f->val.shape_str());
    constexpr int S = 7;
    Tensor y({C, S, S});
    const double dy = (r.y1 - r.y0) / double(S - 1), dx = (r.x1 - r.x0) / double(S - 1);
    for (int sy = 0; sy < S; ++sy) {
        const Tap ty = tap_at(r.y0 + sy * dy, H);
        for (int sx = 0; sx < S; ++sx) {
            const Tap tx = tap_at(r.x0 + sx * dx, W);
            for (int c = 0; c < C; ++c) {
                const double* fc = f->val.data.data() + static_cast<size_t>(c) * H * W;
                const double v00 = fc[ty.lo * W + tx.lo], v01 = fc[ty.lo * W + tx.hi];
                const double v10 = fc[ty.hi * W + tx.lo], v11 = fc[ty.hi * W + tx.hi];
                const double top = v00 + (v01 - v00) * tx.w_hi;
                const double bot = v10 + (v11 - v10) * tx.w_hi;
                y.data[(static_cast<size_t>(c) * S + sy) * S + sx] = top + (bot - top) * ty.w_hi;
            }
        }
    }
    Value node = make_node(std::move(y), {f});
    if (node->requires_grad) {
        node->backward_fn = [C, H, W, r](Node& self) {
            Node* f = self.inputs[0].get();
            if (!f->requires_grad) return;
            constexpr int S = 7;
            Tensor& gf = f->g();
            const double dy = (r.y1 - r.y0) / double(S - 1), dx = (r.x1 - r.x0) / double(S - 1);
            for (int sy = 0; sy < S; ++sy) {
                const Tap ty = tap_at(r.y0 + sy * dy, H);
                for (int sx = 0; sx < S; ++sx) {
                    const Tap tx = tap_at(r.x0 + sx * dx, W);
                    for (int c = 0; c < C; ++c) {
                        const double g = self.grad.data[(static_cast<size_t>(c) * S + sy) * S + sx];
                        double* gc = gf.data.data() + static_cast<size_t>(c) * H * W;
                        gc[ty.lo * W + tx.lo] += g * (1 - ty.w_hi) * (1 - tx.w_hi);
                        gc[ty.lo * W + tx.hi] += g * (1 - ty.w_hi) * tx.w_hi;
                        gc[ty.hi * W + tx.lo] += g * ty.w_hi * (1 - tx.w_hi);
                        gc[ty.hi * W + tx.hi] += g * ty.w_hi * tx.w_hi;
                    }
                }
            }
        };
    }
    return node;
}

Value l2_normalize(Value x) {
    if (x->val.rank() != 1) throw std::invalid_argument("l2_normalize: input must be rank 1");
    return mul(x, recip(sqrt_(dot(x, x))));
}

}  // namespace scw::ad
