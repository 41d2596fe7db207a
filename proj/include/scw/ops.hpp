#pragma once

#include <vector>

#include "scw/autodiff.hpp"

namespace scw::ad {

// Integer rectangle on a feature grid, inclusive bounds.
struct GridRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Elementwise. Binary ops accept equal shapes, or a scalar (numel 1) second
// operand which broadcasts.
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value smul(Value a, double s);
Value sadd(Value a, double s);
Value neg(Value a);
Value relu(Value a);      // subgradient 0 at the kink
Value sigmoid(Value a);
Value tanh_(Value a);
Value softplus(Value a);  // log(1+e^x), stable
Value log_(Value a);
Value exp_(Value a);
Value sqrt_(Value a);
Value recip(Value a);
Value emax(Value a, Value b);  // ties route the gradient to a

// x [in] or [N,in]; W [out,in]; b [out]
Value linear(Value x, Value W, Value b);

// x [Cin,H,W]; W [Cout,Cin,kh,kw]; b [Cout]; zero padding
Value conv2d(Value x, Value W, Value b, int stride, int dilation, int pad);

// E [V,D] -> [D]
Value embedding_row(Value E, int row);

// [H,W] softmax over all pixels
Value softmax2d(Value x);

// [C,h,w] -> [C,H,W], corner-aligned sampling; identity when sizes match
Value upsample_bilinear(Value x, int H, int W);

Value avg_pool2d(Value x, int k, int s);
Value max_pool2d(Value x, int k, int s);  // ties pick the smallest flat index

Value concat_vec(const std::vector<Value>& xs);        // 1-d pieces
Value slice_vec(Value x, int off, int len);            // 1-d
Value concat_channels(const std::vector<Value>& xs);   // [Ci,H,W] pieces

Value reduce_sum(Value x);
Value reduce_mean(Value x);
Value gather_pixel(Value x, int y, int xcol);          // [H,W] -> scalar
Value dot(Value a, Value b);                           // [D]x[D] -> scalar

// f [C,H,W], att [H,W] -> [C]; att is used as given (caller normalizes)
Value spatial_weighted_sum(Value f, Value att);
Value spatial_mean(Value f);                           // [C,H,W] -> [C]

Value tile_spatial(Value v, int H, int W);             // [D] -> [D,H,W]
Value slice_channel(Value x, int c);                   // [C,H,W] -> [H,W]

// f [C,H,W] -> [C,7,7]; 7x7 corner-aligned bilinear samples over r
Value roi_align7(Value f, GridRect r);

Value l2_normalize(Value x);                           // composite, 1-d

// Raw-tensor helpers shared with non-autodiff code paths.
Tensor bilinear_resize(const Tensor& x, int H, int W);  // [C,h,w] -> [C,H,W]
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n);

}  // namespace scw::ad
