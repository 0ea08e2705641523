#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "synthvit/rng.hpp"
#include "synthvit/tensor.hpp"

namespace synthvit {

enum class RunMode { train, eval };

// Every op is a pure function of its inputs (plus an explicit rng where
// noted) and records its backward rule on the graph when any input tracks
// gradients. Gradients are checked against central finite differences in the
// test suite; shapes below use [...] for an arbitrary batch prefix.

/// a + b where b's shape equals a's shape or a suffix of it (bias, position
/// embeddings). Gradient for b sums over the broadcast prefix.
Tensor add(const Tensor& a, const Tensor& b);

/// a - b, same shape.
Tensor sub(const Tensor& a, const Tensor& b);

/// Elementwise product, same shape.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double constant);

/// [m,k]x[k,n] -> [m,n], or batched [B,m,k]x[B,k,n] -> [B,m,n].
/// Backward: dA = dC.B^T, dB = A^T.dC (per batch slice).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swap the last two axes (copy).
Tensor transpose_last2(const Tensor& x);

/// x:[...,k] . w:[k,n] + b:[n] -> [...,n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Same data, new shape (element count preserved).
Tensor reshape(const Tensor& x, Shape shape);

/// Reorder axes; perm[i] names the input axis that becomes output axis i.
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);

/// Repeat a vector [d] as n rows -> [n,d]. Gradient sums over rows.
Tensor broadcast_rows(const Tensor& x, std::size_t n);

/// Normalized exponentials along `axis` (negative counts from the back).
/// Max-subtraction keeps the exponentials bounded.
Tensor softmax(const Tensor& x, int axis = -1);

/// Normalize over the last axis to mean 0 / variance 1, then scale and
/// shift: gamma * (x - mu) / sqrt(var + eps) + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Gaussian error linear unit, tanh approximation:
/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

/// Inverted dropout. Train mode keeps each element with probability 1-rate
/// (one uniform draw per element, flat index order) and scales kept values
/// by 1/(1-rate); eval mode returns the input unchanged.
Tensor dropout(const Tensor& x, double rate, RunMode mode, Rng* rng);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over the batch of -log softmax(logits)[label].
/// Gradient: (softmax - one_hot) / batch.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

/// Row lookup: table:[V,d], ids -> [n,d]. Gradient scatter-adds rows.
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids);

/// Patch extraction for stride-1 convolution: x:[N,H,W,C] ->
/// [N*OH*OW, k*k*C] with zero padding `pad` and OH = H + 2 pad - k + 1.
Tensor im2col(const Tensor& x, std::size_t k, std::size_t pad);

/// Stride-1 2-d convolution, NHWC layout, weights [k,k,Cin,Cout].
/// pad = k/2 keeps the spatial size ("same" for odd k).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad);

/// 2x2 mean pooling; spatial dims must be even.
Tensor avg_pool2(const Tensor& x);

/// Nearest-neighbour 2x upsampling.
Tensor upsample_nearest2(const Tensor& x);

/// x:[N,H,W,C] + bias:[N,C] broadcast over the spatial dims.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second-moment accumulators; lazily shaped on the first step.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long long t = 0;
};

/// One bias-corrected Adam update. `params[i]` is updated in place from
/// `grads[i]`; shapes must agree pairwise with the state.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg);

/// Same update driven by the gradients accumulated on the params themselves.
void adam_step(const std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace synthvit
