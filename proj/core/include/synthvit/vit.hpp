#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "synthvit/ops.hpp"
#include "synthvit/tensor.hpp"

namespace synthvit {

struct ViTConfig {
    std::size_t image_size = 384;
    std::size_t patch_size = 16;
    std::size_t channels = 3;
    std::size_t hidden_dim = 768;
    std::size_t num_layers = 12;
    std::size_t num_heads = 12;
    std::size_t mlp_dim = 3072;
    std::size_t head_hidden = 128;
    std::size_t num_classes = 3;
    double attention_dropout = 0.1;
    double layer_norm_eps = 1e-6;

    void validate() const;

    std::size_t patches_per_side() const { return image_size / patch_size; }
    std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
    std::size_t seq_len() const { return num_patches() + 1; }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t head_dim() const { return hidden_dim / num_heads; }

    bool operator==(const ViTConfig&) const = default;

    /// Named presets: "paper-vitb16-384" (the full-size classifier this
    /// project audits) and "tiny-32" (32x32 desk-scale config used by the
    /// end-to-end pipeline and the gradient suite).
    static ViTConfig preset(std::string_view name);
    static std::vector<std::string> preset_names();
};

struct BlockParams {
    Tensor ln1_gamma, ln1_beta;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gamma, ln2_beta;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct NamedParam {
    std::string name;
    Tensor* tensor;
};

/// Full learnable state of the classifier. Tensor handles share storage, so
/// copying ViTParams aliases the same weights; use clone() for a deep copy.
struct ViTParams {
    ViTConfig config;
    Tensor patch_w;      // [patch_dim, hidden]
    Tensor patch_b;      // [hidden]
    Tensor class_token;  // [hidden]
    Tensor pos_embed;    // [seq_len, hidden]
    std::vector<BlockParams> blocks;
    Tensor final_ln_gamma, final_ln_beta;
    Tensor head_w, head_b;  // [hidden, head_hidden]
    Tensor out_w, out_b;    // [head_hidden, num_classes]

    /// Truncated-normal (std 0.02) projections and embeddings, zero biases,
    /// zero class token, unit layer-norm gains.
    static ViTParams init(const ViTConfig& cfg, Rng& rng);

    std::vector<NamedParam> named_params();
    std::vector<Tensor*> param_tensors();
    ViTParams clone() const;
    void zero_grads();
};

/// Split an image batch into flattened patches.
/// images: [B,H,W,C] (or [H,W,C] for a single image) -> [B, P, p*p*C]
/// (or [P, p*p*C]). Patches are ordered row-major over the patch grid and
/// each patch vector is laid out in (dy, dx, channel) row-major order.
Tensor patchify(const Tensor& images, std::size_t patch_size);

/// Scaled dot-product attention over [groups, seq, d_head] stacks
/// (groups = batch * heads). Scores scaled by 1/sqrt(d_head), softmax over
/// keys, dropout on the attention weights in train mode.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double dropout_rate,
                 RunMode mode, Rng* rng);

/// Full classifier forward pass: patchify, embed, class token, position
/// embeddings, pre-norm transformer blocks, final norm, class-token readout,
/// hidden dense, output dense. Returns raw logits [B, num_classes].
Tensor vit_forward(ViTParams& params, const Tensor& images, RunMode mode, Rng* rng);

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParamAuditRow {
    std::string name;
    std::size_t count;
};

struct ParamAudit {
    std::vector<ParamAuditRow> rows;
    std::size_t total = 0;  // sum of rows
};

/// Closed-form per-layer parameter counts for a config; total is the sum of
/// all rows. Matches the tensors allocated by ViTParams::init exactly.
ParamAudit count_params(const ViTConfig& cfg);

/// Reference per-layer counts published for the vitb16-384 configuration
/// (2-class head), together with its printed total. The printed total does
/// not equal the row sum; audits must surface both.
struct ReferenceSummary {
    std::vector<ParamAuditRow> rows;  // per-layer counts at num_classes = 2
    std::size_t printed_total;        // total as printed in the reference summary
};
const ReferenceSummary& vitb16_384_reference_summary();

}  // namespace synthvit
