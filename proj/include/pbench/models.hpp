#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbench/data.hpp"
#include "pbench/optim.hpp"
#include "pbench/tensor.hpp"

namespace pbench::model {

enum class ModelKind { Gru, Transformer };

const char* to_string(ModelKind kind);
std::optional<ModelKind> model_kind_from_string(const std::string& s);

struct GruHyper {
  int64_t embed = 64;
  int64_t hidden = 64;
  bool operator==(const GruHyper&) const = default;
};

struct TransformerHyper {
  int64_t d_model = 64;
  int64_t n_heads = 8;
  int64_t n_layers = 2;
  int64_t d_ff = 128;
  bool operator==(const TransformerHyper&) const = default;
};

struct ModelHyper {
  ModelKind kind = ModelKind::Gru;
  int64_t src_vocab = 0;
  int64_t tgt_vocab = 0;
  int64_t max_len = 32;
  GruHyper gru;
  TransformerHyper tf;
  bool operator==(const ModelHyper&) const = default;
};

// Gated recurrent cell weights: update gate z, reset gate r, candidate h.
struct GruCellParams {
  ad::Tensor wx_z, wh_z, b_z;
  ad::Tensor wx_r, wh_r, b_r;
  ad::Tensor wx_h, wh_h, b_h;
};

struct GruParams {
  ad::Tensor src_embed, tgt_embed;  // [V, E]
  GruCellParams encoder, decoder;
  ad::Tensor out_w, out_b;  // [2H, V_tgt], [V_tgt]
};

struct AttentionParams {
  std::vector<ad::Tensor> wq, wk, wv;  // per head, [d_model, d_k]
  ad::Tensor wo;                       // [d_model, d_model]
};

struct EncoderLayerParams {
  ad::Tensor ln1_g, ln1_b;
  AttentionParams self_attn;
  ad::Tensor ln2_g, ln2_b;
  ad::Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct DecoderLayerParams {
  ad::Tensor ln1_g, ln1_b;
  AttentionParams self_attn;
  ad::Tensor ln2_g, ln2_b;
  AttentionParams cross_attn;
  ad::Tensor ln3_g, ln3_b;
  ad::Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct TransformerParams {
  ad::Tensor src_embed, tgt_embed;  // [V, d_model]
  ad::Tensor src_pos, tgt_pos;      // [max_len, d_model] learned positions
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  ad::Tensor enc_ln_g, enc_ln_b;
  ad::Tensor dec_ln_g, dec_ln_b;
  ad::Tensor out_w, out_b;  // [d_model, V_tgt], [V_tgt]
};

struct Model {
  ModelHyper hyper;
  ad::ParamSet params;
  std::optional<GruParams> gru;
  std::optional<TransformerParams> tf;
};

// Weight matrices drawn uniform(-0.08, 0.08), biases zero, norm gains one.
Model init_model(const ModelHyper& hyper, uint64_t seed);

// Scaled dot-product attention over rank-3 tensors Q [B,T,dk], K [B,S,dk],
// V [B,S,dv]. `mask01`, when given, is a 0/1 tensor broadcastable to
// [B,T,S]; masked weights come out exactly zero. A row with no valid key
// raises MaskError. Returns (output [B,T,dv], weights [B,T,S]).
std::pair<ad::Tensor, ad::Tensor> scaled_dot_attention(
    const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
    const ad::Tensor* mask01 = nullptr);

// Splits queries/keys/values across heads, applies scaled dot attention in
// each d_k-wide subspace, concatenates along features, projects by wo.
ad::Tensor multi_head_attention(const ad::Tensor& x_q, const ad::Tensor& x_kv,
                                const AttentionParams& params,
                                const ad::Tensor* mask01 = nullptr);

// One gated recurrence step: x_t [B,E], h_prev [B,H] -> h_t [B,H].
ad::Tensor gru_cell(const ad::Tensor& x_t, const ad::Tensor& h_prev,
                    const GruCellParams& params);

// Dot-product attention of one decoder state over the encoder states.
// Returns (context [B,H], weights [B,S]); padded positions get exact zero
// weight, and a fully masked row raises MaskError.
std::pair<ad::Tensor, ad::Tensor> gru_attention_context(
    const ad::Tensor& encoder_states, const ad::Tensor& decoder_state,
    const ad::Tensor* mask01 = nullptr);

// Teacher-forced forward passes producing [B, T, V_tgt] logits.
ad::Tensor transformer_forward(const Model& model, const data::Batch& batch);
ad::Tensor gru_forward(const Model& model, const data::Batch& batch);
ad::Tensor model_forward(const Model& model, const data::Batch& batch);

// 0/1 mask helpers derived from padded id matrices.
ad::Tensor key_padding_mask(const ad::IdMatrix& ids);      // [B, 1, S]
ad::Tensor causal_padding_mask(const ad::IdMatrix& ids);   // [B, T, T]

struct DecodeResult {
  std::vector<int64_t> ids;             // emitted tokens, EOS excluded
  std::vector<double> step_log_probs;   // log P of each emitted token
  enum class Stop { Eos, MaxLen } terminated_by = Stop::MaxLen;
};

// Deterministic argmax decoding from BOS; ties break toward the lowest id.
DecodeResult greedy_decode(const Model& model,
                           const std::vector<int64_t>& src_ids,
                           int64_t max_len);

// Sum over target steps (EOS included) of log P(token | source, prefix).
double sequence_log_prob(const Model& model,
                         const std::vector<int64_t>& src_ids,
                         const std::vector<int64_t>& tgt_ids);

// One pass over the batches: forward, masked cross entropy, backward, Adam
// update, zero grads. Returns the mean per-batch loss.
double train_epoch(Model& model, const std::vector<data::Batch>& batches,
                   ad::AdamState& adam);

// Hyperparameter sidecar stored next to each checkpoint; loading fails on
// any mismatch with the expected hyperparameters.
void save_model(const Model& model, const std::string& checkpoint_path,
                uint64_t seed, uint64_t config_hash);
Model load_model(const std::string& checkpoint_path,
                 const ModelHyper& expected);

}  // namespace pbench::model
