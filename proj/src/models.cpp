#include "pbench/models.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pbench::model {

using ad::IdMatrix;
using ad::ParamSet;
using ad::Shape;
using ad::Tensor;
using data::Batch;
using data::Vocabulary;

namespace {

constexpr double kInitRange = 0.08;
constexpr double kMaskLogit = -1e9;

// Raises MaskError when any row along the last axis has no valid key.
void validate_mask_rows(const Tensor& mask01) {
  int64_t s = mask01.shape().back();
  int64_t rows = mask01.size() / s;
  const auto& m = mask01.data();
  for (int64_t r = 0; r < rows; ++r) {
    bool any = false;
    for (int64_t j = 0; j < s; ++j) {
      if (m[static_cast<size_t>(r * s + j)] != 0.0) {
        any = true;
        break;
      }
    }
    if (!any) throw MaskError("attention row " + std::to_string(r) +
                              " has no unmasked key");
  }
}

Tensor additive_mask(const Tensor& mask01) {
  std::vector<double> v(mask01.data().size());
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] = mask01.data()[i] != 0.0 ? 0.0 : kMaskLogit;
  }
  return Tensor(mask01.shape(), std::move(v));
}

double log_softmax_at(const double* row, int64_t v, int64_t idx) {
  double mx = row[0];
  for (int64_t i = 1; i < v; ++i) mx = std::max(mx, row[i]);
  double denom = 0.0;
  for (int64_t i = 0; i < v; ++i) denom += std::exp(row[i] - mx);
  return row[idx] - mx - std::log(denom);
}

int64_t argmax_lowest(const double* row, int64_t v) {
  int64_t best = 0;
  for (int64_t i = 1; i < v; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace

const char* to_string(ModelKind kind) {
  return kind == ModelKind::Gru ? "gru" : "transformer";
}

std::optional<ModelKind> model_kind_from_string(const std::string& s) {
  if (s == "gru") return ModelKind::Gru;
  if (s == "transformer") return ModelKind::Transformer;
  return std::nullopt;
}

// --- initialization ---

namespace {

struct ParamFactory {
  ParamSet& ps;
  Rng& rng;
  Tensor weight(const std::string& name, Shape shape) {
    return ps.add(name, Tensor::uniform(std::move(shape), -kInitRange,
                                        kInitRange, rng, true));
  }
  Tensor zeros(const std::string& name, Shape shape) {
    return ps.add(name, Tensor::zeros(std::move(shape), true));
  }
  Tensor ones(const std::string& name, Shape shape) {
    return ps.add(name, Tensor::ones(std::move(shape), true));
  }
};

GruCellParams make_gru_cell(ParamFactory& f, const std::string& prefix,
                            int64_t in, int64_t hidden) {
  GruCellParams c;
  c.wx_z = f.weight(prefix + ".wx_z", {in, hidden});
  c.wh_z = f.weight(prefix + ".wh_z", {hidden, hidden});
  c.b_z = f.zeros(prefix + ".b_z", {hidden});
  c.wx_r = f.weight(prefix + ".wx_r", {in, hidden});
  c.wh_r = f.weight(prefix + ".wh_r", {hidden, hidden});
  c.b_r = f.zeros(prefix + ".b_r", {hidden});
  c.wx_h = f.weight(prefix + ".wx_h", {in, hidden});
  c.wh_h = f.weight(prefix + ".wh_h", {hidden, hidden});
  c.b_h = f.zeros(prefix + ".b_h", {hidden});
  return c;
}

AttentionParams make_attention(ParamFactory& f, const std::string& prefix,
                               int64_t d_model, int64_t n_heads) {
  AttentionParams a;
  int64_t d_k = d_model / n_heads;
  for (int64_t h = 0; h < n_heads; ++h) {
    std::string hp = prefix + ".h" + std::to_string(h);
    a.wq.push_back(f.weight(hp + ".wq", {d_model, d_k}));
    a.wk.push_back(f.weight(hp + ".wk", {d_model, d_k}));
    a.wv.push_back(f.weight(hp + ".wv", {d_model, d_k}));
  }
  a.wo = f.weight(prefix + ".wo", {d_model, d_model});
  return a;
}

}  // namespace

Model init_model(const ModelHyper& hyper, uint64_t seed) {
  if (hyper.src_vocab < 4 || hyper.tgt_vocab < 4) {
    throw ValueError("vocabulary sizes must cover the four specials");
  }
  if (hyper.max_len < 1) throw ValueError("max_len must be >= 1");
  Model m;
  m.hyper = hyper;
  Rng rng(seed);
  ParamFactory f{m.params, rng};
  if (hyper.kind == ModelKind::Gru) {
    const auto& g = hyper.gru;
    if (g.embed < 1 || g.hidden < 1) throw ValueError("bad GRU dimensions");
    GruParams p;
    p.src_embed = f.weight("src_embed", {hyper.src_vocab, g.embed});
    p.tgt_embed = f.weight("tgt_embed", {hyper.tgt_vocab, g.embed});
    p.encoder = make_gru_cell(f, "enc", g.embed, g.hidden);
    p.decoder = make_gru_cell(f, "dec", g.embed, g.hidden);
    p.out_w = f.weight("out.w", {2 * g.hidden, hyper.tgt_vocab});
    p.out_b = f.zeros("out.b", {hyper.tgt_vocab});
    m.gru = std::move(p);
  } else {
    const auto& t = hyper.tf;
    if (t.n_heads < 1 || t.d_model < 1 || t.n_layers < 1 || t.d_ff < 1) {
      throw ValueError("bad transformer dimensions");
    }
    if (t.d_model % t.n_heads != 0) {
      throw ValueError("d_model " + std::to_string(t.d_model) +
                       " not divisible by n_heads " +
                       std::to_string(t.n_heads));
    }
    TransformerParams p;
    p.src_embed = f.weight("src_embed", {hyper.src_vocab, t.d_model});
    p.tgt_embed = f.weight("tgt_embed", {hyper.tgt_vocab, t.d_model});
    p.src_pos = f.weight("src_pos", {hyper.max_len, t.d_model});
    p.tgt_pos = f.weight("tgt_pos", {hyper.max_len, t.d_model});
    for (int64_t i = 0; i < t.n_layers; ++i) {
      std::string lp = "enc" + std::to_string(i);
      EncoderLayerParams layer;
      layer.ln1_g = f.ones(lp + ".ln1.g", {t.d_model});
      layer.ln1_b = f.zeros(lp + ".ln1.b", {t.d_model});
      layer.self_attn = make_attention(f, lp + ".attn", t.d_model, t.n_heads);
      layer.ln2_g = f.ones(lp + ".ln2.g", {t.d_model});
      layer.ln2_b = f.zeros(lp + ".ln2.b", {t.d_model});
      layer.ff_w1 = f.weight(lp + ".ff.w1", {t.d_model, t.d_ff});
      layer.ff_b1 = f.zeros(lp + ".ff.b1", {t.d_ff});
      layer.ff_w2 = f.weight(lp + ".ff.w2", {t.d_ff, t.d_model});
      layer.ff_b2 = f.zeros(lp + ".ff.b2", {t.d_model});
      p.encoder.push_back(std::move(layer));
    }
    for (int64_t i = 0; i < t.n_layers; ++i) {
      std::string lp = "dec" + std::to_string(i);
      DecoderLayerParams layer;
      layer.ln1_g = f.ones(lp + ".ln1.g", {t.d_model});
      layer.ln1_b = f.zeros(lp + ".ln1.b", {t.d_model});
      layer.self_attn = make_attention(f, lp + ".self", t.d_model, t.n_heads);
      layer.ln2_g = f.ones(lp + ".ln2.g", {t.d_model});
      layer.ln2_b = f.zeros(lp + ".ln2.b", {t.d_model});
      layer.cross_attn =
          make_attention(f, lp + ".cross", t.d_model, t.n_heads);
      layer.ln3_g = f.ones(lp + ".ln3.g", {t.d_model});
      layer.ln3_b = f.zeros(lp + ".ln3.b", {t.d_model});
      layer.ff_w1 = f.weight(lp + ".ff.w1", {t.d_model, t.d_ff});
      layer.ff_b1 = f.zeros(lp + ".ff.b1", {t.d_ff});
      layer.ff_w2 = f.weight(lp + ".ff.w2", {t.d_ff, t.d_model});
      layer.ff_b2 = f.zeros(lp + ".ff.b2", {t.d_model});
      p.decoder.push_back(std::move(layer));
    }
    p.enc_ln_g = f.ones("enc_ln.g", {t.d_model});
    p.enc_ln_b = f.zeros("enc_ln.b", {t.d_model});
    p.dec_ln_g = f.ones("dec_ln.g", {t.d_model});
    p.dec_ln_b = f.zeros("dec_ln.b", {t.d_model});
    p.out_w = f.weight("out.w", {t.d_model, hyper.tgt_vocab});
    p.out_b = f.zeros("out.b", {hyper.tgt_vocab});
    m.tf = std::move(p);
  }
  return m;
}

// --- masks ---

Tensor key_padding_mask(const IdMatrix& ids) {
  int64_t b = static_cast<int64_t>(ids.size());
  int64_t s = static_cast<int64_t>(ids[0].size());
  std::vector<double> m(static_cast<size_t>(b * s));
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < s; ++j) {
      m[static_cast<size_t>(i * s + j)] =
          ids[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
                  Vocabulary::kPad
              ? 0.0
              : 1.0;
    }
  }
  return Tensor({b, 1, s}, std::move(m));
}

Tensor causal_padding_mask(const IdMatrix& ids) {
  int64_t b = static_cast<int64_t>(ids.size());
  int64_t t = static_cast<int64_t>(ids[0].size());
  std::vector<double> m(static_cast<size_t>(b * t * t), 0.0);
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t q = 0; q < t; ++q) {
      for (int64_t j = 0; j <= q; ++j) {
        bool pad = ids[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
                   Vocabulary::kPad;
        // a position may always attend to itself so no row is empty
        if (!pad || j == q) {
          m[static_cast<size_t>((i * t + q) * t + j)] = 1.0;
        }
      }
    }
  }
  return Tensor({b, t, t}, std::move(m));
}

// --- attention ---

std::pair<Tensor, Tensor> scaled_dot_attention(const Tensor& q,
                                               const Tensor& k,
                                               const Tensor& v,
                                               const Tensor* mask01) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw ShapeError("attention expects rank-3 Q/K/V");
  }
  if (q.dim(2) != k.dim(2)) {
    throw ShapeError("Q and K feature dims differ: " + ad::shape_str(q.shape()) +
                     " vs " + ad::shape_str(k.shape()));
  }
  if (k.dim(1) != v.dim(1)) {
    throw ShapeError("K and V sequence lengths differ: " +
                     ad::shape_str(k.shape()) + " vs " +
                     ad::shape_str(v.shape()));
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(2)));
  Tensor scores = mul(matmul(q, transpose_last2(k)), Tensor::scalar(scale));
  Tensor weights;
  if (mask01) {
    validate_mask_rows(*mask01);
    scores = add(scores, additive_mask(*mask01));
    weights = mul(softmax(scores, -1), *mask01);
  } else {
    weights = softmax(scores, -1);
  }
  return {matmul(weights, v), weights};
}

Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv,
                            const AttentionParams& params,
                            const Tensor* mask01) {
  if (params.wq.empty()) throw ValueError("attention has no heads");
  std::vector<Tensor> heads;
  heads.reserve(params.wq.size());
  for (size_t h = 0; h < params.wq.size(); ++h) {
    Tensor qh = matmul(x_q, params.wq[h]);
    Tensor kh = matmul(x_kv, params.wk[h]);
    Tensor vh = matmul(x_kv, params.wv[h]);
    heads.push_back(scaled_dot_attention(qh, kh, vh, mask01).first);
  }
  return matmul(concat_last(heads), params.wo);
}

// --- gated recurrence ---

Tensor gru_cell(const Tensor& x_t, const Tensor& h_prev,
                const GruCellParams& p) {
  Tensor z = sigmoid(add(add(matmul(x_t, p.wx_z), matmul(h_prev, p.wh_z)),
                         p.b_z));
  Tensor r = sigmoid(add(add(matmul(x_t, p.wx_r), matmul(h_prev, p.wh_r)),
                         p.b_r));
  Tensor cand = ad::tanh(add(
      add(matmul(x_t, p.wx_h), matmul(mul(r, h_prev), p.wh_h)), p.b_h));
  Tensor one = Tensor::ones(z.shape());
  return add(mul(sub(one, z), h_prev), mul(z, cand));
}

std::pair<Tensor, Tensor> gru_attention_context(const Tensor& encoder_states,
                                                const Tensor& decoder_state,
                                                const Tensor* mask01) {
  if (encoder_states.rank() != 3 || decoder_state.rank() != 2) {
    throw ShapeError("expected encoder states [B,S,H] and decoder state [B,H]");
  }
  int64_t b = encoder_states.dim(0);
  int64_t s = encoder_states.dim(1);
  int64_t h = encoder_states.dim(2);
  if (decoder_state.dim(0) != b || decoder_state.dim(1) != h) {
    throw ShapeError("decoder state " + ad::shape_str(decoder_state.shape()) +
                     " does not match encoder states " +
                     ad::shape_str(encoder_states.shape()));
  }
  double scale = 1.0 / std::sqrt(static_cast<double>(h));
  Tensor query = reshape(decoder_state, {b, h, 1});
  // [B,S,1] and [B,1,S] share the same layout
  Tensor scores = reshape(
      mul(matmul(encoder_states, query), Tensor::scalar(scale)), {b, 1, s});
  Tensor weights;
  if (mask01) {
    validate_mask_rows(*mask01);
    scores = add(scores, additive_mask(*mask01));
    weights = mul(softmax(scores, -1), *mask01);
  } else {
    weights = softmax(scores, -1);
  }
  Tensor context = reshape(matmul(weights, encoder_states), {b, h});
  return {context, reshape(weights, {b, s})};
}

// --- forward passes ---

namespace {

Tensor position_rows(const Tensor& table, int64_t len) {
  IdMatrix ids(1, std::vector<int64_t>(static_cast<size_t>(len)));
  for (int64_t i = 0; i < len; ++i) ids[0][static_cast<size_t>(i)] = i;
  return embedding_lookup(table, ids);  // [1, len, d]
}

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                    const Tensor& w2, const Tensor& b2) {
  return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2);
}

struct GruEncoded {
  Tensor states;  // [B, S, H]
  Tensor final_state;  // [B, H]
  Tensor src_mask;  // [B, 1, S]
};

GruEncoded gru_encode(const Model& model, const IdMatrix& src_ids) {
  const GruParams& p = *model.gru;
  int64_t b = static_cast<int64_t>(src_ids.size());
  int64_t s = static_cast<int64_t>(src_ids[0].size());
  int64_t hidden = model.hyper.gru.hidden;
  Tensor emb = embedding_lookup(p.src_embed, src_ids);  // [B,S,E]
  Tensor h = Tensor::zeros({b, hidden});
  std::vector<Tensor> states;
  states.reserve(static_cast<size_t>(s));
  for (int64_t t = 0; t < s; ++t) {
    Tensor x_t = slice_step(emb, t);
    Tensor h_new = gru_cell(x_t, h, p.encoder);
    // freeze the state across padded positions so the final state is the
    // state at the last real token
    std::vector<double> keep(static_cast<size_t>(b));
    bool all_real = true;
    for (int64_t i = 0; i < b; ++i) {
      bool real = src_ids[static_cast<size_t>(i)][static_cast<size_t>(t)] !=
                  Vocabulary::kPad;
      keep[static_cast<size_t>(i)] = real ? 1.0 : 0.0;
      all_real = all_real && real;
    }
    if (all_real) {
      h = h_new;
    } else {
      Tensor k({b, 1}, keep);
      Tensor one_minus({b, 1}, std::vector<double>(static_cast<size_t>(b)));
      for (int64_t i = 0; i < b; ++i) {
        one_minus.data()[static_cast<size_t>(i)] =
            1.0 - keep[static_cast<size_t>(i)];
      }
      h = add(mul(k, h_new), mul(one_minus, h));
    }
    states.push_back(h);
  }
  return {stack_steps(states), h, key_padding_mask(src_ids)};
}

}  // namespace

Tensor gru_forward(const Model& model, const Batch& batch) {
  if (!model.gru) throw ValueError("model is not a GRU");
  if (batch.batch_size() == 0 || batch.src_len() == 0) {
    throw ValueError("empty source batch");
  }
  const GruParams& p = *model.gru;
  GruEncoded enc = gru_encode(model, batch.src_ids);
  Tensor tgt_emb = embedding_lookup(p.tgt_embed, batch.tgt_in_ids);
  Tensor dh = enc.final_state;
  std::vector<Tensor> logits_steps;
  int64_t t_len = batch.tgt_len();
  logits_steps.reserve(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) {
    Tensor m_t = slice_step(tgt_emb, t);
    dh = gru_cell(m_t, dh, p.decoder);
    auto [context, weights] = gru_attention_context(enc.states, dh,
                                                    &enc.src_mask);
    Tensor features = ad::concat_last({dh, context});
    logits_steps.push_back(add(matmul(features, p.out_w), p.out_b));
  }
  return stack_steps(logits_steps);  // [B, T, V]
}

Tensor transformer_forward(const Model& model, const Batch& batch) {
  if (!model.tf) throw ValueError("model is not a transformer");
  const TransformerParams& p = *model.tf;
  int64_t s = batch.src_len();
  int64_t t = batch.tgt_len();
  if (s < 1 || t < 1) throw ValueError("empty batch");
  if (s > model.hyper.max_len || t > model.hyper.max_len) {
    throw ValueError("sequence length exceeds positional table (max_len " +
                     std::to_string(model.hyper.max_len) + ")");
  }
  Tensor src_mask = key_padding_mask(batch.src_ids);      // [B,1,S]
  Tensor tgt_mask = causal_padding_mask(batch.tgt_in_ids);  // [B,T,T]

  Tensor x = add(embedding_lookup(p.src_embed, batch.src_ids),
                 position_rows(p.src_pos, s));
  for (const auto& layer : p.encoder) {
    Tensor normed = layer_norm(x, layer.ln1_g, layer.ln1_b);
    x = add(x, multi_head_attention(normed, normed, layer.self_attn,
                                    &src_mask));
    Tensor normed2 = layer_norm(x, layer.ln2_g, layer.ln2_b);
    x = add(x, feed_forward(normed2, layer.ff_w1, layer.ff_b1, layer.ff_w2,
                            layer.ff_b2));
  }
  Tensor memory = layer_norm(x, p.enc_ln_g, p.enc_ln_b);

  Tensor y = add(embedding_lookup(p.tgt_embed, batch.tgt_in_ids),
                 position_rows(p.tgt_pos, t));
  for (const auto& layer : p.decoder) {
    Tensor normed = layer_norm(y, layer.ln1_g, layer.ln1_b);
    y = add(y, multi_head_attention(normed, normed, layer.self_attn,
                                    &tgt_mask));
    Tensor normed2 = layer_norm(y, layer.ln2_g, layer.ln2_b);
    y = add(y, multi_head_attention(normed2, memory, layer.cross_attn,
                                    &src_mask));
    Tensor normed3 = layer_norm(y, layer.ln3_g, layer.ln3_b);
    y = add(y, feed_forward(normed3, layer.ff_w1, layer.ff_b1, layer.ff_w2,
                            layer.ff_b2));
  }
  Tensor out = layer_norm(y, p.dec_ln_g, p.dec_ln_b);
  return add(matmul(out, p.out_w), p.out_b);  // [B, T, V]
}

Tensor model_forward(const Model& model, const Batch& batch) {
  return model.hyper.kind == ModelKind::Gru ? gru_forward(model, batch)
                                            : transformer_forward(model, batch);
}

// --- decoding and scoring ---

namespace {

// Validates encoded ids against a vocabulary size.
void check_ids(const std::vector<int64_t>& ids, int64_t vocab,
               const char* what) {
  for (int64_t id : ids) {
    if (id < 0 || id >= vocab) {
      throw ValueError(std::string(what) + " token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

}  // namespace

DecodeResult greedy_decode(const Model& model,
                           const std::vector<int64_t>& src_ids,
                           int64_t max_len) {
  if (src_ids.empty()) throw ValueError("empty source");
  check_ids(src_ids, model.hyper.src_vocab, "source");
  int64_t vocab = model.hyper.tgt_vocab;
  DecodeResult result;
  if (model.hyper.kind == ModelKind::Gru) {
    GruEncoded enc = gru_encode(model, {src_ids});
    const GruParams& p = *model.gru;
    Tensor dh = enc.final_state;
    int64_t prev = Vocabulary::kBos;
    for (int64_t step = 0; step < max_len; ++step) {
      Tensor m_t = reshape(embedding_lookup(p.tgt_embed, {{prev}}),
                           {1, model.hyper.gru.embed});
      dh = gru_cell(m_t, dh, p.decoder);
      auto [context, weights] =
          gru_attention_context(enc.states, dh, &enc.src_mask);
      Tensor logits = add(matmul(ad::concat_last({dh, context}), p.out_w), p.out_b);
      int64_t choice = argmax_lowest(logits.data().data(), vocab);
      if (choice == Vocabulary::kEos) {
        result.terminated_by = DecodeResult::Stop::Eos;
        return result;
      }
      result.ids.push_back(choice);
      result.step_log_probs.push_back(
          log_softmax_at(logits.data().data(), vocab, choice));
      prev = choice;
    }
  } else {
    std::vector<int64_t> prefix = {Vocabulary::kBos};
    for (int64_t step = 0; step < max_len; ++step) {
      Batch batch;
      batch.src_ids = {src_ids};
      batch.tgt_in_ids = {prefix};
      batch.labels.assign(1, std::vector<int64_t>(prefix.size(),
                                                  ad::kMaskedLabel));
      Tensor logits = transformer_forward(model, batch);  // [1, t, V]
      const double* row =
          logits.data().data() + (prefix.size() - 1) * static_cast<size_t>(vocab);
      int64_t choice = argmax_lowest(row, vocab);
      if (choice == Vocabulary::kEos) {
        result.terminated_by = DecodeResult::Stop::Eos;
        return result;
      }
      result.ids.push_back(choice);
      result.step_log_probs.push_back(log_softmax_at(row, vocab, choice));
      prefix.push_back(choice);
    }
  }
  result.terminated_by = DecodeResult::Stop::MaxLen;
  return result;
}

double sequence_log_prob(const Model& model,
                         const std::vector<int64_t>& src_ids,
                         const std::vector<int64_t>& tgt_ids) {
  if (src_ids.empty()) throw ValueError("empty source");
  if (tgt_ids.empty()) throw ValueError("empty target");
  check_ids(src_ids, model.hyper.src_vocab, "source");
  check_ids(tgt_ids, model.hyper.tgt_vocab, "target");
  Batch batch;
  batch.src_ids = {src_ids};
  std::vector<int64_t> tgt_in = {Vocabulary::kBos};
  tgt_in.insert(tgt_in.end(), tgt_ids.begin(), tgt_ids.end());
  std::vector<int64_t> labels(tgt_ids.begin(), tgt_ids.end());
  labels.push_back(Vocabulary::kEos);
  batch.tgt_in_ids = {tgt_in};
  batch.labels = {labels};
  Tensor logits = model_forward(model, batch);  // [1, T, V]
  int64_t vocab = model.hyper.tgt_vocab;
  double total = 0.0;
  for (size_t t = 0; t < labels.size(); ++t) {
    const double* row =
        logits.data().data() + t * static_cast<size_t>(vocab);
    total += log_softmax_at(row, vocab, labels[t]);
  }
  return total;
}

double train_epoch(Model& model, const std::vector<Batch>& batches,
                   ad::AdamState& adam) {
  if (batches.empty()) throw ValueError("train_epoch needs at least one batch");
  double total = 0.0;
  for (const Batch& batch : batches) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    Tensor logits = model_forward(model, batch);
    Tensor loss = cross_entropy_masked(logits, batch.labels);
    tape.backward(loss);
    ad::adam_step(model.params, adam);
    model.params.zero_grad();
    total += loss.item();
  }
  return total / static_cast<double>(batches.size());
}

// --- persistence ---

namespace {

using nlohmann::json;

json hyper_to_json(const ModelHyper& h) {
  return json{
      {"kind", to_string(h.kind)},
      {"src_vocab", h.src_vocab},
      {"tgt_vocab", h.tgt_vocab},
      {"max_len", h.max_len},
      {"gru", {{"embed", h.gru.embed}, {"hidden", h.gru.hidden}}},
      {"transformer",
       {{"d_model", h.tf.d_model},
        {"n_heads", h.tf.n_heads},
        {"n_layers", h.tf.n_layers},
        {"d_ff", h.tf.d_ff}}},
  };
}

ModelHyper hyper_from_json(const json& j) {
  ModelHyper h;
  auto kind = model_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw FormatError("unknown model kind in sidecar");
  h.kind = *kind;
  h.src_vocab = j.at("src_vocab").get<int64_t>();
  h.tgt_vocab = j.at("tgt_vocab").get<int64_t>();
  h.max_len = j.at("max_len").get<int64_t>();
  h.gru.embed = j.at("gru").at("embed").get<int64_t>();
  h.gru.hidden = j.at("gru").at("hidden").get<int64_t>();
  h.tf.d_model = j.at("transformer").at("d_model").get<int64_t>();
  h.tf.n_heads = j.at("transformer").at("n_heads").get<int64_t>();
  h.tf.n_layers = j.at("transformer").at("n_layers").get<int64_t>();
  h.tf.d_ff = j.at("transformer").at("d_ff").get<int64_t>();
  return h;
}

std::string sidecar_path(const std::string& checkpoint_path) {
  return checkpoint_path + ".json";
}

}  // namespace

void save_model(const Model& model, const std::string& checkpoint_path,
                uint64_t seed, uint64_t config_hash) {
  ad::save_checkpoint(model.params, checkpoint_path, seed, config_hash);
  json side{
      {"format_version", 1},
      {"hyper", hyper_to_json(model.hyper)},
      {"seed", seed},
      {"config_hash", config_hash},
  };
  std::ofstream out(sidecar_path(checkpoint_path),
                    std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write sidecar: " + sidecar_path(checkpoint_path));
  out << side.dump(2) << "\n";
}

Model load_model(const std::string& checkpoint_path,
                 const ModelHyper& expected) {
  std::ifstream in(sidecar_path(checkpoint_path), std::ios::binary);
  if (!in) throw IoError("cannot open sidecar: " + sidecar_path(checkpoint_path));
  json side;
  try {
    in >> side;
  } catch (const json::exception& e) {
    throw FormatError("bad sidecar JSON: " + std::string(e.what()));
  }
  ModelHyper stored;
  try {
    stored = hyper_from_json(side.at("hyper"));
  } catch (const json::exception& e) {
    throw FormatError("bad sidecar fields: " + std::string(e.what()));
  }
  if (!(stored == expected)) {
    throw MismatchError("checkpoint hyperparameters at " + checkpoint_path +
                        " do not match the run configuration");
  }
  Model model = init_model(expected, 0);
  ad::load_checkpoint(model.params, checkpoint_path);
  return model;
}

}  // namespace pbench::model
