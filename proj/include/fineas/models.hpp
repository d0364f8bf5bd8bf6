#pragma once

#include <string>
#include <vector>

#include "fineas/rng.hpp"
#include "fineas/tensor.hpp"
#include "fineas/tokenize.hpp"

namespace fineas::models {

enum class Pooling { Mean, Cls };

inline const char* pooling_name(Pooling p) {
  return p == Pooling::Mean ? "mean" : "cls";
}

struct EncoderSpec {
  int vocab_size = 0;
  int d_model = 64;   // full-size backbones use 768; desk default 64
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 0;       // 0 means 4 * d_model
  int max_len = 64;
  double dropout_p = 0.1;
  Pooling pooling = Pooling::Mean;

  int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }

  void validate() const {
    if (vocab_size < 5) raise(Errc::ConfigError, "vocab_size must cover specials");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_len < 2) {
      raise(Errc::ConfigError, "encoder dims must be >= 1");
    }
    if (d_model % n_heads != 0) {
      raise(Errc::ConfigError, "d_model must be divisible by n_heads");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
      raise(Errc::ConfigError, "dropout_p must be in [0, 1)");
    }
  }
};

struct BiLstmSpec {
  int vocab_size = 0;
  int embedding_dim = 128;
  int hidden = 256;   // per direction
  int layers = 2;
  double dropout_p = 0.2;  // between stacked layers
  int max_len = 64;

  void validate() const {
    if (vocab_size < 5) raise(Errc::ConfigError, "vocab_size must cover specials");
    if (embedding_dim < 1 || hidden < 1 || layers < 1 || max_len < 1) {
      raise(Errc::ConfigError, "bilstm dims must be >= 1");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
      raise(Errc::ConfigError, "dropout_p must be in [0, 1)");
    }
  }
};

// A batch of token sequences flattened row-major and trimmed to the
// longest real length present (trailing padding carries no information;
// predictions are bit-exact invariant to it).
struct Batch {
  int size = 0;
  int seq = 0;
  std::vector<int> ids;      // size * seq
  std::vector<int> lengths;  // per row, pre-padding token count

  static Batch from_seqs(const std::vector<tok::TokenSeq>& seqs) {
    Batch b;
    b.size = static_cast<int>(seqs.size());
    int max_len = 1;
    for (const auto& s : seqs) max_len = std::max(max_len, s.length);
    b.seq = max_len;
    b.ids.reserve(static_cast<size_t>(b.size) * b.seq);
    for (const auto& s : seqs) {
      b.lengths.push_back(s.length);
      for (int t = 0; t < b.seq; ++t) {
        b.ids.push_back(t < static_cast<int>(s.ids.size()) ? s.ids[t]
                                                           : tok::kPad);
      }
    }
    return b;
  }
};

namespace detail {

template <class T>
std::vector<T> uniform_init(Rng& rng, int64_t n, double bound = 0.05) {
  std::vector<T> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return v;
}

// Attention key mask tiled to (batch, seq, seq): key positions at or
// beyond a row's length are invisible to every query.
inline std::vector<uint8_t> key_mask(const Batch& batch) {
  std::vector<uint8_t> mask(static_cast<size_t>(batch.size) * batch.seq *
                            batch.seq);
  size_t i = 0;
  for (int b = 0; b < batch.size; ++b) {
    const int len = batch.lengths[b];
    for (int q = 0; q < batch.seq; ++q) {
      for (int k = 0; k < batch.seq; ++k) mask[i++] = k < len ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace detail

// Transformer-encoder regressor: token + learned positional embeddings,
// post-norm encoder layers (self-attention then FFN, each wrapped in
// residual + layernorm), pooling, and a linear head through tanh.
//
// Initialization draws uniform(-0.05, 0.05) values in parameter
// registration order from a stream derived from `init_seed`; layernorm
// gains start at 1, all biases at 0.
template <class T>
class FineasEncoderModel {
 public:
  FineasEncoderModel(EncoderSpec spec, uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    Rng rng(derive_seed(init_seed, 0));
    const int d = spec_.d_model;
    const int f = spec_.ff_dim();

    auto p = [&](std::vector<int> shape, std::vector<T> values,
                 const std::string& name, bool encoder_param) {
      auto t = num::Tensor<T>::param(std::move(shape), std::move(values), name);
      params_.push_back(t);
      if (encoder_param) encoder_count_ = params_.size();
      return t;
    };

    tok_emb_ = p({spec_.vocab_size, d},
                 detail::uniform_init<T>(rng, int64_t{1} * spec_.vocab_size * d),
                 "enc.tok_emb", true);
    pos_emb_ = p({spec_.max_len, d},
                 detail::uniform_init<T>(rng, int64_t{1} * spec_.max_len * d),
                 "enc.pos_emb", true);
    for (int l = 0; l < spec_.n_layers; ++l) {
      const std::string prefix = "enc.l" + std::to_string(l) + ".";
      Layer layer;
      layer.wq = p({d, d}, detail::uniform_init<T>(rng, d * d), prefix + "wq", true);
      layer.bq = p({d}, std::vector<T>(d, T(0)), prefix + "bq", true);
      layer.wk = p({d, d}, detail::uniform_init<T>(rng, d * d), prefix + "wk", true);
      layer.bk = p({d}, std::vector<T>(d, T(0)), prefix + "bk", true);
      layer.wv = p({d, d}, detail::uniform_init<T>(rng, d * d), prefix + "wv", true);
      layer.bv = p({d}, std::vector<T>(d, T(0)), prefix + "bv", true);
      layer.wo = p({d, d}, detail::uniform_init<T>(rng, d * d), prefix + "wo", true);
      layer.bo = p({d}, std::vector<T>(d, T(0)), prefix + "bo", true);
      layer.ln1_g = p({d}, std::vector<T>(d, T(1)), prefix + "ln1.g", true);
      layer.ln1_b = p({d}, std::vector<T>(d, T(0)), prefix + "ln1.b", true);
      layer.w1 = p({d, f}, detail::uniform_init<T>(rng, int64_t{1} * d * f), prefix + "ffn.w1", true);
      layer.b1 = p({f}, std::vector<T>(f, T(0)), prefix + "ffn.b1", true);
      layer.w2 = p({f, d}, detail::uniform_init<T>(rng, int64_t{1} * f * d), prefix + "ffn.w2", true);
      layer.b2 = p({d}, std::vector<T>(d, T(0)), prefix + "ffn.b2", true);
      layer.ln2_g = p({d}, std::vector<T>(d, T(1)), prefix + "ln2.g", true);
      layer.ln2_b = p({d}, std::vector<T>(d, T(0)), prefix + "ln2.b", true);
      layers_.push_back(layer);
    }
    head_w_ = p({d, 1}, detail::uniform_init<T>(rng, d), "head.w", false);
    head_b_ = p({1}, std::vector<T>(1, T(0)), "head.b", false);
  }

  const EncoderSpec& spec() const { return spec_; }
  bool frozen() const { return frozen_; }

  // Feature-extractor mode: encoder parameters stop receiving gradients;
  // the head always trains.
  void set_frozen(bool frozen) {
    frozen_ = frozen;
    for (size_t i = 0; i < encoder_count_; ++i) {
      params_[i].set_requires_grad(!frozen);
    }
  }

  // Sentence embeddings, (batch, d_model).
  num::Tensor<T> embed(const Batch& batch, bool train, Rng* dropout_rng) const {
    check_batch(batch);
    const int d = spec_.d_model;
    const int heads = spec_.n_heads;
    const int dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto mask = detail::key_mask(batch);

    auto x = num::embedding_gather(tok_emb_, batch.ids, {batch.size, batch.seq});
    x = num::add(x, num::slice_axis(pos_emb_, 0, 0, batch.seq));

    for (const auto& layer : layers_) {
      auto q = num::add(num::matmul(x, layer.wq), layer.bq);
      auto k = num::add(num::matmul(x, layer.wk), layer.bk);
      auto v = num::add(num::matmul(x, layer.wv), layer.bv);

      std::vector<num::Tensor<T>> head_outputs;
      for (int h = 0; h < heads; ++h) {
        auto qh = num::slice_axis(q, 2, h * dh, dh);
        auto kh = num::slice_axis(k, 2, h * dh, dh);
        auto vh = num::slice_axis(v, 2, h * dh, dh);
        auto scores =
            num::scale(num::matmul(qh, num::transpose_last2(kh)), inv_sqrt_dh);
        auto probs = num::softmax_lastaxis(scores, mask);
        head_outputs.push_back(num::matmul(probs, vh));
      }
      auto attn = num::concat_last(head_outputs);
      attn = num::add(num::matmul(attn, layer.wo), layer.bo);
      attn = apply_dropout(attn, train, dropout_rng);
      x = num::layer_norm(num::add(x, attn), layer.ln1_g, layer.ln1_b);

      auto ffn = num::matmul(num::gelu(num::add(num::matmul(x, layer.w1), layer.b1)),
                             layer.w2);
      ffn = num::add(ffn, layer.b2);
      ffn = apply_dropout(ffn, train, dropout_rng);
      x = num::layer_norm(num::add(x, ffn), layer.ln2_g, layer.ln2_b);
    }

    if (spec_.pooling == Pooling::Mean) {
      return num::masked_mean_pool(x, batch.lengths);
    }
    return num::reshape(num::slice_axis(x, 1, 0, 1), {batch.size, d});
  }

  // Regression scores in (-1, 1), shape (batch, 1).
  num::Tensor<T> predict(const Batch& batch, bool train = false,
                         Rng* dropout_rng = nullptr) const {
    return head(embed(batch, train, dropout_rng));
  }

  // The linear+tanh head on externally supplied embeddings (frozen-arm
  // feature caches, imported embedding files).
  num::Tensor<T> head(const num::Tensor<T>& embeddings) const {
    return num::tanh(num::add(num::matmul(embeddings, head_w_), head_b_));
  }

  std::vector<num::Tensor<T>> parameters() const { return params_; }

  std::vector<num::Tensor<T>> encoder_parameters() const {
    return {params_.begin(), params_.begin() + encoder_count_};
  }

  std::vector<num::Tensor<T>> trainable_parameters() const {
    std::vector<num::Tensor<T>> out;
    for (const auto& p : params_) {
      if (p.requires_grad()) out.push_back(p);
    }
    return out;
  }

  num::Tensor<T> head_weight() const { return head_w_; }
  num::Tensor<T> head_bias() const { return head_b_; }

 private:
  struct Layer {
    num::Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    num::Tensor<T> ln1_g, ln1_b;
    num::Tensor<T> w1, b1, w2, b2;
    num::Tensor<T> ln2_g, ln2_b;
  };

  void check_batch(const Batch& batch) const {
    if (batch.size < 1) raise(Errc::EmptyBatch, "batch of zero rows");
    if (batch.seq > spec_.max_len) {
      raise(Errc::ShapeMismatch, "batch seq exceeds encoder max_len");
    }
    for (int b = 0; b < batch.size; ++b) {
      if (batch.lengths[b] < 1) {
        raise(Errc::AllPadRow, "row " + std::to_string(b) + " has length 0");
      }
    }
  }

  num::Tensor<T> apply_dropout(const num::Tensor<T>& x, bool train,
                               Rng* rng) const {
    if (!train || spec_.dropout_p == 0.0) return x;
    if (!rng) raise(Errc::ConfigError, "training forward needs a dropout rng");
    return num::dropout(x, spec_.dropout_p, true, *rng);
  }

  EncoderSpec spec_;
  bool frozen_ = false;
  std::vector<num::Tensor<T>> params_;
  size_t encoder_count_ = 0;
  num::Tensor<T> tok_emb_, pos_emb_;
  std::vector<Layer> layers_;
  num::Tensor<T> head_w_, head_b_;
};

// Two-layer bidirectional LSTM over word embeddings. The regression input
// is the concatenation of the top layer's final forward and backward
// hidden states. Gate layout inside the fused weight matrices is
// [input, forget, cell, output]. Variable lengths freeze the recurrent
// state once a row's tokens end, so trailing padding cannot leak in.
template <class T>
class BiLstmModel {
 public:
  BiLstmModel(BiLstmSpec spec, uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    Rng rng(derive_seed(init_seed, 0));
    const int e = spec_.embedding_dim;
    const int h = spec_.hidden;

    auto p = [&](std::vector<int> shape, std::vector<T> values,
                 const std::string& name) {
      auto t = num::Tensor<T>::param(std::move(shape), std::move(values), name);
      params_.push_back(t);
      return t;
    };

    emb_ = p({spec_.vocab_size, e},
             detail::uniform_init<T>(rng, int64_t{1} * spec_.vocab_size * e),
             "lstm.emb");
    for (int l = 0; l < spec_.layers; ++l) {
      const int in = l == 0 ? e : 2 * h;
      for (int dir = 0; dir < 2; ++dir) {
        const std::string prefix = "lstm.l" + std::to_string(l) +
                                   (dir == 0 ? ".fwd." : ".bwd.");
        Cell cell;
        cell.w_ih = p({in, 4 * h},
                      detail::uniform_init<T>(rng, int64_t{1} * in * 4 * h),
                      prefix + "w_ih");
        cell.w_hh = p({h, 4 * h},
                      detail::uniform_init<T>(rng, int64_t{1} * h * 4 * h),
                      prefix + "w_hh");
        cell.bias = p({4 * h}, std::vector<T>(4 * h, T(0)), prefix + "bias");
        cells_.push_back(cell);
      }
    }
    head_w_ = p({2 * h, 1}, detail::uniform_init<T>(rng, 2 * h), "head.w");
    head_b_ = p({1}, std::vector<T>(1, T(0)), "head.b");
  }

  const BiLstmSpec& spec() const { return spec_; }

  num::Tensor<T> predict(const Batch& batch, bool train = false,
                         Rng* dropout_rng = nullptr) const {
    if (batch.size < 1) raise(Errc::EmptyBatch, "batch of zero rows");
    for (int b = 0; b < batch.size; ++b) {
      if (batch.lengths[b] < 1) {
        raise(Errc::AllPadRow, "row " + std::to_string(b) + " has length 0");
      }
    }

    auto input = num::embedding_gather(emb_, batch.ids, {batch.size, batch.seq});
    num::Tensor<T> rep;
    for (int l = 0; l < spec_.layers; ++l) {
      if (l > 0 && train && spec_.dropout_p > 0.0) {
        if (!dropout_rng) {
          raise(Errc::ConfigError, "training forward needs a dropout rng");
        }
        input = num::dropout(input, spec_.dropout_p, true, *dropout_rng);
      }
      auto fwd = run_direction(cells_[2 * l], input, batch, /*reverse=*/false);
      auto bwd = run_direction(cells_[2 * l + 1], input, batch, /*reverse=*/true);

      if (l + 1 < spec_.layers) {
        std::vector<num::Tensor<T>> stacked;
        stacked.reserve(batch.seq);
        for (int t = 0; t < batch.seq; ++t) {
          stacked.push_back(num::concat_last(fwd.per_step[t], bwd.per_step[t]));
        }
        input = num::stack_time(stacked);  // (batch, seq, 2h)
      } else {
        rep = num::concat_last(fwd.final_h, bwd.final_h);  // (batch, 2h)
      }
    }
    return num::tanh(num::add(num::matmul(rep, head_w_), head_b_));
  }

  std::vector<num::Tensor<T>> parameters() const { return params_; }
  std::vector<num::Tensor<T>> trainable_parameters() const { return params_; }

 private:
  struct Cell {
    num::Tensor<T> w_ih, w_hh, bias;
  };

  struct DirectionOut {
    std::vector<num::Tensor<T>> per_step;  // hidden at each time index
    num::Tensor<T> final_h;
  };

  DirectionOut run_direction(const Cell& cell, const num::Tensor<T>& input,
                             const Batch& batch, bool reverse) const {
    const int h = spec_.hidden;
    const int in_dim = input.shape()[2];
    auto hidden = num::Tensor<T>::zeros({batch.size, h});
    auto cell_state = num::Tensor<T>::zeros({batch.size, h});
    DirectionOut out;
    out.per_step.resize(batch.seq);

    for (int step = 0; step < batch.seq; ++step) {
      const int t = reverse ? batch.seq - 1 - step : step;
      auto x_t = num::reshape(num::slice_axis(input, 1, t, 1),
                              {batch.size, in_dim});
      auto gates = num::add(
          num::add(num::matmul(x_t, cell.w_ih), num::matmul(hidden, cell.w_hh)),
          cell.bias);
      auto i_gate = num::sigmoid(num::slice_axis(gates, 1, 0, h));
      auto f_gate = num::sigmoid(num::slice_axis(gates, 1, h, h));
      auto g_gate = num::tanh(num::slice_axis(gates, 1, 2 * h, h));
      auto o_gate = num::sigmoid(num::slice_axis(gates, 1, 3 * h, h));
      auto c_new = num::add(num::mul(f_gate, cell_state),
                            num::mul(i_gate, g_gate));
      auto h_new = num::mul(o_gate, num::tanh(c_new));

      // Rows whose tokens ended keep their previous state, exactly.
      std::vector<T> keep(static_cast<size_t>(batch.size) * h);
      std::vector<T> freeze(static_cast<size_t>(batch.size) * h);
      for (int b = 0; b < batch.size; ++b) {
        const T active = t < batch.lengths[b] ? T(1) : T(0);
        for (int j = 0; j < h; ++j) {
          keep[static_cast<size_t>(b) * h + j] = active;
          freeze[static_cast<size_t>(b) * h + j] = T(1) - active;
        }
      }
      auto keep_t = num::Tensor<T>::constant({batch.size, h}, std::move(keep));
      auto freeze_t =
          num::Tensor<T>::constant({batch.size, h}, std::move(freeze));
      cell_state = num::add(num::mul(c_new, keep_t), num::mul(cell_state, freeze_t));
      hidden = num::add(num::mul(h_new, keep_t), num::mul(hidden, freeze_t));
      out.per_step[t] = hidden;
    }
    out.final_h = hidden;
    return out;
  }

  BiLstmSpec spec_;
  std::vector<num::Tensor<T>> params_;
  num::Tensor<T> emb_;
  std::vector<Cell> cells_;
  num::Tensor<T> head_w_, head_b_;
};

using FineasEncoderModelF = FineasEncoderModel<float>;
using BiLstmModelF = BiLstmModel<float>;

}  // namespace fineas::models
