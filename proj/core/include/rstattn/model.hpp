#ifndef RSTATTN_MODEL_HPP
#define RSTATTN_MODEL_HPP

#include <memory>
#include <optional>
#include <vector>

#include "rstattn/attention.hpp"
#include "rstattn/band.hpp"
#include "rstattn/config.hpp"
#include "rstattn/param.hpp"
#include "rstattn/vocab.hpp"

namespace rstattn {

class LayerNorm {
public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);

  struct Cache {
    Matrix x_hat;
    Eigen::VectorXd inv_std;
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dY, const Cache& cache);

  ParameterRefs parameters() { return {&gain, &bias}; }

  Parameter gain, bias;  // 1 x dim

private:
  static constexpr double kEps = 1e-5;
};

class Linear {
public:
  Linear() = default;
  Linear(const std::string& name, int in_dim, int out_dim);

  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& dY, const Matrix& x);

  ParameterRefs parameters() { return {&w, &b}; }
  void init_weights(Rng& rng, double stddev = 0.02);

  Parameter w, b;
};

/// Position-wise two-layer network with exact GELU, width 4 * d_model.
class FeedForward {
public:
  FeedForward() = default;
  FeedForward(const std::string& name, int d_model);

  struct Cache {
    Matrix x, pre_act;
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dY, const Cache& cache);

  ParameterRefs parameters();
  void init_weights(Rng& rng, double stddev = 0.02);

  Linear expand, contract;
};

/// Pre-norm encoder block: x + Attn(LN(x)), then x + FFN(LN(x)).
class EncoderLayer {
public:
  EncoderLayer() = default;
  EncoderLayer(const std::string& name, const ModelConfig& config);

  struct Cache {
    LayerNorm::Cache ln1;
    Matrix ln1_out;
    AttentionLayer::Cache attn;
    Matrix after_attn;
    LayerNorm::Cache ln2;
    Matrix ln2_out;
    FeedForward::Cache ffn;
  };

  Matrix forward(const Matrix& x, const BandTensor* band, LddMode mode,
                 const ForwardMode& fm, Cache* cache = nullptr,
                 AttentionTrace* trace = nullptr) const;
  Matrix backward(const Matrix& dY, const Cache& cache);

  ParameterRefs parameters();
  void init_weights(Rng& rng);

  LayerNorm ln1, ln2;
  AttentionLayer attn;
  FeedForward ffn;
};

/// Pre-norm decoder block: causal self-attention, dense cross-attention over
/// the encoder output, then the feed-forward sublayer.
class DecoderLayer {
public:
  DecoderLayer() = default;
  DecoderLayer(const std::string& name, const ModelConfig& config);

  struct Cache {
    LayerNorm::Cache ln1;
    Matrix ln1_out;
    DenseAttention::Cache self;
    Matrix after_self;
    LayerNorm::Cache ln2;
    Matrix ln2_out;
    DenseAttention::Cache cross;
    Matrix after_cross;
    LayerNorm::Cache ln3;
    Matrix ln3_out;
    FeedForward::Cache ffn;
  };

  Matrix forward(const Matrix& x, const Matrix& memory, const ForwardMode& fm,
                 Cache* cache = nullptr) const;
  /// Returns dX; the gradient w.r.t. the encoder memory accumulates into
  /// d_memory.
  Matrix backward(const Matrix& dY, const Cache& cache, Matrix& d_memory);

  ParameterRefs parameters();
  void init_weights(Rng& rng);

  LayerNorm ln1, ln2, ln3;
  DenseAttention self_attn, cross_attn;
  FeedForward ffn;
};

struct EncoderCache {
  Matrix x0;
  std::vector<EncoderLayer::Cache> layers;
  LayerNorm::Cache final_ln;
  std::vector<int> src;
};

struct ModelCache {
  EncoderCache enc;
  Matrix enc_out;
  Matrix dec_x0;
  std::vector<DecoderLayer::Cache> dec_layers;
  LayerNorm::Cache dec_final_ln;
  Matrix dec_out;
  Matrix probs;  // L x V softmax of the logits
  std::vector<int> dec_in, labels;
};

/// Token-level encoder-decoder summarizer. The encoder runs discourse-aware
/// sliding-window attention; the decoder is a standard causal transformer
/// with dense cross-attention (the discourse band never enters the decoder).
class Seq2SeqModel {
public:
  Seq2SeqModel(const ModelConfig& config, Vocabulary vocab);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  int vocab_dim() const { return vocab_dim_; }

  /// Draws fresh weights; the draw sequence is fixed by construction order.
  void init_weights(Rng& rng);

  /// Perturbs every parameter tensor by uniform noise in [-lambda*sigma,
  /// +lambda*sigma], sigma being that tensor's element standard deviation.
  /// lambda = 0 and constant tensors are left untouched.
  void apply_init_noise(double lambda, Rng& rng);

  Matrix encode(const std::vector<int>& src, const BandTensor* band,
                const ForwardMode& fm, EncoderCache* cache = nullptr,
                int trace_layer = -1, AttentionTrace* trace = nullptr) const;

  /// Mean token negative log-likelihood of `tgt` + end-of-sequence under
  /// teacher forcing. `band` may be null only in mode off.
  double forward_loss(const std::vector<int>& src, const BandTensor* band,
                      const std::vector<int>& tgt, const ForwardMode& fm,
                      ModelCache* cache = nullptr) const;

  /// Accumulates gradients for the cached forward_loss call.
  void backward(const ModelCache& cache);

  /// Log-probabilities of the next token given the encoder output and the
  /// decoder prefix (prefix[0] must be <s>). Inference path, no dropout.
  Eigen::VectorXd next_token_log_probs(const Matrix& enc_out,
                                       const std::vector<int>& prefix) const;

  ParameterRefs parameters();
  void zero_grad();

  LddMode ldd_mode() const { return config_.ldd_mode; }

  Parameter tok_emb;             // V x d_model
  Parameter pos_enc, pos_dec;    // max_seq_len x d_model
  std::vector<EncoderLayer> enc_layers;
  LayerNorm enc_final_ln;
  std::vector<DecoderLayer> dec_layers;
  LayerNorm dec_final_ln;
  Linear out_proj;

private:
  Matrix embed(const std::vector<int>& ids, const Parameter& pos) const;
  void check_ids(const std::vector<int>& ids) const;

  ModelConfig config_;
  Vocabulary vocab_;
  int vocab_dim_ = 0;
};

}  // namespace rstattn

#endif
