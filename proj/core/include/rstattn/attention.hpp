#ifndef RSTATTN_ATTENTION_HPP
#define RSTATTN_ATTENTION_HPP

#include <optional>
#include <vector>

#include "rstattn/band.hpp"
#include "rstattn/param.hpp"
#include "rstattn/rng.hpp"

namespace rstattn {

/// Per-call behavior switches for a forward pass. `training` enables dropout
/// draws from `rng`; inference passes leave rng untouched.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;
};

/// Intermediate band tensors of one attention call, exported for analysis.
struct AttentionTrace {
  BandTensor scores;        // pre-injection S
  BandTensor injected;      // post-injection S (.) LDD
  BandTensor weights;       // post-softmax N
};

/// Multi-head sliding-window self-attention with discourse injection.
///
/// Per head i over input x (T x d_model):
///   Q = x Wq_i + bq_i, K = x Wk_i + bk_i, V = x Wv_i + bv_i
///   S[t,k] = Q[t].K[j] / sqrt(d) on the band
///   P = S (.) LDD_band   (with_relations / without_relations / ria)
///     = S                (off)
///   N = softmax_row(P)   (wac instead takes N = softmax_row(LDD_band))
///   head_i = dropout(N) V
/// Heads are concatenated and passed through the output projection, which is
/// followed by its own dropout. The band carries no gradient: parser
/// probabilities are treated as fixed evidence.
///
/// When built with `with_global`, a second projection set (initialized equal
/// to the sliding one) serves designated global tokens: a global token
/// attends densely to the whole sequence and its output row replaces the
/// sliding row, while every other token additionally attends to the global
/// tokens through the sliding projections.
class AttentionLayer {
public:
  AttentionLayer() = default;
  AttentionLayer(const std::string& name, int d_model, int heads, int window,
                 int dilation, double dropout, bool with_global = false);

  struct Cache {
    Matrix x;
    std::vector<Matrix> Q, K, V;
    BandTensor scores;       // S (unset in wac mode)
    BandTensor weights;      // N post softmax
    BandTensor kept;         // dropout keep mask on N (training only)
    Matrix concat;           // T x d_model pre output projection
    Matrix out_kept;         // dropout keep mask on the projected output
    LddMode mode = LddMode::off;
    const BandTensor* band = nullptr;  // borrowed; valid until backward
  };

  /// ldd_band may be null only for mode off. Throws ContractError when the
  /// band shape disagrees with (h, T, w, dilation).
  Matrix forward(const Matrix& x, const BandTensor* ldd_band, LddMode mode,
                 const ForwardMode& fm, Cache* cache = nullptr,
                 AttentionTrace* trace = nullptr) const;

  /// Accumulates parameter gradients from dY and returns dX. Requires the
  /// cache of the matching forward call.
  Matrix backward(const Matrix& dY, const Cache& cache);

  /// Sliding output with rows of `global_tokens` replaced by dense attention
  /// under the global projections; all other rows extend their softmax over
  /// the global keys. Empty set degenerates to forward().
  Matrix global_forward(const Matrix& x, const std::vector<int>& global_tokens,
                        const BandTensor* ldd_band, LddMode mode,
                        const ForwardMode& fm) const;

  ParameterRefs parameters();
  void init_weights(Rng& rng, double stddev = 0.02);

  int d_model() const { return d_model_; }
  int heads() const { return heads_; }
  int window() const { return window_; }
  int dilation() const { return dilation_; }
  bool has_global() const { return with_global_; }

  // Per-head projections; exposed for tests that probe weight sensitivity.
  std::vector<Parameter> wq, wk, wv;  // d_model x d
  std::vector<Parameter> bq, bk, bv;  // 1 x d
  Parameter wo, bo;                   // d_model x d_model, 1 x d_model
  std::vector<Parameter> wq_g, wk_g, wv_g;
  std::vector<Parameter> bq_g, bk_g, bv_g;

private:
  std::vector<Matrix> project(const Matrix& x, const std::vector<Parameter>& w,
                              const std::vector<Parameter>& b) const;

  int d_model_ = 0;
  int heads_ = 0;
  int window_ = 0;
  int dilation_ = 1;
  double dropout_ = 0.0;
  bool with_global_ = false;
};

/// Standard dense multi-head attention (decoder self-attention and
/// cross-attention). Queries come from x_q, keys/values from x_kv; the causal
/// flag masks targets j > t.
class DenseAttention {
public:
  DenseAttention() = default;
  DenseAttention(const std::string& name, int d_model, int heads, bool causal,
                 double dropout);

  struct Cache {
    Matrix x_q, x_kv;
    std::vector<Matrix> Q, K, V;
    std::vector<Matrix> weights;  // per-head Tq x Tk post softmax
    std::vector<Matrix> kept;     // dropout keep masks
    Matrix concat;
    Matrix out_kept;
  };

  Matrix forward(const Matrix& x_q, const Matrix& x_kv, const ForwardMode& fm,
                 Cache* cache = nullptr) const;

  /// Returns dX_q and accumulates dX_kv into `dx_kv` (callers aggregate the
  /// encoder gradient across decoder layers).
  Matrix backward(const Matrix& dY, const Cache& cache, Matrix& dx_kv);

  ParameterRefs parameters();
  void init_weights(Rng& rng, double stddev = 0.02);

  std::vector<Parameter> wq, wk, wv, bq, bk, bv;
  Parameter wo, bo;

private:
  int d_model_ = 0;
  int heads_ = 0;
  bool causal_ = false;
  double dropout_ = 0.0;
};

/// Inverted dropout: scales kept entries by 1/(1-rate). Returns the keep
/// mask (entries 0 or 1/(1-rate)) used for the backward pass.
Matrix dropout_mask(int rows, int cols, double rate, Rng& rng);

}  // namespace rstattn

#endif
