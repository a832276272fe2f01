#include "rstattn/model.hpp"

#include <cmath>

#include "rstattn/errors.hpp"

namespace rstattn {

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gain(name + ".gain", 1, dim), bias(name + ".bias", 1, dim) {
  gain.value.setOnes();
}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
  const int rows = static_cast<int>(x.rows());
  const int dim = static_cast<int>(x.cols());
  Matrix x_hat(rows, dim);
  Eigen::VectorXd inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    double mean = x.row(r).mean();
    double var = (x.row(r).array() - mean).square().mean();
    double inv = 1.0 / std::sqrt(var + kEps);
    inv_std(r) = inv;
    x_hat.row(r) = (x.row(r).array() - mean) * inv;
  }
  Matrix y = (x_hat.array().rowwise() * gain.value.row(0).array()).rowwise() +
             bias.value.row(0).array();
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const Matrix& dY, const Cache& cache) {
  const int rows = static_cast<int>(dY.rows());
  const int dim = static_cast<int>(dY.cols());
  gain.grad += (dY.array() * cache.x_hat.array()).colwise().sum().matrix();
  bias.grad += dY.colwise().sum();

  Matrix dx(rows, dim);
  for (int r = 0; r < rows; ++r) {
    Eigen::RowVectorXd dxhat =
        dY.row(r).array() * gain.value.row(0).array();
    double mean_dxhat = dxhat.mean();
    double mean_dxhat_xhat = (dxhat.array() * cache.x_hat.row(r).array()).mean();
    dx.row(r) = (dxhat.array() - mean_dxhat -
                 cache.x_hat.row(r).array() * mean_dxhat_xhat) *
                cache.inv_std(r);
  }
  return dx;
}

Linear::Linear(const std::string& name, int in_dim, int out_dim)
    : w(name + ".w", in_dim, out_dim), b(name + ".b", 1, out_dim) {}

Matrix Linear::forward(const Matrix& x) const {
  return (x * w.value).rowwise() + b.value.row(0);
}

Matrix Linear::backward(const Matrix& dY, const Matrix& x) {
  w.grad += x.transpose() * dY;
  b.grad += dY.colwise().sum();
  return dY * w.value.transpose();
}

void Linear::init_weights(Rng& rng, double stddev) {
  for (int r = 0; r < w.value.rows(); ++r)
    for (int c = 0; c < w.value.cols(); ++c) w.value(r, c) = rng.normal(0.0, stddev);
}

FeedForward::FeedForward(const std::string& name, int d_model)
    : expand(name + ".expand", d_model, 4 * d_model),
      contract(name + ".contract", 4 * d_model, d_model) {}

Matrix FeedForward::forward(const Matrix& x, Cache* cache) const {
  Matrix pre = expand.forward(x);
  Matrix act = pre.unaryExpr([](double v) { return gelu(v); });
  if (cache != nullptr) {
    cache->x = x;
    cache->pre_act = std::move(pre);
    return contract.forward(act);
  }
  return contract.forward(act);
}

Matrix FeedForward::backward(const Matrix& dY, const Cache& cache) {
  Matrix act = cache.pre_act.unaryExpr([](double v) { return gelu(v); });
  Matrix d_act = contract.backward(dY, act);
  Matrix d_pre =
      d_act.cwiseProduct(cache.pre_act.unaryExpr([](double v) { return gelu_grad(v); }));
  return expand.backward(d_pre, cache.x);
}

ParameterRefs FeedForward::parameters() {
  return {&expand.w, &expand.b, &contract.w, &contract.b};
}

void FeedForward::init_weights(Rng& rng, double stddev) {
  expand.init_weights(rng, stddev);
  contract.init_weights(rng, stddev);
}

EncoderLayer::EncoderLayer(const std::string& name, const ModelConfig& config)
    : ln1(name + ".ln1", config.d_model),
      ln2(name + ".ln2", config.d_model),
      attn(name + ".attn", config.d_model, config.h, config.w, config.dilation,
           config.dropout),
      ffn(name + ".ffn", config.d_model) {}

Matrix EncoderLayer::forward(const Matrix& x, const BandTensor* band,
                             LddMode mode, const ForwardMode& fm, Cache* cache,
                             AttentionTrace* trace) const {
  LayerNorm::Cache ln1_cache;
  Matrix ln1_out = ln1.forward(x, cache ? &ln1_cache : nullptr);
  AttentionLayer::Cache attn_cache;
  Matrix attn_out = attn.forward(ln1_out, band, mode, fm,
                                 cache ? &attn_cache : nullptr, trace);
  Matrix after_attn = x + attn_out;

  LayerNorm::Cache ln2_cache;
  Matrix ln2_out = ln2.forward(after_attn, cache ? &ln2_cache : nullptr);
  FeedForward::Cache ffn_cache;
  Matrix y = after_attn + ffn.forward(ln2_out, cache ? &ffn_cache : nullptr);

  if (cache != nullptr) {
    cache->ln1 = std::move(ln1_cache);
    cache->ln1_out = std::move(ln1_out);
    cache->attn = std::move(attn_cache);
    cache->after_attn = std::move(after_attn);
    cache->ln2 = std::move(ln2_cache);
    cache->ln2_out = std::move(ln2_out);
    cache->ffn = std::move(ffn_cache);
  }
  return y;
}

Matrix EncoderLayer::backward(const Matrix& dY, const Cache& cache) {
  Matrix d_after_attn = dY + ln2.backward(ffn.backward(dY, cache.ffn), cache.ln2);
  Matrix dx = d_after_attn;
  dx += ln1.backward(attn.backward(d_after_attn, cache.attn), cache.ln1);
  return dx;
}

ParameterRefs EncoderLayer::parameters() {
  ParameterRefs refs;
  for (auto* p : ln1.parameters()) refs.push_back(p);
  for (auto* p : attn.parameters()) refs.push_back(p);
  for (auto* p : ln2.parameters()) refs.push_back(p);
  for (auto* p : ffn.parameters()) refs.push_back(p);
  return refs;
}

void EncoderLayer::init_weights(Rng& rng) {
  attn.init_weights(rng);
  ffn.init_weights(rng);
}

DecoderLayer::DecoderLayer(const std::string& name, const ModelConfig& config)
    : ln1(name + ".ln1", config.d_model),
      ln2(name + ".ln2", config.d_model),
      ln3(name + ".ln3", config.d_model),
      self_attn(name + ".self", config.d_model, config.h, /*causal=*/true,
                config.dropout),
      cross_attn(name + ".cross", config.d_model, config.h, /*causal=*/false,
                 config.dropout),
      ffn(name + ".ffn", config.d_model) {}

Matrix DecoderLayer::forward(const Matrix& x, const Matrix& memory,
                             const ForwardMode& fm, Cache* cache) const {
  LayerNorm::Cache ln1_cache;
  Matrix ln1_out = ln1.forward(x, cache ? &ln1_cache : nullptr);
  DenseAttention::Cache self_cache;
  Matrix after_self =
      x + self_attn.forward(ln1_out, ln1_out, fm, cache ? &self_cache : nullptr);

  LayerNorm::Cache ln2_cache;
  Matrix ln2_out = ln2.forward(after_self, cache ? &ln2_cache : nullptr);
  DenseAttention::Cache cross_cache;
  Matrix after_cross =
      after_self +
      cross_attn.forward(ln2_out, memory, fm, cache ? &cross_cache : nullptr);

  LayerNorm::Cache ln3_cache;
  Matrix ln3_out = ln3.forward(after_cross, cache ? &ln3_cache : nullptr);
  FeedForward::Cache ffn_cache;
  Matrix y = after_cross + ffn.forward(ln3_out, cache ? &ffn_cache : nullptr);

  if (cache != nullptr) {
    cache->ln1 = std::move(ln1_cache);
    cache->ln1_out = std::move(ln1_out);
    cache->self = std::move(self_cache);
    cache->after_self = std::move(after_self);
    cache->ln2 = std::move(ln2_cache);
    cache->ln2_out = std::move(ln2_out);
    cache->cross = std::move(cross_cache);
    cache->after_cross = std::move(after_cross);
    cache->ln3 = std::move(ln3_cache);
    cache->ln3_out = std::move(ln3_out);
    cache->ffn = std::move(ffn_cache);
  }
  return y;
}

Matrix DecoderLayer::backward(const Matrix& dY, const Cache& cache,
                              Matrix& d_memory) {
  Matrix d_after_cross = dY + ln3.backward(ffn.backward(dY, cache.ffn), cache.ln3);

  Matrix d_ln2_out = cross_attn.backward(d_after_cross, cache.cross, d_memory);
  Matrix d_after_self = d_after_cross + ln2.backward(d_ln2_out, cache.ln2);

  // Self-attention feeds ln1_out as both the query and the key/value stream.
  Matrix d_kv = Matrix::Zero(cache.ln1_out.rows(), cache.ln1_out.cols());
  Matrix d_q = self_attn.backward(d_after_self, cache.self, d_kv);
  Matrix dx = d_after_self + ln1.backward(d_q + d_kv, cache.ln1);
  return dx;
}

ParameterRefs DecoderLayer::parameters() {
  ParameterRefs refs;
  for (auto* p : ln1.parameters()) refs.push_back(p);
  for (auto* p : self_attn.parameters()) refs.push_back(p);
  for (auto* p : ln2.parameters()) refs.push_back(p);
  for (auto* p : cross_attn.parameters()) refs.push_back(p);
  for (auto* p : ln3.parameters()) refs.push_back(p);
  for (auto* p : ffn.parameters()) refs.push_back(p);
  return refs;
}

void DecoderLayer::init_weights(Rng& rng) {
  self_attn.init_weights(rng);
  cross_attn.init_weights(rng);
  ffn.init_weights(rng);
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)) {
  validate(config_);
  vocab_dim_ = config_.vocab_size > 0 ? config_.vocab_size : vocab_.size();
  if (vocab_.size() > vocab_dim_)
    throw ValidationError("config vocab_size " + std::to_string(vocab_dim_) +
                          " smaller than corpus vocabulary " +
                          std::to_string(vocab_.size()));
  tok_emb = Parameter("tok_emb", vocab_dim_, config_.d_model);
  pos_enc = Parameter("pos_enc", config_.max_seq_len, config_.d_model);
  pos_dec = Parameter("pos_dec", config_.max_seq_len, config_.d_model);
  for (int i = 0; i < config_.n_enc_layers; ++i)
    enc_layers.emplace_back("enc." + std::to_string(i), config_);
  enc_final_ln = LayerNorm("enc.final_ln", config_.d_model);
  for (int i = 0; i < config_.n_dec_layers; ++i)
    dec_layers.emplace_back("dec." + std::to_string(i), config_);
  dec_final_ln = LayerNorm("dec.final_ln", config_.d_model);
  out_proj = Linear("out_proj", config_.d_model, vocab_dim_);
}

void Seq2SeqModel::init_weights(Rng& rng) {
  auto fill = [&](Parameter& p) {
    for (int r = 0; r < p.value.rows(); ++r)
      for (int c = 0; c < p.value.cols(); ++c) p.value(r, c) = rng.normal(0.0, 0.02);
  };
  fill(tok_emb);
  fill(pos_enc);
  fill(pos_dec);
  for (auto& layer : enc_layers) layer.init_weights(rng);
  for (auto& layer : dec_layers) layer.init_weights(rng);
  out_proj.init_weights(rng);
}

void Seq2SeqModel::apply_init_noise(double lambda, Rng& rng) {
  if (lambda == 0.0) return;
  for (Parameter* p : parameters()) {
    const auto n = static_cast<double>(p->value.size());
    double mean = p->value.mean();
    double sigma = std::sqrt((p->value.array() - mean).square().sum() / n);
    if (sigma == 0.0) continue;
    for (int r = 0; r < p->value.rows(); ++r)
      for (int c = 0; c < p->value.cols(); ++c)
        p->value(r, c) += rng.uniform(-lambda * sigma, lambda * sigma);
  }
}

Matrix Seq2SeqModel::embed(const std::vector<int>& ids, const Parameter& pos) const {
  Matrix x(static_cast<int>(ids.size()), config_.d_model);
  for (int t = 0; t < static_cast<int>(ids.size()); ++t)
    x.row(t) = tok_emb.value.row(ids[t]) + pos.value.row(t);
  return x;
}

void Seq2SeqModel::check_ids(const std::vector<int>& ids) const {
  if (static_cast<int>(ids.size()) > config_.max_seq_len)
    throw ContractError("sequence length " + std::to_string(ids.size()) +
                        " exceeds max_seq_len " +
                        std::to_string(config_.max_seq_len));
  for (int id : ids)
    if (id < 0 || id >= vocab_dim_)
      throw ContractError("token id " + std::to_string(id) +
                          " outside the vocabulary");
}

Matrix Seq2SeqModel::encode(const std::vector<int>& src, const BandTensor* band,
                            const ForwardMode& fm, EncoderCache* cache,
                            int trace_layer, AttentionTrace* trace) const {
  if (src.empty()) throw ContractError("encode: empty source");
  check_ids(src);
  Matrix x = embed(src, pos_enc);
  if (cache != nullptr) {
    cache->x0 = x;
    cache->src = src;
    cache->layers.resize(enc_layers.size());
  }
  for (std::size_t i = 0; i < enc_layers.size(); ++i) {
    AttentionTrace* layer_trace =
        (trace != nullptr && static_cast<int>(i) == trace_layer) ? trace : nullptr;
    x = enc_layers[i].forward(x, band, config_.ldd_mode, fm,
                              cache ? &cache->layers[i] : nullptr, layer_trace);
  }
  return enc_final_ln.forward(x, cache ? &cache->final_ln : nullptr);
}

double Seq2SeqModel::forward_loss(const std::vector<int>& src,
                                  const BandTensor* band,
                                  const std::vector<int>& tgt,
                                  const ForwardMode& fm, ModelCache* cache) const {
  if (tgt.empty()) throw ContractError("forward_loss: empty target");
  check_ids(tgt);

  std::vector<int> dec_in;
  dec_in.reserve(tgt.size() + 1);
  dec_in.push_back(Vocabulary::kBos);
  dec_in.insert(dec_in.end(), tgt.begin(), tgt.end());
  std::vector<int> labels = tgt;
  labels.push_back(Vocabulary::kEos);
  check_ids(dec_in);

  Matrix enc_out = encode(src, band, fm, cache ? &cache->enc : nullptr);
  Matrix x = embed(dec_in, pos_dec);
  if (cache != nullptr) {
    cache->enc_out = enc_out;
    cache->dec_x0 = x;
    cache->dec_layers.resize(dec_layers.size());
    cache->dec_in = dec_in;
    cache->labels = labels;
  }
  for (std::size_t i = 0; i < dec_layers.size(); ++i)
    x = dec_layers[i].forward(x, enc_out, fm,
                              cache ? &cache->dec_layers[i] : nullptr);
  Matrix dec_out = dec_final_ln.forward(x, cache ? &cache->dec_final_ln : nullptr);
  Matrix logits = out_proj.forward(dec_out);

  const int L = static_cast<int>(labels.size());
  Matrix probs(L, vocab_dim_);
  double loss = 0.0;
  for (int t = 0; t < L; ++t) {
    double m = logits.row(t).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(t).array() - m).exp();
    double z = e.sum();
    probs.row(t) = e / z;
    loss -= logits(t, labels[t]) - m - std::log(z);
  }
  loss /= L;
  if (cache != nullptr) {
    cache->dec_out = std::move(dec_out);
    cache->probs = std::move(probs);
  }
  return loss;
}

void Seq2SeqModel::backward(const ModelCache& cache) {
  const int L = static_cast<int>(cache.labels.size());
  Matrix d_logits = cache.probs;
  for (int t = 0; t < L; ++t) d_logits(t, cache.labels[t]) -= 1.0;
  d_logits /= static_cast<double>(L);

  Matrix d_dec_out = out_proj.backward(d_logits, cache.dec_out);
  Matrix dx = dec_final_ln.backward(d_dec_out, cache.dec_final_ln);

  Matrix d_enc_out = Matrix::Zero(cache.enc_out.rows(), cache.enc_out.cols());
  for (int i = static_cast<int>(dec_layers.size()) - 1; i >= 0; --i)
    dx = dec_layers[i].backward(dx, cache.dec_layers[i], d_enc_out);

  // Decoder input embeddings.
  for (int t = 0; t < static_cast<int>(cache.dec_in.size()); ++t) {
    tok_emb.grad.row(cache.dec_in[t]) += dx.row(t);
    pos_dec.grad.row(t) += dx.row(t);
  }

  // Encoder stack.
  Matrix de = enc_final_ln.backward(d_enc_out, cache.enc.final_ln);
  for (int i = static_cast<int>(enc_layers.size()) - 1; i >= 0; --i)
    de = enc_layers[i].backward(de, cache.enc.layers[i]);
  for (int t = 0; t < static_cast<int>(cache.enc.src.size()); ++t) {
    tok_emb.grad.row(cache.enc.src[t]) += de.row(t);
    pos_enc.grad.row(t) += de.row(t);
  }
}

Eigen::VectorXd Seq2SeqModel::next_token_log_probs(
    const Matrix& enc_out, const std::vector<int>& prefix) const {
  if (prefix.empty() || prefix.front() != Vocabulary::kBos)
    throw ContractError("decoder prefix must start with <s>");
  check_ids(prefix);
  ForwardMode fm;  // inference
  Matrix x = embed(prefix, pos_dec);
  for (const auto& layer : dec_layers) x = layer.forward(x, enc_out, fm);
  Matrix dec_out = dec_final_ln.forward(x);
  Eigen::RowVectorXd logits =
      out_proj.forward(dec_out.bottomRows(1)).row(0);
  double m = logits.maxCoeff();
  double z = std::log((logits.array() - m).exp().sum());
  return (logits.transpose().array() - m - z).matrix();
}

ParameterRefs Seq2SeqModel::parameters() {
  ParameterRefs refs = {&tok_emb, &pos_enc, &pos_dec};
  for (auto& layer : enc_layers)
    for (auto* p : layer.parameters()) refs.push_back(p);
  for (auto* p : enc_final_ln.parameters()) refs.push_back(p);
  for (auto& layer : dec_layers)
    for (auto* p : layer.parameters()) refs.push_back(p);
  for (auto* p : dec_final_ln.parameters()) refs.push_back(p);
  for (auto* p : out_proj.parameters()) refs.push_back(p);
  return refs;
}

void Seq2SeqModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

}  // namespace rstattn
