#include "rstattn/attention.hpp"

#include <cmath>

#include "rstattn/errors.hpp"

namespace rstattn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_band(const BandTensor* band, int heads, int T, int window,
                int dilation, LddMode mode) {
  if (mode == LddMode::off) return;
  if (band == nullptr)
    throw ContractError("attention: ldd band required for mode " + to_string(mode));
  if (band->heads != heads || band->seq_len != T || band->window != window ||
      band->dilation != dilation) {
    throw ContractError("attention: ldd band shape mismatch");
  }
}

}  // namespace

Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      mask(r, c) = rng.uniform() >= rate ? scale : 0.0;
  return mask;
}

AttentionLayer::AttentionLayer(const std::string& name, int d_model, int heads,
                               int window, int dilation, double dropout,
                               bool with_global)
    : d_model_(d_model),
      heads_(heads),
      window_(window),
      dilation_(dilation),
      dropout_(dropout),
      with_global_(with_global) {
  const int d = d_model / heads;
  for (int h = 0; h < heads; ++h) {
    std::string p = name + ".h" + std::to_string(h);
    wq.emplace_back(p + ".wq", d_model, d);
    wk.emplace_back(p + ".wk", d_model, d);
    wv.emplace_back(p + ".wv", d_model, d);
    bq.emplace_back(p + ".bq", 1, d);
    bk.emplace_back(p + ".bk", 1, d);
    bv.emplace_back(p + ".bv", 1, d);
  }
  wo = Parameter(name + ".wo", d_model, d_model);
  bo = Parameter(name + ".bo", 1, d_model);
  if (with_global_) {
    for (int h = 0; h < heads; ++h) {
      std::string p = name + ".h" + std::to_string(h);
      wq_g.emplace_back(p + ".wq_g", d_model, d);
      wk_g.emplace_back(p + ".wk_g", d_model, d);
      wv_g.emplace_back(p + ".wv_g", d_model, d);
      bq_g.emplace_back(p + ".bq_g", 1, d);
      bk_g.emplace_back(p + ".bk_g", 1, d);
      bv_g.emplace_back(p + ".bv_g", 1, d);
    }
  }
}

ParameterRefs AttentionLayer::parameters() {
  ParameterRefs refs;
  for (int h = 0; h < heads_; ++h) {
    refs.push_back(&wq[h]);
    refs.push_back(&bq[h]);
    refs.push_back(&wk[h]);
    refs.push_back(&bk[h]);
    refs.push_back(&wv[h]);
    refs.push_back(&bv[h]);
  }
  refs.push_back(&wo);
  refs.push_back(&bo);
  if (with_global_) {
    for (int h = 0; h < heads_; ++h) {
      refs.push_back(&wq_g[h]);
      refs.push_back(&bq_g[h]);
      refs.push_back(&wk_g[h]);
      refs.push_back(&bk_g[h]);
      refs.push_back(&wv_g[h]);
      refs.push_back(&bv_g[h]);
    }
  }
  return refs;
}

void AttentionLayer::init_weights(Rng& rng, double stddev) {
  auto fill = [&](Parameter& p) {
    for (int r = 0; r < p.value.rows(); ++r)
      for (int c = 0; c < p.value.cols(); ++c) p.value(r, c) = rng.normal(0.0, stddev);
  };
  for (int h = 0; h < heads_; ++h) {
    fill(wq[h]);
    fill(wk[h]);
    fill(wv[h]);
  }
  fill(wo);
  // Global projections start as exact copies of the sliding ones.
  if (with_global_) {
    for (int h = 0; h < heads_; ++h) {
      wq_g[h].value = wq[h].value;
      wk_g[h].value = wk[h].value;
      wv_g[h].value = wv[h].value;
      bq_g[h].value = bq[h].value;
      bk_g[h].value = bk[h].value;
      bv_g[h].value = bv[h].value;
    }
  }
}

std::vector<Matrix> AttentionLayer::project(
    const Matrix& x, const std::vector<Parameter>& w,
    const std::vector<Parameter>& b) const {
  std::vector<Matrix> out(heads_);
  for (int h = 0; h < heads_; ++h)
    out[h] = (x * w[h].value).rowwise() + b[h].value.row(0);
  return out;
}

Matrix AttentionLayer::forward(const Matrix& x, const BandTensor* ldd_band,
                               LddMode mode, const ForwardMode& fm, Cache* cache,
                               AttentionTrace* trace) const {
  const int T = static_cast<int>(x.rows());
  if (static_cast<int>(x.cols()) != d_model_)
    throw ContractError("attention: input width must equal d_model");
  check_band(ldd_band, heads_, T, window_, dilation_, mode);
  const bool drop = fm.training && dropout_ > 0.0;
  if (drop && fm.rng == nullptr)
    throw ContractError("attention: training forward needs an rng");

  const bool wac = mode == LddMode::wac;
  std::vector<Matrix> Q, K;
  if (!wac || trace != nullptr) {
    Q = project(x, wq, bq);
    K = project(x, wk, bk);
  }
  std::vector<Matrix> V = project(x, wv, bv);

  BandTensor scores;
  if (!Q.empty()) scores = banded_scores(Q, K, window_, dilation_);

  BandTensor pre_softmax;
  if (wac) {
    pre_softmax = *ldd_band;
  } else if (mode == LddMode::off) {
    pre_softmax = scores;
  } else {
    pre_softmax = inject_ldd(scores, *ldd_band);
  }
  BandTensor weights = band_softmax(pre_softmax);

  BandTensor kept;
  BandTensor dropped = weights;
  if (drop) {
    kept = BandTensor(heads_, T, window_, dilation_);
    const double scale = 1.0 / (1.0 - dropout_);
    for (int h = 0; h < heads_; ++h)
      for (int t = 0; t < T; ++t)
        for (int k = 0; k <= window_; ++k)
          if (kept.slot_valid(t, k)) {
            double keep = fm.rng->uniform() >= dropout_ ? scale : 0.0;
            kept.at(h, t, k) = keep;
            dropped.at(h, t, k) *= keep;
          }
  }

  std::vector<Matrix> head_out = band_value_product(dropped, V);
  Matrix concat(T, d_model_);
  const int d = d_model_ / heads_;
  for (int h = 0; h < heads_; ++h) concat.middleCols(h * d, d) = head_out[h];

  Matrix y = (concat * wo.value).rowwise() + bo.value.row(0);
  Matrix out_kept;
  if (drop) {
    out_kept = dropout_mask(T, d_model_, dropout_, *fm.rng);
    y = y.cwiseProduct(out_kept);
  }

  if (trace != nullptr) {
    trace->scores = scores;
    trace->injected = pre_softmax;
    trace->weights = weights;
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->scores = std::move(scores);
    cache->weights = std::move(weights);
    cache->kept = std::move(kept);
    cache->concat = std::move(concat);
    cache->out_kept = std::move(out_kept);
    cache->mode = mode;
    cache->band = ldd_band;
  }
  return y;
}

Matrix AttentionLayer::backward(const Matrix& dY, const Cache& cache) {
  const int T = static_cast<int>(cache.x.rows());
  const int d = d_model_ / heads_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool dropped = cache.out_kept.size() > 0;
  const bool wac = cache.mode == LddMode::wac;
  const bool injected =
      cache.mode == LddMode::with_relations ||
      cache.mode == LddMode::without_relations || cache.mode == LddMode::ria;

  Matrix dy = dropped ? dY.cwiseProduct(cache.out_kept).eval() : dY;
  wo.grad += cache.concat.transpose() * dy;
  bo.grad += dy.colwise().sum();
  Matrix d_concat = dy * wo.value.transpose();

  Matrix dx = Matrix::Zero(T, d_model_);
  const BandTensor& N = cache.weights;
  for (int h = 0; h < heads_; ++h) {
    auto dO = d_concat.middleCols(h * d, d);
    Matrix dV = Matrix::Zero(T, d);
    // dD and row-wise softmax backward over the band.
    Matrix dQ, dK;
    if (!wac) {
      dQ = Matrix::Zero(T, d);
      dK = Matrix::Zero(T, d);
    }
    for (int t = 0; t < T; ++t) {
      // First pass: dN and the softmax inner product.
      double inner = 0.0;
      std::vector<double> dN(N.slots(), 0.0);
      for (int k = 0; k <= window_; ++k) {
        if (!N.slot_valid(t, k)) continue;
        int j = N.target(t, k);
        double keep = cache.kept.values.empty() ? 1.0 : cache.kept.at(h, t, k);
        double dD = dO.row(t).dot(cache.V[h].row(j));
        dV.row(j) += (N.at(h, t, k) * keep) * dO.row(t);
        dN[k] = dD * keep;
        inner += dN[k] * N.at(h, t, k);
      }
      if (wac) continue;  // the band is constant: nothing flows further back
      for (int k = 0; k <= window_; ++k) {
        if (!N.slot_valid(t, k)) continue;
        int j = N.target(t, k);
        double dP = N.at(h, t, k) * (dN[k] - inner);
        double dS = injected ? dP * cache.band->at(h, t, k) : dP;
        dQ.row(t) += dS * inv_sqrt_d * cache.K[h].row(j);
        dK.row(j) += dS * inv_sqrt_d * cache.Q[h].row(t);
      }
    }
    if (!wac) {
      wq[h].grad += cache.x.transpose() * dQ;
      bq[h].grad += dQ.colwise().sum();
      wk[h].grad += cache.x.transpose() * dK;
      bk[h].grad += dK.colwise().sum();
      dx += dQ * wq[h].value.transpose();
      dx += dK * wk[h].value.transpose();
    }
    wv[h].grad += cache.x.transpose() * dV;
    bv[h].grad += dV.colwise().sum();
    dx += dV * wv[h].value.transpose();
  }
  return dx;
}

Matrix AttentionLayer::global_forward(const Matrix& x,
                                      const std::vector<int>& global_tokens,
                                      const BandTensor* ldd_band, LddMode mode,
                                      const ForwardMode& fm) const {
  if (global_tokens.empty())
    return forward(x, ldd_band, mode, ForwardMode{false, fm.rng});
  if (!with_global_)
    throw ContractError("attention: layer built without global projections");
  const int T = static_cast<int>(x.rows());
  std::vector<bool> is_global(T, false);
  for (int g : global_tokens) {
    if (g < 0 || g >= T)
      throw ContractError("attention: global token index out of range");
    is_global[g] = true;
  }
  check_band(ldd_band, heads_, T, window_, dilation_, mode);

  std::vector<Matrix> Q = project(x, wq, bq);
  std::vector<Matrix> K = project(x, wk, bk);
  std::vector<Matrix> V = project(x, wv, bv);
  std::vector<Matrix> Qg = project(x, wq_g, bq_g);
  std::vector<Matrix> Kg = project(x, wk_g, bk_g);
  std::vector<Matrix> Vg = project(x, wv_g, bv_g);

  BandTensor scores = banded_scores(Q, K, window_, dilation_);
  BandTensor pre_softmax;
  if (mode == LddMode::wac) {
    pre_softmax = *ldd_band;
  } else if (mode == LddMode::off) {
    pre_softmax = scores;
  } else {
    pre_softmax = inject_ldd(scores, *ldd_band);
  }

  const int d = d_model_ / heads_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix concat(T, d_model_);
  for (int h = 0; h < heads_; ++h) {
    Matrix head_out = Matrix::Zero(T, d);
    for (int t = 0; t < T; ++t) {
      if (is_global[t]) {
        // Dense row under the global projections, replacing the sliding row.
        Eigen::VectorXd row_scores(T);
        for (int j = 0; j < T; ++j)
          row_scores(j) = Qg[h].row(t).dot(Kg[h].row(j)) * inv_sqrt_d;
        double m = row_scores.maxCoeff();
        Eigen::VectorXd e = (row_scores.array() - m).exp();
        e /= e.sum();
        head_out.row(t) = e.transpose() * Vg[h];
        continue;
      }
      // Sliding window extended by out-of-window global keys.
      double m = kNegInf;
      for (int k = 0; k <= window_; ++k)
        if (pre_softmax.slot_valid(t, k)) m = std::max(m, pre_softmax.at(h, t, k));
      std::vector<std::pair<int, double>> extra;  // (token, score)
      for (int g : global_tokens) {
        int offset = g - t;
        bool in_window = offset % dilation_ == 0 &&
                         std::abs(offset) <= (window_ / 2) * dilation_;
        if (in_window) continue;
        double s = Q[h].row(t).dot(K[h].row(g)) * inv_sqrt_d;
        extra.emplace_back(g, s);
        m = std::max(m, s);
      }
      double denom = 0.0;
      for (int k = 0; k <= window_; ++k)
        if (pre_softmax.slot_valid(t, k))
          denom += std::exp(pre_softmax.at(h, t, k) - m);
      for (auto& [g, s] : extra) denom += std::exp(s - m);
      for (int k = 0; k <= window_; ++k) {
        if (!pre_softmax.slot_valid(t, k)) continue;
        int j = pre_softmax.target(t, k);
        head_out.row(t) +=
            std::exp(pre_softmax.at(h, t, k) - m) / denom * V[h].row(j);
      }
      for (auto& [g, s] : extra)
        head_out.row(t) += std::exp(s - m) / denom * V[h].row(g);
    }
    concat.middleCols(h * d, d) = head_out;
  }
  return (concat * wo.value).rowwise() + bo.value.row(0);
}

DenseAttention::DenseAttention(const std::string& name, int d_model, int heads,
                               bool causal, double dropout)
    : d_model_(d_model), heads_(heads), causal_(causal), dropout_(dropout) {
  const int d = d_model / heads;
  for (int h = 0; h < heads; ++h) {
    std::string p = name + ".h" + std::to_string(h);
    wq.emplace_back(p + ".wq", d_model, d);
    wk.emplace_back(p + ".wk", d_model, d);
    wv.emplace_back(p + ".wv", d_model, d);
    bq.emplace_back(p + ".bq", 1, d);
    bk.emplace_back(p + ".bk", 1, d);
    bv.emplace_back(p + ".bv", 1, d);
  }
  wo = Parameter(name + ".wo", d_model, d_model);
  bo = Parameter(name + ".bo", 1, d_model);
}

ParameterRefs DenseAttention::parameters() {
  ParameterRefs refs;
  for (int h = 0; h < heads_; ++h) {
    refs.push_back(&wq[h]);
    refs.push_back(&bq[h]);
    refs.push_back(&wk[h]);
    refs.push_back(&bk[h]);
    refs.push_back(&wv[h]);
    refs.push_back(&bv[h]);
  }
  refs.push_back(&wo);
  refs.push_back(&bo);
  return refs;
}

void DenseAttention::init_weights(Rng& rng, double stddev) {
  auto fill = [&](Parameter& p) {
    for (int r = 0; r < p.value.rows(); ++r)
      for (int c = 0; c < p.value.cols(); ++c) p.value(r, c) = rng.normal(0.0, stddev);
  };
  for (int h = 0; h < heads_; ++h) {
    fill(wq[h]);
    fill(wk[h]);
    fill(wv[h]);
  }
  fill(wo);
}

Matrix DenseAttention::forward(const Matrix& x_q, const Matrix& x_kv,
                               const ForwardMode& fm, Cache* cache) const {
  const int Tq = static_cast<int>(x_q.rows());
  const int Tk = static_cast<int>(x_kv.rows());
  const int d = d_model_ / heads_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool drop = fm.training && dropout_ > 0.0;
  if (drop && fm.rng == nullptr)
    throw ContractError("attention: training forward needs an rng");

  std::vector<Matrix> Q(heads_), K(heads_), V(heads_), W(heads_), kept;
  if (drop) kept.resize(heads_);
  Matrix concat(Tq, d_model_);
  for (int h = 0; h < heads_; ++h) {
    Q[h] = (x_q * wq[h].value).rowwise() + bq[h].value.row(0);
    K[h] = (x_kv * wk[h].value).rowwise() + bk[h].value.row(0);
    V[h] = (x_kv * wv[h].value).rowwise() + bv[h].value.row(0);
    Matrix S = Q[h] * K[h].transpose() * inv_sqrt_d;
    Matrix N(Tq, Tk);
    for (int t = 0; t < Tq; ++t) {
      int limit = causal_ ? std::min(t + 1, Tk) : Tk;
      if (limit <= 0) throw ContractError("attention: empty causal row");
      double m = S.row(t).head(limit).maxCoeff();
      double denom = 0.0;
      for (int j = 0; j < limit; ++j) {
        double e = std::exp(S(t, j) - m);
        N(t, j) = e;
        denom += e;
      }
      for (int j = 0; j < limit; ++j) N(t, j) /= denom;
      for (int j = limit; j < Tk; ++j) N(t, j) = 0.0;
    }
    W[h] = N;
    Matrix D = N;
    if (drop) {
      kept[h] = dropout_mask(Tq, Tk, dropout_, *fm.rng);
      D = D.cwiseProduct(kept[h]);
    }
    concat.middleCols(h * d, d) = D * V[h];
  }

  Matrix y = (concat * wo.value).rowwise() + bo.value.row(0);
  Matrix out_kept;
  if (drop) {
    out_kept = dropout_mask(Tq, d_model_, dropout_, *fm.rng);
    y = y.cwiseProduct(out_kept);
  }
  if (cache != nullptr) {
    cache->x_q = x_q;
    cache->x_kv = x_kv;
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->weights = std::move(W);
    cache->kept = std::move(kept);
    cache->concat = std::move(concat);
    cache->out_kept = std::move(out_kept);
  }
  return y;
}

Matrix DenseAttention::backward(const Matrix& dY, const Cache& cache,
                                Matrix& dx_kv) {
  const int Tq = static_cast<int>(cache.x_q.rows());
  const int d = d_model_ / heads_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool dropped = cache.out_kept.size() > 0;

  Matrix dy = dropped ? dY.cwiseProduct(cache.out_kept).eval() : dY;
  wo.grad += cache.concat.transpose() * dy;
  bo.grad += dy.colwise().sum();
  Matrix d_concat = dy * wo.value.transpose();

  Matrix dx_q = Matrix::Zero(Tq, d_model_);
  for (int h = 0; h < heads_; ++h) {
    Matrix dO = d_concat.middleCols(h * d, d);
    const Matrix& N = cache.weights[h];
    Matrix D = cache.kept.empty() ? N : N.cwiseProduct(cache.kept[h]).eval();
    Matrix dV = D.transpose() * dO;
    Matrix dD = dO * cache.V[h].transpose();
    Matrix dN = cache.kept.empty() ? dD : dD.cwiseProduct(cache.kept[h]).eval();
    // Row-wise softmax backward; masked columns have N = 0 and drop out.
    Matrix dS = N.cwiseProduct(dN);
    Eigen::VectorXd inner = dS.rowwise().sum();
    dS = N.cwiseProduct(dN.colwise() - inner);
    dS *= inv_sqrt_d;

    Matrix dQ = dS * cache.K[h];
    Matrix dK = dS.transpose() * cache.Q[h];
    wq[h].grad += cache.x_q.transpose() * dQ;
    bq[h].grad += dQ.colwise().sum();
    wk[h].grad += cache.x_kv.transpose() * dK;
    bk[h].grad += dK.colwise().sum();
    wv[h].grad += cache.x_kv.transpose() * dV;
    bv[h].grad += dV.colwise().sum();
    dx_q += dQ * wq[h].value.transpose();
    dx_kv += dK * wk[h].value.transpose();
    dx_kv += dV * wv[h].value.transpose();
  }
  return dx_q;
}

}  // namespace rstattn
