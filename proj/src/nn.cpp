#include "wklm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace wklm {
namespace {

constexpr double kLayerNormEps = 1e-12;

Tensor zero_tensor(int rows, int cols) { return Tensor::Zero(rows, cols); }

Tensor normal(int rows, int cols, Rng& rng, double stddev) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = stddev * rng.normal();
  return t;
}

void add_bias(Tensor& x, const Tensor& bias) { x.rowwise() += bias.row(0); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& xhat,
                  Eigen::VectorXd& rstd) {
  const auto rows = x.rows();
  const auto cols = static_cast<double>(x.cols());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / cols;
    const auto centered = (x.row(r).array() - mean).eval();
    const double var = centered.square().sum() / cols;
    rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = centered * rstd(r);
  }
  Tensor y = xhat.array().rowwise() * gamma.row(0).array();
  add_bias(y, beta);
  return y;
}

// Returns dL/dx; accumulates gamma and beta gradients.
Tensor layer_norm_backward(const Tensor& dy, const Tensor& xhat, const Eigen::VectorXd& rstd,
                           const Tensor& gamma, Tensor& d_gamma, Tensor& d_beta) {
  d_gamma += dy.cwiseProduct(xhat).colwise().sum();
  d_beta += dy.colwise().sum();
  const Tensor dxhat = dy.array().rowwise() * gamma.row(0).array();
  const double cols = static_cast<double>(dy.cols());
  Tensor dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / cols;
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / cols;
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_span(const Tensor& hidden, Span framed) {
  if (framed.start < 1 || framed.end <= framed.start ||
      framed.end >= static_cast<std::size_t>(hidden.rows()))
    throw std::invalid_argument("replacement head: degenerate or unframed span");
}

// Sine/cosine table with per-entry standard deviation `scale`.
Tensor sinusoid_positions(int len, int dim, double scale) {
  Tensor out(len, dim);
  const double amplitude = scale * std::sqrt(2.0);
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < dim; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / dim);
      out(pos, i) = amplitude * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 0 || hidden <= 0 || heads <= 0 || ff_dim <= 0 || vocab <= 0 || max_len < 2)
    throw std::invalid_argument("model config: non-positive dimension");
  if (hidden % heads != 0) throw std::invalid_argument("model config: hidden not divisible by heads");
  if (!(final_dropout >= 0.0 && final_dropout < 1.0))
    throw std::invalid_argument("model config: final_dropout must lie in [0, 1)");
  for (int t : {pad_token, unk_token, bos_token, eos_token, mask_token})
    if (t < 0 || t >= vocab) throw std::invalid_argument("model config: special token out of range");
}

ModelParams ModelParams::zeros(const ModelConfig& c) {
  c.validate();
  ModelParams p;
  const int h = c.hidden;
  p.token_embedding = zero_tensor(c.vocab, h);
  p.position_embedding = zero_tensor(c.max_len, h);
  p.embedding_ln_gamma = zero_tensor(1, h);
  p.embedding_ln_beta = zero_tensor(1, h);
  p.layers.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : p.layers) {
    l.wq = zero_tensor(h, h);
    l.wk = zero_tensor(h, h);
    l.wv = zero_tensor(h, h);
    l.wo = zero_tensor(h, h);
    l.bq = l.bk = l.bv = l.bo = zero_tensor(1, h);
    l.ln1_gamma = l.ln1_beta = zero_tensor(1, h);
    l.w1 = zero_tensor(h, c.ff_dim);
    l.b1 = zero_tensor(1, c.ff_dim);
    l.w2 = zero_tensor(c.ff_dim, h);
    l.b2 = zero_tensor(1, h);
    l.ln2_gamma = l.ln2_beta = zero_tensor(1, h);
  }
  p.replacement_weight = zero_tensor(1, 2 * h);
  p.replacement_bias = zero_tensor(1, 1);
  p.mlm_weight = zero_tensor(h, c.vocab);
  p.mlm_bias = zero_tensor(1, c.vocab);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& c, Rng& rng) {
  ModelParams p = zeros(c);
  for (auto& ref : p.refs()) {
    const bool is_ln_gain = ref.name.ends_with("gamma");
    if (is_ln_gain) {
      ref.tensor->setOnes();
    } else if (ref.decay) {
      const auto rows = ref.tensor->rows(), cols = ref.tensor->cols();
      const bool embedding = ref.name.starts_with("embeddings.");
      const double fan_in = static_cast<double>(ref.tensor == &p.replacement_weight ? cols : rows);
      *ref.tensor = normal(static_cast<int>(rows), static_cast<int>(cols), rng,
                           embedding ? 0.02 : 1.0 / std::sqrt(fan_in));
    }
  }
  p.position_embedding = sinusoid_positions(c.max_len, c.hidden, 0.02);
  p.replacement_weight.setZero();
  return p;
}

std::vector<ParamRef> ModelParams::refs() {
  std::vector<ParamRef> out;
  out.push_back({"embeddings.token", &token_embedding, true});
  out.push_back({"embeddings.position", &position_embedding, true});
  out.push_back({"embeddings.ln.gamma", &embedding_ln_gamma, false});
  out.push_back({"embeddings.ln.beta", &embedding_ln_beta, false});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    out.push_back({p + "attn.wq", &l.wq, true});
    out.push_back({p + "attn.bq", &l.bq, false});
    out.push_back({p + "attn.wk", &l.wk, true});
    out.push_back({p + "attn.bk", &l.bk, false});
    out.push_back({p + "attn.wv", &l.wv, true});
    out.push_back({p + "attn.bv", &l.bv, false});
    out.push_back({p + "attn.wo", &l.wo, true});
    out.push_back({p + "attn.bo", &l.bo, false});
    out.push_back({p + "ln1.gamma", &l.ln1_gamma, false});
    out.push_back({p + "ln1.beta", &l.ln1_beta, false});
    out.push_back({p + "ff.w1", &l.w1, true});
    out.push_back({p + "ff.b1", &l.b1, false});
    out.push_back({p + "ff.w2", &l.w2, true});
    out.push_back({p + "ff.b2", &l.b2, false});
    out.push_back({p + "ln2.gamma", &l.ln2_gamma, false});
    out.push_back({p + "ln2.beta", &l.ln2_beta, false});
  }
  out.push_back({"replacement_head.weight", &replacement_weight, true});
  out.push_back({"replacement_head.bias", &replacement_bias, false});
  out.push_back({"mlm_head.weight", &mlm_weight, true});
  out.push_back({"mlm_head.bias", &mlm_bias, false});
  return out;
}

std::vector<ConstParamRef> ModelParams::refs() const {
  std::vector<ConstParamRef> out;
  for (const auto& r : const_cast<ModelParams*>(this)->refs()) out.push_back({r.name, r.tensor, r.decay});
  return out;
}

void ModelParams::set_zero() {
  for (auto& r : refs()) r.tensor->setZero();
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  auto mine = refs();
  const auto theirs = other.refs();
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].tensor += scale * *theirs[i].tensor;
}

bool ModelParams::all_finite() const {
  for (const auto& r : refs())
    if (!r.tensor->allFinite()) return false;
  return true;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& r : refs()) n += static_cast<std::size_t>(r.tensor->size());
  return n;
}

Encoding encode(const ModelParams& p, const ModelConfig& c, std::span<const int> tokens,
                std::span<const std::uint8_t> attention_mask, Mode mode, Rng* dropout_rng) {
  const auto len = static_cast<int>(tokens.size());
  if (len < 2) throw std::invalid_argument("encode: sequence shorter than bos + eos");
  if (len > c.max_len) throw std::invalid_argument("encode: sequence longer than max_len");
  if (!attention_mask.empty() && attention_mask.size() != tokens.size())
    throw std::invalid_argument("encode: attention mask length mismatch");
  for (int t : tokens)
    if (t < 0 || t >= c.vocab) throw std::invalid_argument("encode: token index out of range");

  Encoding enc;
  auto& tr = enc.trace;
  tr.tokens.assign(tokens.begin(), tokens.end());
  if (attention_mask.empty()) {
    tr.attention_mask.assign(tokens.size(), 1);
  } else {
    tr.attention_mask.assign(attention_mask.begin(), attention_mask.end());
  }
  int real = 0;
  while (real < len && tr.attention_mask[static_cast<std::size_t>(real)]) ++real;
  for (int i = real; i < len; ++i)
    if (tr.attention_mask[static_cast<std::size_t>(i)])
      throw std::invalid_argument("encode: padding must form a suffix");
  if (tokens[0] != c.bos_token || real < 2 || tokens[static_cast<std::size_t>(real - 1)] != c.eos_token)
    throw std::invalid_argument("encode: sequence must be framed by bos and eos");

  const int h = c.hidden;
  const int heads = c.heads;
  const int d = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor x(len, h);
  for (int t = 0; t < len; ++t)
    x.row(t) = p.token_embedding.row(tokens[static_cast<std::size_t>(t)]) + p.position_embedding.row(t);
  x = layer_norm(x, p.embedding_ln_gamma, p.embedding_ln_beta, tr.embedding_xhat, tr.embedding_rstd);

  tr.layers.resize(p.layers.size());
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const auto& l = p.layers[li];
    auto& cache = tr.layers[li];
    cache.input = x;
    cache.q = x * l.wq;
    add_bias(cache.q, l.bq);
    cache.k = x * l.wk;
    add_bias(cache.k, l.bk);
    cache.v = x * l.wv;
    add_bias(cache.v, l.bv);
    cache.context.resize(len, h);
    cache.probs.resize(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Tensor s = cache.q.middleCols(hd * d, d) * cache.k.middleCols(hd * d, d).transpose() * scale;
      for (int j = real; j < len; ++j) s.col(j).setConstant(-std::numeric_limits<double>::infinity());
      for (int i = 0; i < len; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      cache.context.middleCols(hd * d, d) = s * cache.v.middleCols(hd * d, d);
      cache.probs[static_cast<std::size_t>(hd)] = std::move(s);
    }
    Tensor attn = cache.context * l.wo;
    add_bias(attn, l.bo);
    cache.ln1_out = layer_norm(x + attn, l.ln1_gamma, l.ln1_beta, cache.ln1_xhat, cache.ln1_rstd);
    cache.ff_pre = cache.ln1_out * l.w1;
    add_bias(cache.ff_pre, l.b1);
    cache.ff_act = cache.ff_pre.unaryExpr([](double v) { return gelu(v); });
    Tensor ff = cache.ff_act * l.w2;
    add_bias(ff, l.b2);
    x = layer_norm(cache.ln1_out + ff, l.ln2_gamma, l.ln2_beta, cache.ln2_xhat, cache.ln2_rstd);
  }

  if (mode == Mode::training && c.final_dropout > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("encode: training mode needs a dropout rng");
    const double keep = 1.0 - c.final_dropout;
    tr.dropout_scale.resize(len, h);
    for (Eigen::Index i = 0; i < tr.dropout_scale.size(); ++i)
      tr.dropout_scale.data()[i] = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
    x = x.cwiseProduct(tr.dropout_scale);
  }
  enc.hidden = std::move(x);
  tr.valid = true;
  return enc;
}

double replacement_logit(const ModelParams& p, const Tensor& hidden, Span framed) {
  check_span(hidden, framed);
  const auto h = hidden.cols();
  return p.replacement_weight.leftCols(h).row(0).dot(hidden.row(static_cast<Eigen::Index>(framed.start - 1))) +
         p.replacement_weight.rightCols(h).row(0).dot(hidden.row(static_cast<Eigen::Index>(framed.end))) +
         p.replacement_bias(0, 0);
}

double replacement_prob(const ModelParams& p, const Tensor& hidden, Span framed) {
  return sigmoid(replacement_logit(p, hidden, framed));
}

double replacement_loss(std::span<const double> probs, std::span<const MentionLabel> labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("replacement_loss: size mismatch");
  if (probs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbEpsilon, 1.0 - kProbEpsilon);
    sum += labels[i] == MentionLabel::kept ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(probs.size());
}

Eigen::RowVectorXd mlm_logits(const ModelParams& p, const Tensor& hidden, std::size_t position) {
  return hidden.row(static_cast<Eigen::Index>(position)) * p.mlm_weight + p.mlm_bias.row(0);
}

double mlm_loss(const ModelParams& p, const Tensor& hidden, std::span<const MlmTarget> targets) {
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : targets) {
    if (t.position >= static_cast<std::size_t>(hidden.rows()))
      throw std::invalid_argument("mlm_loss: position out of range");
    const Eigen::RowVectorXd z = mlm_logits(p, hidden, t.position);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    sum += lse - z(t.token);
  }
  return sum / static_cast<double>(targets.size());
}

void backward(const ModelParams& p, const ModelConfig& c, const ForwardTrace& tr, const Tensor& d_hidden,
              ModelParams& g) {
  if (!tr.valid) throw std::invalid_argument("backward: missing forward trace");
  const auto len = static_cast<int>(tr.tokens.size());
  const int h = c.hidden;
  const int heads = c.heads;
  const int d = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor dx = tr.dropout_scale.size() ? Tensor(d_hidden.cwiseProduct(tr.dropout_scale)) : d_hidden;

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& l = p.layers[li];
    auto& gl = g.layers[li];
    const auto& cache = tr.layers[li];

    // Feed-forward block with residual into the second layer norm.
    const Tensor d_r2 = layer_norm_backward(dx, cache.ln2_xhat, cache.ln2_rstd, l.ln2_gamma, gl.ln2_gamma,
                                            gl.ln2_beta);
    gl.w2.noalias() += cache.ff_act.transpose() * d_r2;
    gl.b2 += d_r2.colwise().sum();
    Tensor d_u = d_r2 * l.w2.transpose();
    d_u = d_u.cwiseProduct(cache.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    gl.w1.noalias() += cache.ln1_out.transpose() * d_u;
    gl.b1 += d_u.colwise().sum();
    const Tensor d_y = d_r2 + d_u * l.w1.transpose();

    // Attention block with residual into the first layer norm.
    const Tensor d_r1 = layer_norm_backward(d_y, cache.ln1_xhat, cache.ln1_rstd, l.ln1_gamma, gl.ln1_gamma,
                                            gl.ln1_beta);
    gl.wo.noalias() += cache.context.transpose() * d_r1;
    gl.bo += d_r1.colwise().sum();
    const Tensor d_ctx = d_r1 * l.wo.transpose();

    Tensor dq(len, h), dk(len, h), dv(len, h);
    for (int hd = 0; hd < heads; ++hd) {
      const auto& pr = cache.probs[static_cast<std::size_t>(hd)];
      const auto d_ctx_h = d_ctx.middleCols(hd * d, d);
      const Tensor d_p = d_ctx_h * cache.v.middleCols(hd * d, d).transpose();
      dv.middleCols(hd * d, d) = pr.transpose() * d_ctx_h;
      const Eigen::VectorXd row_dot = d_p.cwiseProduct(pr).rowwise().sum();
      const Tensor d_s = (pr.array() * (d_p.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleCols(hd * d, d) = d_s * cache.k.middleCols(hd * d, d);
      dk.middleCols(hd * d, d) = d_s.transpose() * cache.q.middleCols(hd * d, d);
    }
    gl.wq.noalias() += cache.input.transpose() * dq;
    gl.bq += dq.colwise().sum();
    gl.wk.noalias() += cache.input.transpose() * dk;
    gl.bk += dk.colwise().sum();
    gl.wv.noalias() += cache.input.transpose() * dv;
    gl.bv += dv.colwise().sum();
    dx = d_r1 + dq * l.wq.transpose() + dk * l.wk.transpose() + dv * l.wv.transpose();
  }

  const Tensor d_emb = layer_norm_backward(dx, tr.embedding_xhat, tr.embedding_rstd, p.embedding_ln_gamma,
                                           g.embedding_ln_gamma, g.embedding_ln_beta);
  for (int t = 0; t < len; ++t) {
    g.token_embedding.row(tr.tokens[static_cast<std::size_t>(t)]) += d_emb.row(t);
    g.position_embedding.row(t) += d_emb.row(t);
  }
}

LossTerms example_loss(const ModelParams& p, const ModelConfig& c, const Example& ex,
                       const ObjectiveWeights& w, Mode mode, Rng* dropout_rng, ModelParams* grads,
                       double grad_scale) {
  auto enc = encode(p, c, ex.tokens, {}, mode, dropout_rng);
  const Tensor& hidden = enc.hidden;
  LossTerms out;
  Tensor d_hidden;
  if (grads) d_hidden = Tensor::Zero(hidden.rows(), hidden.cols());
  const auto h = hidden.cols();

  if (w.replacement != 0.0 && !ex.mentions.empty()) {
    const double n = static_cast<double>(ex.mentions.size());
    double sum = 0.0;
    for (const auto& m : ex.mentions) {
      const double prob = replacement_prob(p, hidden, m.span);
      const bool kept = m.label == MentionLabel::kept;
      const double clamped = std::clamp(prob, kProbEpsilon, 1.0 - kProbEpsilon);
      sum += kept ? std::log(clamped) : std::log(1.0 - clamped);
      ++out.mentions;
      if ((prob >= 0.5) == kept) ++out.correct;
      if (grads && clamped == prob) {
        const double dz = grad_scale * w.replacement * (prob - (kept ? 1.0 : 0.0)) / n;
        const auto left = static_cast<Eigen::Index>(m.span.start - 1);
        const auto right = static_cast<Eigen::Index>(m.span.end);
        grads->replacement_weight.leftCols(h) += dz * hidden.row(left);
        grads->replacement_weight.rightCols(h) += dz * hidden.row(right);
        grads->replacement_bias(0, 0) += dz;
        d_hidden.row(left) += dz * p.replacement_weight.leftCols(h);
        d_hidden.row(right) += dz * p.replacement_weight.rightCols(h);
      }
    }
    out.replacement = -sum / n;
  }

  if (w.mlm != 0.0 && !ex.masks.empty()) {
    const double n = static_cast<double>(ex.masks.size());
    double sum = 0.0;
    for (const auto& t : ex.masks) {
      const auto pos = static_cast<Eigen::Index>(t.position);
      const Eigen::RowVectorXd z = mlm_logits(p, hidden, t.position);
      const double mx = z.maxCoeff();
      Eigen::RowVectorXd probs = (z.array() - mx).exp();
      const double total = probs.sum();
      probs /= total;
      sum += mx + std::log(total) - z(t.token);
      if (grads) {
        Eigen::RowVectorXd dz = probs;
        dz(t.token) -= 1.0;
        dz *= grad_scale * w.mlm / n;
        grads->mlm_weight.noalias() += hidden.row(pos).transpose() * dz;
        grads->mlm_bias.row(0) += dz;
        d_hidden.row(pos) += dz * p.mlm_weight.transpose();
      }
    }
    out.mlm = sum / n;
  }

  if (grads && (out.mentions || (w.mlm != 0.0 && !ex.masks.empty())))
    backward(p, c, enc.trace, d_hidden, *grads);
  return out;
}

LossTerms evaluate_replacement(const ModelParams& p, const ModelConfig& c, const Example& ex) {
  LossTerms out;
  if (ex.mentions.empty()) return out;
  const auto enc = encode(p, c, ex.tokens);
  std::vector<double> probs;
  std::vector<MentionLabel> labels;
  for (const auto& m : ex.mentions) {
    const double prob = replacement_prob(p, enc.hidden, m.span);
    probs.push_back(prob);
    labels.push_back(m.label);
    ++out.mentions;
    if ((prob >= 0.5) == (m.label == MentionLabel::kept)) ++out.correct;
  }
  out.replacement = replacement_loss(probs, labels);
  return out;
}

}  // namespace wklm
