#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wklm/corpus.hpp"
#include "wklm/rng.hpp"

namespace wklm {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ff_dim = 256;
  int vocab = 0;
  int max_len = 128;
  double final_dropout = 0.05;
  int pad_token = 0;
  int unk_token = 1;
  int bos_token = 2;
  int eos_token = 3;
  int mask_token = 4;

  // Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gamma, ln1_beta;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gamma, ln2_beta;
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool decay;  // false for biases and layer-norm parameters
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
  bool decay;
};

// Every weight of the encoder and both heads. Linear maps are stored
// input-major (y = x W + b); biases and layer-norm vectors are 1 x n.
struct ModelParams {
  Tensor token_embedding;     // vocab x hidden
  Tensor position_embedding;  // max_len x hidden
  Tensor embedding_ln_gamma, embedding_ln_beta;
  std::vector<LayerParams> layers;
  Tensor replacement_weight;  // 1 x 2*hidden: [left boundary | right boundary]
  Tensor replacement_bias;    // 1 x 1
  Tensor mlm_weight;          // hidden x vocab
  Tensor mlm_bias;            // 1 x vocab

  static ModelParams zeros(const ModelConfig& config);
  // Token embeddings ~ N(0, 0.02^2), position embeddings a sinusoid table of
  // the same scale, the replacement head zero, other weights
  // ~ N(0, 1/fan_in); biases zero; layer-norm gains one.
  static ModelParams initialize(const ModelConfig& config, Rng& rng);

  // Fixed traversal order shared by optimizers, checkpoints and gradient checks.
  std::vector<ParamRef> refs();
  std::vector<ConstParamRef> refs() const;

  void set_zero();
  // this += scale * other
  void add_scaled(const ModelParams& other, double scale);
  bool all_finite() const;
  std::size_t parameter_count() const;
};

enum class Mode { inference, training };

struct LayerCache {
  Tensor input;
  Tensor q, k, v;
  std::vector<Tensor> probs;  // one T x T attention matrix per head
  Tensor context;
  Tensor ln1_xhat;
  Eigen::VectorXd ln1_rstd;
  Tensor ln1_out;
  Tensor ff_pre, ff_act;
  Tensor ln2_xhat;
  Eigen::VectorXd ln2_rstd;
};

// Activations retained by encode() for exact backpropagation.
struct ForwardTrace {
  std::vector<int> tokens;
  std::vector<std::uint8_t> attention_mask;
  Tensor embedding_xhat;
  Eigen::VectorXd embedding_rstd;
  std::vector<LayerCache> layers;
  Tensor dropout_scale;  // empty when no dropout was applied
  bool valid = false;
};

struct Encoding {
  Tensor hidden;  // T x hidden, after final-layer dropout in training mode
  ForwardTrace trace;
};

// tokens must start with bos, end (before any padding) with eos, and fit in
// max_len. attention_mask marks real positions with 1; an empty mask means
// every position is real. Training mode applies inverted dropout to the
// final layer, drawing from *dropout_rng (required when dropout > 0).
Encoding encode(const ModelParams& params, const ModelConfig& config, std::span<const int> tokens,
                std::span<const std::uint8_t> attention_mask = {}, Mode mode = Mode::inference,
                Rng* dropout_rng = nullptr);

// Replacement head on a framed span: logit of the concatenated hidden states
// at span.start - 1 and span.end. The probability is that the mention is
// the original entity.
double replacement_logit(const ModelParams& params, const Tensor& hidden, Span framed);
double replacement_prob(const ModelParams& params, const Tensor& hidden, Span framed);

inline constexpr double kProbEpsilon = 1e-7;

// Negative mean log-likelihood of the labels; probabilities are clamped to
// [1e-7, 1 - 1e-7]. Zero for an empty list.
double replacement_loss(std::span<const double> probs, std::span<const MentionLabel> labels);

struct MlmTarget {
  std::size_t position;  // framed position
  int token;
};

Eigen::RowVectorXd mlm_logits(const ModelParams& params, const Tensor& hidden, std::size_t position);
// Mean cross-entropy at the target positions; zero when there are none.
double mlm_loss(const ModelParams& params, const Tensor& hidden, std::span<const MlmTarget> targets);

// Accumulates into `grads` the gradient of a scalar loss whose derivative
// with respect to the encoder output is d_hidden.
void backward(const ModelParams& params, const ModelConfig& config, const ForwardTrace& trace,
              const Tensor& d_hidden, ModelParams& grads);

struct MentionTarget {
  Span span;  // framed
  MentionLabel label;
};

// A framed training example: bos + tokens + eos.
struct Example {
  std::vector<int> tokens;
  std::vector<MentionTarget> mentions;
  std::vector<MlmTarget> masks;
};

struct ObjectiveWeights {
  double replacement = 1.0;
  double mlm = 1.0;
};

struct LossTerms {
  double replacement = 0.0;
  double mlm = 0.0;
  std::size_t mentions = 0;
  std::size_t correct = 0;  // mentions whose label the head predicts at threshold 1/2

  double total(const ObjectiveWeights& w) const { return w.replacement * replacement + w.mlm * mlm; }
};

// Forward pass plus both objectives. A term whose weight is zero is neither
// computed nor differentiated. When grads is non-null the gradient of
// grad_scale * total(weights) is accumulated into it.
LossTerms example_loss(const ModelParams& params, const ModelConfig& config, const Example& example,
                       const ObjectiveWeights& weights, Mode mode, Rng* dropout_rng,
                       ModelParams* grads = nullptr, double grad_scale = 1.0);

// Replacement-detection accuracy counts in inference mode.
LossTerms evaluate_replacement(const ModelParams& params, const ModelConfig& config,
                               const Example& example);

}  // namespace wklm
