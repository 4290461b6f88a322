#include "wklm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "wklm/corpus_io.hpp"
#include "wklm/error.hpp"
#include "wklm/manifest.hpp"
#include "wklm/parallel.hpp"
#include "wklm/text.hpp"

namespace wklm {
namespace {

constexpr std::size_t kBucketBatches = 50;  // batches per length-sorted window

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::joint:
      return "joint";
    case Objective::replacement_only:
      return "replacement_only";
    case Objective::mlm_only:
      return "mlm_only";
  }
  return "joint";
}

Objective parse_objective(const std::string& name) {
  if (name == "joint") return Objective::joint;
  if (name == "replacement_only") return Objective::replacement_only;
  if (name == "mlm_only") return Objective::mlm_only;
  throw std::invalid_argument("unknown objective: " + name);
}

ObjectiveWeights weights_for(Objective objective) {
  switch (objective) {
    case Objective::replacement_only:
      return {1.0, 0.0};
    case Objective::mlm_only:
      return {0.0, 1.0};
    case Objective::joint:
      break;
  }
  return {1.0, 1.0};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw std::invalid_argument("mask_ratio must lie in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_updates < 0) throw std::invalid_argument("max_updates must be >= 0");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
    throw std::invalid_argument("heldout_fraction must lie in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

AdamState AdamState::zeros(const ModelConfig& config) {
  return {ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& c) {
  auto p = params.refs();
  const auto g = grads.refs();
  auto m = state.first_moment.refs();
  auto v = state.second_moment.refs();
  for (const auto& r : g) {
    if (!r.tensor->allFinite())
      throw NumericalError("non-finite gradient in " + r.name + " at update " + std::to_string(state.step + 1));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.learning_rate * c.weight_decay;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& mi = *m[i].tensor;
    auto& vi = *v[i].tensor;
    const auto& gi = *g[i].tensor;
    mi = c.beta1 * mi + (1.0 - c.beta1) * gi;
    vi = c.beta2 * vi + (1.0 - c.beta2) * gi.cwiseProduct(gi);
    auto& w = *p[i].tensor;
    w.array() -= c.learning_rate * (mi.array() / correction1) /
                 ((vi.array() / correction2).sqrt() + c.adam_epsilon);
    if (p[i].decay && c.weight_decay != 0.0) w *= decay;
  }
}

void TrainLog::write_tsv(std::ostream& out, bool with_seconds) const {
  out << "update\tloss_repl\tloss_mlm\tacc_heldout";
  if (with_seconds) out << "\tseconds";
  out << '\n';
  for (const auto& r : records) {
    out << r.update << '\t' << format_double(r.loss_repl) << '\t' << format_double(r.loss_mlm) << '\t'
        << format_double(r.acc_heldout);
    if (with_seconds) out << '\t' << format_double(r.seconds);
    out << '\n';
  }
}

Example make_example(const TrainingInstance& inst, const Vocabulary& vocab, const ModelConfig& config) {
  Example ex;
  ex.tokens.reserve(inst.tokens.size() + 2);
  ex.tokens.push_back(config.bos_token);
  for (const auto& t : inst.tokens) ex.tokens.push_back(vocab.id(t));
  ex.tokens.push_back(config.eos_token);
  for (const auto& m : inst.mentions) ex.mentions.push_back({{m.span.start + 1, m.span.end + 1}, m.label});
  for (const auto& s : inst.masks) ex.masks.push_back({s.position + 1, vocab.id(s.original)});
  return ex;
}

double dataset_loss(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& examples,
                    const ObjectiveWeights& weights) {
  if (examples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& ex : examples)
    sum += example_loss(params, config, ex, weights, Mode::inference, nullptr).total(weights);
  return sum / static_cast<double>(examples.size());
}

double replacement_accuracy(const ModelParams& params, const ModelConfig& config,
                            const std::vector<Example>& examples) {
  std::vector<LossTerms> terms(examples.size());
  parallel_for(examples.size(), worker_count(),
               [&](std::size_t i) { terms[i] = evaluate_replacement(params, config, examples[i]); });
  std::size_t mentions = 0, correct = 0;
  for (const auto& t : terms) {
    mentions += t.mentions;
    correct += t.correct;
  }
  return mentions ? static_cast<double>(correct) / static_cast<double>(mentions) : 0.0;
}

Trainer::Trainer(ModelConfig model_config, TrainConfig config, std::vector<TrainingInstance> instances,
                 std::optional<double> corpus_mask_ratio)
    : model_config_(model_config), config_(config), rng_(Rng(config.seed).substream("train")) {
  config_.validate();
  vocab_ = Vocabulary::build(instances);
  model_config_.vocab = static_cast<int>(vocab_.size());
  model_config_.pad_token = Vocabulary::kPad;
  model_config_.unk_token = Vocabulary::kUnk;
  model_config_.bos_token = Vocabulary::kBos;
  model_config_.eos_token = Vocabulary::kEos;
  model_config_.mask_token = Vocabulary::kMask;
  model_config_.validate();
  log_.vocab_size = vocab_.size();

  // Framed length must fit the position table.
  std::vector<TrainingInstance> usable;
  for (auto& inst : instances) {
    if (inst.tokens.size() + 2 > static_cast<std::size_t>(model_config_.max_len)) {
      ++log_.skipped_overlength;
    } else {
      usable.push_back(std::move(inst));
    }
  }

  std::vector<std::size_t> order(usable.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t heldout = 0;
  if (config_.heldout_fraction > 0.0 && usable.size() > 1) {
    Rng split = rng_.substream("split");
    split.shuffle(order);
    heldout = static_cast<std::size_t>(std::ceil(config_.heldout_fraction * static_cast<double>(usable.size())));
    heldout = std::min(heldout, usable.size() - 1);
  }
  const std::size_t n_train = usable.size() - heldout;
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(train_idx.begin(), train_idx.end());
  for (auto i : train_idx) train_instances_.push_back(usable[i]);
  for (std::size_t k = n_train; k < order.size(); ++k)
    eval_examples_.push_back(make_example(usable[order[k]], vocab_, model_config_));
  if (heldout == 0) {
    for (std::size_t i = 0; i < train_instances_.size() && i < config_.eval_limit; ++i)
      eval_examples_.push_back(make_example(train_instances_[i], vocab_, model_config_));
  }
  log_.train_instances = train_instances_.size();
  log_.heldout_instances = heldout;
  if (train_instances_.empty()) throw DataError("no usable training instances");

  remask_ = !corpus_mask_ratio || *corpus_mask_ratio != config_.mask_ratio;
  for (const auto& inst : train_instances_) train_examples_.push_back(make_example(inst, vocab_, model_config_));

  Rng init = rng_.substream("init");
  params_ = ModelParams::initialize(model_config_, init);
  state_ = AdamState::zeros(model_config_);
  grads_ = ModelParams::zeros(model_config_);
  example_grads_.assign(std::min(config_.batch_size, train_instances_.size()), ModelParams::zeros(model_config_));
  started_ = now_seconds();
}

void Trainer::start_epoch() {
  ++epoch_;
  const std::size_t n = train_instances_.size();
  if (remask_) {
    const Rng mask_rng = rng_.substream("mask").substream(static_cast<std::uint64_t>(epoch_));
    for (std::size_t i = 0; i < n; ++i) {
      Rng r = mask_rng.substream(i);
      train_examples_[i] = make_example(apply_masking(train_instances_[i], config_.mask_ratio, r), vocab_,
                                        model_config_);
    }
  }

  Rng epoch_rng = rng_.substream("epoch").substream(static_cast<std::uint64_t>(epoch_));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  epoch_rng.shuffle(order);

  batches_.clear();
  const std::size_t window = config_.batch_size * kBucketBatches;
  for (std::size_t lo = 0; lo < n; lo += window) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(lo);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return train_examples_[a].tokens.size() < train_examples_[b].tokens.size();
    });
    const std::size_t hi = std::min(n, lo + window);
    for (std::size_t b = lo; b < hi; b += config_.batch_size) {
      batches_.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                            order.begin() + static_cast<std::ptrdiff_t>(std::min(hi, b + config_.batch_size)));
    }
  }
  epoch_rng.shuffle(batches_);
  next_batch_ = 0;
}

const UpdateRecord& Trainer::step() {
  if (epoch_ < 0 || next_batch_ == batches_.size()) start_epoch();
  const auto& batch = batches_[next_batch_++];
  const std::int64_t update = state_.step + 1;
  const ObjectiveWeights weights = weights_for(config_.objective);
  const Rng dropout_rng = rng_.substream("dropout").substream(static_cast<std::uint64_t>(update));
  const double scale = 1.0 / static_cast<double>(batch.size());

  std::vector<LossTerms> terms(batch.size());
  parallel_for(batch.size(), worker_count(), [&](std::size_t i) {
    example_grads_[i].set_zero();
    Rng r = dropout_rng.substream(i);
    terms[i] = example_loss(params_, model_config_, train_examples_[batch[i]], weights, Mode::training, &r,
                            &example_grads_[i], scale);
  });

  // Fixed reduction order keeps the update independent of the thread count.
  grads_.set_zero();
  UpdateRecord rec;
  rec.update = update;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grads_.add_scaled(example_grads_[i], 1.0);
    rec.loss_repl += terms[i].replacement * scale;
    rec.loss_mlm += terms[i].mlm * scale;
  }
  if (!std::isfinite(rec.loss_repl) || !std::isfinite(rec.loss_mlm)) {
    std::ostringstream msg;
    msg << "non-finite loss at update " << update << " (loss_repl=" << rec.loss_repl
        << ", loss_mlm=" << rec.loss_mlm << ")";
    throw NumericalError(msg.str());
  }
  adam_step(params_, grads_, state_, config_);
  if (!params_.all_finite()) throw NumericalError("non-finite parameters after update " + std::to_string(update));

  const bool eval_now = (config_.eval_every > 0 && update % config_.eval_every == 0) || update == config_.max_updates;
  rec.acc_heldout = eval_now ? replacement_accuracy(params_, model_config_, eval_examples_)
                             : std::numeric_limits<double>::quiet_NaN();
  rec.seconds = now_seconds() - started_;
  log_.records.push_back(rec);
  return log_.records.back();
}

void Trainer::run(const std::function<void(const Trainer&, const UpdateRecord&)>& on_update) {
  while (state_.step < config_.max_updates) {
    const auto& rec = step();
    if (on_update) on_update(*this, rec);
  }
}

TrainOutputs train(const ModelConfig& model_config, const TrainConfig& config,
                   const std::filesystem::path& instances_path, const std::filesystem::path& out_dir) {
  auto instances = read_instances(instances_path);
  std::optional<double> corpus_ratio;
  if (auto manifest = read_manifest(sidecar_manifest(instances_path))) {
    if (manifest->contains("config") && (*manifest)["config"].contains("mask_ratio"))
      corpus_ratio = (*manifest)["config"]["mask_ratio"].get<double>();
  }
  std::filesystem::create_directories(out_dir);
  Trainer trainer(model_config, config, std::move(instances), corpus_ratio);

  auto meta = [&](std::int64_t update) {
    nlohmann::json m;
    m["update"] = update;
    m["seed"] = config.seed;
    m["objective"] = to_string(config.objective);
    return m;
  };
  trainer.run([&](const Trainer& t, const UpdateRecord& rec) {
    if (config.checkpoint_every > 0 && rec.update % config.checkpoint_every == 0)
      save_checkpoint(t.model(), out_dir / ("checkpoint_" + std::to_string(rec.update) + ".bin"), meta(rec.update));
  });

  TrainOutputs out;
  out.final_checkpoint = out_dir / "model.bin";
  out.log_path = out_dir / "trainlog.tsv";
  save_checkpoint(trainer.model(), out.final_checkpoint, meta(trainer.updates()));
  std::ofstream log(out.log_path, std::ios::binary);
  if (!log) throw DataError("cannot write " + out.log_path.string());
  trainer.log().write_tsv(log);
  out.log = trainer.log();
  return out;
}

}  // namespace wklm
