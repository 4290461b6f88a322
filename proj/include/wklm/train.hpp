#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wklm/checkpoint.hpp"
#include "wklm/corpus.hpp"
#include "wklm/nn.hpp"
#include "wklm/vocab.hpp"

namespace wklm {

enum class Objective { joint, replacement_only, mlm_only };

std::string to_string(Objective objective);
// Throws std::invalid_argument for an unknown name.
Objective parse_objective(const std::string& name);
ObjectiveWeights weights_for(Objective objective);

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 16;
  double weight_decay = 0.01;
  std::int64_t max_updates = 1000;
  std::uint64_t seed = 0;
  Objective objective = Objective::joint;
  double mask_ratio = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::int64_t eval_every = 100;
  // Fraction of instances held out for acc_heldout. With 0 the accuracy is
  // measured on (up to eval_limit) training instances instead.
  double heldout_fraction = 0.0;
  std::size_t eval_limit = 512;

  void validate() const;
};

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::int64_t step = 0;

  static AdamState zeros(const ModelConfig& config);
};

// Bias-corrected Adam update followed by multiplicative decay
// (1 - lr * weight_decay) on every parameter except biases and layer-norm
// vectors. Throws NumericalError when a gradient is not finite.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& config);

struct UpdateRecord {
  std::int64_t update = 0;
  double loss_repl = 0.0;
  double loss_mlm = 0.0;
  double acc_heldout = 0.0;  // NaN on updates without an evaluation
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<UpdateRecord> records;
  std::size_t train_instances = 0;
  std::size_t heldout_instances = 0;
  std::size_t skipped_overlength = 0;
  std::size_t vocab_size = 0;

  // Columns: update, loss_repl, loss_mlm, acc_heldout, seconds.
  void write_tsv(std::ostream& out, bool with_seconds = true) const;
};

// bos + tokens + eos with spans and mask positions shifted by one.
Example make_example(const TrainingInstance& instance, const Vocabulary& vocab, const ModelConfig& config);

// Mean weighted loss over examples in inference mode.
double dataset_loss(const ModelParams& params, const ModelConfig& config,
                    const std::vector<Example>& examples, const ObjectiveWeights& weights);
// Fraction of mentions whose kept/replaced label the head predicts.
double replacement_accuracy(const ModelParams& params, const ModelConfig& config,
                            const std::vector<Example>& examples);

// In-memory training loop. The model config's vocab field is overwritten
// with the size of the vocabulary built from the instances.
class Trainer {
 public:
  // corpus_mask_ratio: the ratio the instances were masked with, when known.
  // Masks are redrawn every epoch if it differs from config.mask_ratio.
  Trainer(ModelConfig model_config, TrainConfig config, std::vector<TrainingInstance> instances,
          std::optional<double> corpus_mask_ratio = std::nullopt);

  // One optimizer update; returns its log record.
  const UpdateRecord& step();
  void run(const std::function<void(const Trainer&, const UpdateRecord&)>& on_update = {});

  std::int64_t updates() const { return state_.step; }
  const ModelConfig& model_config() const { return model_config_; }
  const TrainConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  const TrainLog& log() const { return log_; }
  Model model() const { return {model_config_, params_, vocab_}; }
  const std::vector<Example>& eval_examples() const { return eval_examples_; }
  // Training examples as masked for the current epoch.
  const std::vector<Example>& train_examples() const { return train_examples_; }

 private:
  void start_epoch();

  ModelConfig model_config_;
  TrainConfig config_;
  Vocabulary vocab_;
  std::vector<TrainingInstance> train_instances_;
  std::vector<Example> train_examples_;
  std::vector<Example> eval_examples_;
  bool remask_;
  ModelParams params_;
  AdamState state_;
  TrainLog log_;
  Rng rng_;
  std::int64_t epoch_ = -1;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t next_batch_ = 0;
  std::vector<ModelParams> example_grads_;
  ModelParams grads_;
  double started_ = 0.0;
};

struct TrainOutputs {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  TrainLog log;
};

// File-level training: reads the instances (and the mask ratio recorded in
// the corpus manifest next to them, if any), writes checkpoint_<n>.bin every
// checkpoint_every updates, model.bin and trainlog.tsv into out_dir.
TrainOutputs train(const ModelConfig& model_config, const TrainConfig& config,
                   const std::filesystem::path& instances_path, const std::filesystem::path& out_dir);

}  // namespace wklm
