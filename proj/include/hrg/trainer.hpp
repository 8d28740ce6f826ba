#pragma once

#include "hrg/config.hpp"
#include "hrg/dataset.hpp"
#include "hrg/evaluator.hpp"
#include "hrg/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrg {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 5e-2;
  int batch_size = 32;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 1;  ///< epochs between numbered checkpoints; 0 disables them
  int eval_every = 1;        ///< epochs between test evaluations; 0 disables them
  long long max_steps = 0;   ///< stop after this many optimizer steps; 0 means no limit
  bool augment = true;
  bool record_timing = true;  ///< false writes zero wall times so logs are reproducible

  void validate() const;
  Config to_config() const;  ///< "train.*" keys
  static TrainConfig from_config(const Config& cfg);
};

struct OptState {
  std::map<std::string, Tensorf> m;
  std::map<std::string, Tensorf> v;
  long long step = 0;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One AdamW update. Weight decay is decoupled and applied to convolution
/// kernels only; biases and batch-norm affine parameters are not decayed.
/// Non-finite gradients abort before anything changes.
void adamw_step(ParamStore<float>& params, const std::map<std::string, Tensorf>& grads, OptState& state,
                const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  long long step = 0;
  double loss = 0.0;       ///< mean training loss over the epoch's batches
  double accuracy = -1.0;  ///< test accuracy, -1 when not evaluated
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::vector<double> step_losses;
  double best_accuracy = -1.0;
  int best_epoch = 0;
};

/// Stacks preprocessed samples into one (N, C, H, W) input and target batch.
std::pair<Tensorf, Tensorf> make_batch(const std::vector<Prepared>& items);

/// Training loss on one batch under the current parameters (train-mode BN).
double batch_loss(HrgNet<float>& net, const Tensorf& input, const Tensorf& target);

/// Epoch loop: seeded shuffle, preprocessing with augmentation, train-mode
/// forward, grasp loss, backward, AdamW. After each evaluated epoch the test
/// fold is scored and the best checkpoint kept.
///
/// Output directory layout (when set): train_log.tsv, epoch_NNN.ckpt,
/// last.ckpt, best.ckpt.
class Trainer {
 public:
  Trainer(HrgNet<float>& net, const Dataset& dataset, std::vector<std::size_t> train, std::vector<std::size_t> test,
          TrainConfig config, EvalOptions eval, std::optional<std::filesystem::path> out_dir = std::nullopt);

  /// Continues from a checkpoint written by this class.
  void resume(const std::filesystem::path& checkpoint);

  TrainResult run();

  const OptState& state() const { return state_; }
  Checkpoint checkpoint() const;

 private:
  void save(const std::filesystem::path& path) const;
  void append_log(const EpochLog& row) const;

  HrgNet<float>& net_;
  const Dataset& dataset_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> test_;
  TrainConfig config_;
  EvalOptions eval_;
  std::optional<std::filesystem::path> out_;
  OptState state_;
  int next_epoch_ = 1;
  double best_accuracy_ = -1.0;
  int best_epoch_ = 0;
};

}  // namespace hrg
