#include "hrg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace hrg {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

}  // namespace

void TrainConfig::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string("train config: ") + name + " must be positive");
  };
  positive(learning_rate, "learning_rate");
  if (!(weight_decay >= 0)) throw std::invalid_argument("train config: weight_decay must be non-negative");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(epsilon, "epsilon");
  if (!(beta1 > 0 && beta1 < 1)) throw std::invalid_argument("train config: beta1 must be in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw std::invalid_argument("train config: beta2 must be in (0, 1)");
  if (checkpoint_every < 0 || eval_every < 0 || max_steps < 0) {
    throw std::invalid_argument("train config: checkpoint_every, eval_every and max_steps must be non-negative");
  }
}

Config TrainConfig::to_config() const {
  Config c;
  c.set("train.learning_rate", num(learning_rate));
  c.set("train.weight_decay", num(weight_decay));
  c.set("train.batch_size", std::to_string(batch_size));
  c.set("train.epochs", std::to_string(epochs));
  c.set("train.beta1", num(beta1));
  c.set("train.beta2", num(beta2));
  c.set("train.epsilon", num(epsilon));
  c.set("train.seed", std::to_string(seed));
  c.set("train.checkpoint_every", std::to_string(checkpoint_every));
  c.set("train.eval_every", std::to_string(eval_every));
  c.set("train.max_steps", std::to_string(max_steps));
  c.set("train.augment", augment ? "true" : "false");
  c.set("train.record_timing", record_timing ? "true" : "false");
  return c;
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size", t.batch_size));
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.beta1 = cfg.get_double("train.beta1", t.beta1);
  t.beta2 = cfg.get_double("train.beta2", t.beta2);
  t.epsilon = cfg.get_double("train.epsilon", t.epsilon);
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", static_cast<long long>(t.seed)));
  t.checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every", t.checkpoint_every));
  t.eval_every = static_cast<int>(cfg.get_int("train.eval_every", t.eval_every));
  t.max_steps = cfg.get_int("train.max_steps", t.max_steps);
  t.augment = cfg.get_bool("train.augment", t.augment);
  t.record_timing = cfg.get_bool("train.record_timing", t.record_timing);
  t.validate();
  return t;
}

void adamw_step(ParamStore<float>& params, const std::map<std::string, Tensorf>& grads, OptState& state,
                const TrainConfig& cfg) {
  for (const auto& [name, e] : params.entries()) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adamw: no gradient for '" + name + "'");
    if (it->second.shape() != e.value.shape()) {
      throw std::invalid_argument("adamw: gradient for '" + name + "' has shape " + it->second.shape().str() +
                                  ", parameter has " + e.value.shape().str());
    }
    if (!it->second.all_finite()) throw NonFiniteError("adamw: non-finite gradient for '" + name + "'; step aborted");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : params.entries()) {
    const Tensorf& g = grads.at(name);
    Tensorf& m = state.m.try_emplace(name, Tensorf(e.value.shape())).first->second;
    Tensorf& v = state.v.try_emplace(name, Tensorf(e.value.shape())).first->second;
    const double decay = e.role == ParamRole::weight ? cfg.learning_rate * cfg.weight_decay : 0.0;
    for (Index i = 0; i < e.value.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double p = static_cast<double>(e.value[i]) * (1.0 - decay);
      p -= cfg.learning_rate * (mi / correct1) / (std::sqrt(vi / correct2) + cfg.epsilon);
      e.value[i] = static_cast<float>(p);
    }
  }
}

std::pair<Tensorf, Tensorf> make_batch(const std::vector<Prepared>& items) {
  if (items.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Shape in = items[0].input.shape();
  Tensorf input(Shape{static_cast<Index>(items.size()), in.c, in.h, in.w});
  std::vector<GraspMaps> targets;
  for (std::size_t n = 0; n < items.size(); ++n) {
    if (items[n].input.shape() != in) throw std::invalid_argument("make_batch: inconsistent input shapes");
    for (Index c = 0; c < in.c; ++c) input.channel(static_cast<Index>(n), c) = items[n].input.channel(0, c);
    targets.push_back(items[n].target);
  }
  return {std::move(input), maps_to_tensor(targets)};
}

double batch_loss(HrgNet<float>& net, const Tensorf& input, const Tensorf& target) {
  Graph<float> g;
  auto b = net.bind(g, kernels::NormMode::train);
  const auto loss = g.grasp_loss(net.forward(b, g.input(input, "image")), g.input(target, "target"));
  return g.value(loss)[0];
}

Trainer::Trainer(HrgNet<float>& net, const Dataset& dataset, std::vector<std::size_t> train,
                 std::vector<std::size_t> test, TrainConfig config, EvalOptions eval,
                 std::optional<fs::path> out_dir)
    : net_(net),
      dataset_(dataset),
      train_(std::move(train)),
      test_(std::move(test)),
      config_(config),
      eval_(std::move(eval)),
      out_(std::move(out_dir)) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("trainer: empty training fold");
  for (std::size_t i : train_) {
    if (i >= dataset_.samples.size()) throw std::out_of_range("trainer: sample index " + std::to_string(i));
  }
  if (channel_count(eval_.preprocess.channels) != net_.config().input_channels) {
    throw std::invalid_argument("trainer: channels '" + to_string(eval_.preprocess.channels) + "' do not match the " +
                                std::to_string(net_.config().input_channels) + "-channel model");
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = to_checkpoint(net_);
  for (const auto& [name, t] : state_.m) c.records.emplace_back("optim.m." + name, t);
  for (const auto& [name, t] : state_.v) c.records.emplace_back("optim.v." + name, t);
  c.meta.merge(config_.to_config());
  c.meta.set("state.step", std::to_string(state_.step));
  c.meta.set("state.next_epoch", std::to_string(next_epoch_));
  c.meta.set("state.best_accuracy", num(best_accuracy_));
  c.meta.set("state.best_epoch", std::to_string(best_epoch_));
  return c;
}

void Trainer::save(const fs::path& path) const { write_checkpoint(path, checkpoint()); }

void Trainer::resume(const fs::path& path) {
  const Checkpoint c = read_checkpoint(path);
  const HrgNet<float> loaded = from_checkpoint(c);
  if (loaded.config().to_config().to_text() != net_.config().to_config().to_text()) {
    throw std::invalid_argument("resume: checkpoint " + path.string() + " was written for a different model config");
  }
  net_.params().assign(loaded.params().flatten());
  state_ = OptState{};
  for (const auto& [name, t] : c.records) {
    if (name.rfind("optim.m.", 0) == 0) state_.m[name.substr(8)] = t;
    if (name.rfind("optim.v.", 0) == 0) state_.v[name.substr(8)] = t;
  }
  state_.step = c.meta.get_int("state.step", 0);
  next_epoch_ = static_cast<int>(c.meta.get_int("state.next_epoch", 1));
  best_accuracy_ = c.meta.get_double("state.best_accuracy", -1.0);
  best_epoch_ = static_cast<int>(c.meta.get_int("state.best_epoch", 0));
}

void Trainer::append_log(const EpochLog& row) const {
  if (!out_) return;
  const fs::path path = *out_ / "train_log.tsv";
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (fresh) out << "epoch\tstep\tloss\taccuracy\tseconds\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%lld\t%.9g\t%.6f\t%.3f\n", row.epoch, row.step, row.loss, row.accuracy,
                row.seconds);
  out << buf;
}

TrainResult Trainer::run() {
  if (out_) {
    fs::create_directories(*out_);
    if (next_epoch_ == 1) fs::remove(*out_ / "train_log.tsv");
  }
  TrainResult result;
  PreprocessOptions prep = eval_.preprocess;
  prep.augment = config_.augment;
  EvalOptions eval = eval_;
  eval.record_timing = false;

  const auto clock_start = std::chrono::steady_clock::now();
  bool stop = false;
  for (int epoch = next_epoch_; epoch <= config_.epochs && !stop; ++epoch) {
    auto rng = epoch_rng(config_.seed, epoch);
    std::vector<std::size_t> order = train_;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.batch_size)) {
      if (config_.max_steps > 0 && state_.step >= config_.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
      std::vector<Prepared> items;
      for (std::size_t k = start; k < end; ++k) items.push_back(preprocess(dataset_.samples[order[k]], prep, rng()));
      const auto [input, target] = make_batch(items);

      const auto halt = [&](const std::string& why) {
        return NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches) + " (step " + std::to_string(state_.step + 1) + ")" + why);
      };
      Graph<float> g;
      auto b = net_.bind(g, kernels::NormMode::train);
      Graph<float>::Id loss = 0;
      try {
        b.bind_all();
        loss = g.grasp_loss(net_.forward(b, g.input(input, "image")), g.input(target, "target"));
      } catch (const std::invalid_argument& e) {
        // The tape refuses non-finite parameters or inputs up front.
        if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
        throw halt(std::string(": ") + e.what());
      }
      const double value = g.value(loss)[0];
      if (!std::isfinite(value)) throw halt("");
      adamw_step(net_.params(), g.backward(loss), state_, config_);
      result.step_losses.push_back(value);
      loss_sum += value;
      ++batches;
    }
    if (batches == 0) break;
    if (config_.max_steps > 0 && state_.step >= config_.max_steps) stop = true;

    EpochLog row;
    row.epoch = epoch;
    row.step = state_.step;
    row.loss = loss_sum / batches;
    const bool last = stop || epoch == config_.epochs;
    if (!test_.empty() && config_.eval_every > 0 && (epoch % config_.eval_every == 0 || last)) {
      NetPredictor predictor(net_);
      row.accuracy = evaluate(predictor, dataset_, test_, eval).metrics.accuracy;
    }
    if (config_.record_timing) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    }
    next_epoch_ = epoch + 1;
    const bool improved = row.accuracy > best_accuracy_;
    if (improved) {
      best_accuracy_ = row.accuracy;
      best_epoch_ = epoch;
    }
    result.log.push_back(row);
    append_log(row);
    if (out_) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
      if (config_.checkpoint_every > 0 && epoch % config_.checkpoint_every == 0) save(*out_ / name);
      save(*out_ / "last.ckpt");
      if (improved) save(*out_ / "best.ckpt");
    }
  }
  result.best_accuracy = best_accuracy_;
  result.best_epoch = best_epoch_;
  return result;
}

}  // namespace hrg
