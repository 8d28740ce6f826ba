#pragma once

#include "hrg/blocks.hpp"
#include "hrg/checkpoint.hpp"
#include "hrg/config.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hrg {

inline constexpr int kStages = 4;
/// Output channels: quality, sin 2θ, cos 2θ, normalized width.
inline constexpr Index kMapCount = 4;

enum class HeadVariant { fused, highest_only };

std::string to_string(HeadVariant v);
HeadVariant parse_head_variant(const std::string& s);

struct ModelConfig {
  Index input_channels = 4;
  std::array<Index, kStages> branch_channels{18, 36, 72, 144};
  std::array<Index, kStages> blocks_per_stage{1, 1, 2, 2};
  HeadVariant head = HeadVariant::fused;
  Index input_size = 224;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Channels entering the output head.
  Index head_channels() const;

  /// "model.*" keys.
  Config to_config() const;
  static ModelConfig from_config(const Config& cfg);
};

/// Parallel-branch high-resolution grasp network.
///
/// stem (1/4 resolution) -> stage 1..4 -> head. Stage s runs s branches; each
/// stage applies residual blocks per branch, fuses across branches (s >= 2),
/// and spawns a new half-resolution branch from its lowest one (s < 4).
template <typename Scalar>
class HrgNet {
 public:
  using Id = typename Graph<Scalar>::Id;

  HrgNet(ModelConfig config, ParamStore<Scalar> params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
  }

  /// Fresh He-initialized network; deterministic given the seed.
  static HrgNet build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    ParamStore<Scalar> p;
    const auto& ch = config.branch_channels;
    init_stem(p, "stem", config.input_channels, ch[0], rng);
    for (int s = 1; s <= kStages; ++s) {
      const std::string stage = "stage" + std::to_string(s);
      for (int r = 0; r < s; ++r) {
        for (Index k = 0; k < config.blocks_per_stage[s - 1]; ++k) {
          init_residual_block(p, block_name(stage, r, k), ch[r], rng);
        }
      }
      if (s >= 2) init_fuse_layer(p, stage + ".fuse", std::vector<Index>(ch.begin(), ch.begin() + s), rng);
      if (s < kStages) init_transition(p, stage + ".transition", ch[s - 1], ch[s], rng);
    }
    init_conv(p, "head.conv", config.head_channels(), kMapCount, 3, rng);
    return HrgNet(config, std::move(p));
  }

  const ModelConfig& config() const { return config_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  Binding<Scalar> bind(Graph<Scalar>& g, kernels::NormMode mode) {
    return Binding<Scalar>(g, params_, mode, static_cast<Scalar>(config_.bn_momentum),
                           static_cast<Scalar>(config_.bn_epsilon));
  }

  /// Stage-4 branch outputs, highest resolution first.
  std::vector<Id> backbone(Binding<Scalar>& b, Id image) const {
    check_input(b.graph().value(image).shape());
    std::vector<Id> branches{stem(b, image, "stem")};
    for (int s = 1; s <= kStages; ++s) {
      const std::string stage = "stage" + std::to_string(s);
      for (int r = 0; r < s; ++r) {
        for (Index k = 0; k < config_.blocks_per_stage[s - 1]; ++k) {
          branches[r] = residual_block(b, branches[r], block_name(stage, r, k));
        }
      }
      if (s >= 2) branches = fuse_layer(b, branches, stage + ".fuse");
      if (s < kStages) branches.push_back(transition(b, branches.back(), stage + ".transition"));
    }
    return branches;
  }

  /// Squashed (N, 4, H, W) grasp maps.
  Id forward(Binding<Scalar>& b, Id image) const {
    const auto branches = backbone(b, image);
    return config_.head == HeadVariant::fused ? head_fused(b, branches) : head_highest(b, branches);
  }

  /// Inference with running statistics; returns (N, 4, H, W).
  Tensor<Scalar> predict(const Tensor<Scalar>& images) {
    Graph<Scalar> g;
    auto b = bind(g, kernels::NormMode::eval);
    return g.value(forward(b, g.input(images, "image")));
  }

  void check_input(const Shape& s) const {
    if (s.c != config_.input_channels) {
      throw std::invalid_argument("model: input has " + std::to_string(s.c) + " channels, config expects " +
                                  std::to_string(config_.input_channels));
    }
    if (s.h != config_.input_size || s.w != config_.input_size) {
      throw std::invalid_argument("model: input " + s.str() + " does not match input_size " +
                                  std::to_string(config_.input_size));
    }
  }

  static std::string block_name(const std::string& stage, int branch, Index k) {
    return stage + ".branch" + std::to_string(branch) + ".block" + std::to_string(k);
  }

 private:
  ModelConfig config_;
  ParamStore<Scalar> params_;
};

/// Upsample x4, 3x3 conv to four channels, squash. The conv is evaluated on
/// the low-resolution features (per-tap 1x1 products, upsampled, then summed
/// with the tap offsets), which equals conv3x3(upsample(x)) because bilinear
/// upsampling is linear and acts on each channel independently.
template <typename Scalar>
typename Graph<Scalar>::Id head_tail(Binding<Scalar>& b, typename Graph<Scalar>::Id features) {
  auto& g = b.graph();
  const Index taps = 9;
  const auto weight = b.param("head.conv.weight");
  const Index in_c = g.value(weight).shape().c;
  if (g.value(features).shape().c != in_c) {
    throw std::invalid_argument("head: features have " + std::to_string(g.value(features).shape().c) +
                                " channels, head expects " + std::to_string(in_c));
  }
  const auto pointwise = g.taps_as_pointwise(weight);
  const auto zero_bias = g.input(Tensor<Scalar>::channel_vector(kMapCount * taps));
  auto per_tap = g.conv2d(features, pointwise, zero_bias, 1, 0);
  per_tap = g.upsample(per_tap, 4);
  const auto logits = g.tap_sum(per_tap, b.param("head.conv.bias"), 3);
  return g.concat({g.sigmoid(g.slice_channels(logits, 0, 1)), g.tanh(g.slice_channels(logits, 1, 1)),
                   g.tanh(g.slice_channels(logits, 2, 1)), g.sigmoid(g.slice_channels(logits, 3, 1))});
}

/// Only the highest-resolution branch feeds the head.
template <typename Scalar>
typename Graph<Scalar>::Id head_highest(Binding<Scalar>& b, const std::vector<typename Graph<Scalar>::Id>& branches) {
  if (branches.empty()) throw std::invalid_argument("head: no branches");
  return head_tail(b, branches[0]);
}

/// All branches upsampled to branch-0 size and concatenated.
template <typename Scalar>
typename Graph<Scalar>::Id head_fused(Binding<Scalar>& b, const std::vector<typename Graph<Scalar>::Id>& branches) {
  if (branches.empty()) throw std::invalid_argument("head: no branches");
  auto& g = b.graph();
  std::vector<typename Graph<Scalar>::Id> parts{branches[0]};
  for (std::size_t r = 1; r < branches.size(); ++r) parts.push_back(g.upsample(branches[r], Index{1} << r));
  return head_tail(b, g.concat(parts));
}

extern template class HrgNet<float>;
extern template class HrgNet<double>;

/// Checkpoint with parameters, running statistics, and "model.*" metadata.
Checkpoint to_checkpoint(const HrgNet<float>& net);
HrgNet<float> from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::filesystem::path& path, const HrgNet<float>& net);
HrgNet<float> load_model(const std::filesystem::path& path);

}  // namespace hrg
