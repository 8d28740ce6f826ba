#pragma once

// Stem, residual block, cross-resolution fuse layer and branch transition.
//
// Parameter names are hierarchical ("stage3.fuse.2_to_0.conv.weight"), and each
// forward function looks its parameters up by prefix in the bound store.

#include "hrg/graph.hpp"
#include "hrg/params.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrg {

/// One forward pass of a parameter store through a graph.
template <typename Scalar>
class Binding {
 public:
  using Id = typename Graph<Scalar>::Id;

  Binding(Graph<Scalar>& graph, ParamStore<Scalar>& params, kernels::NormMode mode, Scalar momentum = Scalar(0.1),
          Scalar epsilon = Scalar(1e-5))
      : graph_(graph), params_(params), mode_(mode), momentum_(momentum), epsilon_(epsilon) {}

  Graph<Scalar>& graph() { return graph_; }
  ParamStore<Scalar>& params() { return params_; }
  kernels::NormMode mode() const { return mode_; }

  /// Parameter leaf for `name`, created on first use.
  Id param(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    const Id id = graph_.parameter(params_.at(name), name);
    bound_.emplace(name, id);
    return id;
  }

  /// Places every parameter on the tape so backward reports all of them.
  void bind_all() {
    for (const auto& [name, e] : params_.entries()) param(name);
  }

  Id conv(Id x, const std::string& prefix, Index stride, Index padding) {
    return graph_.conv2d(x, param(prefix + ".weight"), param(prefix + ".bias"), stride, padding);
  }

  Id norm(Id x, const std::string& prefix) {
    return graph_.batchnorm(x, param(prefix + ".gamma"), param(prefix + ".beta"), params_.running(prefix), momentum_,
                            epsilon_, mode_);
  }

  /// conv -> BN, optionally followed by ReLU. Expects "<prefix>.conv" and
  /// "<prefix>.bn" entries.
  Id conv_norm(Id x, const std::string& prefix, Index stride, Index padding, bool relu) {
    Id y = norm(conv(x, prefix + ".conv", stride, padding), prefix + ".bn");
    return relu ? graph_.relu(y) : y;
  }

 private:
  Graph<Scalar>& graph_;
  ParamStore<Scalar>& params_;
  kernels::NormMode mode_;
  Scalar momentum_;
  Scalar epsilon_;
  std::map<std::string, Id> bound_;
};

// ---------------------------------------------------------------------------
// Parameter initialization

template <typename Scalar>
void init_conv_norm(ParamStore<Scalar>& store, const std::string& prefix, Index cin, Index cout, Index kernel,
                    std::mt19937_64& rng) {
  init_conv(store, prefix + ".conv", cin, cout, kernel, rng);
  init_norm(store, prefix + ".bn", cout);
}

/// Two 3x3 stride-2 units: in_channels -> channels -> channels.
template <typename Scalar>
void init_stem(ParamStore<Scalar>& store, const std::string& prefix, Index in_channels, Index channels,
               std::mt19937_64& rng) {
  init_conv_norm(store, prefix + ".unit1", in_channels, channels, 3, rng);
  init_conv_norm(store, prefix + ".unit2", channels, channels, 3, rng);
}

template <typename Scalar>
void init_residual_block(ParamStore<Scalar>& store, const std::string& prefix, Index channels, std::mt19937_64& rng) {
  init_conv_norm(store, prefix + ".unit1", channels, channels, 3, rng);
  init_conv_norm(store, prefix + ".unit2", channels, channels, 3, rng);
}

inline std::string fuse_path(const std::string& prefix, std::size_t from, std::size_t to) {
  return prefix + "." + std::to_string(from) + "_to_" + std::to_string(to);
}

/// Cross-resolution transforms for every ordered branch pair.
template <typename Scalar>
void init_fuse_layer(ParamStore<Scalar>& store, const std::string& prefix, const std::vector<Index>& channels,
                     std::mt19937_64& rng) {
  const std::size_t branches = channels.size();
  for (std::size_t i = 0; i < branches; ++i) {
    for (std::size_t j = 0; j < branches; ++j) {
      if (j == i) continue;
      const std::string path = fuse_path(prefix, j, i);
      if (j < i) {
        for (std::size_t k = 0; k < i - j; ++k) {
          const bool last = k + 1 == i - j;
          init_conv_norm(store, path + ".down" + std::to_string(k), channels[j], last ? channels[i] : channels[j], 3,
                         rng);
        }
      } else {
        init_conv_norm(store, path + ".up", channels[j], channels[i], 1, rng);
      }
    }
  }
}

template <typename Scalar>
void init_transition(ParamStore<Scalar>& store, const std::string& prefix, Index in_channels, Index out_channels,
                     std::mt19937_64& rng) {
  init_conv_norm(store, prefix, in_channels, out_channels, 3, rng);
}

enum class BlockKind { stem, residual, fuse, transition };

/// Shape description of one block for standalone initialization.
struct BlockSpec {
  BlockKind kind = BlockKind::residual;
  Index in_channels = 0;           ///< stem and transition input
  std::vector<Index> channels;     ///< one entry per branch (fuse) or the output width
};

/// Deterministic parameters for one block under the prefix "block".
template <typename Scalar>
ParamStore<Scalar> init_block_params(const BlockSpec& spec, std::uint64_t seed, const std::string& prefix = "block") {
  if (spec.channels.empty()) throw std::invalid_argument("init_block_params: no channel widths");
  std::mt19937_64 rng(seed);
  ParamStore<Scalar> store;
  switch (spec.kind) {
    case BlockKind::stem: init_stem(store, prefix, spec.in_channels, spec.channels[0], rng); break;
    case BlockKind::residual: init_residual_block(store, prefix, spec.channels[0], rng); break;
    case BlockKind::fuse: init_fuse_layer(store, prefix, spec.channels, rng); break;
    case BlockKind::transition: init_transition(store, prefix, spec.in_channels, spec.channels[0], rng); break;
  }
  return store;
}

// ---------------------------------------------------------------------------
// Forward

template <typename Scalar>
typename Graph<Scalar>::Id stem(Binding<Scalar>& b, typename Graph<Scalar>::Id x, const std::string& prefix) {
  const Shape& s = b.graph().value(x).shape();
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw std::invalid_argument("stem: input size " + s.str() + " is not divisible by 4");
  }
  auto y = b.conv_norm(x, prefix + ".unit1", 2, 1, true);
  return b.conv_norm(y, prefix + ".unit2", 2, 1, true);
}

/// ReLU(x + BN(conv(ReLU(BN(conv(x)))))).
template <typename Scalar>
typename Graph<Scalar>::Id residual_block(Binding<Scalar>& b, typename Graph<Scalar>::Id x,
                                          const std::string& prefix) {
  const Index channels = b.graph().value(x).shape().c;
  const Index expected = b.params().at(prefix + ".unit1.conv.weight").shape().c;
  if (channels != expected) {
    throw std::invalid_argument("residual_block: input has " + std::to_string(channels) + " channels, '" + prefix +
                                "' expects " + std::to_string(expected));
  }
  auto y = b.conv_norm(x, prefix + ".unit1", 1, 1, true);
  y = b.conv_norm(y, prefix + ".unit2", 1, 1, false);
  return b.graph().relu(b.graph().add(x, y));
}

/// Exchanges information between all branches: output i is
/// ReLU(sum_j T_{j->i}(branch_j)) with T_{i->i} the identity, stride-2 conv
/// chains downward and bilinear upsampling plus a 1x1 conv upward.
template <typename Scalar>
std::vector<typename Graph<Scalar>::Id> fuse_layer(Binding<Scalar>& b,
                                                   const std::vector<typename Graph<Scalar>::Id>& branches,
                                                   const std::string& prefix) {
  using Id = typename Graph<Scalar>::Id;
  auto& g = b.graph();
  if (branches.size() < 2) throw std::invalid_argument("fuse_layer: needs at least two branches");
  const Shape top = g.value(branches[0]).shape();
  for (std::size_t r = 0; r < branches.size(); ++r) {
    const Shape s = g.value(branches[r]).shape();
    const Index factor = Index{1} << r;
    if (s.n != top.n || s.h * factor != top.h || s.w * factor != top.w) {
      throw std::invalid_argument("fuse_layer: branch " + std::to_string(r) + " has shape " + s.str() +
                                  ", inconsistent with branch 0 " + top.str());
    }
  }
  std::vector<Id> out;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    Id acc = branches[i];
    for (std::size_t j = 0; j < branches.size(); ++j) {
      if (j == i) continue;
      const std::string path = fuse_path(prefix, j, i);
      Id t = branches[j];
      if (j < i) {
        for (std::size_t k = 0; k < i - j; ++k) {
          const bool last = k + 1 == i - j;
          t = b.conv_norm(t, path + ".down" + std::to_string(k), 2, 1, !last);
        }
      } else {
        t = g.upsample(t, Index{1} << (j - i));
        t = b.conv_norm(t, path + ".up", 1, 0, false);
      }
      acc = g.add(acc, t);
    }
    out.push_back(g.relu(acc));
  }
  return out;
}

/// Spawns a half-resolution branch from `x`.
template <typename Scalar>
typename Graph<Scalar>::Id transition(Binding<Scalar>& b, typename Graph<Scalar>::Id x, const std::string& prefix) {
  return b.conv_norm(x, prefix, 2, 1, true);
}

}  // namespace hrg
