#pragma once

#include "hrg/kernels.hpp"
#include "hrg/tensor.hpp"

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrg {

/// How the optimizer treats a parameter.
enum class ParamRole {
  weight,  ///< convolution kernels; weight decay applies
  bias,    ///< convolution biases; no weight decay
  norm,    ///< batch-norm gamma and beta; no weight decay
};

/// Named trainable tensors plus batch-norm running statistics of one network.
/// Iteration order is lexicographic by name, which fixes checkpoint layout.
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    Tensor<Scalar> value;
    ParamRole role = ParamRole::weight;
  };

  void add(const std::string& name, Tensor<Scalar> value, ParamRole role) {
    if (params_.count(name)) throw std::invalid_argument("params: duplicate parameter '" + name + "'");
    params_.emplace(name, Entry{std::move(value), role});
  }

  void add_running_stats(const std::string& prefix, Index channels) {
    stats_[prefix] = kernels::RunningStats<Scalar>{Tensor<Scalar>::channel_vector(channels, Scalar(0)),
                                                   Tensor<Scalar>::channel_vector(channels, Scalar(1))};
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Tensor<Scalar>& at(const std::string& name) { return entry(name).value; }
  const Tensor<Scalar>& at(const std::string& name) const { return entry(name).value; }
  ParamRole role(const std::string& name) const { return entry(name).role; }

  kernels::RunningStats<Scalar>& running(const std::string& prefix) {
    auto it = stats_.find(prefix);
    if (it == stats_.end()) throw std::out_of_range("params: no running statistics for '" + prefix + "'");
    return it->second;
  }

  const std::map<std::string, Entry>& entries() const { return params_; }
  std::map<std::string, Entry>& entries() { return params_; }
  const std::map<std::string, kernels::RunningStats<Scalar>>& running_stats() const { return stats_; }
  std::map<std::string, kernels::RunningStats<Scalar>>& running_stats() { return stats_; }

  /// Number of trainable scalars (running statistics excluded).
  Index parameter_count() const {
    Index total = 0;
    for (const auto& [name, e] : params_) total += e.value.size();
    return total;
  }

  /// Every tensor, parameters and running statistics, as (name, tensor) pairs.
  std::vector<std::pair<std::string, Tensor<Scalar>>> flatten() const {
    std::map<std::string, Tensor<Scalar>> all;
    for (const auto& [name, e] : params_) all[name] = e.value;
    for (const auto& [prefix, s] : stats_) {
      all[prefix + ".running_mean"] = s.mean;
      all[prefix + ".running_var"] = s.var;
    }
    return {all.begin(), all.end()};
  }

  /// Overwrites values from a flattened list; every name must already exist
  /// with the same shape.
  template <typename Other>
  void assign(const std::vector<std::pair<std::string, Tensor<Other>>>& records) {
    for (const auto& [name, t] : records) {
      Tensor<Scalar>* dst = find_tensor(name);
      if (!dst) throw std::invalid_argument("params: unknown tensor '" + name + "' in checkpoint");
      if (dst->shape() != t.shape()) {
        throw std::invalid_argument("params: shape mismatch for '" + name + "': have " + dst->shape().str() +
                                    ", checkpoint " + t.shape().str());
      }
      *dst = t.template cast<Scalar>();
    }
  }

  template <typename To>
  ParamStore<To> cast() const {
    ParamStore<To> out;
    for (const auto& [name, e] : params_) out.add(name, e.value.template cast<To>(), e.role);
    for (const auto& [prefix, s] : stats_) {
      out.running_stats()[prefix] =
          kernels::RunningStats<To>{s.mean.template cast<To>(), s.var.template cast<To>()};
    }
    return out;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("params: no parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("params: no parameter '" + name + "'");
    return it->second;
  }

  Tensor<Scalar>* find_tensor(const std::string& name) {
    if (auto it = params_.find(name); it != params_.end()) return &it->second.value;
    for (const char* suffix : {".running_mean", ".running_var"}) {
      const std::string s(suffix);
      if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
        auto it = stats_.find(name.substr(0, name.size() - s.size()));
        if (it == stats_.end()) return nullptr;
        return s == ".running_mean" ? &it->second.mean : &it->second.var;
      }
    }
    return nullptr;
  }

  std::map<std::string, Entry> params_;
  std::map<std::string, kernels::RunningStats<Scalar>> stats_;
};

/// He-normal convolution weights, zero bias.
template <typename Scalar>
void init_conv(ParamStore<Scalar>& store, const std::string& prefix, Index cin, Index cout, Index kernel,
               std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(cin * kernel * kernel);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  Tensor<Scalar> w(Shape{cout, cin, kernel, kernel});
  for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(normal(rng));
  store.add(prefix + ".weight", std::move(w), ParamRole::weight);
  store.add(prefix + ".bias", Tensor<Scalar>::channel_vector(cout), ParamRole::bias);
}

/// gamma = 1, beta = 0, running mean 0 / var 1.
template <typename Scalar>
void init_norm(ParamStore<Scalar>& store, const std::string& prefix, Index channels) {
  store.add(prefix + ".gamma", Tensor<Scalar>::channel_vector(channels, Scalar(1)), ParamRole::norm);
  store.add(prefix + ".beta", Tensor<Scalar>::channel_vector(channels, Scalar(0)), ParamRole::norm);
  store.add_running_stats(prefix, channels);
}

}  // namespace hrg
