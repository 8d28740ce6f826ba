#include "hrg/model.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hrg {

template class HrgNet<float>;
template class HrgNet<double>;

std::string to_string(HeadVariant v) { return v == HeadVariant::fused ? "fused" : "highest_only"; }

HeadVariant parse_head_variant(const std::string& s) {
  if (s == "fused") return HeadVariant::fused;
  if (s == "highest_only" || s == "highest") return HeadVariant::highest_only;
  throw std::invalid_argument("model config: head must be 'fused' or 'highest_only', got '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_channels != 1 && input_channels != 3 && input_channels != 4) {
    throw std::invalid_argument("model config: input_channels must be 1, 3 or 4, got " +
                                std::to_string(input_channels));
  }
  for (int s = 0; s < kStages; ++s) {
    if (branch_channels[s] < 1) throw std::invalid_argument("model config: branch_channels must be positive");
    if (s > 0 && branch_channels[s] <= branch_channels[s - 1]) {
      throw std::invalid_argument("model config: branch_channels must be strictly increasing");
    }
    if (blocks_per_stage[s] < 1) throw std::invalid_argument("model config: blocks_per_stage must be at least 1");
  }
  if (input_size < 32 || input_size % 32 != 0) {
    throw std::invalid_argument("model config: input_size must be a positive multiple of 32, got " +
                                std::to_string(input_size));
  }
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) {
    throw std::invalid_argument("model config: bn_momentum must be in (0, 1]");
  }
  if (!(bn_epsilon > 0.0)) throw std::invalid_argument("model config: bn_epsilon must be positive");
}

Index ModelConfig::head_channels() const {
  if (head == HeadVariant::highest_only) return branch_channels[0];
  return std::accumulate(branch_channels.begin(), branch_channels.end(), Index{0});
}

namespace {

std::string join(const std::array<Index, kStages>& v) {
  std::ostringstream os;
  for (int i = 0; i < kStages; ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::array<Index, kStages> four(const Config& cfg, const std::string& key, const std::array<Index, kStages>& fallback) {
  const auto v = cfg.get_ints(key, std::vector<long long>(fallback.begin(), fallback.end()));
  if (v.size() != kStages) throw std::invalid_argument("model config: " + key + " needs 4 comma-separated values");
  std::array<Index, kStages> out{};
  for (int i = 0; i < kStages; ++i) out[i] = static_cast<Index>(v[i]);
  return out;
}

}  // namespace

Config ModelConfig::to_config() const {
  Config c;
  c.set("model.input_channels", std::to_string(input_channels));
  c.set("model.branch_channels", join(branch_channels));
  c.set("model.blocks_per_stage", join(blocks_per_stage));
  c.set("model.head", to_string(head));
  c.set("model.input_size", std::to_string(input_size));
  std::ostringstream m, e;
  m.precision(17);
  e.precision(17);
  m << bn_momentum;
  e << bn_epsilon;
  c.set("model.bn_momentum", m.str());
  c.set("model.bn_epsilon", e.str());
  return c;
}

ModelConfig ModelConfig::from_config(const Config& cfg) {
  ModelConfig m;
  m.input_channels = cfg.get_int("model.input_channels", m.input_channels);
  m.branch_channels = four(cfg, "model.branch_channels", m.branch_channels);
  m.blocks_per_stage = four(cfg, "model.blocks_per_stage", m.blocks_per_stage);
  m.head = parse_head_variant(cfg.get("model.head", to_string(m.head)));
  m.input_size = cfg.get_int("model.input_size", m.input_size);
  m.bn_momentum = cfg.get_double("model.bn_momentum", m.bn_momentum);
  m.bn_epsilon = cfg.get_double("model.bn_epsilon", m.bn_epsilon);
  m.validate();
  return m;
}

Checkpoint to_checkpoint(const HrgNet<float>& net) {
  Checkpoint c;
  c.records = net.params().flatten();
  c.meta = net.config().to_config();
  return c;
}

HrgNet<float> from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig config = ModelConfig::from_config(ckpt.meta);
  auto net = HrgNet<float>::build(config, 0);
  std::vector<std::pair<std::string, Tensorf>> model_records;
  for (const auto& r : ckpt.records) {
    // Optimizer state and training metadata share the container.
    if (r.first.rfind("optim.", 0) == 0 || r.first.rfind("train.", 0) == 0) continue;
    model_records.push_back(r);
  }
  const auto expected = net.params().flatten();
  if (model_records.size() != expected.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(model_records.size()) +
                                " model tensors, config implies " + std::to_string(expected.size()));
  }
  net.params().assign(model_records);
  return net;
}

void save_model(const std::filesystem::path& path, const HrgNet<float>& net) {
  write_checkpoint(path, to_checkpoint(net));
}

HrgNet<float> load_model(const std::filesystem::path& path) { return from_checkpoint(read_checkpoint(path)); }

}  // namespace hrg
