// hrgnet: train, eval, predict, gradcheck, simulate.

#include "hrg/dataset.hpp"
#include "hrg/evaluator.hpp"
#include "hrg/gradcheck.hpp"
#include "hrg/image.hpp"
#include "hrg/model.hpp"
#include "hrg/scene.hpp"
#include "hrg/sim.hpp"
#include "hrg/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hrg;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::string channels;
  std::string dataset_root;
  std::string dataset;
  std::optional<long long> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value config file");
  app->add_option("--seed", c.seed, "run seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--channels", c.channels, "d, rgb or rgbd");
  app->add_option("--dataset-root", c.dataset_root, "dataset directory");
  app->add_option("--dataset", c.dataset, "cornell, jacquard or synthetic");
  app->add_option("--set", c.sets, "override, key=value (repeatable)");
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw std::runtime_error(what + " does not exist: " + p.string());
}

/// File, then --set, then dedicated flags; later wins.
Config resolve(const Common& c, const std::string& command) {
  Config cfg;
  if (!c.config_path.empty()) {
    require_exists(c.config_path, "config file");
    cfg = Config::load(c.config_path);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  if (!c.channels.empty()) cfg.set("data.channels", c.channels);
  if (!c.dataset_root.empty()) cfg.set("data.root", c.dataset_root);
  if (!c.dataset.empty()) cfg.set("data.kind", c.dataset);
  if (!c.out.empty()) cfg.set("run.out", c.out);
  cfg.set("run.command", command);
  if (!cfg.has("run.seed")) cfg.set("run.seed", "0");
  if (!cfg.has("run.out")) cfg.set("run.out", "hrgnet_" + command);
  return cfg;
}

std::uint64_t run_seed(const Config& cfg) { return static_cast<std::uint64_t>(cfg.get_int("run.seed", 0)); }

/// Output directory holding the frozen config. A FAILED marker stays until
/// finish() so interrupted runs are recognisable.
class RunDir {
 public:
  RunDir(const Config& cfg) : dir_(cfg.get("run.out", "out")) {
    fs::create_directories(dir_);
    std::ofstream(dir_ / "FAILED") << "incomplete\n";
    cfg.save(dir_ / "config.txt");
  }
  const fs::path& path() const { return dir_; }
  void fail(const std::string& why) const { std::ofstream(dir_ / "FAILED") << why << "\n"; }
  void finish() const { fs::remove(dir_ / "FAILED"); }

 private:
  fs::path dir_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

/// Fills in dataset defaults and checks paths; loading happens later.
void settle_data(Config& cfg) {
  const DatasetKind kind = parse_dataset_kind(cfg.get("data.kind", "synthetic"));
  cfg.set("data.kind", to_string(kind));
  cfg.set("data.channels", to_string(parse_channels(cfg.get("data.channels", "rgbd"))));
  if (kind == DatasetKind::synthetic) {
    cfg.set("data.count", std::to_string(cfg.get_int("data.count", 16)));
    cfg.set("data.objects", std::to_string(cfg.get_int("data.objects", 1)));
    cfg.set("data.seed", std::to_string(cfg.get_int("data.seed", cfg.get_int("run.seed", 0))));
  } else {
    const std::string root = cfg.get("data.root", "");
    if (root.empty()) throw std::runtime_error("--dataset-root is required for " + to_string(kind));
    require_exists(root, "dataset root");
  }
}

Dataset load_dataset(const Config& cfg) {
  const DatasetKind kind = parse_dataset_kind(cfg.get("data.kind", "synthetic"));
  Dataset ds;
  if (kind == DatasetKind::synthetic) {
    SyntheticOptions opt;
    opt.max_objects = static_cast<int>(cfg.get_int("data.objects", 1));
    ds = make_synthetic(static_cast<int>(cfg.get_int("data.count", 16)),
                        static_cast<std::uint64_t>(cfg.get_int("data.seed", 0)), opt);
  } else if (kind == DatasetKind::cornell) {
    ds = parse_cornell(cfg.get("data.root", ""));
  } else {
    ds = parse_jacquard(cfg.get("data.root", ""));
  }
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  if (ds.samples.empty()) throw std::runtime_error("dataset has no samples: " + cfg.get("data.root", "synthetic"));
  return ds;
}

void settle_split(Config& cfg, long long default_fold) {
  cfg.set("split.mode", to_string(parse_split_mode(cfg.get("split.mode", "iw"))));
  cfg.set("split.folds", std::to_string(cfg.get_int("split.folds", 5)));
  cfg.set("split.fold", std::to_string(cfg.get_int("split.fold", default_fold)));
}

std::vector<Fold> make_folds(const Dataset& ds, const Config& cfg) {
  return split(ds, parse_split_mode(cfg.get("split.mode", "iw")), static_cast<int>(cfg.get_int("split.folds", 5)),
               run_seed(cfg));
}

void check_fold(long long fold, std::size_t count) {
  if (fold < 0 || fold >= static_cast<long long>(count)) {
    throw std::out_of_range("fold " + std::to_string(fold) + " out of range [0, " + std::to_string(count) + ")");
  }
}

void check_channels(const HrgNet<float>& net, Channels ch) {
  if (net.config().input_channels != channel_count(ch)) {
    throw std::invalid_argument("checkpoint expects " + std::to_string(net.config().input_channels) +
                                " input channels, --channels " + to_string(ch) + " gives " +
                                std::to_string(channel_count(ch)));
  }
}

DecodeOptions decode_options(Config& cfg, int default_top) {
  DecodeOptions d;
  d.max_grasps = static_cast<int>(cfg.get_int("decode.top", default_top));
  d.sigma = cfg.get_double("decode.sigma", d.sigma);
  d.min_quality = cfg.get_double("decode.min_quality", d.min_quality);
  d.nms_radius = cfg.get_double("decode.nms_radius", d.nms_radius);
  cfg.set("decode.top", std::to_string(d.max_grasps));
  return d;
}

int cmd_train(Config cfg, bool overfit, const std::string& resume) {
  settle_data(cfg);
  const bool overfitting = cfg.get_bool("train.overfit", overfit);
  cfg.set("train.overfit", overfitting ? "true" : "false");
  if (!overfitting) settle_split(cfg, 0);
  if (!resume.empty()) require_exists(resume, "checkpoint");
  const Channels ch = parse_channels(cfg.get("data.channels", "rgbd"));

  Config model_cfg = cfg;
  model_cfg.set("model.input_channels", std::to_string(channel_count(ch)));
  const ModelConfig mc = ModelConfig::from_config(model_cfg);
  if (!cfg.has("train.seed")) cfg.set("train.seed", std::to_string(run_seed(cfg)));
  // Wall times would make repeated logs differ.
  if (!cfg.has("train.record_timing")) cfg.set("train.record_timing", "false");
  if (overfitting && !cfg.has("train.augment")) cfg.set("train.augment", "false");
  const TrainConfig tc = TrainConfig::from_config(cfg);
  cfg.merge(mc.to_config());
  cfg.merge(tc.to_config());

  const Dataset ds = load_dataset(cfg);
  std::vector<std::size_t> train, test;
  if (overfitting) {
    for (std::size_t i = 0; i < std::min<std::size_t>(8, ds.size()); ++i) train.push_back(i);
    test = train;
  } else {
    const auto folds = make_folds(ds, cfg);
    const long long f = cfg.get_int("split.fold", 0);
    check_fold(f, folds.size());
    train = folds[static_cast<std::size_t>(f)].train;
    test = folds[static_cast<std::size_t>(f)].test;
  }

  RunDir run(cfg);
  if (!overfitting) {
    write_manifest(run.path() / "split.txt", ds, parse_split_mode(cfg.get("split.mode", "iw")), run_seed(cfg),
                   make_folds(ds, cfg));
  }
  EvalOptions eval;
  eval.preprocess.channels = ch;
  eval.preprocess.size = mc.input_size;
  eval.record_timing = false;
  auto net = HrgNet<float>::build(mc, run_seed(cfg));
  Trainer trainer(net, ds, train, test, tc, eval, run.path());
  if (!resume.empty()) trainer.resume(resume);
  const TrainResult result = trainer.run();
  for (const auto& row : result.log) {
    std::printf("epoch %d step %lld loss %.6f accuracy %s\n", row.epoch, row.step, row.loss,
                row.accuracy < 0 ? "-" : std::to_string(row.accuracy).c_str());
  }
  std::printf("best accuracy %.4f at epoch %d\n", result.best_accuracy, result.best_epoch);
  run.finish();
  return 0;
}

int cmd_eval(Config cfg, const std::string& model_kind, const std::string& checkpoint) {
  settle_data(cfg);
  settle_split(cfg, -1);
  cfg.set("eval.model", cfg.get("eval.model", model_kind));
  if (!checkpoint.empty()) cfg.set("eval.checkpoint", checkpoint);
  const std::string kind = cfg.get("eval.model", "net");
  const Channels ch = parse_channels(cfg.get("data.channels", "rgbd"));
  cfg.set("eval.timing", cfg.get_bool("eval.timing", true) ? "true" : "false");

  std::optional<HrgNet<float>> net;
  std::unique_ptr<Predictor> predictor;
  if (kind == "net") {
    const std::string path = cfg.get("eval.checkpoint", "");
    if (path.empty()) throw std::invalid_argument("eval: --checkpoint is required for the net model");
    require_exists(path, "checkpoint");
    net.emplace(load_model(path));
    check_channels(*net, ch);
    predictor = std::make_unique<NetPredictor>(*net);
  } else if (kind == "label-oracle") {
    predictor = std::make_unique<LabelOracle>();
  } else if (kind == "zero") {
    predictor = std::make_unique<ZeroPredictor>();
  } else {
    throw std::invalid_argument("eval: unknown model '" + kind + "' (net, label-oracle, zero)");
  }

  const Dataset ds = load_dataset(cfg);
  const auto folds = make_folds(ds, cfg);
  const long long selected = cfg.get_int("split.fold", -1);
  if (selected != -1) check_fold(selected, folds.size());

  EvalOptions opt;
  opt.preprocess.channels = ch;
  if (net) opt.preprocess.size = net->config().input_size;
  opt.decode = decode_options(cfg, 1);
  opt.record_timing = cfg.get_bool("eval.timing", true);

  RunDir run(cfg);
  std::vector<ResultRow> rows;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (selected != -1 && static_cast<long long>(f) != selected) continue;
    const EvalReport report = evaluate(*predictor, ds, folds[f].test, opt);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    rows.push_back({predictor->name(), to_string(ch), cfg.get("split.mode", "iw"), std::to_string(f),
                    report.metrics.accuracy, report.metrics.mean_ms, report.metrics.matched, report.metrics.total});
  }
  if (rows.size() > 1) rows.push_back(mean_row(rows));
  const std::string table = format_table(rows);
  std::cout << table;
  write_text(run.path() / "results.txt", table);
  write_text(run.path() / "results.tsv", format_tsv(rows));
  run.finish();
  return 0;
}

bool carries_signal(const Sample& s, Channels ch) {
  if (ch != Channels::rgb) {
    for (Index i = 0; i < s.depth.size(); ++i) {
      const float v = s.depth.data()[i];
      if (std::isfinite(v) && v != 0.0f) return true;
    }
  }
  if (ch != Channels::d) {
    for (auto v : s.rgb.pixels) {
      if (v != 0) return true;
    }
  }
  return false;
}

int cmd_predict(Config cfg, const std::string& model_kind, const std::string& checkpoint, const std::string& rgb,
                const std::string& depth, const std::string& labels) {
  cfg.set("predict.model", cfg.get("predict.model", model_kind));
  if (!checkpoint.empty()) cfg.set("predict.checkpoint", checkpoint);
  if (!rgb.empty()) cfg.set("predict.rgb", rgb);
  if (!depth.empty()) cfg.set("predict.depth", depth);
  if (!labels.empty()) cfg.set("predict.labels", labels);
  const std::string kind = cfg.get("predict.model", "net");

  std::optional<HrgNet<float>> net;
  if (kind == "net") {
    const std::string path = cfg.get("predict.checkpoint", "");
    if (path.empty()) throw std::invalid_argument("predict: --checkpoint is required for the net model");
    require_exists(path, "checkpoint");
    net.emplace(load_model(path));
    if (!cfg.has("data.channels")) {
      const Index c = net->config().input_channels;
      cfg.set("data.channels", c == 1 ? "d" : c == 3 ? "rgb" : "rgbd");
    }
  } else if (kind != "label-oracle") {
    throw std::invalid_argument("predict: unknown model '" + kind + "' (net, label-oracle)");
  }
  const Channels ch = parse_channels(cfg.get("data.channels", "rgbd"));
  cfg.set("data.channels", to_string(ch));
  if (net) check_channels(*net, ch);
  const DecodeOptions decode = decode_options(cfg, 1);

  Sample s;
  s.source = "input";
  if (cfg.has("predict.rgb")) {
    require_exists(cfg.get("predict.rgb", ""), "rgb image");
    s.rgb_path = cfg.get("predict.rgb", "");
  }
  if (cfg.has("predict.depth")) {
    require_exists(cfg.get("predict.depth", ""), "depth image");
    s.depth_path = cfg.get("predict.depth", "");
  }
  if (ch != Channels::rgb && s.depth_path.empty()) throw std::invalid_argument("predict: --depth is required");
  if (ch != Channels::d && s.rgb_path.empty()) throw std::invalid_argument("predict: --rgb is required");
  if (cfg.has("predict.labels")) {
    const std::string path = cfg.get("predict.labels", "");
    require_exists(path, "label file");
    std::ifstream f(path);
    for (std::string line; std::getline(f, line);) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) s.rects.push_back(parse_grasp(line));
    }
  }
  if (kind == "label-oracle" && s.rects.empty()) throw std::invalid_argument("predict: label-oracle needs --labels");
  s = load_images(s);

  RunDir run(cfg);
  std::vector<GraspRectangle> grasps;
  if (carries_signal(s, ch)) {
    PreprocessOptions opt;
    opt.channels = ch;
    if (net) opt.size = net->config().input_size;
    const Prepared p = preprocess(s, opt, 0);
    std::unique_ptr<Predictor> predictor;
    if (net) {
      predictor = std::make_unique<NetPredictor>(*net);
    } else {
      predictor = std::make_unique<LabelOracle>();
    }
    for (const auto& g : decode_grasps(predictor->predict(p), decode)) {
      // Back to source pixels.
      GraspRectangle out = g;
      const Point2 c = p.transform.to_source(Point2(g.x, g.y));
      out.x = c.x();
      out.y = c.y();
      out.theta = normalize_angle(g.theta - p.transform.quarter_turns * std::numbers::pi / 2);
      out.width = g.width * p.transform.scale;
      const auto r = static_cast<Index>(std::lround(c.y())), col = static_cast<Index>(std::lround(c.x()));
      out.z = 0.0;
      if (s.depth.size() > 0 && r >= 0 && r < s.depth.rows() && col >= 0 && col < s.depth.cols()) {
        out.z = s.depth(r, col);
      }
      grasps.push_back(out);
    }
  }

  RgbImage canvas = ch == Channels::d || s.rgb.empty() ? depth_to_rgb(s.depth) : s.rgb;
  draw_grasps(canvas, grasps);
  write_rgb(run.path() / "overlay.png", canvas);
  std::string lines;
  for (const auto& g : grasps) lines += format_grasp(g) + "\n";
  write_text(run.path() / "grasps.txt", lines);
  if (grasps.empty()) {
    std::cout << "no grasp found\n";
  } else {
    std::cout << lines;
  }
  run.finish();
  return 0;
}

int cmd_gradcheck(Config cfg, bool skip_model) {
  GradcheckOptions opt;
  opt.seed = cfg.has("gradcheck.seed") ? static_cast<std::uint64_t>(cfg.get_int("gradcheck.seed", 7)) : run_seed(cfg);
  opt.probes = static_cast<int>(cfg.get_int("gradcheck.probes", opt.probes));
  opt.tolerance = cfg.get_double("gradcheck.tolerance", opt.tolerance);
  opt.include_model = cfg.get_bool("gradcheck.model", !skip_model);
  cfg.set("gradcheck.seed", std::to_string(opt.seed));
  cfg.set("gradcheck.probes", std::to_string(opt.probes));
  cfg.set("gradcheck.model", opt.include_model ? "true" : "false");

  RunDir run(cfg);
  const auto rows = run_gradcheck(opt);
  // Seconds vary run to run; the saved report keeps only the deterministic columns.
  std::string saved = "op\tmax_rel_error\tprobes\tstatus\n";
  bool ok = true;
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s\t%.6e\t%d\t%s\n", r.op.c_str(), r.max_error, r.probes, r.passed ? "ok" : "FAIL");
    saved += buf;
    ok = ok && r.passed;
  }
  std::cout << format_gradcheck(rows);
  write_text(run.path() / "gradcheck.tsv", saved);
  if (!ok) {
    run.fail("gradient check failed");
    std::cerr << "error: gradient check failed\n";
    return 1;
  }
  run.finish();
  return 0;
}

struct PolicyTally {
  int successes = 0;
  int collisions = 0;
};

int cmd_simulate(Config cfg, const std::string& model_kind, const std::string& checkpoint) {
  cfg.set("sim.model", cfg.get("sim.model", model_kind));
  if (!checkpoint.empty()) cfg.set("sim.checkpoint", checkpoint);
  const std::string kind = cfg.get("sim.model", "scene-oracle");
  const int episodes = static_cast<int>(cfg.get_int("sim.episodes", 50));
  const long long first_seed = cfg.get_int("sim.first_seed", cfg.get_int("run.seed", 0));
  SceneSpec spec;
  spec.count = static_cast<int>(cfg.get_int("sim.objects", 1));
  spec.family = parse_shape_family(cfg.get("sim.family", "mixed"));
  spec.adjacency = static_cast<int>(cfg.get_int("sim.adjacency", 2));
  spec.center_jitter = cfg.get_double("sim.jitter", 0.0);
  PlannerConfig pc;
  pc.z_max = cfg.get_double("sim.z_max", pc.z_max);
  pc.clearance = cfg.get_double("sim.clearance", pc.clearance);
  pc.rate = cfg.get_double("sim.rate", pc.rate);
  pc.gain = cfg.get_double("sim.gain", pc.gain);
  pc.probe = cfg.get_double("sim.probe", pc.probe);
  pc.max_move = cfg.get_double("sim.max_move", pc.max_move);
  const std::string policy = cfg.get("sim.policy", "both");
  if (policy != "both" && policy != "closed" && policy != "single") {
    throw std::invalid_argument("simulate: policy must be closed, single or both");
  }
  const bool traces = cfg.get_bool("sim.traces", true);
  if (episodes < 1) throw std::invalid_argument("simulate: episodes must be >= 1");
  for (const auto& [k, v] : std::map<std::string, std::string>{
           {"sim.episodes", std::to_string(episodes)},
           {"sim.first_seed", std::to_string(first_seed)},
           {"sim.objects", std::to_string(spec.count)},
           {"sim.adjacency", std::to_string(spec.adjacency)},
           {"sim.policy", policy}}) {
    cfg.set(k, v);
  }

  std::optional<HrgNet<float>> net;
  std::unique_ptr<GraspModel> model;
  if (kind == "scene-oracle") {
    model = std::make_unique<SceneOracle>();
  } else if (kind == "geometric") {
    model = std::make_unique<GeometricModel>();
  } else if (kind == "corrupted-oracle") {
    model = std::make_unique<CorruptedOracle>();
  } else if (kind == "net") {
    const std::string path = cfg.get("sim.checkpoint", "");
    if (path.empty()) throw std::invalid_argument("simulate: --checkpoint is required for the net model");
    require_exists(path, "checkpoint");
    net.emplace(load_model(path));
    const Channels ch = parse_channels(cfg.get("data.channels", "d"));
    cfg.set("data.channels", to_string(ch));
    check_channels(*net, ch);
    model = std::make_unique<NetModel>(*net, ch);
  } else {
    throw std::invalid_argument("simulate: unknown model '" + kind +
                                "' (scene-oracle, geometric, corrupted-oracle, net)");
  }

  RunDir run(cfg);
  if (traces) fs::create_directories(run.path() / "traces");
  std::vector<std::pair<std::string, Policy>> policies;
  if (policy != "single") policies.emplace_back("closed", Policy::closed_loop);
  if (policy != "closed") policies.emplace_back("single", Policy::single_shot);

  std::map<std::string, PolicyTally> tally;
  std::string rows = "seed\tpolicy\tsuccess\tcollision\ttarget\tsteps\n";
  std::string seeds;
  for (int e = 0; e < episodes; ++e) {
    spec.seed = static_cast<std::uint64_t>(first_seed + e);
    const Scene scene = make_scene(spec);
    seeds += (e ? " " : "") + std::to_string(spec.seed);
    for (const auto& [label, p] : policies) {
      const EpisodeResult r = run_episode(scene, *model, pc, p);
      tally[label].successes += r.success;
      tally[label].collisions += r.collision;
      rows += std::to_string(spec.seed) + "\t" + label + "\t" + std::to_string(r.success) + "\t" +
              std::to_string(r.collision) + "\t" + std::to_string(r.target) + "\t" + std::to_string(r.trace.size()) +
              "\n";
      if (traces) {
        char name[64];
        std::snprintf(name, sizeof name, "seed_%06llu_%s.tsv", static_cast<unsigned long long>(spec.seed),
                      label.c_str());
        write_text(run.path() / "traces" / name, format_trace(r));
      }
    }
  }

  std::string summary = "model " + model->name() + "\nepisodes " + std::to_string(episodes) + "\n";
  for (const auto& [label, p] : policies) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s success_rate %.4f collision_rate %.4f\n", label.c_str(),
                  tally[label].successes / static_cast<double>(episodes),
                  tally[label].collisions / static_cast<double>(episodes));
    summary += buf;
  }
  summary += "seeds " + seeds + "\n";
  std::cout << summary;
  write_text(run.path() / "summary.txt", summary);
  write_text(run.path() / "episodes.tsv", rows);
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HRG-Net grasp detection"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "train a network");
  add_common(train, common);
  bool overfit = false;
  std::string resume;
  train->add_flag("--overfit", overfit, "train and score on the first 8 samples, no augmentation");
  train->add_option("--resume", resume, "continue from a training checkpoint");

  auto* eval = app.add_subcommand("eval", "score a model over cross-validation folds");
  add_common(eval, common);
  std::string model_kind;
  std::string checkpoint;
  eval->add_option("--model", model_kind, "net, label-oracle or zero")->default_str("net");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint");

  auto* predict = app.add_subcommand("predict", "grasps for one image pair");
  add_common(predict, common);
  std::string rgb, depth, labels;
  int top = 1;
  predict->add_option("--model", model_kind, "net or label-oracle");
  predict->add_option("--checkpoint", checkpoint, "model checkpoint");
  predict->add_option("--rgb", rgb, "color image");
  predict->add_option("--depth", depth, "depth image");
  predict->add_option("--labels", labels, "ground-truth grasp lines for label-oracle");
  auto* top_opt = predict->add_option("-k,--top", top, "grasps to report");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(gradcheck, common);
  bool skip_model = false;
  gradcheck->add_flag("--skip-model", skip_model, "ops only");

  auto* simulate = app.add_subcommand("simulate", "closed-loop vs single-shot grasping episodes");
  add_common(simulate, common);
  simulate->add_option("--model", model_kind, "scene-oracle, geometric, corrupted-oracle or net");
  simulate->add_option("--checkpoint", checkpoint, "model checkpoint for the net model");
  int episodes = 0;
  int objects = 0;
  int adjacency = -1;
  std::string policy;
  auto* episodes_opt = simulate->add_option("--episodes", episodes, "number of seeded scenes");
  auto* objects_opt = simulate->add_option("--objects", objects, "objects per scene");
  auto* adjacency_opt = simulate->add_option("--adjacency", adjacency, "0 touching, 1 adjacent, 2 scattered");
  simulate->add_option("--policy", policy, "closed, single or both");

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  Config cfg;
  try {
    cfg = resolve(common, command);
    if (*top_opt) cfg.set("decode.top", std::to_string(top));
    if (*episodes_opt) cfg.set("sim.episodes", std::to_string(episodes));
    if (*objects_opt) cfg.set("sim.objects", std::to_string(objects));
    if (*adjacency_opt) cfg.set("sim.adjacency", std::to_string(adjacency));
    if (!policy.empty()) cfg.set("sim.policy", policy);
    if (command == "train") return cmd_train(cfg, overfit, resume);
    if (command == "eval") return cmd_eval(cfg, model_kind.empty() ? "net" : model_kind, checkpoint);
    if (command == "predict") return cmd_predict(cfg, model_kind.empty() ? "net" : model_kind, checkpoint, rgb, depth, labels);
    if (command == "gradcheck") return cmd_gradcheck(cfg, skip_model);
    return cmd_simulate(cfg, model_kind.empty() ? "scene-oracle" : model_kind, checkpoint);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const fs::path marker = fs::path(cfg.get("run.out", "")) / "FAILED";
    if (!cfg.get("run.out", "").empty() && fs::exists(marker)) std::ofstream(marker) << e.what() << "\n";
    return 1;
  }
}
