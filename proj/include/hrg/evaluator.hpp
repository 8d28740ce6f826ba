#pragma once

#include "hrg/dataset.hpp"
#include "hrg/geometry.hpp"
#include "hrg/grasp.hpp"
#include "hrg/model.hpp"

#include <string>
#include <vector>

namespace hrg {

struct Metrics {
  Index matched = 0;
  Index total = 0;
  double accuracy = 0.0;  ///< matched / total
  double mean_ms = 0.0;   ///< mean per-image forward + decode time
};

/// Anything that turns a preprocessed sample into grasp maps.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  /// Required input channels, or 0 when any channel set works.
  virtual Index input_channels() const { return 0; }
  virtual GraspMaps predict(const Prepared& sample) = 0;
};

class NetPredictor : public Predictor {
 public:
  explicit NetPredictor(HrgNet<float>& net, std::string name = "hrgnet") : net_(net), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  Index input_channels() const override { return net_.config().input_channels; }
  GraspMaps predict(const Prepared& sample) override { return maps_from_tensor(net_.predict(sample.input), 0); }

 private:
  HrgNet<float>& net_;
  std::string name_;
};

/// Returns the encoded ground truth of the sample itself.
class LabelOracle : public Predictor {
 public:
  std::string name() const override { return "label-oracle"; }
  GraspMaps predict(const Prepared& sample) override { return sample.target; }
};

class ZeroPredictor : public Predictor {
 public:
  std::string name() const override { return "zero"; }
  GraspMaps predict(const Prepared& sample) override {
    return GraspMaps::zeros(sample.target.rows(), sample.target.cols());
  }
};

struct EvalOptions {
  PreprocessOptions preprocess;
  DecodeOptions decode;
  MatchRule rule;
  bool record_timing = true;
  int timing_repeats = 5;  ///< timed runs per image after one warm-up; the median is kept
};

struct EvalReport {
  Metrics metrics;
  std::vector<std::string> warnings;
  std::vector<int> outcomes;  ///< per index: 1 matched, 0 missed, -1 excluded
};

/// Top-1 rectangle-metric accuracy over `indices`. Samples without ground
/// truth are excluded from the denominator with a warning.
EvalReport evaluate(Predictor& predictor, const Dataset& dataset, const std::vector<std::size_t>& indices,
                    const EvalOptions& options = {});

struct ResultRow {
  std::string method;
  std::string channels;
  std::string split;
  std::string fold;  ///< fold index, or "mean"
  double accuracy = 0.0;
  double ms = 0.0;
  Index matched = 0;
  Index total = 0;
};

/// Arithmetic mean of accuracy and time; counts are summed.
ResultRow mean_row(const std::vector<ResultRow>& rows);

/// Aligned text table.
std::string format_table(const std::vector<ResultRow>& rows);
/// Tab-separated rows with a header line.
std::string format_tsv(const std::vector<ResultRow>& rows);

}  // namespace hrg
