#include "hrg/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace hrg {

EvalReport evaluate(Predictor& predictor, const Dataset& dataset, const std::vector<std::size_t>& indices,
                    const EvalOptions& options) {
  const Index want = predictor.input_channels();
  if (want != 0 && want != channel_count(options.preprocess.channels)) {
    throw std::invalid_argument("evaluate: " + predictor.name() + " expects " + std::to_string(want) +
                                " input channels, evaluation uses '" + to_string(options.preprocess.channels) + "'");
  }
  PreprocessOptions prep = options.preprocess;
  prep.augment = false;

  EvalReport report;
  double total_ms = 0.0;
  for (std::size_t idx : indices) {
    if (idx >= dataset.samples.size()) throw std::out_of_range("evaluate: sample index " + std::to_string(idx));
    const Sample& sample = dataset.samples[idx];
    const Prepared p = preprocess(sample, prep, 0);
    if (p.rects.empty()) {
      report.warnings.push_back(sample.source + ": no ground-truth rectangles; excluded");
      report.outcomes.push_back(-1);
      continue;
    }

    std::vector<GraspRectangle> grasps;
    if (options.record_timing) {
      std::vector<double> times;
      for (int run = 0; run <= options.timing_repeats; ++run) {
        const auto t0 = std::chrono::steady_clock::now();
        grasps = decode_grasps(predictor.predict(p), options.decode);
        const auto t1 = std::chrono::steady_clock::now();
        if (run > 0) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      if (!times.empty()) {
        std::nth_element(times.begin(), times.begin() + static_cast<long>(times.size() / 2), times.end());
        total_ms += times[times.size() / 2];
      }
    } else {
      grasps = decode_grasps(predictor.predict(p), options.decode);
    }

    const bool hit = !grasps.empty() && is_match(grasps.front(), p.rects, options.rule);
    report.outcomes.push_back(hit ? 1 : 0);
    report.metrics.matched += hit ? 1 : 0;
    report.metrics.total += 1;
  }
  auto& m = report.metrics;
  m.accuracy = m.total > 0 ? static_cast<double>(m.matched) / static_cast<double>(m.total) : 0.0;
  m.mean_ms = m.total > 0 ? total_ms / static_cast<double>(m.total) : 0.0;
  return report;
}

ResultRow mean_row(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("mean_row: no rows");
  ResultRow out = rows.front();
  out.fold = "mean";
  out.accuracy = 0;
  out.ms = 0;
  out.matched = 0;
  out.total = 0;
  for (const auto& r : rows) {
    out.accuracy += r.accuracy;
    out.ms += r.ms;
    out.matched += r.matched;
    out.total += r.total;
  }
  out.accuracy /= static_cast<double>(rows.size());
  out.ms /= static_cast<double>(rows.size());
  return out;
}

std::string format_table(const std::vector<ResultRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %-6s %-5s %-5s %12s %10s %9s\n", "method", "input", "split", "fold",
                "accuracy(%)", "time(ms)", "matched");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %-6s %-5s %-5s %12.2f %10.2f %4lld/%-4lld\n", r.method.c_str(),
                  r.channels.c_str(), r.split.c_str(), r.fold.c_str(), 100.0 * r.accuracy, r.ms,
                  static_cast<long long>(r.matched), static_cast<long long>(r.total));
    out += buf;
  }
  return out;
}

std::string format_tsv(const std::vector<ResultRow>& rows) {
  std::string out = "method\tchannels\tsplit\tfold\taccuracy\tms\tmatched\ttotal\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%s\t%.17g\t%.6f\t%lld\t%lld\n", r.method.c_str(), r.channels.c_str(),
                  r.split.c_str(), r.fold.c_str(), r.accuracy, r.ms, static_cast<long long>(r.matched),
                  static_cast<long long>(r.total));
    out += buf;
  }
  return out;
}

}  // namespace hrg
