#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gtt {

struct RecordRow {
  long index = 0;
  std::string metric;
  double value = 0.0;
};

/// Metric series of one run (one algorithm, one hyperparameter value, one
/// seed). `index` is a step count or an episode number depending on metric.
struct ExperimentRecord {
  std::string experiment;
  std::string algorithm;
  std::string hyper_name;
  double hyper_value = 0.0;
  std::uint64_t seed = 0;
  std::vector<RecordRow> rows;
  bool diverged = false;

  void add(long index, std::string metric, double value) {
    rows.push_back({index, std::move(metric), value});
  }
  /// All values of one metric in insertion order.
  std::vector<double> series(const std::string& metric) const;
  /// Last value of `metric`; throws std::out_of_range if absent.
  double last(const std::string& metric) const;
};

/// CSV schema:
///   experiment,algorithm,hyper_name,hyper_value,seed,index,metric,value,status
/// `status` is "ok" for finite values and "diverged" otherwise.
void write_csv_header(std::ostream& out);
void write_csv_rows(std::ostream& out, const ExperimentRecord& record);

/// Shortest round-trip decimal form, so reruns are byte-identical.
std::string format_double(double v);

}  // namespace gtt
