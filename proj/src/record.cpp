#include "gtt/record.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace gtt {

std::vector<double> ExperimentRecord::series(const std::string& metric) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.metric == metric) out.push_back(r.value);
  return out;
}

double ExperimentRecord::last(const std::string& metric) const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->metric == metric) return it->value;
  throw std::out_of_range("record has no metric '" + metric + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv_header(std::ostream& out) {
  out << "experiment,algorithm,hyper_name,hyper_value,seed,index,metric,value,status\n";
}

void write_csv_rows(std::ostream& out, const ExperimentRecord& record) {
  for (const auto& r : record.rows) {
    out << record.experiment << ',' << record.algorithm << ','
        << record.hyper_name << ',' << format_double(record.hyper_value) << ','
        << record.seed << ',' << r.index << ',' << r.metric << ','
        << format_double(r.value) << ','
        << (std::isfinite(r.value) ? "ok" : "diverged") << '\n';
  }
}

}  // namespace gtt
