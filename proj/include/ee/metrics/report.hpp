#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/common/error.hpp"
#include "ee/metrics/scores.hpp"

namespace ee::metrics {

struct EvalReport {
  std::string method;
  std::string label;  ///< e.g. desk-scale marker
  std::string config_hash;
  std::vector<std::string> names;
  std::vector<ComponentError> errors;
  std::optional<std::vector<double>> crps;  ///< mean CRPS per component over instances
  std::size_t count = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = method;
    j["label"] = label;
    j["config_hash"] = config_hash;
    j["count"] = count;
    nlohmann::json comps = nlohmann::json::array();
    for (std::size_t c = 0; c < names.size(); ++c) {
      nlohmann::json e{{"name", names[c]}, {"mape_percent", errors[c].mape}, {"mdape_percent", errors[c].mdape}};
      if (crps) e["crps"] = (*crps)[c];
      comps.push_back(e);
    }
    j["components"] = comps;
    return j;
  }
};

/// Builds a report from point estimates and, optionally, per-instance
/// ensembles (instance -> particle -> component).
inline EvalReport make_report(std::string method, const std::vector<std::string>& names,
                              std::span<const ParamVector> estimates, std::span<const ParamVector> truths,
                              const std::vector<std::vector<ParamVector>>* ensembles = nullptr) {
  EvalReport r;
  r.method = std::move(method);
  r.names = names;
  r.count = truths.size();
  r.errors = mape_mdape(estimates, truths);
  ee::detail::require_shape(r.errors.size() == names.size(), "make_report: component names do not match dimension");
  if (ensembles) {
    ee::detail::require_shape(ensembles->size() == truths.size(), "make_report: ensemble count mismatch");
    std::vector<double> acc(names.size(), 0.0);
    for (std::size_t i = 0; i < truths.size(); ++i)
      for (std::size_t c = 0; c < names.size(); ++c) {
        std::vector<double> xs;
        for (const auto& p : (*ensembles)[i]) xs.push_back(p.at(c));
        acc[c] += crps_empirical(xs, truths[i][c]);
      }
    for (auto& v : acc) v /= static_cast<double>(truths.size());
    r.crps = acc;
  }
  return r;
}

inline void write_report_json(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << r.to_json().dump(2) << '\n';
}

/// CSV: method,component,mape_percent,mdape_percent,crps,count
inline void write_report_csv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "method,label,component,mape_percent,mdape_percent,crps,count\n";
  for (std::size_t c = 0; c < r.names.size(); ++c) {
    os << r.method << ',' << r.label << ',' << r.names[c] << ',' << r.errors[c].mape << ',' << r.errors[c].mdape << ',';
    if (r.crps) os << (*r.crps)[c];
    os << ',' << r.count << '\n';
  }
}

}  // namespace ee::metrics
