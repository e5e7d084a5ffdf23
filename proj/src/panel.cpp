#include "trendsense/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "trendsense/errors.hpp"
#include "trendsense/stats.hpp"

namespace trendsense {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw SchemaMismatch("non-numeric value '" + s + "' in " + where);
  return v;
}

int64_t parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw SchemaMismatch("non-integer value '" + s + "' in " + where);
  return static_cast<int64_t>(v);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int PanelDataset::period_index(int64_t t) const {
  auto it = std::lower_bound(periods.begin(), periods.end(), t);
  if (it == periods.end() || *it != t) return -1;
  return static_cast<int>(it - periods.begin());
}

void PanelDataset::validate() const {
  const int n = n_units();
  const int T = n_periods();
  if (n == 0 || T == 0) throw SchemaMismatch("empty dataset");
  if (outcomes.rows() != n || outcomes.cols() != T)
    throw SchemaMismatch("outcomes shape does not match units x periods");
  if (covariates.rows() != n || covariates.cols() != static_cast<long>(covariate_names.size()))
    throw SchemaMismatch("covariate shape does not match names");
  if (static_cast<int>(first_treatment.size()) != n)
    throw SchemaMismatch("first_treatment length does not match units");
  for (int t = 1; t < T; ++t)
    if (periods[t] <= periods[t - 1]) throw SchemaMismatch("periods not strictly increasing");
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t)
      if (!std::isfinite(outcomes(i, t)))
        throw UnbalancedPanel("unit " + unit_ids[i] + " has a missing outcome");
    // D[i, first period] must be 0: no unit treated in or before the first period
    if (!is_never(first_treatment[i]) && first_treatment[i] <= periods.front())
      throw NonMonotoneTreatment("unit " + unit_ids[i] + " treated in the first period");
  }
  if (hidden_confounder && hidden_confounder->size() != n)
    throw SchemaMismatch("hidden_confounder length does not match units");
}

PanelDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("empty file: " + path);
  std::vector<std::string> header = split_line(line);
  std::unordered_map<std::string, int> col;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    if (col.count(header[j])) throw SchemaMismatch("duplicate column '" + header[j] + "'");
    col[header[j]] = j;
  }
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaMismatch("missing column '" + name + "'");
    return it->second;
  };

  const bool use_d = !schema.treat_indicator.empty();
  const int c_unit = need(schema.unit);
  const int c_time = need(schema.time);
  const int c_y = need(schema.outcome);
  const int c_treat = use_d ? need(schema.treat_indicator) : need(schema.first_treat);

  std::vector<std::string> cov_names = schema.covariates;
  std::vector<int> c_cov;
  if (cov_names.empty()) {
    for (int j = 0; j < static_cast<int>(header.size()); ++j) {
      if (j == c_unit || j == c_time || j == c_y || j == c_treat) continue;
      cov_names.push_back(header[j]);
      c_cov.push_back(j);
    }
  } else {
    for (const auto& name : cov_names) c_cov.push_back(need(name));
  }
  const int K = static_cast<int>(cov_names.size());

  struct Row {
    int unit;
    int64_t time;
    double y;
    int64_t g = kNever;  // first_treat path
    int d = 0;           // indicator path
  };
  std::vector<Row> rows;
  std::vector<std::string> unit_ids;
  std::unordered_map<std::string, int> unit_index;
  std::vector<std::vector<double>> unit_cov;  // per unit, first-seen values
  std::vector<int64_t> times_seen;

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f = split_line(line);
    if (f.size() != header.size())
      throw SchemaMismatch("row " + std::to_string(lineno) + " has " +
                           std::to_string(f.size()) + " fields, expected " +
                           std::to_string(header.size()));
    const std::string where = "row " + std::to_string(lineno);
    Row r;
    const std::string& uid = f[c_unit];
    auto it = unit_index.find(uid);
    if (it == unit_index.end()) {
      r.unit = static_cast<int>(unit_ids.size());
      unit_index[uid] = r.unit;
      unit_ids.push_back(uid);
      unit_cov.emplace_back();
    } else {
      r.unit = it->second;
    }
    r.time = parse_int(f[c_time], where + " column '" + schema.time + "'");
    r.y = parse_double(f[c_y], where + " column '" + schema.outcome + "'");
    if (use_d) {
      double dv = parse_double(f[c_treat], where + " column '" + schema.treat_indicator + "'");
      if (dv != 0.0 && dv != 1.0)
        throw SchemaMismatch("treatment indicator must be 0 or 1 in " + where);
      r.d = static_cast<int>(dv);
    } else {
      const std::string& gv = f[c_treat];
      r.g = gv.empty() ? kNever : parse_int(gv, where + " column '" + schema.first_treat + "'");
      if (r.g == 0) r.g = kNever;
    }
    std::vector<double> cv(K);
    for (int k = 0; k < K; ++k)
      cv[k] = parse_double(f[c_cov[k]], where + " column '" + cov_names[k] + "'");
    if (unit_cov[r.unit].empty()) {
      unit_cov[r.unit] = cv;
    } else {
      for (int k = 0; k < K; ++k)
        if (unit_cov[r.unit][k] != cv[k])
          throw TimeVaryingCovariate("covariate '" + cov_names[k] + "' varies within unit '" +
                                     uid + "'");
    }
    times_seen.push_back(r.time);
    rows.push_back(r);
  }
  if (rows.empty()) throw SchemaMismatch("no data rows in " + path);

  std::sort(times_seen.begin(), times_seen.end());
  times_seen.erase(std::unique(times_seen.begin(), times_seen.end()), times_seen.end());

  PanelDataset ds;
  ds.unit_ids = unit_ids;
  ds.periods = times_seen;
  const int n = ds.n_units();
  const int T = ds.n_periods();
  ds.outcomes = Eigen::MatrixXd::Constant(n, T, std::numeric_limits<double>::quiet_NaN());
  ds.covariates.resize(n, K);
  ds.covariate_names = cov_names;
  ds.first_treatment.assign(n, kNever);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) ds.covariates(i, k) = unit_cov[i][k];

  // per-unit treatment path when using the indicator column
  std::vector<std::map<int64_t, int>> d_path(use_d ? n : 0);
  std::vector<bool> g_set(n, false);

  for (const Row& r : rows) {
    int ti = ds.period_index(r.time);
    if (!std::isnan(ds.outcomes(r.unit, ti)))
      throw DuplicateCell("unit '" + unit_ids[r.unit] + "' period " + std::to_string(r.time) +
                          " appears twice");
    ds.outcomes(r.unit, ti) = r.y;
    if (use_d) {
      d_path[r.unit][r.time] = r.d;
    } else if (!g_set[r.unit]) {
      ds.first_treatment[r.unit] = r.g;
      g_set[r.unit] = true;
    } else if (ds.first_treatment[r.unit] != r.g) {
      throw SchemaMismatch("first-treatment column varies within unit '" + unit_ids[r.unit] + "'");
    }
  }

  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t)
      if (std::isnan(ds.outcomes(i, t)))
        throw UnbalancedPanel("unit '" + unit_ids[i] + "' missing period " +
                              std::to_string(ds.periods[t]));

  if (use_d) {
    for (int i = 0; i < n; ++i) {
      int prev = 0;
      int64_t first = kNever;
      for (const auto& [t, d] : d_path[i]) {
        if (d < prev)
          throw NonMonotoneTreatment("unit '" + unit_ids[i] + "' switches from treated back to untreated");
        if (d == 1 && first == kNever) first = t;
        prev = d;
      }
      ds.first_treatment[i] = first;
    }
  }

  ds.validate();
  return ds;
}

void save_csv(const PanelDataset& ds, const std::string& path, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw SchemaMismatch("cannot write file: " + path);
  out << schema.unit << ',' << schema.time << ',' << schema.outcome << ','
      << (schema.first_treat.empty() ? std::string("g") : schema.first_treat);
  for (const auto& name : ds.covariate_names) out << ',' << name;
  out << '\n';
  for (int i = 0; i < ds.n_units(); ++i) {
    for (int t = 0; t < ds.n_periods(); ++t) {
      out << ds.unit_ids[i] << ',' << ds.periods[t] << ',' << fmt_double(ds.outcomes(i, t)) << ','
          << (is_never(ds.first_treatment[i]) ? int64_t{0} : ds.first_treatment[i]);
      for (int k = 0; k < static_cast<int>(ds.covariate_names.size()); ++k)
        out << ',' << fmt_double(ds.covariates(i, k));
      out << '\n';
    }
  }
}

TwoByTwoView canonical_2x2(const PanelDataset& ds) {
  if (ds.n_periods() != 2) throw NotTwoPeriods("expected 2 periods, found " +
                                               std::to_string(ds.n_periods()));
  const int n = ds.n_units();
  TwoByTwoView v;
  v.delta_y = ds.outcomes.col(1) - ds.outcomes.col(0);
  v.treat.resize(n);
  for (int i = 0; i < n; ++i) {
    v.treat[i] = ds.first_treatment[i] == ds.periods[1] ? 1.0 : 0.0;
    if (v.treat[i] > 0.5)
      ++v.n_treated;
    else
      ++v.n_control;
  }
  if (v.n_treated == 0) throw NoTreatedUnits("no unit first treated in the second period");
  if (v.n_control == 0) throw DegenerateGroups("no control units");
  v.xmat = ds.covariates;
  v.covariate_names = ds.covariate_names;
  return v;
}

Diagnostics diagnostics(const PanelDataset& ds) {
  Diagnostics d;
  d.n_units = ds.n_units();
  d.n_periods = ds.n_periods();
  std::map<int64_t, int> cohorts;
  for (int64_t g : ds.first_treatment) ++cohorts[g];
  d.cohort_sizes.assign(cohorts.begin(), cohorts.end());
  d.treated_share_by_period.resize(ds.n_periods());
  for (int t = 0; t < ds.n_periods(); ++t) {
    int c = 0;
    for (int i = 0; i < ds.n_units(); ++i)
      if (ds.treated_at(i, ds.periods[t])) ++c;
    d.treated_share_by_period[t] = static_cast<double>(c) / ds.n_units();
  }
  for (int k = 0; k < static_cast<int>(ds.covariate_names.size()); ++k) {
    Eigen::VectorXd x = ds.covariates.col(k);
    d.covariate_summaries.push_back(
        {ds.covariate_names[k], mean(x), sd(x), x.minCoeff(), x.maxCoeff()});
  }
  return d;
}

}  // namespace trendsense
