#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace trendsense {

/* Balanced unit x time panel with time-invariant covariates and a per-unit
 * first-treatment period. Never-treated units carry the kNever sentinel
 * (conceptually G = infinity); CSV files encode them as 0 or empty. */

constexpr int64_t kNever = std::numeric_limits<int64_t>::max() / 4;
inline bool is_never(int64_t g) { return g >= kNever; }

struct PanelDataset {
  std::vector<std::string> unit_ids;
  std::vector<int64_t> periods;  // strictly increasing
  Eigen::MatrixXd outcomes;      // n_units x n_periods
  Eigen::MatrixXd covariates;    // n_units x n_covariates
  std::vector<std::string> covariate_names;
  std::vector<int64_t> first_treatment;  // kNever when never treated
  std::optional<Eigen::VectorXd> hidden_confounder;  // simulation only

  int n_units() const { return static_cast<int>(unit_ids.size()); }
  int n_periods() const { return static_cast<int>(periods.size()); }
  int period_index(int64_t t) const;  // -1 when absent
  bool treated_at(int i, int64_t t) const { return first_treatment[i] <= t; }
  void validate() const;  // shape + treatment-path invariants, throws
};

struct GtMeta {
  int64_t g = 0, t_pre = 0, t_eval = 0;
  std::string control_kind;  // "never" or "notyet"; empty for plain 2x2
};

struct TwoByTwoView {
  Eigen::VectorXd delta_y;
  Eigen::VectorXd treat;  // 0/1
  Eigen::MatrixXd xmat;
  std::vector<std::string> covariate_names;
  int n_treated = 0;
  int n_control = 0;
  std::optional<GtMeta> meta;

  int n() const { return static_cast<int>(delta_y.size()); }
};

struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "y";
  // first-treatment column; 0 or empty value means never treated
  std::string first_treat = "g";
  // alternative: per-row treatment indicator column (set first_treat empty)
  std::string treat_indicator;
  // empty: every remaining column is taken as a covariate
  std::vector<std::string> covariates;
};

PanelDataset load_csv(const std::string& path, const CsvSchema& schema = {});
void save_csv(const PanelDataset& ds, const std::string& path, const CsvSchema& schema = {});

// 2-period panel -> (delta_y, treat, xmat); treat = 1{G == second period}
TwoByTwoView canonical_2x2(const PanelDataset& ds);

struct Diagnostics {
  int n_units = 0;
  int n_periods = 0;
  // (first-treatment period, unit count); never-treated group keyed by kNever
  std::vector<std::pair<int64_t, int>> cohort_sizes;
  std::vector<double> treated_share_by_period;
  struct CovariateSummary {
    std::string name;
    double mean, sd, min, max;
  };
  std::vector<CovariateSummary> covariate_summaries;
};

Diagnostics diagnostics(const PanelDataset& ds);

}  // namespace trendsense
