#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trendsense/did2x2.hpp"
#include "trendsense/panel.hpp"

namespace trendsense {

/* Group-time ATT(g, t) under staggered adoption. Each cell reduces to a 2x2
 * problem on the subsample of cohort-g units plus the chosen control group,
 * with dY = Y[t_eval] - Y[t_pre]. */

enum class ControlGroup { kNeverTreated, kNotYetTreated };

struct GroupTimeSpec {
  int64_t g = 0;
  int64_t t_pre = 0;
  int64_t t_eval = 0;
  int64_t delta = 0;  // anticipation window
  ControlGroup control = ControlGroup::kNeverTreated;
};

struct GtResult {
  GroupTimeSpec spec;
  AttEstimate estimate;
  int n_treated = 0;
  int n_control = 0;
  bool fragile = false;  // fewer than 5 treated units
};

// keeps units with G == g, or control: never-treated (G = NEVER) /
// not-yet-treated (G > t_eval + delta); treat = 1{G == g}
TwoByTwoView gt_subsample(const PanelDataset& ds, const GroupTimeSpec& spec);

GtResult att_gt(const PanelDataset& ds, const GroupTimeSpec& spec, const LearnerSpec& lspec);

struct SkippedCell {
  int64_t g = 0;
  int64_t t_eval = 0;
  std::string reason;
};

struct GtBatch {
  std::vector<GtResult> results;  // ordered by (g, t_eval)
  std::vector<SkippedCell> skipped;
};

/* Enumerates every cohort g and every period after the first, with the base
 * period set to the preceding period for pre-treatment cells
 * (t_eval < g - delta) and anchored at the last pre-treatment period
 * (the largest period <= g - delta - 1) otherwise. Infeasible or failing
 * cells are recorded, not fatal. Cells run with per-cell seeds derived from
 * lspec.seed, so results are identical for any thread count. */
GtBatch att_gt_all(const PanelDataset& ds, int64_t delta, ControlGroup control,
                   const LearnerSpec& lspec, int threads = 1);

}  // namespace trendsense
