#include "trendsense/didmulti.hpp"

#include <algorithm>
#include <set>

#include "trendsense/errors.hpp"
#include "trendsense/rng.hpp"
#include "trendsense/stats.hpp"

namespace trendsense {

TwoByTwoView gt_subsample(const PanelDataset& ds, const GroupTimeSpec& spec) {
  int i_pre = ds.period_index(spec.t_pre);
  int i_eval = ds.period_index(spec.t_eval);
  if (i_pre < 0 || i_eval < 0)
    throw InvalidArgument("gt_subsample: t_pre or t_eval not a panel period");
  if (spec.t_pre >= spec.t_eval)
    throw InvalidArgument("gt_subsample: t_pre must precede t_eval");

  std::vector<int> keep;
  std::vector<double> treat;
  for (int i = 0; i < ds.n_units(); ++i) {
    int64_t gi = ds.first_treatment[i];
    bool is_cohort = gi == spec.g;
    bool is_control = spec.control == ControlGroup::kNeverTreated
                          ? is_never(gi)
                          : gi > spec.t_eval + spec.delta;
    if (is_cohort) {
      keep.push_back(i);
      treat.push_back(1.0);
    } else if (is_control) {
      keep.push_back(i);
      treat.push_back(0.0);
    }
  }

  TwoByTwoView v;
  v.delta_y.resize(keep.size());
  v.treat.resize(keep.size());
  v.xmat.resize(keep.size(), ds.covariates.cols());
  for (size_t r = 0; r < keep.size(); ++r) {
    int i = keep[r];
    v.delta_y[r] = ds.outcomes(i, i_eval) - ds.outcomes(i, i_pre);
    v.treat[r] = treat[r];
    v.xmat.row(r) = ds.covariates.row(i);
    if (treat[r] > 0.5)
      ++v.n_treated;
    else
      ++v.n_control;
  }
  v.covariate_names = ds.covariate_names;
  if (v.n_treated == 0)
    throw EmptyTreatedCohort("gt_subsample: no units first treated at " + std::to_string(spec.g));
  if (v.n_control == 0)
    throw EmptyControl("gt_subsample: control group is empty for (g=" + std::to_string(spec.g) +
                       ", t_eval=" + std::to_string(spec.t_eval) + ")");
  v.meta = GtMeta{spec.g, spec.t_pre, spec.t_eval,
                  spec.control == ControlGroup::kNeverTreated ? "never" : "notyet"};
  return v;
}

GtResult att_gt(const PanelDataset& ds, const GroupTimeSpec& spec, const LearnerSpec& lspec) {
  TwoByTwoView view = gt_subsample(ds, spec);
  NuisanceFit fit = crossfit(view, lspec);
  GtResult res;
  res.spec = spec;
  res.estimate = att_dml(view, fit, /*normalized=*/false);
  res.n_treated = view.n_treated;
  res.n_control = view.n_control;
  res.fragile = view.n_treated < 5;
  return res;
}

GtBatch att_gt_all(const PanelDataset& ds, int64_t delta, ControlGroup control,
                   const LearnerSpec& lspec, int threads) {
  std::set<int64_t> cohorts;
  for (int64_t g : ds.first_treatment)
    if (!is_never(g)) cohorts.insert(g);

  struct Cell {
    GroupTimeSpec spec;
    bool feasible = true;
    std::string skip_reason;
  };
  std::vector<Cell> cells;
  for (int64_t g : cohorts) {
    for (int t = 1; t < ds.n_periods(); ++t) {
      Cell c;
      c.spec.g = g;
      c.spec.t_eval = ds.periods[t];
      c.spec.delta = delta;
      c.spec.control = control;
      if (c.spec.t_eval < g - delta) {
        c.spec.t_pre = ds.periods[t - 1];  // consecutive pre-treatment comparison
      } else {
        // anchored at the last pre-treatment period
        int64_t anchor = g - delta - 1;
        int idx = -1;
        for (int s = 0; s < ds.n_periods(); ++s)
          if (ds.periods[s] <= anchor) idx = s;
        if (idx < 0) {
          c.feasible = false;
          c.skip_reason = "no pre-treatment base period";
        } else {
          c.spec.t_pre = ds.periods[idx];
        }
      }
      if (c.feasible && c.spec.t_pre >= c.spec.t_eval) {
        c.feasible = false;
        c.skip_reason = "base period not before evaluation period";
      }
      cells.push_back(c);
    }
  }

  GtBatch batch;
  std::vector<Cell> runnable;
  for (const Cell& c : cells) {
    if (c.feasible)
      runnable.push_back(c);
    else
      batch.skipped.push_back({c.spec.g, c.spec.t_eval, c.skip_reason});
  }

  struct Slot {
    bool ok = false;
    GtResult result;
    std::string error;
  };
  std::vector<Slot> slots(runnable.size());
  parallel_for(static_cast<int>(runnable.size()), threads, [&](int i) {
    LearnerSpec cell_spec = lspec;
    cell_spec.seed = mix_seed(lspec.seed, static_cast<uint64_t>(runnable[i].spec.g),
                              static_cast<uint64_t>(runnable[i].spec.t_eval));
    try {
      slots[i].result = att_gt(ds, runnable[i].spec, cell_spec);
      slots[i].ok = true;
    } catch (const Error& e) {
      slots[i].error = e.kind + ": " + e.what();
    }
  });
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].ok)
      batch.results.push_back(std::move(slots[i].result));
    else
      batch.skipped.push_back({runnable[i].spec.g, runnable[i].spec.t_eval, slots[i].error});
  }
  std::sort(batch.results.begin(), batch.results.end(), [](const GtResult& a, const GtResult& b) {
    return std::tie(a.spec.g, a.spec.t_eval) < std::tie(b.spec.g, b.spec.t_eval);
  });
  std::sort(batch.skipped.begin(), batch.skipped.end(), [](const SkippedCell& a, const SkippedCell& b) {
    return std::tie(a.g, a.t_eval) < std::tie(b.g, b.t_eval);
  });
  return batch;
}

}  // namespace trendsense
