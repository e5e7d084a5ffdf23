#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace trendsense {

/* All library errors derive from Error. `kind` is a stable machine-readable
 * name, `input_error` separates bad-input conditions (CLI exit 2) from
 * degenerate-estimation conditions (CLI exit 3). */
struct Error : std::runtime_error {
  Error(std::string kind_, bool input_error_, const std::string& what_)
      : std::runtime_error(what_), kind(std::move(kind_)), input_error(input_error_) {}
  std::string kind;
  bool input_error;
};

#define TRENDSENSE_ERROR(Name, is_input)                      \
  struct Name : Error {                                       \
    explicit Name(const std::string& what_)                   \
        : Error(#Name, is_input, what_) {}                    \
  };

// panel_data
TRENDSENSE_ERROR(UnbalancedPanel, true)
TRENDSENSE_ERROR(NonMonotoneTreatment, true)
TRENDSENSE_ERROR(DuplicateCell, true)
TRENDSENSE_ERROR(SchemaMismatch, true)
TRENDSENSE_ERROR(TimeVaryingCovariate, true)
TRENDSENSE_ERROR(NotTwoPeriods, true)
TRENDSENSE_ERROR(NoTreatedUnits, false)
// learners
TRENDSENSE_ERROR(SingularDesign, false)
TRENDSENSE_ERROR(OneClassOnly, false)
TRENDSENSE_ERROR(FoldDegenerate, false)
// did_2x2
TRENDSENSE_ERROR(DegenerateGroups, false)
// sensitivity
TRENDSENSE_ERROR(MissingG1, false)
TRENDSENSE_ERROR(DegenerateSigma, false)
TRENDSENSE_ERROR(RhoZero, true)
TRENDSENSE_ERROR(UnknownCovariate, true)
TRENDSENSE_ERROR(NoPrePeriods, true)
// did_multi
TRENDSENSE_ERROR(EmptyTreatedCohort, false)
TRENDSENSE_ERROR(EmptyControl, false)
// simulation
TRENDSENSE_ERROR(CalibrationDiverged, false)
// argument validation (scenario ranges, levels, fold counts, ...)
TRENDSENSE_ERROR(InvalidArgument, true)

#undef TRENDSENSE_ERROR

}  // namespace trendsense
