#pragma once

#include <stdexcept>
#include <string>

namespace magrobin {

// Common base so callers can catch everything the library throws.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define MAGROBIN_ERROR_TYPE(Name)                                   \
  struct Name : Error {                                             \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  };

MAGROBIN_ERROR_TYPE(DimensionError)        // structural problems: sizes, bandwidth, asymmetry
MAGROBIN_ERROR_TYPE(InvalidMass)           // mass matrix not positive definite
MAGROBIN_ERROR_TYPE(SolverError)           // iteration did not converge
MAGROBIN_ERROR_TYPE(ShiftSingular)         // shifted matrix could not be factorized
MAGROBIN_ERROR_TYPE(InvalidWeight)         // 1d weight non-positive somewhere
MAGROBIN_ERROR_TYPE(MinimizationAmbiguous) // scan found no clean bracket
MAGROBIN_ERROR_TYPE(DegenerateChart)       // rank-deficient surface parametrization
MAGROBIN_ERROR_TYPE(AssumptionViolated)    // formula hypotheses fail (degenerate minimum etc.)
MAGROBIN_ERROR_TYPE(ProjectionFailed)      // closest-point Newton did not converge
MAGROBIN_ERROR_TYPE(CollarTooDeep)         // collar depth beyond focal distance bound
MAGROBIN_ERROR_TYPE(PotentialInconsistent) // curl of supplied potential does not match field
MAGROBIN_ERROR_TYPE(AssemblyError)         // assembled form failed symmetry/definiteness checks
MAGROBIN_ERROR_TYPE(QuadratureError)       // quadrature refinement did not converge
MAGROBIN_ERROR_TYPE(GridError)             // non-finite assembly on the given grid
MAGROBIN_ERROR_TYPE(WindowExhausted)       // adaptive mode window hit its cap
MAGROBIN_ERROR_TYPE(FitConditioning)       // least-squares design matrix effectively rank deficient

#undef MAGROBIN_ERROR_TYPE

}  // namespace magrobin
