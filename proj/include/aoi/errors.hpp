#pragma once

#include <stdexcept>
#include <string>

namespace aoi {

// Base class for all domain errors raised by the library. CLI maps these to
// exit code 1; usage problems are caught by the argument parser (exit 2).
struct AoiError : std::runtime_error {
  explicit AoiError(const std::string& msg) : std::runtime_error(msg) {}
};

// Total offered load >= 1 where a stable FCFS steady state is required.
struct UnstableLoad : AoiError {
  explicit UnstableLoad(const std::string& msg) : AoiError(msg) {}
};

// Stationary balance system is rank-deficient beyond the expected one
// null direction (chain not ergodic despite passing structural checks).
struct SingularChain : AoiError {
  explicit SingularChain(const std::string& msg) : AoiError(msg) {}
};

// Age fixed point does not exist: spectral abscissa of the reduced
// rate/reset matrix is non-negative.
struct UnstableModel : AoiError {
  explicit UnstableModel(const std::string& msg) : AoiError(msg) {}
};

// The age solve produced an entry below the numerical slack; signals a
// modeling error (a valid model has a non-negative solution).
struct NegativeSolution : AoiError {
  explicit NegativeSolution(const std::string& msg) : AoiError(msg) {}
};

// Estimators asked to run on fewer records than they can use.
struct InsufficientData : AoiError {
  explicit InsufficientData(const std::string& msg) : AoiError(msg) {}
};

}  // namespace aoi
