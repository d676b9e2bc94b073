// Conditional-mean prediction and predictive mean squared error.
#pragma once

#include "ezgp/inference.hpp"

#include <vector>

namespace ezgp {

struct PredictionResult {
  double mean = 0.0;  // response units
  double mse = 0.0;   // response-variance units, clamped at 0
  bool extrapolated = false;  // some quantitative coordinate left the training [0,1] box
};

/// w is given in original units and mapped through the stored column scaling.
/// Unseen level combinations are fine; only out-of-range level indices are rejected.
PredictionResult predict_one(const FittedModel& m, const MixedInput& w);

/// Elementwise predict_one, order preserved. The first invalid target aborts with its index.
std::vector<PredictionResult> predict_batch(const FittedModel& m, const std::vector<MixedInput>& ws);

}  // namespace ezgp
