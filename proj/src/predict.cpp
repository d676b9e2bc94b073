#include "ezgp/predict.hpp"

#include <stdexcept>
#include <string>

namespace ezgp {

PredictionResult predict_one(const FittedModel& m, const MixedInput& w) {
  validate_input(m.schema, w, "target");
  const MixedInput wn = m.data.to_normalized(w);
  PredictionResult r;
  constexpr double slack = 1e-12;
  r.extrapolated = ((wn.x.array() < -slack) || (wn.x.array() > 1.0 + slack)).any();

  const VectorXd gamma = cross_covariance(m.data.X, m.data.Z, wn, m.params);
  const VectorXd v = m.chol.L.triangularView<Eigen::Lower>().solve(gamma);
  const double total = total_variance(m.params);
  const double u = 1.0 - m.ones_solve.dot(gamma);
  double mse = total - v.squaredNorm() + u * u / m.ones_quad;
  if (mse < -1e-8 * total)
    throw std::logic_error("predict: negative mean squared error " + std::to_string(mse) +
                           " exceeds roundoff allowance");
  if (mse < 0.0) mse = 0.0;

  const double mean = mean_of(m.params) + gamma.dot(m.weights);
  r.mean = m.data.response.center + m.data.response.scale * mean;
  r.mse = m.data.response.scale * m.data.response.scale * mse;
  return r;
}

std::vector<PredictionResult> predict_batch(const FittedModel& m, const std::vector<MixedInput>& ws) {
  std::vector<PredictionResult> out;
  out.reserve(ws.size());
  for (std::size_t i = 0; i < ws.size(); ++i) {
    try {
      out.push_back(predict_one(m, ws[i]));
    } catch (const ValidationError& e) {
      throw ValidationError("target " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ezgp
