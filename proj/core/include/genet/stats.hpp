#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace genet {

// Binary-classification model of an ensemble: each member's correct-class
// output y_i ~ N(mu, sigma^2) with pairwise correlation rho; the ensemble
// output is the member mean.
struct StatsConfig {
  double mu = 0.6;
  double sigma = 0.2;
  std::size_t n = 1;
  double rho = 0.0;
  std::size_t num_trials = 1000000;
  std::uint64_t seed = 0;
  std::size_t bins = 50;

  // Rejects rho below the PSD bound -1/(n-1) with ErrorCode::kNotPsd.
  void validate() const;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::uint64_t> counts;
};

struct EnsembleDist {
  std::size_t trials = 0;
  double mean = 0.0;
  double variance = 0.0;
  Histogram histogram;
  // Fraction of trials with ensemble output above 0.5. Samples are not
  // clipped to [0, 1], so this is a property of the normal model.
  double estimated_accuracy = 0.0;
};

Moments analytic_independent(double mu, double sigma, std::size_t n);
Moments analytic_correlated_pair(double mu, double sigma, double rho);
Moments analytic_equicorrelated(double mu, double sigma, std::size_t n, double rho);

double normal_cdf(double x);
// P(y_hat > 0.5) for y_hat ~ N(mu, variance).
double accuracy_estimate(double mu, double variance);

// Welford accumulator with the exact pairwise merge, so partitioned runs merge
// to the same moments regardless of how trials were split.
class RunningMoments {
 public:
  void add(double x);
  void merge(const RunningMoments& other);
  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  // Population variance (divides by count).
  double variance() const { return count_ ? m2_ / static_cast<double>(count_) : 0.0; }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Lower-triangular L with L L^T = cov for a positive semidefinite matrix
// (row-major n x n). Zero pivots are allowed; negative ones throw kNotPsd.
std::vector<double> cholesky_psd(const std::vector<double>& cov, std::size_t n);

// Trials are processed in fixed chunks, each with its own derived stream, and
// merged in chunk order; results are bit-identical for a given seed whatever
// `workers` is (0 = hardware concurrency, forced to 1 in deterministic mode).
EnsembleDist monte_carlo(const StatsConfig& config, unsigned workers = 1);

// Histogram rows (bin_left,bin_right,count) followed by a summary block.
void write_stats_csv(std::ostream& out, const StatsConfig& config, const EnsembleDist& dist);

}  // namespace genet
