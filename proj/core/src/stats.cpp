#include "genet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include "genet/error.hpp"
#include "genet/rng.hpp"
#include "genet/tensor.hpp"

namespace genet {

namespace {

constexpr std::size_t kChunkTrials = 1 << 16;

struct ChunkResult {
  RunningMoments moments;
  std::vector<std::uint64_t> counts;
  std::uint64_t above = 0;
};

}  // namespace

void StatsConfig::validate() const {
  if (!(sigma > 0.0)) fail(ErrorCode::kArgument, "sigma must be > 0");
  if (n == 0) fail(ErrorCode::kArgument, "member count n must be >= 1");
  if (num_trials == 0) fail(ErrorCode::kArgument, "num_trials must be >= 1");
  if (bins == 0) fail(ErrorCode::kArgument, "bins must be >= 1");
  if (!(rho <= 1.0)) fail(ErrorCode::kNotPsd, "rho must be <= 1");
  if (n > 1) {
    const double bound = -1.0 / static_cast<double>(n - 1);
    if (rho < bound) {
      fail(ErrorCode::kNotPsd, "rho=" + std::to_string(rho) + " below the PSD bound " +
                                   std::to_string(bound) + " for n=" + std::to_string(n));
    }
  }
}

Moments analytic_independent(double mu, double sigma, std::size_t n) {
  return {mu, sigma * sigma / static_cast<double>(n)};
}

Moments analytic_correlated_pair(double mu, double sigma, double rho) {
  return {mu, (1.0 + rho) / 2.0 * sigma * sigma};
}

Moments analytic_equicorrelated(double mu, double sigma, std::size_t n, double rho) {
  StatsConfig probe;
  probe.mu = mu;
  probe.sigma = sigma;
  probe.n = n;
  probe.rho = rho;
  probe.validate();
  const double nn = static_cast<double>(n);
  return {mu, sigma * sigma * (1.0 + (nn - 1.0) * rho) / nn};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double accuracy_estimate(double mu, double variance) {
  if (!(variance > 0.0)) fail(ErrorCode::kArgument, "variance must be > 0");
  return normal_cdf((mu - 0.5) / std::sqrt(variance));
}

void RunningMoments::add(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

void RunningMoments::merge(const RunningMoments& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double total = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ += delta * nb / total;
  m2_ += other.m2_ + delta * delta * na * nb / total;
  count_ += other.count_;
}

std::vector<double> cholesky_psd(const std::vector<double>& cov, std::size_t n) {
  if (cov.size() != n * n) fail(ErrorCode::kShape, "covariance must be n x n");
  std::vector<double> lower(n * n, 0.0);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(cov[i * n + i]));
  const double tol = 1e-12 * std::max(scale, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = cov[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= lower[j * n + k] * lower[j * n + k];
    if (d < -tol) {
      fail(ErrorCode::kNotPsd, "covariance is not positive semidefinite (pivot " +
                                   std::to_string(j) + " = " + std::to_string(d) + ")");
    }
    if (d <= tol) {
      // Zero pivot: the rest of the column must vanish too.
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = cov[i * n + j];
        for (std::size_t k = 0; k < j; ++k) s -= lower[i * n + k] * lower[j * n + k];
        if (std::abs(s) > 1e-9 * std::max(scale, 1.0)) {
          fail(ErrorCode::kNotPsd, "covariance is not positive semidefinite");
        }
      }
      continue;
    }
    const double root = std::sqrt(d);
    lower[j * n + j] = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = cov[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= lower[i * n + k] * lower[j * n + k];
      lower[i * n + j] = s / root;
    }
  }
  return lower;
}

EnsembleDist monte_carlo(const StatsConfig& config, unsigned workers) {
  config.validate();
  const std::size_t n = config.n;
  std::vector<double> cov(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cov[i * n + j] = config.sigma * config.sigma * (i == j ? 1.0 : config.rho);
    }
  }
  const std::vector<double> lower = cholesky_psd(cov, n);

  EnsembleDist dist;
  dist.trials = config.num_trials;
  const double sd = std::sqrt(analytic_equicorrelated(config.mu, config.sigma, n, config.rho).variance);
  const double half_width = 5.0 * std::max(sd, 1e-12);
  const double lo = config.mu - half_width;
  const double bin_width = 2.0 * half_width / static_cast<double>(config.bins);
  for (std::size_t b = 0; b <= config.bins; ++b) {
    dist.histogram.edges.push_back(lo + bin_width * static_cast<double>(b));
  }

  const std::size_t chunks = (config.num_trials + kChunkTrials - 1) / kChunkTrials;
  std::vector<ChunkResult> results(chunks);
  const Rng root(config.seed);
  auto run_chunk = [&](std::size_t c) {
    Rng rng = root.derive(c);
    ChunkResult& r = results[c];
    r.counts.assign(config.bins, 0);
    const std::size_t begin = c * kChunkTrials;
    const std::size_t end = std::min(begin + kChunkTrials, config.num_trials);
    std::vector<double> z(n);
    for (std::size_t t = begin; t < end; ++t) {
      for (auto& v : z) v = rng.normal();
      // y = mu + L z; the ensemble output is the mean of y.
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double yi = config.mu;
        for (std::size_t k = 0; k <= i; ++k) yi += lower[i * n + k] * z[k];
        acc += yi;
      }
      const double y_hat = acc / static_cast<double>(n);
      r.moments.add(y_hat);
      if (y_hat > 0.5) ++r.above;
      const double pos = (y_hat - lo) / bin_width;
      const auto bin = pos <= 0.0 ? 0
                                  : std::min(config.bins - 1, static_cast<std::size_t>(pos));
      ++r.counts[bin];
    }
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  if (deterministic_mode()) workers = 1;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }

  RunningMoments total;
  std::uint64_t above = 0;
  dist.histogram.counts.assign(config.bins, 0);
  for (const auto& r : results) {
    total.merge(r.moments);
    above += r.above;
    for (std::size_t b = 0; b < config.bins; ++b) dist.histogram.counts[b] += r.counts[b];
  }
  dist.mean = total.mean();
  dist.variance = total.variance();
  dist.estimated_accuracy = static_cast<double>(above) / static_cast<double>(config.num_trials);
  return dist;
}

void write_stats_csv(std::ostream& out, const StatsConfig& config, const EnsembleDist& dist) {
  const Moments analytic = analytic_equicorrelated(config.mu, config.sigma, config.n, config.rho);
  const auto old_precision = out.precision(17);
  out << "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < dist.histogram.counts.size(); ++b) {
    out << dist.histogram.edges[b] << ',' << dist.histogram.edges[b + 1] << ','
        << dist.histogram.counts[b] << '\n';
  }
  out << "\nmu,sigma,n,rho,trials,seed,mean,variance,analytic_variance,estimated_accuracy,"
         "analytic_accuracy\n";
  out << config.mu << ',' << config.sigma << ',' << config.n << ',' << config.rho << ','
      << config.num_trials << ',' << config.seed << ',' << dist.mean << ',' << dist.variance << ','
      << analytic.variance << ',' << dist.estimated_accuracy << ','
      << accuracy_estimate(config.mu, analytic.variance) << '\n';
  out.precision(old_precision);
}

}  // namespace genet
