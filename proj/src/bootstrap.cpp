#include "fusioniv/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>

#include "fusioniv/error.hpp"
#include "fusioniv/rng.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

namespace {

// type-7 quantile on sorted data
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - std::floor(h);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

BootstrapResult bootstrap(const FusedSample& sample,
                          const std::function<double(const FusedSample&)>& recipe,
                          const BootstrapOptions& options) {
  if (options.replicates < 50) {
    throw Error(ErrorCode::ConfigError, "bootstrap needs at least 50 replicates");
  }
  const int B = options.replicates;
  const int n = sample.n();

  std::vector<int> primary_idx, auxiliary_idx;
  if (options.stratified) {
    for (int i = 0; i < n; ++i) {
      (sample.r(i) == 1 ? primary_idx : auxiliary_idx).push_back(i);
    }
  }

  std::vector<std::optional<double>> results(static_cast<std::size_t>(B));

  auto run_replicate = [&](int b) {
    SplitRng rng(options.seed, 0x626F6F74ULL ^ static_cast<std::uint64_t>(b));
    std::vector<int> indices(static_cast<std::size_t>(n));
    if (options.stratified) {
      std::size_t k = 0;
      for (std::size_t j = 0; j < primary_idx.size(); ++j) {
        indices[k++] = primary_idx[static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(primary_idx.size()))];
      }
      for (std::size_t j = 0; j < auxiliary_idx.size(); ++j) {
        indices[k++] = auxiliary_idx[static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(auxiliary_idx.size()))];
      }
    } else {
      for (int k = 0; k < n; ++k) {
        indices[static_cast<std::size_t>(k)] =
            static_cast<int>(rng.uniform() * static_cast<double>(n));
      }
    }
    try {
      const FusedSample resample = sample.subsample(indices);
      results[static_cast<std::size_t>(b)] = recipe(resample);
    } catch (const Error&) {
      // a failed replicate is recorded, not fatal
    }
  };

  const int workers = std::max(1, options.parallelism);
  if (workers == 1) {
    for (int b = 0; b < B; ++b) run_replicate(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int b = next.fetch_add(1); b < B; b = next.fetch_add(1)) run_replicate(b);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  BootstrapResult out;
  out.replicates = B;
  out.level = options.ci_level;
  for (const auto& r : results) {
    if (r) {
      out.estimates.push_back(*r);
    } else {
      ++out.failures;
    }
  }
  out.reliable =
      static_cast<double>(out.failures) / static_cast<double>(B) <= options.max_failure_share;
  if (!out.reliable) {
    throw Error(ErrorCode::TooManyFailures,
                std::to_string(out.failures) + "/" + std::to_string(B) +
                    " bootstrap replicates failed");
  }
  out.se_boot = sample_sd(out.estimates);
  std::vector<double> sorted = out.estimates;
  std::sort(sorted.begin(), sorted.end());
  out.ci_lo = quantile_sorted(sorted, (1.0 - options.ci_level) / 2.0);
  out.ci_hi = quantile_sorted(sorted, (1.0 + options.ci_level) / 2.0);
  return out;
}

}  // namespace fusioniv
