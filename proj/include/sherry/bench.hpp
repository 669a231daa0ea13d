// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/bitpack.hpp"
#include "sherry/lut_engine.hpp"
#include "sherry/quant.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <vector>

namespace sherry {

struct BenchOptions {
  std::vector<PackScheme> schemes{PackScheme::sherry125, PackScheme::dense2bit, PackScheme::tl2ref};
  std::vector<std::size_t> sizes{512, 1024, 4096};
  std::size_t repeats = 20;
  Granularity granularity = Granularity::per_group(128);
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct BenchRow {
  PackScheme scheme = PackScheme::sherry125;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Granularity granularity;
  std::size_t repeats = 0;
  double median_ns = 0.0;
  double p10_ns = 0.0;
  double p90_ns = 0.0;
  std::size_t payload_bytes = 0;
  std::size_t scale_bytes = 0;
  std::size_t threads = 1;
};

inline constexpr const char *kBenchCsvHeader =
    "scheme,rows,cols,granularity,repeats,median_ns,p10_ns,p90_ns,payload_bytes,scale_bytes,threads";

namespace detail {

inline double nearest_rank(const std::vector<double> &sorted, double q) {
  if (sorted.empty())
    return 0.0;
  const auto idx = static_cast<std::size_t>(std::lround(q * static_cast<double>(sorted.size() - 1)));
  return sorted[idx];
}

} // namespace detail

/// Times packed_matvec for every (scheme, size) pair on square random
/// sparse34 tensors. The same tensor and activation vector are reused
/// across schemes of a given size.
inline std::vector<BenchRow> bench(const BenchOptions &opts) {
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const EngineConfig cfg{Precision::single, opts.threads};

  for (std::size_t n : opts.sizes) {
    MatrixF w(n, n);
    for (auto &v : w.values())
      v = normal(rng);
    std::vector<float> x(n);
    for (auto &v : x)
      v = normal(rng);
    const auto t = sparse34_quantize(w, opts.granularity);

    for (PackScheme scheme : opts.schemes) {
      const auto p = pack(t, scheme);
      volatile float sink = packed_matvec<float>(p, x, cfg)[0]; // warm-up
      std::vector<double> samples;
      samples.reserve(opts.repeats);
      for (std::size_t r = 0; r < opts.repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        const auto y = packed_matvec<float>(p, x, cfg);
        const auto stop = std::chrono::steady_clock::now();
        sink = y[0];
        samples.push_back(
            static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count()));
      }
      (void)sink;
      std::sort(samples.begin(), samples.end());
      BenchRow row;
      row.scheme = scheme;
      row.rows = n;
      row.cols = n;
      row.granularity = opts.granularity;
      row.repeats = opts.repeats;
      row.median_ns = detail::nearest_rank(samples, 0.5);
      row.p10_ns = detail::nearest_rank(samples, 0.1);
      row.p90_ns = detail::nearest_rank(samples, 0.9);
      row.payload_bytes = p.payload_bytes();
      row.scale_bytes = 4 * p.scales.size();
      row.threads = opts.threads;
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_bench_csv(std::ostream &os, const std::vector<BenchRow> &rows) {
  os << kBenchCsvHeader << '\n';
  for (const auto &r : rows)
    os << to_string(r.scheme) << ',' << r.rows << ',' << r.cols << ',' << r.granularity.to_string()
       << ',' << r.repeats << ',' << static_cast<std::uint64_t>(r.median_ns) << ','
       << static_cast<std::uint64_t>(r.p10_ns) << ',' << static_cast<std::uint64_t>(r.p90_ns)
       << ',' << r.payload_bytes << ',' << r.scale_bytes << ',' << r.threads << '\n';
}

} // namespace sherry
