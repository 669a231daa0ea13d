// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Command implementations behind the `sherry` tool. Each run_* function
 * returns the process exit status (0 ok, 1 malformed input, 2 constraint
 * violation, 3 I/O) and prints a one-line diagnostic on failure.
 */

#include "sherry/bench.hpp"
#include "sherry/bitpack.hpp"
#include "sherry/diagnostics.hpp"
#include "sherry/error.hpp"
#include "sherry/formats.hpp"
#include "sherry/lut_engine.hpp"
#include "sherry/quant.hpp"
#include "sherry/trace_io.hpp"
#include "sherry/trainer.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace sherry {

namespace detail {

template <class F>
int guarded(std::ostream &err, const char *command, F &&body) {
  try {
    body();
    return 0;
  } catch (const Error &e) {
    err << "sherry " << command << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::bad_alloc &) {
    err << "sherry " << command << ": out of memory\n";
    return 2;
  }
}

} // namespace detail

/// Parses "tensor", "channel", "group" (with group_size) or "group:N".
inline Granularity parse_granularity(const std::string &name, std::size_t group_size) {
  if (name == "tensor")
    return Granularity::per_tensor();
  if (name == "channel")
    return Granularity::per_channel();
  if (name == "group")
    return Granularity::per_group(group_size);
  if (name.rfind("group:", 0) == 0) {
    std::size_t n = 0;
    const auto *first = name.data() + 6, *last = name.data() + name.size();
    const auto [ptr, ec] = std::from_chars(first, last, n);
    if (ec == std::errc{} && ptr == last && first != last)
      return Granularity::per_group(n);
  }
  throw ConstraintError("unknown granularity '" + name + "'");
}

// ---------------------------------------------------------------- quantize

struct QuantizeOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  QuantScheme scheme = QuantScheme::sparse34;
  /// Defaults to sherry125 for sparse34 and dense2bit otherwise.
  std::optional<PackScheme> pack;
  Granularity granularity = Granularity::per_group(128);
};

struct QuantizedTensorReport {
  std::string name;
  DensityReport density;
  double reconstruction_error = 0.0;
};

/// Quantizes and packs every tensor of a weight file.
inline PackedModel quantize_weights(const WeightFile &wf, QuantScheme scheme,
                                    std::optional<PackScheme> pack_scheme,
                                    const Granularity &granularity,
                                    std::vector<QuantizedTensorReport> *reports = nullptr) {
  const PackScheme ps = pack_scheme.value_or(default_pack_scheme(scheme));
  PackedModel model;
  for (const auto &[name, w] : wf.tensors) {
    try {
      const auto t = quantize(w, scheme, granularity);
      auto p = pack(t, ps);
      if (reports)
        reports->push_back({name, density(p), reconstruction_error(w, t)});
      model.tensors.push_back({name, std::move(p)});
    } catch (const ConstraintError &e) {
      throw ConstraintError("tensor '" + name + "': " + e.what());
    } catch (const FormatError &e) {
      throw FormatError("tensor '" + name + "': " + e.what());
    }
  }
  return model;
}

inline int run_quantize(const QuantizeOptions &opts, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, "quantize", [&] {
    const auto wf = read_weight_file(opts.input);
    std::vector<QuantizedTensorReport> reports;
    const auto model = quantize_weights(wf, opts.scheme, opts.pack, opts.granularity, &reports);
    write_packed_model(opts.output, model);
    out << "tensor,scheme,rows,cols,payload_bits,payload_bytes,scale_bits,bits_per_weight,"
           "reconstruction_error\n";
    for (const auto &r : reports)
      out << r.name << ',' << to_string(r.density.scheme) << ','
          << model.find(r.name).tensor.rows << ',' << model.find(r.name).tensor.cols << ','
          << r.density.payload_bits << ',' << r.density.payload_bytes << ','
          << r.density.scale_bits << ',' << std::setprecision(6) << r.density.bits_per_weight
          << ',' << std::setprecision(9) << r.reconstruction_error << '\n';
  });
}

// ---------------------------------------------------------------- infer

enum class EngineKind { lut, ref };

struct InferOptions {
  std::filesystem::path model;
  std::filesystem::path input;
  EngineKind engine = EngineKind::lut;
  Precision precision = Precision::single;
  /// Tensor to apply; empty selects the first tensor in the file.
  std::string tensor;
  std::size_t threads = 1;
};

/// Activation vectors are plain text: floats separated by whitespace or commas.
inline std::vector<float> parse_vector_text(const std::string &text) {
  std::vector<float> v;
  std::string token;
  auto flush = [&] {
    if (token.empty())
      return;
    char *end = nullptr;
    const float f = std::strtof(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(f))
      throw FormatError("input vector: cannot parse '" + token + "'");
    v.push_back(f);
    token.clear();
  };
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c)))
      flush();
    else
      token.push_back(c);
  }
  flush();
  return v;
}

inline std::vector<float> read_vector_file(const std::filesystem::path &path) {
  const auto bytes = read_file_bytes(path);
  return parse_vector_text(std::string(bytes.begin(), bytes.end()));
}

/// Applies one packed tensor to x with the chosen engine.
template <class Acc>
std::vector<Acc> infer_tensor(const PackedTensor &p, std::span<const float> x, EngineKind engine,
                              const EngineConfig &cfg = {}) {
  if (engine == EngineKind::lut)
    return packed_matvec<Acc>(p, x, cfg);
  return ref_matvec<Acc>(unpack(p), x, reference_segment_width(p.scheme));
}

inline int run_infer(const InferOptions &opts, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, "infer", [&] {
    const auto model = read_packed_model(opts.model);
    detail::require<FormatError>(!model.tensors.empty(), "model has no tensors");
    const auto &nt = opts.tensor.empty() ? model.tensors.front() : model.find(opts.tensor);
    const auto x = read_vector_file(opts.input);
    const EngineConfig cfg{opts.precision, opts.threads};
    std::ostringstream buf;
    if (opts.precision == Precision::dual) {
      buf << std::setprecision(17);
      for (double v : infer_tensor<double>(nt.tensor, x, opts.engine, cfg))
        buf << v << '\n';
    } else {
      buf << std::setprecision(9);
      for (float v : infer_tensor<float>(nt.tensor, x, opts.engine, cfg))
        buf << v << '\n';
    }
    out << buf.str();
  });
}

// ---------------------------------------------------------------- bench

struct BenchCommandOptions {
  BenchOptions bench;
  /// Empty writes the CSV to standard output.
  std::filesystem::path out;
};

inline int run_bench(const BenchCommandOptions &opts, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, "bench", [&] {
    for (auto n : opts.bench.sizes) {
      detail::require<ConstraintError>(n > 0 && n % 4 == 0, "bench: sizes must be positive multiples of 4");
      opts.bench.granularity.validate(n);
    }
    std::ostringstream csv;
    write_bench_csv(csv, bench(opts.bench));
    if (opts.out.empty())
      out << csv.str();
    else
      write_file_atomic(opts.out, csv.str());
  });
}

// ---------------------------------------------------------------- train-toy

enum class ArenasMode { on, off, both };

struct TrainToyOptions {
  TrainConfig config;
  ArenasMode arenas = ArenasMode::on;
  std::filesystem::path trace;
  /// Optional packed export of the trained student (single-arm runs only).
  std::filesystem::path export_model;
  Granularity export_granularity = Granularity::per_channel();
};

/// Trace path of one arm in a two-arm run: "run.jsonl" -> "run.arenas.jsonl".
inline std::filesystem::path arm_trace_path(const std::filesystem::path &base, const char *arm) {
  auto p = base;
  const auto ext = base.has_extension() ? base.extension().string() : std::string(".jsonl");
  p.replace_filename(base.stem().string() + "." + arm + ext);
  return p;
}

inline int run_train_toy(const TrainToyOptions &opts, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, "train-toy", [&] {
    detail::require<ConstraintError>(!opts.trace.empty(), "train-toy: --trace is required");
    detail::require<ConstraintError>(opts.arenas != ArenasMode::both || opts.export_model.empty(),
                                     "train-toy: --export needs a single arm");
    auto run_arm = [&](bool arenas, const std::filesystem::path &trace_path) {
      auto cfg = opts.config;
      cfg.arenas = arenas;
      const auto result = train(cfg);
      write_trace(trace_path, result.trace);
      out << "arm=" << (arenas ? "arenas" : "naive") << " seed=" << cfg.seed
          << " final_eval_loss=" << std::setprecision(9) << result.trace.final_eval_loss
          << " trace=" << trace_path.string() << '\n';
      return result;
    };
    if (opts.arenas == ArenasMode::both) {
      run_arm(true, arm_trace_path(opts.trace, "arenas"));
      run_arm(false, arm_trace_path(opts.trace, "naive"));
      return;
    }
    const auto result = run_arm(opts.arenas == ArenasMode::on, opts.trace);
    if (!opts.export_model.empty()) {
      export_student(opts.export_model, result.layers, result.trace.final_lambda,
                     opts.export_granularity);
      out << "exported " << opts.export_model.string() << '\n';
    }
  });
}

// ---------------------------------------------------------------- analyze

enum class AnalyzeEmit { er_csv, hist_csv, trap_summary };

inline AnalyzeEmit parse_analyze_emit(const std::string &name) {
  if (name == "er-csv")
    return AnalyzeEmit::er_csv;
  if (name == "hist-csv")
    return AnalyzeEmit::hist_csv;
  if (name == "trap-summary")
    return AnalyzeEmit::trap_summary;
  throw ConstraintError("unknown --emit value '" + name + "'");
}

struct AnalyzeOptions {
  std::filesystem::path trace;
  AnalyzeEmit emit = AnalyzeEmit::er_csv;
  /// Empty writes to standard output.
  std::filesystem::path out;
};

/// One row per record: step, lambda, loss, eval_loss, then ER of each layer.
inline std::string er_csv(const std::vector<TraceRecord> &records) {
  std::ostringstream os;
  os << std::setprecision(9) << "step,lambda,loss,eval_loss";
  const std::size_t layers = records.empty() ? 0 : records.front().er_per_layer.size();
  for (std::size_t l = 0; l < layers; ++l)
    os << ",er_layer" << l;
  os << '\n';
  for (const auto &r : records) {
    os << r.step << ',' << r.lambda << ',' << r.loss << ',' << r.eval_loss;
    for (double er : r.er_per_layer)
      os << ',' << er;
    os << '\n';
  }
  return os.str();
}

inline std::string hist_csv(const std::vector<TraceRecord> &records) {
  std::ostringstream os;
  os << std::setprecision(9) << "step,layer,bin,bin_lo,bin_hi,count\n";
  for (const auto &r : records)
    for (std::size_t l = 0; l < r.hist_per_layer.size(); ++l) {
      const auto &h = r.hist_per_layer[l];
      const double width = (h.hi - h.lo) / static_cast<double>(kHistogramBins);
      for (std::size_t b = 0; b < kHistogramBins; ++b)
        os << r.step << ',' << l << ',' << b << ',' << h.lo + width * static_cast<double>(b) << ','
           << h.lo + width * static_cast<double>(b + 1) << ',' << h.counts[b] << '\n';
    }
  return os.str();
}

inline std::string trap_summary_csv(const std::vector<TraceRecord> &records) {
  std::ostringstream os;
  os << std::setprecision(9) << "step,layer,trap_score,mode_lo,mode_hi\n";
  for (const auto &r : records)
    for (std::size_t l = 0; l < r.hist_per_layer.size(); ++l) {
      const auto s = trap_score(r.hist_per_layer[l]);
      os << r.step << ',' << l << ',' << s.score << ',' << s.mode_centers[0] << ','
         << s.mode_centers[1] << '\n';
    }
  return os.str();
}

inline int run_analyze(const AnalyzeOptions &opts, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, "analyze", [&] {
    const auto records = read_trace(opts.trace);
    detail::require<FormatError>(!records.empty(), "trace '" + opts.trace.string() + "' is empty");
    std::string text;
    switch (opts.emit) {
    case AnalyzeEmit::er_csv:
      text = er_csv(records);
      break;
    case AnalyzeEmit::hist_csv:
      text = hist_csv(records);
      break;
    case AnalyzeEmit::trap_summary:
      text = trap_summary_csv(records);
      break;
    }
    if (opts.out.empty())
      out << text;
    else
      write_file_atomic(opts.out, text);
  });
}

// ---------------------------------------------------------------- gen-weights

/// Random standard-normal weight file, for trying the pipeline.
inline WeightFile random_weight_file(const std::vector<std::pair<std::size_t, std::size_t>> &shapes,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  WeightFile wf;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    MatrixF m(shapes[k].first, shapes[k].second);
    for (auto &v : m.values())
      v = nd(rng);
    wf.tensors.push_back({"tensor" + std::to_string(k), std::move(m)});
  }
  return wf;
}

} // namespace sherry
