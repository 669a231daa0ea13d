// SPDX-License-Identifier: Apache-2.0
//
// sherry: quantize -> pack -> infer/bench, and train-toy -> analyze -> export.

#include "sherry/sherry.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty())
        out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty())
    out.push_back(cur);
  return out;
}

std::pair<std::size_t, std::size_t> parse_shape(const std::string &s) {
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw sherry::ConstraintError("shape '" + s + "' is not ROWSxCOLS");
  try {
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::exception &) {
    throw sherry::ConstraintError("shape '" + s + "' is not ROWSxCOLS");
  }
}

/// Converts flag values inside the same error taxonomy as the commands.
template <class F>
int with_flags(const char *command, F &&body) {
  try {
    return body();
  } catch (const sherry::Error &e) {
    std::cerr << "sherry " << command << ": " << e.what() << '\n';
    return e.exit_code();
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"sherry: 3:4 sparse ternary quantization, 1.25-bit packing and LUT inference"};
  app.require_subcommand(1);

  // quantize
  auto *quantize = app.add_subcommand("quantize", "Quantize and pack every tensor of a weight file");
  std::string q_in, q_out, q_scheme = "sparse34", q_pack, q_gran = "group";
  std::size_t q_group = 128;
  quantize->add_option("input", q_in, "Input weight file (WF32)")->required();
  quantize->add_option("output", q_out, "Output packed model (SHRY)")->required();
  quantize->add_option("--scheme", q_scheme, "sparse34 | absmean | twn")->capture_default_str();
  quantize->add_option("--pack", q_pack, "sherry125 | dense2bit | tl2ref (default by scheme)");
  quantize->add_option("--granularity", q_gran, "tensor | channel | group | group:N")->capture_default_str();
  quantize->add_option("--group-size", q_group, "Group size for --granularity group")->capture_default_str();

  // infer
  auto *infer = app.add_subcommand("infer", "Apply one packed tensor to an activation vector");
  std::string i_model, i_input, i_engine = "lut", i_precision = "single", i_tensor;
  std::size_t i_threads = 1;
  infer->add_option("model", i_model, "Packed model (SHRY)")->required();
  infer->add_option("--input", i_input, "Activation vector, text floats")->required();
  infer->add_option("--engine", i_engine, "lut | ref")->capture_default_str();
  infer->add_option("--precision", i_precision, "single | double")->capture_default_str();
  infer->add_option("--tensor", i_tensor, "Tensor name (default: first)");
  infer->add_option("--threads", i_threads, "Output-channel worker threads")->capture_default_str();

  // bench
  auto *benchc = app.add_subcommand("bench", "Time LUT matrix-vector products per packing scheme");
  std::string b_schemes = "sherry125,dense2bit,tl2ref", b_sizes = "512,1024,4096", b_out,
              b_gran = "group";
  std::size_t b_repeats = 20, b_group = 128, b_threads = 1;
  std::uint64_t b_seed = 0;
  benchc->add_option("--schemes", b_schemes, "Comma-separated packing schemes")->capture_default_str();
  benchc->add_option("--sizes", b_sizes, "Comma-separated square sizes")->capture_default_str();
  benchc->add_option("--repeats", b_repeats, "Timed runs per configuration")->capture_default_str();
  benchc->add_option("--granularity", b_gran, "tensor | channel | group | group:N")->capture_default_str();
  benchc->add_option("--group-size", b_group, "Group size")->capture_default_str();
  benchc->add_option("--threads", b_threads, "Output-channel worker threads")->capture_default_str();
  benchc->add_option("--seed", b_seed, "Seed for random weights")->capture_default_str();
  benchc->add_option("--out", b_out, "CSV report path (default: stdout)");

  // train-toy
  auto *trainc = app.add_subcommand("train-toy", "Teacher-student QAT on a small MLP");
  sherry::TrainConfig t_cfg;
  std::string t_scheme = "sparse34", t_arenas = "on", t_schedule = "cosine", t_trace, t_export,
              t_gran = "channel";
  std::size_t t_group = 128;
  trainc->add_option("--scheme", t_scheme, "sparse34 | absmean | binary")->capture_default_str();
  trainc->add_option("--arenas", t_arenas, "on | off | both")->capture_default_str();
  trainc->add_option("--schedule", t_schedule,
                     "linear | cosine | exponential | constant_zero | constant_one")
      ->capture_default_str();
  trainc->add_option("--warmup", t_cfg.warmup_fraction, "Warmup fraction in [0, 1)")->capture_default_str();
  trainc->add_option("--steps", t_cfg.steps, "SGD steps")->capture_default_str();
  trainc->add_option("--seed", t_cfg.seed, "Run seed")->capture_default_str();
  trainc->add_option("--lr", t_cfg.learning_rate, "Learning rate")->capture_default_str();
  trainc->add_option("--batch", t_cfg.batch_size, "Batch size")->capture_default_str();
  trainc->add_option("--cadence", t_cfg.cadence, "Steps between trace records")->capture_default_str();
  trainc->add_option("--granularity", t_gran, "tensor | channel | group | group:N")->capture_default_str();
  trainc->add_option("--group-size", t_group, "Group size")->capture_default_str();
  trainc->add_option("--trace", t_trace, "Trace output (JSON lines)")->required();
  trainc->add_option("--export", t_export, "Write the trained student as a packed model");

  // analyze
  auto *analyze = app.add_subcommand("analyze", "Summaries from a training trace");
  std::string a_trace, a_emit = "er-csv", a_out;
  analyze->add_option("--trace", a_trace, "Trace file (JSON lines)")->required();
  analyze->add_option("--emit", a_emit, "er-csv | hist-csv | trap-summary")->capture_default_str();
  analyze->add_option("--out", a_out, "Output path (default: stdout)");

  // gen-weights
  auto *gen = app.add_subcommand("gen-weights", "Write a random standard-normal weight file");
  std::string g_out;
  std::vector<std::string> g_shapes;
  std::uint64_t g_seed = 0;
  gen->add_option("output", g_out, "Output weight file (WF32)")->required();
  gen->add_option("--shape", g_shapes, "ROWSxCOLS (d_in x d_out), repeatable")->required();
  gen->add_option("--seed", g_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*quantize)
    return with_flags("quantize", [&] {
      sherry::QuantizeOptions o;
      o.input = q_in;
      o.output = q_out;
      o.scheme = sherry::parse_quant_scheme(q_scheme);
      if (!q_pack.empty())
        o.pack = sherry::parse_pack_scheme(q_pack);
      o.granularity = sherry::parse_granularity(q_gran, q_group);
      return sherry::run_quantize(o, std::cout, std::cerr);
    });

  if (*infer)
    return with_flags("infer", [&] {
      sherry::InferOptions o;
      o.model = i_model;
      o.input = i_input;
      if (i_engine == "lut")
        o.engine = sherry::EngineKind::lut;
      else if (i_engine == "ref")
        o.engine = sherry::EngineKind::ref;
      else
        throw sherry::ConstraintError("unknown engine '" + i_engine + "'");
      o.precision = sherry::parse_precision(i_precision);
      o.tensor = i_tensor;
      o.threads = i_threads;
      return sherry::run_infer(o, std::cout, std::cerr);
    });

  if (*benchc)
    return with_flags("bench", [&] {
      sherry::BenchCommandOptions o;
      o.bench.schemes.clear();
      for (const auto &s : split_list(b_schemes))
        o.bench.schemes.push_back(sherry::parse_pack_scheme(s));
      o.bench.sizes.clear();
      for (const auto &s : split_list(b_sizes)) {
        try {
          o.bench.sizes.push_back(std::stoul(s));
        } catch (const std::exception &) {
          throw sherry::ConstraintError("invalid size '" + s + "'");
        }
      }
      o.bench.repeats = b_repeats;
      o.bench.granularity = sherry::parse_granularity(b_gran, b_group);
      o.bench.threads = b_threads;
      o.bench.seed = b_seed;
      o.out = b_out;
      return sherry::run_bench(o, std::cout, std::cerr);
    });

  if (*trainc)
    return with_flags("train-toy", [&] {
      sherry::TrainToyOptions o;
      o.config = t_cfg;
      o.config.scheme = sherry::parse_quant_scheme(t_scheme);
      o.config.schedule = sherry::parse_schedule_family(t_schedule);
      o.config.granularity = sherry::parse_granularity(t_gran, t_group);
      o.export_granularity = o.config.granularity;
      if (t_arenas == "on")
        o.arenas = sherry::ArenasMode::on;
      else if (t_arenas == "off")
        o.arenas = sherry::ArenasMode::off;
      else if (t_arenas == "both")
        o.arenas = sherry::ArenasMode::both;
      else
        throw sherry::ConstraintError("--arenas must be on, off or both");
      o.trace = t_trace;
      o.export_model = t_export;
      return sherry::run_train_toy(o, std::cout, std::cerr);
    });

  if (*analyze)
    return with_flags("analyze", [&] {
      sherry::AnalyzeOptions o;
      o.trace = a_trace;
      o.emit = sherry::parse_analyze_emit(a_emit);
      o.out = a_out;
      return sherry::run_analyze(o, std::cout, std::cerr);
    });

  if (*gen)
    return with_flags("gen-weights", [&] {
      std::vector<std::pair<std::size_t, std::size_t>> shapes;
      for (const auto &s : g_shapes)
        shapes.push_back(parse_shape(s));
      sherry::write_weight_file(g_out, sherry::random_weight_file(shapes, g_seed));
      return 0;
    });

  return 2;
}
