// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Toy quantization-aware training with an annealed full-precision residual.
 *
 * A quantized linear layer computes
 *
 *     Y = X (T alpha) + lambda X W
 *
 * where T alpha is re-derived from the latent weights W on every call.
 * Gradients:
 *
 *     dL/dX = dL/dY (T alpha + lambda W)^T
 *     dL/dW = (1 + lambda) X^T dL/dY        (straight-through + residual)
 *
 * train() fits a student MLP of such layers to a fixed random full-precision
 * teacher with plain SGD. lambda follows the schedule during training and
 * is 0 once training ends, leaving a pure ternary student.
 */

#include "sherry/bitpack.hpp"
#include "sherry/diagnostics.hpp"
#include "sherry/formats.hpp"
#include "sherry/granularity.hpp"
#include "sherry/lut_engine.hpp"
#include "sherry/matrix.hpp"
#include "sherry/quant.hpp"
#include "sherry/schedule.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sherry {

struct QuantLinearLayer {
  MatrixD weights; // d_in x d_out latent weights
  QuantScheme scheme = QuantScheme::sparse34;
  Granularity granularity = Granularity::per_channel();
  bool arenas_enabled = true;

  std::size_t d_in() const noexcept { return weights.rows(); }
  std::size_t d_out() const noexcept { return weights.cols(); }
  TernaryTensor quantize() const { return sherry::quantize(weights, scheme, granularity); }
};

struct LayerGradients {
  MatrixD d_input;
  MatrixD d_weights;
};

struct BackwardOptions {
  /// Include the straight-through contribution X^T dL/dY in dL/dW.
  /// Disabling it leaves only the residual path, for gradient checks.
  bool straight_through = true;
};

namespace detail {

inline double gate(const QuantLinearLayer &layer, double lambda) {
  require<ConstraintError>(lambda >= 0.0 && lambda <= 1.0, "layer: lambda must lie in [0, 1]");
  return layer.arenas_enabled ? lambda : 0.0;
}

inline void check_activations(const QuantLinearLayer &layer, const MatrixD &x) {
  require<ConstraintError>(x.cols() == layer.d_in(),
                           "layer: activation width " + std::to_string(x.cols()) +
                               " does not match d_in " + std::to_string(layer.d_in()));
}

} // namespace detail

/// T alpha + lambda W for a given quantization of the layer.
inline MatrixD effective_weights(const QuantLinearLayer &layer, const TernaryTensor &t,
                                 double lambda) {
  const double g = detail::gate(layer, lambda);
  MatrixD e = dequantize<double>(t);
  if (g != 0.0)
    as_eigen(e) += g * as_eigen(layer.weights);
  return e;
}

/// Forward pass with an explicit (possibly frozen) quantization.
inline MatrixD forward_with(const QuantLinearLayer &layer, const TernaryTensor &t,
                            const MatrixD &x, double lambda) {
  detail::check_activations(layer, x);
  const MatrixD e = effective_weights(layer, t, lambda);
  return from_eigen<double>(as_eigen(x) * as_eigen(e));
}

inline MatrixD forward(const QuantLinearLayer &layer, const MatrixD &x, double lambda) {
  return forward_with(layer, layer.quantize(), x, lambda);
}

inline LayerGradients backward_with(const QuantLinearLayer &layer, const TernaryTensor &t,
                                    const MatrixD &x, double lambda, const MatrixD &d_out,
                                    BackwardOptions opts = {}) {
  detail::check_activations(layer, x);
  detail::require<ConstraintError>(d_out.rows() == x.rows() && d_out.cols() == layer.d_out(),
                                   "layer: output gradient shape mismatch");
  const double g = detail::gate(layer, lambda);
  const MatrixD e = effective_weights(layer, t, lambda);
  LayerGradients grads;
  grads.d_input = from_eigen<double>(as_eigen(d_out) * as_eigen(e).transpose());
  const double w_factor = (opts.straight_through ? 1.0 : 0.0) + g;
  grads.d_weights = from_eigen<double>(w_factor * (as_eigen(x).transpose() * as_eigen(d_out)));
  return grads;
}

inline LayerGradients backward(const QuantLinearLayer &layer, const MatrixD &x, double lambda,
                               const MatrixD &d_out, BackwardOptions opts = {}) {
  return backward_with(layer, layer.quantize(), x, lambda, d_out, opts);
}

struct TrainConfig {
  std::vector<std::size_t> dims{64, 256, 64};
  std::size_t steps = 2000;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  QuantScheme scheme = QuantScheme::sparse34;
  Granularity granularity = Granularity::per_channel();
  bool arenas = true;
  ScheduleFamily schedule = ScheduleFamily::cosine;
  double warmup_fraction = 0.1;
  /// Record diagnostics every `cadence` steps (and after the last step).
  std::size_t cadence = 50;
  /// Fixed held-out batch for loss, effective rank and gradients.
  std::size_t diagnostic_samples = 256;
  /// Fixed held-out set for the pure-ternary (lambda = 0) evaluation loss.
  std::size_t eval_samples = 1024;

  Schedule make_schedule() const { return {schedule, warmup_fraction, steps}; }

  void validate() const {
    using detail::require;
    require<ConstraintError>(dims.size() >= 2, "train: need at least one layer");
    for (auto d : dims)
      require<ConstraintError>(d > 0, "train: layer dims must be positive");
    require<ConstraintError>(steps > 0, "train: steps must be positive");
    require<ConstraintError>(std::isfinite(learning_rate) && learning_rate >= 0.0,
                             "train: learning rate must be finite and non-negative");
    require<ConstraintError>(batch_size > 0, "train: batch size must be positive");
    require<ConstraintError>(cadence > 0, "train: cadence must be positive");
    require<ConstraintError>(diagnostic_samples > 0 && eval_samples > 0,
                             "train: diagnostic and evaluation sets must be non-empty");
    require<ConstraintError>(scheme != QuantScheme::unspecified, "train: scheme has no quantizer");
    make_schedule().validate();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      granularity.validate(dims[l]);
      if (scheme == QuantScheme::sparse34)
        require<ConstraintError>(dims[l] % 4 == 0, "train: sparse34 layers need d_in % 4 == 0");
    }
  }
};

struct TraceRecord {
  std::size_t step = 0;
  /// Objective on the diagnostic batch at the current lambda.
  double loss = 0.0;
  double lambda = 0.0;
  /// Loss of the pure ternary network (lambda = 0) on the evaluation set.
  double eval_loss = 0.0;
  std::vector<double> er_per_layer;
  std::vector<WeightHistogram> hist_per_layer;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  double final_eval_loss = 0.0;
  double final_lambda = 0.0;
};

struct TrainResult {
  TrainTrace trace;
  std::vector<QuantLinearLayer> layers;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

inline MatrixD normal_matrix(std::size_t rows, std::size_t cols, double stddev,
                             std::mt19937_64 &rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  MatrixD m(rows, cols);
  for (auto &v : m.values())
    v = nd(rng);
  return m;
}

inline void relu_inplace(MatrixD &m) {
  for (auto &v : m.values())
    v = v > 0.0 ? v : 0.0;
}

/// Full-precision MLP with ReLU between layers.
inline MatrixD dense_mlp(const std::vector<MatrixD> &weights, const MatrixD &x) {
  MatrixD a = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    a = from_eigen<double>(as_eigen(a) * as_eigen(weights[l]));
    if (l + 1 < weights.size())
      relu_inplace(a);
  }
  return a;
}

/// Mean squared error over all elements.
inline double mse(const MatrixD &y, const MatrixD &target) {
  return (as_eigen(y) - as_eigen(target)).squaredNorm() / static_cast<double>(y.size());
}

struct StudentPass {
  std::vector<TernaryTensor> quantized;
  std::vector<MatrixD> inputs; // input activation of each layer
  std::vector<MatrixD> pre;    // pre-activation output of each layer
  double loss = 0.0;
};

inline StudentPass student_forward(const std::vector<QuantLinearLayer> &layers, const MatrixD &x,
                                   const MatrixD &target, double lambda) {
  StudentPass pass;
  MatrixD a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    pass.quantized.push_back(layers[l].quantize());
    pass.inputs.push_back(a);
    MatrixD z = forward_with(layers[l], pass.quantized.back(), a, lambda);
    a = z;
    if (l + 1 < layers.size())
      relu_inplace(a);
    pass.pre.push_back(std::move(z));
  }
  pass.loss = mse(pass.pre.back(), target);
  return pass;
}

/// Back-propagates the MSE loss; returns per-layer gradients.
inline std::vector<LayerGradients> student_backward(const std::vector<QuantLinearLayer> &layers,
                                                    const StudentPass &pass,
                                                    const MatrixD &target, double lambda) {
  std::vector<LayerGradients> grads(layers.size());
  MatrixD d = from_eigen<double>(2.0 * (as_eigen(pass.pre.back()) - as_eigen(target)) /
                                 static_cast<double>(target.size()));
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l] = backward_with(layers[l], pass.quantized[l], pass.inputs[l], lambda, d);
    if (l > 0) {
      d = grads[l].d_input;
      const auto &z = pass.pre[l - 1];
      for (std::size_t k = 0; k < d.size(); ++k)
        if (!(z.values()[k] > 0.0))
          d.values()[k] = 0.0;
    }
  }
  return grads;
}

} // namespace detail

inline TrainResult train(const TrainConfig &cfg) {
  cfg.validate();
  const std::size_t depth = cfg.dims.size() - 1;
  const Schedule schedule = cfg.make_schedule();

  auto teacher_rng = detail::stream(cfg.seed, 1);
  auto student_rng = detail::stream(cfg.seed, 2);
  auto data_rng = detail::stream(cfg.seed, 3);
  auto heldout_rng = detail::stream(cfg.seed, 4);

  std::vector<MatrixD> teacher;
  std::vector<QuantLinearLayer> layers;
  for (std::size_t l = 0; l < depth; ++l) {
    const double fan_in = static_cast<double>(cfg.dims[l]);
    const double gain = l + 1 < depth ? 2.0 : 1.0;
    teacher.push_back(detail::normal_matrix(cfg.dims[l], cfg.dims[l + 1],
                                            std::sqrt(gain / fan_in), teacher_rng));
    QuantLinearLayer layer;
    layer.weights = detail::normal_matrix(cfg.dims[l], cfg.dims[l + 1],
                                          std::sqrt(gain / fan_in), student_rng);
    layer.scheme = cfg.scheme;
    layer.granularity = cfg.granularity;
    layer.arenas_enabled = cfg.arenas;
    layers.push_back(std::move(layer));
  }

  const MatrixD diag_x = detail::normal_matrix(cfg.diagnostic_samples, cfg.dims.front(), 1.0, heldout_rng);
  const MatrixD diag_y = detail::dense_mlp(teacher, diag_x);
  const MatrixD eval_x = detail::normal_matrix(cfg.eval_samples, cfg.dims.front(), 1.0, heldout_rng);
  const MatrixD eval_y = detail::dense_mlp(teacher, eval_x);

  TrainResult result;
  auto record = [&](std::size_t step, double lambda) {
    TraceRecord rec;
    rec.step = step;
    rec.lambda = lambda;
    const auto pass = detail::student_forward(layers, diag_x, diag_y, lambda);
    rec.loss = pass.loss;
    const auto grads = detail::student_backward(layers, pass, diag_y, lambda);
    for (std::size_t l = 0; l < depth; ++l) {
      rec.er_per_layer.push_back(effective_rank(grads[l].d_input).er);
      rec.hist_per_layer.push_back(
          weight_histogram(layers[l].weights, pass.quantized[l].scales, layers[l].granularity));
    }
    rec.eval_loss = detail::student_forward(layers, eval_x, eval_y, 0.0).loss;
    result.trace.records.push_back(std::move(rec));
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double lambda = cfg.arenas ? lambda_at(schedule, step) : 0.0;
    if (step % cfg.cadence == 0)
      record(step, lambda);
    const MatrixD x = detail::normal_matrix(cfg.batch_size, cfg.dims.front(), 1.0, data_rng);
    const MatrixD y = detail::dense_mlp(teacher, x);
    const auto pass = detail::student_forward(layers, x, y, lambda);
    const auto grads = detail::student_backward(layers, pass, y, lambda);
    for (std::size_t l = 0; l < depth; ++l)
      as_eigen(layers[l].weights) -= cfg.learning_rate * as_eigen(grads[l].d_weights);
  }

  // the gate is closed once training ends
  result.trace.final_lambda = 0.0;
  record(cfg.steps, 0.0);
  result.trace.final_eval_loss = result.trace.records.back().eval_loss;
  result.layers = std::move(layers);
  return result;
}

/// Packing scheme used when exporting a layer of the given quantizer.
inline PackScheme default_pack_scheme(QuantScheme s) {
  return s == QuantScheme::sparse34 ? PackScheme::sherry125 : PackScheme::dense2bit;
}

/// Quantizes and packs trained layers into a model named layer0, layer1, ...
/// Refuses while the residual gate is still open.
inline PackedModel export_student(const std::vector<QuantLinearLayer> &layers, double final_lambda,
                                  const Granularity &granularity) {
  detail::require<ConstraintError>(final_lambda == 0.0,
                                   "export: residual gate still open (lambda = " +
                                       std::to_string(final_lambda) + ")");
  detail::require<ConstraintError>(!layers.empty(), "export: model has no layers");
  PackedModel model;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto t = quantize(layers[l].weights, layers[l].scheme, granularity);
    model.tensors.push_back({"layer" + std::to_string(l), pack(t, default_pack_scheme(t.scheme))});
  }
  return model;
}

inline void export_student(const std::filesystem::path &path,
                           const std::vector<QuantLinearLayer> &layers, double final_lambda,
                           const Granularity &granularity) {
  write_packed_model(path, export_student(layers, final_lambda, granularity));
}

/// Runs a packed MLP (ReLU between tensors, in file order) through the LUT
/// engine.
template <class Acc = double>
std::vector<Acc> packed_mlp_forward(const PackedModel &model, std::span<const float> x,
                                    const EngineConfig &cfg = {}) {
  detail::require<ConstraintError>(!model.tensors.empty(), "packed model has no tensors");
  std::vector<float> a(x.begin(), x.end());
  std::vector<Acc> y;
  for (std::size_t l = 0; l < model.tensors.size(); ++l) {
    y = packed_matvec<Acc>(model.tensors[l].tensor, a, cfg);
    if (l + 1 < model.tensors.size()) {
      a.assign(y.size(), 0.0f);
      for (std::size_t k = 0; k < y.size(); ++k)
        a[k] = y[k] > Acc{0} ? static_cast<float>(y[k]) : 0.0f;
    }
  }
  return y;
}

} // namespace sherry
