#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rha/data.hpp"
#include "rha/fusion.hpp"
#include "rha/instance.hpp"
#include "rha/predictor.hpp"
#include "rha/relation_encoder.hpp"
#include "rha/tensor.hpp"

namespace rha {

// Width configuration. d_o..d_q must match the dataset; d_h is the shared
// hidden width after downsizing, d_hat the Gram projection width, heads
// the per-layer attention head count (must divide d_o and d_l).
struct DimsProfile {
  std::string name = "reduced";
  DatasetDims data;
  int d_h = 16;
  int d_hat = 8;
  int heads = 4;

  static DimsProfile paper();    // 300/300/768/768, d_h 128, d_hat 32, 15 heads
  static DimsProfile reduced();  // 24/24/32/32, d_h 16, d_hat 8, 4 heads
  static DimsProfile named(const std::string& name);
  void validate() const;
};

// Every trainable tensor, keyed by the symbol it houses. Iteration order
// is fixed, which keeps initialization, Adam updates and checkpoints
// deterministic.
struct ModelParams {
  DimsProfile dims;
  std::vector<std::pair<std::string, TensorPtr>> entries;

  static ModelParams init(const DimsProfile& dims, std::uint64_t seed);

  TensorPtr at(const std::string& key) const;
  void set_requires_grad(bool value);
  void zero_grad();
  std::size_t total_coordinates() const;

  GatParams spatial_gat() const;
  GatParams semantic_gat() const;
  DownsizeParams downsize(const std::string& modality) const;  // obj|cpt|sub|hyp
  ConvPoolParams conv_pool() const;
  SpanHeadParams span_head() const;
  AnswerParams answer() const;

  // config_json, when nonempty, is embedded under "config" (the training
  // configuration that produced the checkpoint).
  void save_checkpoint(const std::string& path, const std::string& config_json = "") const;
  static ModelParams load_checkpoint(const std::string& path);
};

struct ForwardOptions {
  bool training = false;
  double dropout_rate = 0.0;
  std::uint64_t dropout_seed = 0;  // derived from (seed, epoch, instance)
  int max_span_len = 0;            // 0: unconstrained (T)
  double distance_gate = 0.5;
  LossWeights loss_weights;
  // When nonempty (size 5), bypasses the span search and uses these spans
  // for the local answer pooling. Gradient checking needs this: the span
  // argmax is a discrete choice, and finite differences must probe the
  // same fixed-structure function the reverse pass differentiates.
  std::vector<TimeSpan> fixed_spans;
};

struct ForwardResult {
  std::vector<SpanDistributions> span_dists;  // per hypothesis
  std::vector<TimeSpan> spans;                // per hypothesis
  TensorPtr answer_probs;                     // [5]
  int predicted_answer = 0;
  TimeSpan predicted_span;
  TensorPtr loss_answer, loss_spatial, loss_temporal, loss_total;
};

ForwardResult model_forward(Graph& g, const ModelParams& params, const QAInstance& inst,
                            const ForwardOptions& opt);

}  // namespace rha
