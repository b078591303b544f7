#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rha/data.hpp"
#include "rha/model.hpp"

namespace rha {

// Adam with fixed beta1=0.9, beta2=0.999, eps=1e-8. One state slot per
// parameter tensor, updated in entry order.
class Adam {
 public:
  explicit Adam(const ModelParams& params);

  // Applies one update using grad * grad_scale as the step gradient.
  void step(ModelParams& params, double lr, double grad_scale = 1.0);

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  long t_ = 0;
};

struct TrainConfig {
  std::string manifest;
  int epochs = 50;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 10;
  double dropout = 0.1;
  LossWeights loss_weights;
  std::uint64_t seed = 42;
  std::string dims_profile = "reduced";
  int max_span_len = 0;  // 0: unconstrained
  std::string out_checkpoint = "checkpoint.json";
  std::string out_log;  // empty: no log file
  // optional: stop once every threshold is met on the train metrics
  bool early_stop = false;
  double stop_accuracy = 1.0;
  double stop_temp_miou = 0.9;
  double stop_asa = 0.9;

  static TrainConfig from_file(const std::string& path);
  void validate() const;
  std::string to_json() const;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0, loss_answer = 0, loss_spatial = 0, loss_temporal = 0;
  Metrics train;
  std::string to_json() const;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> log;
};

// Full training loop: deterministic given (seed, config, dataset). Writes
// the checkpoint and, when configured, one JSON log line per epoch.
TrainResult train(const TrainConfig& cfg);

// Deterministic evaluation (dropout off) of a model over a dataset.
std::pair<Metrics, std::vector<Prediction>> evaluate_model(const ModelParams& params,
                                                           const std::vector<QAInstance>& data,
                                                           int max_span_len = 0);

// Whole-model gradient check on one tiny synthetic instance (reduced dims
// enforced): worst relative error per parameter group.
std::vector<std::pair<std::string, double>> model_grad_check(const DimsProfile& dims,
                                                             std::uint64_t seed);

}  // namespace rha
