#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pdgsim/model.hpp"

namespace pdgsim {

// Uniform(-bound, bound) with bound = gain * sqrt(3 / fan_in), fan_in = rows,
// gain = sqrt(2 / (1 + slope^2)).
Matrix kaiming_uniform_init(int rows, int cols, double slope, std::mt19937_64& rng);
double kaiming_bound(int fan_in, double slope);

struct TrainConfig {
  double learning_rate = 0.0002;
  int batch_size = 50;
  int epochs = 300;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> grid = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  // Stop once validation F1 has been 1.0 for this many consecutive epochs;
  // 0 disables early stopping.
  int early_stop_patience = 10;

  void validate() const;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  explicit AdamState(const ad::ParamStore& params);
};

// One bias-corrected Adam update from the gradients held in `params`.
void adam_step(ad::ParamStore& params, AdamState& state, const TrainConfig& cfg);

struct PairExample {
  std::string id;
  GraphTensors a;
  GraphTensors b;
  int label = 0;
};

// Parses, lowers and analyses both programs.
PairExample make_example(const std::string& id, const std::string& source_a,
                         const std::string& source_b, int label);

struct DatasetSplit {
  std::vector<PairExample> train;
  std::vector<PairExample> val;
  std::vector<PairExample> test;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  Model model;
  double threshold = 0.5;
  std::vector<EpochRecord> history;
};

TrainResult train(const DatasetSplit& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

std::vector<double> predict(const Model& model, const std::vector<PairExample>& pairs);
std::vector<int> labels_of(const std::vector<PairExample>& pairs);

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  double threshold = 0.5;
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

// F1 of the rule `score >= eps -> clone`.
double f1_at(const std::vector<double>& scores, const std::vector<int>& labels, double eps);

// Grid value with the highest F1; ties go to the smallest value.
double threshold_moving(const std::vector<double>& scores, const std::vector<int>& labels,
                        const std::vector<double>& grid);

// P/R/F1 at eps; `auc` is filled when both classes are present, else NaN.
EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels, double eps);

// Trapezoidal area under the ROC curve with tied scores grouped.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

std::string history_csv(const std::vector<EpochRecord>& history);
std::string roc_csv(const std::vector<RocPoint>& points);

}  // namespace pdgsim
