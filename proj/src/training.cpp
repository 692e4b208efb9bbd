#include "pdgsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdgsim/errors.hpp"

namespace pdgsim {

double kaiming_bound(int fan_in, double slope) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  return gain * std::sqrt(3.0 / static_cast<double>(fan_in));
}

Matrix kaiming_uniform_init(int rows, int cols, double slope, std::mt19937_64& rng) {
  if (rows < 1 || cols < 1) throw ShapeError("kaiming_uniform_init: empty shape");
  const double bound = kaiming_bound(rows, slope);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  return m;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0 || grid[i] > 1) throw ConfigError("threshold grid must lie in [0, 1]");
    if (i && grid[i] <= grid[i - 1]) throw ConfigError("threshold grid must be increasing");
  }
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
}

AdamState::AdamState(const ad::ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    if (p.requires_grad()) {
      m.push_back(Matrix::Zero(p.rows(), p.cols()));
      v.push_back(Matrix::Zero(p.rows(), p.cols()));
    } else {
      m.emplace_back();
      v.emplace_back();
    }
  }
}

void adam_step(ad::ParamStore& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state/parameter mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    if (!p.requires_grad()) continue;
    const Matrix& g = p.grad();
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ShapeError("adam_step: gradient shape mismatch for " + params.name(i));
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    auto m_hat = state.m[i].array() / c1;
    auto v_hat = state.v[i].array() / c2;
    p.mutable_data().array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
  }
}

PairExample make_example(const std::string& id, const std::string& source_a,
                         const std::string& source_b, int label) {
  return PairExample{id, make_graph_tensors(build_pdg(lower_source(source_a))),
                     make_graph_tensors(build_pdg(lower_source(source_b))), label};
}

std::vector<double> predict(const Model& model, const std::vector<PairExample>& pairs) {
  constexpr std::size_t kChunk = 64;
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    std::vector<std::pair<const GraphTensors*, const GraphTensors*>> chunk;
    for (std::size_t k = start; k < std::min(pairs.size(), start + kChunk); ++k)
      chunk.emplace_back(&pairs[k].a, &pairs[k].b);
    const Matrix s = pair_scores(chunk, model).data();
    scores.insert(scores.end(), s.data(), s.data() + s.size());
  }
  return scores;
}

std::vector<int> labels_of(const std::vector<PairExample>& pairs) {
  std::vector<int> labels;
  labels.reserve(pairs.size());
  for (const auto& p : pairs) labels.push_back(p.label);
  return labels;
}

TrainResult train(const DatasetSplit& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (data.train.empty()) throw EmptyDataset("training split is empty");
  if (data.val.empty()) throw EmptyDataset("validation split is empty");

  TrainResult result{Model(model_cfg, cfg.seed), 0.5, {}};
  Model& model = result.model;
  AdamState adam(model.params());
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<int> val_labels = labels_of(data.val);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  int perfect_streak = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::pair<const GraphTensors*, const GraphTensors*>> batch;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const PairExample& ex = data.train[order[k]];
        batch.emplace_back(&ex.a, &ex.b);
        labels.push_back(ex.label);
      }
      model.params().zero_grads();
      ad::Value loss = bce_loss(pair_scores(batch, model), labels);
      loss_sum += loss.scalar() * static_cast<double>(end - start);
      ad::backward(loss, model.params());
      adam_step(model.params(), adam, cfg);
    }

    const auto val_scores = predict(model, data.val);
    const double eps = threshold_moving(val_scores, val_labels, cfg.grid);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                    f1_at(val_scores, val_labels, eps)};
    result.history.push_back(rec);
    result.threshold = eps;
    if (on_epoch) on_epoch(rec);

    perfect_streak = rec.val_f1 == 1.0 ? perfect_streak + 1 : 0;
    if (cfg.early_stop_patience > 0 && perfect_streak >= cfg.early_stop_patience) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw LengthMismatch(std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw EmptyDataset("no scores to evaluate");
}

}  // namespace

EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels, double eps) {
  check_inputs(scores, labels);
  EvalReport r;
  r.threshold = eps;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= eps;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++r.tp;
    else if (predicted) ++r.fp;
    else if (actual) ++r.fn;
    else ++r.tn;
  }
  r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0;
  r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0;
  const bool both = r.tp + r.fn > 0 && r.fp + r.tn > 0;
  r.auc = both ? roc_auc(scores, labels) : std::nan("");
  return r;
}

double f1_at(const std::vector<double>& scores, const std::vector<int>& labels, double eps) {
  check_inputs(scores, labels);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= eps;
    if (predicted && labels[i] == 1) ++tp;
    else if (predicted) ++fp;
    else if (labels[i] == 1) ++fn;
  }
  const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0;
  const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0;
}

double threshold_moving(const std::vector<double>& scores, const std::vector<int>& labels,
                        const std::vector<double>& grid) {
  check_inputs(scores, labels);
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  double best = grid.front();
  double best_f1 = -1.0;
  for (double eps : grid) {
    const double f1 = f1_at(scores, labels, eps);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = eps;
    }
  }
  return best;
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const long positives = std::count(labels.begin(), labels.end(), 1);
  const long negatives = static_cast<long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0)
    throw SingleClass("ROC needs both positive and negative labels");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> points = {{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  long tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size();) {
    const double s = scores[idx[k]];
    // All tied scores cross the threshold together.
    while (k < idx.size() && scores[idx[k]] == s) {
      if (labels[idx[k]] == 1) ++tp;
      else ++fp;
      ++k;
    }
    points.push_back({s, static_cast<double>(tp) / static_cast<double>(positives),
                      static_cast<double>(fp) / static_cast<double>(negatives)});
  }
  return points;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto points = roc_curve(scores, labels);
  double area = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k)
    area += (points[k].fpr - points[k - 1].fpr) * (points[k].tpr + points[k - 1].tpr) / 2.0;
  return area;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,loss,val_f1\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.loss, r.val_f1);
    out += buf;
  }
  return out;
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "threshold,tpr,fpr\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.tpr, p.fpr);
    out += buf;
  }
  return out;
}

}  // namespace pdgsim
