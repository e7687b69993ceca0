#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ognn/dataset.hpp"
#include "ognn/graph.hpp"
#include "ognn/model.hpp"
#include "ognn/optimizer.hpp"
#include "ognn/rng.hpp"

namespace ognn {

struct TrainConfig {
  double lr = 0.01;
  double l2_theta = 0.0;
  double l2_xi = 0.0;
  int max_epochs = 2000;
  int patience = 200;
  std::uint64_t seed = 1;
  bool deterministic = false;  // order-invariant aggregation; slower
  std::string precision = "f64";

  void validate() const {
    if (lr <= 0) throw ConfigError("train: lr must be positive");
    if (max_epochs < 1) throw ConfigError("train: max-epochs must be >= 1");
    if (patience < 1 || patience > max_epochs) {
      throw ConfigError("train: patience must lie in [1, max-epochs]");
    }
    if (precision != "f32" && precision != "f64") {
      throw ConfigError("train: precision must be f32 or f64");
    }
  }
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_acc;
};

struct RunResult {
  double best_val_acc = 0.0;
  double test_acc = 0.0;  // measured at the best-validation epoch only
  int best_epoch = 0;
  int epochs_run = 0;
  bool diverged = false;
  std::vector<EpochRecord> curve;
  double wall_seconds = 0.0;
};

/// Argmax accuracy over masked rows; ties break toward the lowest class.
inline double accuracy(const Matd& logits, const std::vector<int>& labels, const Mask& mask) {
  if (mask_count(mask) == 0) throw ContractError("accuracy: mask selects no rows");
  std::int64_t hit = 0, total = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    Index arg = 0;
    for (Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, arg)) arg = j;
    }
    ++total;
    if (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

template <class T>
double evaluate(const Model<T>& model, const Graph& graph, const Matd& features,
                const std::vector<int>& labels, const Mask& mask, RngPool& rng,
                bool canonical = false) {
  return accuracy(eval_logits(model, graph, features, rng, canonical), labels, mask);
}

/// Full-graph training with Adam, grouped L2, early stopping on validation
/// accuracy, and best-epoch restoration. Divergence (non-finite loss)
/// aborts the loop and restores the last best parameters.
template <class T>
RunResult train_run(Model<T>& model, const Graph& graph, const Matd& features,
                    const std::vector<int>& labels, const Split& split,
                    const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  validate_split(split, graph.num_nodes());
  const auto t0 = std::chrono::steady_clock::now();

  RngPool rng(cfg.seed);
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay_theta = cfg.l2_theta;
  acfg.weight_decay_xi = cfg.l2_xi;
  Adam<T> adam(acfg);

  ForwardOptions train_opt;
  train_opt.training = true;
  train_opt.canonical_aggregation = cfg.deterministic;

  RunResult result;
  ModelParams<T> best = model.params;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Tape<T> tape;
    BoundParams<T> bp = model.params.bind(tape);
    ForwardResult<T> fwd = forward_model(tape, bp, model.config, graph, features, train_opt, rng);
    Value<T> loss = cross_entropy(fwd.logits, labels, split.train);
    const double train_loss = static_cast<double>(loss.data()(0, 0));
    result.epochs_run = epoch;
    if (!std::isfinite(train_loss)) {
      result.diverged = true;
      break;
    }
    tape.backward(loss);

    std::vector<GradSlot<T>> slots;
    visit_params(model.params, [&slots](const std::string& name, ParamGroup group, Mat<T>& m) {
      slots.push_back({name, group, &m, nullptr});
    });
    std::vector<const Mat<T>*> grads;
    visit_params(bp, [&grads](const std::string&, ParamGroup, const Value<T>& v) {
      grads.push_back(&v.grad());
    });
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i].grad = grads[i];
    adam.step(slots);

    const double val_acc = evaluate(model, graph, features, labels, split.val, rng,
                                    cfg.deterministic);
    result.curve.push_back({epoch, train_loss, val_acc});
    if (val_acc > result.best_val_acc || result.best_epoch == 0) {
      result.best_val_acc = val_acc;
      result.best_epoch = epoch;
      best = model.params;
    }
    if (epoch - result.best_epoch >= cfg.patience) break;
  }
  model.params = std::move(best);  // restore the selected model
  if (result.diverged) {
    throw NumericError("train: loss diverged at epoch " + std::to_string(result.epochs_run) +
                       "; best checkpoint from epoch " + std::to_string(result.best_epoch) +
                       " retained");
  }
  result.test_acc =
      evaluate(model, graph, features, labels, split.test, rng, cfg.deterministic);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

struct MultiSplitReport {
  std::vector<RunResult> runs;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;  // population standard deviation
  double mean_val_acc = 0.0;
};

inline std::pair<double, double> mean_and_population_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

/// Independent training per split from fresh seeded initialization.
template <class T>
MultiSplitReport multi_split_report(const ModelConfig& model_cfg, const Graph& graph,
                                    const Matd& features, const std::vector<int>& labels,
                                    const SplitSet& splits, const TrainConfig& train_cfg) {
  if (splits.size() == 0) throw ContractError("multi-split: needs at least one split");
  MultiSplitReport report;
  std::vector<double> test_accs, val_accs;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const std::uint64_t run_seed = derive_seed(train_cfg.seed, i);
    Model<T> model = Model<T>::init(model_cfg, run_seed);
    TrainConfig cfg = train_cfg;
    cfg.seed = run_seed;
    RunResult run = train_run(model, graph, features, labels, splits.splits[i], cfg);
    test_accs.push_back(run.test_acc);
    val_accs.push_back(run.best_val_acc);
    report.runs.push_back(std::move(run));
  }
  std::tie(report.mean_test_acc, report.std_test_acc) = mean_and_population_std(test_accs);
  report.mean_val_acc = mean_and_population_std(val_accs).first;
  return report;
}

template <class T>
std::vector<std::pair<int, MultiSplitReport>> depth_sweep(
    const ModelConfig& template_cfg, const std::vector<int>& depths, const Graph& graph,
    const Matd& features, const std::vector<int>& labels, const SplitSet& splits,
    const TrainConfig& train_cfg) {
  if (depths.empty()) throw ContractError("depth sweep: empty depth list");
  std::vector<std::pair<int, MultiSplitReport>> out;
  for (int depth : depths) {
    if (depth < 1) throw ConfigError("depth sweep: depth must be >= 1");
    ModelConfig cfg = template_cfg;
    cfg.layers = depth;
    out.emplace_back(depth,
                     multi_split_report<T>(cfg, graph, features, labels, splits, train_cfg));
  }
  return out;
}

// --- grid search -------------------------------------------------------------

struct GridSpec {
  std::vector<double> dropout_theta{0.0};
  std::vector<double> dropout_xi{0.0};
  std::vector<double> l2_theta{0.0};
  std::vector<double> l2_xi{0.0};
  std::vector<double> lr{0.01};
  std::vector<int> mlp_layers{1};
  std::vector<int> tie_gates{0};

  std::size_t size() const {
    const std::size_t axes[] = {dropout_theta.size(), dropout_xi.size(), l2_theta.size(),
                                l2_xi.size(),         lr.size(),         mlp_layers.size(),
                                tie_gates.size()};
    std::size_t n = 1;
    for (std::size_t a : axes) {
      if (a == 0) throw ConfigError("grid: empty axis");
      n *= a;
    }
    return n;
  }
};

struct GridCell {
  int id = 0;
  double dropout_theta = 0, dropout_xi = 0, l2_theta = 0, l2_xi = 0, lr = 0;
  int mlp_layers = 1;
  bool tie_gates = false;
};

/// Mixed-radix decode; axis order is fixed so cell ids are stable.
inline GridCell grid_cell(const GridSpec& g, std::size_t id) {
  if (id >= g.size()) throw ContractError("grid: cell id out of range");
  GridCell c;
  c.id = static_cast<int>(id);
  std::size_t r = id;
  auto take = [&r](const auto& axis) {
    const std::size_t i = r % axis.size();
    r /= axis.size();
    return axis[i];
  };
  c.dropout_theta = take(g.dropout_theta);
  c.dropout_xi = take(g.dropout_xi);
  c.l2_theta = take(g.l2_theta);
  c.l2_xi = take(g.l2_xi);
  c.lr = take(g.lr);
  c.mlp_layers = take(g.mlp_layers);
  c.tie_gates = take(g.tie_gates) != 0;
  return c;
}

struct GridEntry {
  GridCell cell;
  double mean_val_acc = 0.0;
  double std_val_acc = 0.0;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  std::vector<GridEntry> leaderboard;  // sorted by val accuracy desc, then cell id
  std::vector<int> evaluated_cells;    // ascending ids actually run
};

/// Exhaustive (or seeded budget-truncated) search ranked by mean validation
/// accuracy. `completed` entries are reused, which makes interrupted runs
/// resumable. Failed cells are recorded, not fatal.
template <class T>
GridResult grid_search(const GridSpec& grid, const ModelConfig& base_model,
                       const Graph& graph, const Matd& features,
                       const std::vector<int>& labels, const SplitSet& splits,
                       const TrainConfig& base_train, std::size_t budget = 0,
                       const std::vector<GridEntry>& completed = {},
                       const std::function<void(const GridEntry&)>& on_cell = nullptr) {
  const std::size_t total = grid.size();
  std::vector<std::size_t> ids(total);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (budget > 0 && budget < total) {
    std::mt19937_64 rng(derive_seed(base_train.seed, 0x67726964ULL));
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(budget);
    std::sort(ids.begin(), ids.end());
  }

  GridResult result;
  for (std::size_t id : ids) {
    result.evaluated_cells.push_back(static_cast<int>(id));
    const auto prior = std::find_if(completed.begin(), completed.end(), [id](const GridEntry& e) {
      return e.cell.id == static_cast<int>(id);
    });
    if (prior != completed.end()) {
      result.leaderboard.push_back(*prior);
      continue;
    }
    GridEntry entry;
    entry.cell = grid_cell(grid, id);
    ModelConfig mc = base_model;
    mc.dropout_theta = entry.cell.dropout_theta;
    mc.dropout_xi = entry.cell.dropout_xi;
    mc.mlp_layers = entry.cell.mlp_layers;
    mc.tie_gates = entry.cell.tie_gates;
    TrainConfig tc = base_train;
    tc.lr = entry.cell.lr;
    tc.l2_theta = entry.cell.l2_theta;
    tc.l2_xi = entry.cell.l2_xi;
    tc.seed = derive_seed(base_train.seed, 0x1000ULL + id);
    try {
      MultiSplitReport rep = multi_split_report<T>(mc, graph, features, labels, splits, tc);
      std::vector<double> vals;
      for (const auto& r : rep.runs) vals.push_back(r.best_val_acc);
      std::tie(entry.mean_val_acc, entry.std_val_acc) = mean_and_population_std(vals);
      entry.mean_test_acc = rep.mean_test_acc;
      entry.std_test_acc = rep.std_test_acc;
    } catch (const Error& e) {
      entry.failed = true;
      entry.error = e.what();
    }
    if (on_cell) on_cell(entry);
    result.leaderboard.push_back(std::move(entry));
  }
  std::sort(result.leaderboard.begin(), result.leaderboard.end(),
            [](const GridEntry& a, const GridEntry& b) {
              if (a.failed != b.failed) return !a.failed;
              if (a.mean_val_acc != b.mean_val_acc) return a.mean_val_acc > b.mean_val_acc;
              return a.cell.id < b.cell.id;
            });
  return result;
}

}  // namespace ognn
