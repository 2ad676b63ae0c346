#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "statekit/data_model.hpp"

namespace statekit {

struct FoldAssignment {
  std::vector<std::uint32_t> fold_of_unit;
  std::uint32_t k = 0;

  std::size_t fold_size(std::uint32_t fold) const;
};

/// Balanced random partition of n units into k folds (sizes differ by at
/// most one). Deterministic in (n, k, seed) and blind to treatment.
FoldAssignment assign_folds(std::size_t n, std::uint32_t k, std::uint64_t seed);

enum class PredictorFamily { BoostedTrees, BasisRidge };
enum class TrainingPool { Pooled, ControlOnly };
enum class RidgeBasis { Linear, Full };

struct BoostedTreesParams {
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  double subsample = 0.8;
  int min_samples_leaf = 20;
  int max_bins = 255;
};

struct BasisRidgeParams {
  double lambda = 1e-6;
  RidgeBasis basis = RidgeBasis::Full;
  bool standardize = false;
};

struct PredictorConfig {
  PredictorFamily family = PredictorFamily::BoostedTrees;
  std::uint32_t k = 5;
  std::uint64_t seed = 20240501;
  TrainingPool pool = TrainingPool::Pooled;
  BoostedTreesParams trees;
  BasisRidgeParams ridge;
  unsigned threads = 1;

  void check() const;
};

std::string model_tag(const PredictorConfig& config);

/// Out-of-fold predictions: yhat[i] comes from a model that never saw unit i.
struct ProxyColumn {
  std::vector<double> yhat;
  std::string model_tag;
  FoldAssignment folds;
};

/// Cross-fits `target` on row-major covariates with the given folds. Rows
/// with `trainable[i] == 0` are never used for training (empty = all rows).
ProxyColumn cross_fit(std::span<const double> covariates, std::size_t dim,
                      std::span<const double> target, const PredictorConfig& config,
                      const FoldAssignment& folds,
                      std::span<const std::uint8_t> trainable = {});

/// Proxy for the outcome y of `frame`.
ProxyColumn fit_proxy(const ExperimentFrame& frame, const PredictorConfig& config);

/// Proxy for transformed per-unit ratio labels (same contract as fit_proxy).
ProxyColumn proxy_for_p(const ExperimentFrame& frame, std::span<const double> p_labels,
                        const PredictorConfig& config);

// Single-model interfaces, exposed for tests and diagnostics.

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double predict(std::span<const double> x) const = 0;
};

/// Trains one model on the listed rows.
std::unique_ptr<Regressor> train_regressor(std::span<const double> covariates, std::size_t dim,
                                           std::span<const double> target,
                                           std::span<const std::size_t> rows,
                                           const PredictorConfig& config, std::uint64_t stream);

}  // namespace statekit
