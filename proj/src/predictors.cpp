#include "statekit/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "statekit/numeric/linalg.hpp"
#include "statekit/parallel.hpp"
#include "statekit/random.hpp"

namespace statekit {

std::size_t FoldAssignment::fold_size(std::uint32_t fold) const {
  return static_cast<std::size_t>(std::count(fold_of_unit.begin(), fold_of_unit.end(), fold));
}

FoldAssignment assign_folds(std::size_t n, std::uint32_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "fold count must be >= 2");
  if (n < 2 * static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewUnits,
                std::to_string(n) + " units cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(seed, {stream::kFolds, n, k});
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldAssignment folds;
  folds.k = k;
  folds.fold_of_unit.resize(n);
  for (std::size_t i = 0; i < n; ++i) folds.fold_of_unit[perm[i]] = static_cast<std::uint32_t>(i % k);
  return folds;
}

void PredictorConfig::check() const {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "fold count must be >= 2");
  if (family == PredictorFamily::BoostedTrees) {
    if (trees.n_trees < 0 || trees.max_depth < 1 || trees.max_depth > 16) {
      throw Error(ErrorCode::InvalidConfig, "tree count or depth out of range");
    }
    if (!(trees.learning_rate > 0.0) || !(trees.subsample > 0.0 && trees.subsample <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "learning rate or subsample out of range");
    }
    if (trees.min_samples_leaf < 1 || trees.max_bins < 2 || trees.max_bins > 256) {
      throw Error(ErrorCode::InvalidConfig, "leaf size or bin count out of range");
    }
  } else if (!(ridge.lambda >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "ridge penalty must be >= 0");
  }
}

std::string model_tag(const PredictorConfig& c) {
  std::string tag;
  if (c.family == PredictorFamily::BoostedTrees) {
    tag = "boosted_trees(n=" + std::to_string(c.trees.n_trees) +
          ",depth=" + std::to_string(c.trees.max_depth) + ")";
  } else {
    tag = std::string("basis_ridge(") +
          (c.ridge.basis == RidgeBasis::Linear ? "linear" : "full") + ")";
  }
  tag += "/k=" + std::to_string(c.k);
  if (c.pool == TrainingPool::ControlOnly) tag += "/control_only";
  return tag;
}

namespace {

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees, squared loss, histogram splits.

class BoostedTrees final : public Regressor {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    int bin = -1;  // training-time split bin, equivalent to threshold
  };

  BoostedTrees(std::span<const double> x, std::size_t dim, std::span<const double> target,
               std::span<const std::size_t> rows, const BoostedTreesParams& params, Rng rng);

  double predict(std::span<const double> x) const override {
    double out = base_;
    for (const auto& tree : trees_) {
      int node = 0;
      while (tree[node].feature >= 0) {
        const Node& nd = tree[node];
        node = x[nd.feature] < nd.threshold ? nd.left : nd.right;
      }
      out += tree[node].value;
    }
    return out;
  }

 private:
  struct Builder;

  double base_ = 0.0;
  std::vector<std::vector<Node>> trees_;
};

struct BoostedTrees::Builder {
  std::size_t dim;
  const BoostedTreesParams& params;
  std::vector<std::vector<double>> edges;         // per feature, ascending
  std::vector<std::vector<std::uint8_t>> codes;   // per feature, per local row
  std::vector<double> grad;
  std::vector<double> hist_g;
  std::vector<std::uint32_t> hist_n;

  int bins(std::size_t f) const { return static_cast<int>(edges[f].size()) + 1; }

  int grow(std::vector<Node>& tree, std::vector<std::uint32_t>& idx, std::size_t begin,
           std::size_t end, int depth) {
    const std::size_t n = end - begin;
    double g_total = 0.0;
    for (std::size_t i = begin; i < end; ++i) g_total += grad[idx[i]];
    const int id = static_cast<int>(tree.size());
    tree.push_back(Node{-1, 0.0, -1, -1, -params.learning_rate * g_total / static_cast<double>(n), -1});
    const std::size_t min_leaf = static_cast<std::size_t>(params.min_samples_leaf);
    if (depth >= params.max_depth || n < 2 * min_leaf) return id;

    const double parent = g_total * g_total / static_cast<double>(n);
    double best_gain = 1e-12 * std::max(1.0, parent);
    int best_f = -1, best_b = -1;
    for (std::size_t f = 0; f < dim; ++f) {
      const int nb = bins(f);
      if (nb < 2) continue;
      std::fill_n(hist_g.begin(), nb, 0.0);
      std::fill_n(hist_n.begin(), nb, 0u);
      const auto& code = codes[f];
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t r = idx[i];
        hist_g[code[r]] += grad[r];
        ++hist_n[code[r]];
      }
      double gl = 0.0;
      std::size_t nl = 0;
      for (int b = 0; b + 1 < nb; ++b) {
        gl += hist_g[b];
        nl += hist_n[b];
        if (nl < min_leaf) continue;
        const std::size_t nr = n - nl;
        if (nr < min_leaf) break;
        const double gr = g_total - gl;
        const double gain = gl * gl / static_cast<double>(nl) +
                            gr * gr / static_cast<double>(nr) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_b = b;
        }
      }
    }
    if (best_f < 0) return id;

    const auto& code = codes[best_f];
    const auto mid_it = std::stable_partition(
        idx.begin() + static_cast<std::ptrdiff_t>(begin),
        idx.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::uint32_t r) { return code[r] <= best_b; });
    const std::size_t mid = static_cast<std::size_t>(mid_it - idx.begin());
    tree[id].feature = best_f;
    tree[id].threshold = edges[best_f][best_b];
    tree[id].bin = best_b;
    const int l = grow(tree, idx, begin, mid, depth + 1);
    const int r = grow(tree, idx, mid, end, depth + 1);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }
};

BoostedTrees::BoostedTrees(std::span<const double> x, std::size_t dim,
                           std::span<const double> target, std::span<const std::size_t> rows,
                           const BoostedTreesParams& params, Rng rng) {
  const std::size_t m = rows.size();
  if (m == 0) throw Error(ErrorCode::TooFewUnits, "no training rows");
  double total = 0.0;
  for (std::size_t r : rows) total += target[r];
  base_ = total / static_cast<double>(m);

  Builder b{dim, params, {}, {}, {}, {}, {}};
  b.edges.resize(dim);
  b.codes.assign(dim, std::vector<std::uint8_t>(m));
  std::vector<double> col(m);
  for (std::size_t f = 0; f < dim; ++f) {
    for (std::size_t i = 0; i < m; ++i) col[i] = x[rows[i] * dim + f];
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    auto& e = b.edges[f];
    const std::size_t max_edges = static_cast<std::size_t>(params.max_bins) - 1;
    if (sorted.size() <= max_edges + 1) {
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) e.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    } else {
      std::vector<double> all = col;
      std::sort(all.begin(), all.end());
      for (std::size_t q = 1; q <= max_edges; ++q) {
        const std::size_t pos = q * m / (max_edges + 1);
        const double lo = all[pos - 1], hi = all[pos];
        const double edge = lo < hi ? 0.5 * (lo + hi) : std::nextafter(hi, INFINITY);
        if (e.empty() || edge > e.back()) e.push_back(edge);
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      b.codes[f][i] = static_cast<std::uint8_t>(std::upper_bound(e.begin(), e.end(), col[i]) - e.begin());
    }
  }

  std::vector<double> pred(m, base_);
  b.grad.resize(m);
  b.hist_g.resize(static_cast<std::size_t>(params.max_bins));
  b.hist_n.resize(static_cast<std::size_t>(params.max_bins));
  std::vector<std::uint32_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0u);
  const std::size_t n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(m))));
  std::vector<std::uint32_t> idx;
  trees_.reserve(static_cast<std::size_t>(params.n_trees));

  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < m; ++i) b.grad[i] = pred[i] - target[rows[i]];
    if (n_sub < m) {
      for (std::size_t i = 0; i < n_sub; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, m - 1);
        std::swap(perm[i], perm[pick(rng)]);
      }
      idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_sub));
      std::sort(idx.begin(), idx.end());
    } else {
      idx = perm;
    }
    std::vector<Node> tree;
    b.grow(tree, idx, 0, idx.size(), 0);
    for (std::size_t i = 0; i < m; ++i) {
      int node = 0;
      while (tree[node].feature >= 0) {
        const Node& nd = tree[node];
        node = b.codes[nd.feature][i] <= nd.bin ? nd.left : nd.right;
      }
      pred[i] += tree[node].value;
    }
    trees_.push_back(std::move(tree));
  }
}

// ---------------------------------------------------------------------------
// Ridge regression on an expanded covariate basis.

class BasisRidge final : public Regressor {
 public:
  BasisRidge(std::span<const double> x, std::size_t dim, std::span<const double> target,
             std::span<const std::size_t> rows, const BasisRidgeParams& params);

  double predict(std::span<const double> x) const override {
    const std::vector<double> b = expand(x);
    double out = intercept_;
    for (std::size_t j = 0; j < b.size(); ++j) out += coef_[j] * b[j];
    return out;
  }

 private:
  std::vector<double> expand(std::span<const double> raw) const {
    std::vector<double> x(raw.begin(), raw.end());
    if (params_.standardize) {
      for (std::size_t j = 0; j < dim_; ++j) x[j] = (x[j] - in_mean_[j]) / in_scale_[j];
    }
    std::vector<double> b(x);
    if (params_.basis == RidgeBasis::Full) {
      for (std::size_t j = 0; j < dim_; ++j)
        for (std::size_t k = j + 1; k < dim_; ++k) b.push_back(x[j] * x[k]);
      for (std::size_t j = 0; j < dim_; ++j) b.push_back(std::fabs(x[j]));
      for (std::size_t j = 0; j < dim_; ++j) b.push_back(std::sin(std::numbers::pi * x[j]));
    }
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = (b[j] - mean_[j]) * inv_scale_[j];
    return b;
  }

  std::size_t dim_;
  BasisRidgeParams params_;
  std::vector<double> in_mean_, in_scale_;
  std::vector<double> mean_, inv_scale_;
  std::vector<double> coef_;
  double intercept_ = 0.0;
};

BasisRidge::BasisRidge(std::span<const double> x, std::size_t dim,
                       std::span<const double> target, std::span<const std::size_t> rows,
                       const BasisRidgeParams& params)
    : dim_(dim), params_(params) {
  const std::size_t m = rows.size();
  if (m < 2) throw Error(ErrorCode::TooFewUnits, "ridge needs at least two training rows");
  in_mean_.assign(dim, 0.0);
  in_scale_.assign(dim, 1.0);
  if (params.standardize) {
    for (std::size_t j = 0; j < dim; ++j) {
      double s = 0.0, ss = 0.0;
      for (std::size_t r : rows) s += x[r * dim + j];
      const double mu = s / static_cast<double>(m);
      for (std::size_t r : rows) ss += (x[r * dim + j] - mu) * (x[r * dim + j] - mu);
      in_mean_[j] = mu;
      const double sd = std::sqrt(ss / static_cast<double>(m));
      in_scale_[j] = sd > 0.0 ? sd : 1.0;
    }
  }
  // Raw expansion first (identity centering), then fit the column scaling.
  const std::size_t p = params.basis == RidgeBasis::Full ? dim * (dim - 1) / 2 + 4 * dim : dim;
  mean_.assign(p, 0.0);
  inv_scale_.assign(p, 1.0);
  Eigen::MatrixXd design(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < m; ++i) {
    const auto b = expand(x.subspan(rows[i] * dim, dim));
    for (std::size_t j = 0; j < p; ++j) design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = b[j];
  }
  Eigen::VectorXd yv(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) yv(static_cast<Eigen::Index>(i)) = target[rows[i]];

  std::vector<bool> active(p, true);
  for (std::size_t j = 0; j < p; ++j) {
    auto col = design.col(static_cast<Eigen::Index>(j));
    const double mu = col.mean();
    const double sd = std::sqrt((col.array() - mu).square().mean());
    mean_[j] = mu;
    if (sd > 1e-12 * std::max(1.0, std::fabs(mu))) {
      inv_scale_[j] = 1.0 / sd;
      col = (col.array() - mu) / sd;
    } else {
      inv_scale_[j] = 0.0;  // constant column: absorbed by the intercept
      col.setZero();
      active[j] = false;
    }
  }
  const double y_mean = yv.mean();
  Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::VectorXd rhs = design.transpose() * (yv.array() - y_mean).matrix();
  for (std::size_t j = 0; j < p; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (!active[j]) {
      gram.row(jj).setZero();
      gram.col(jj).setZero();
      gram(jj, jj) = 1.0;
      rhs(jj) = 0.0;
    } else {
      gram(jj, jj) += params.lambda;
    }
  }
  Eigen::VectorXd beta;
  try {
    beta = numeric::solve_spd(gram, rhs, params.lambda > 0.0 ? 1e-14 : 1e-10);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularFit, "collinear expanded basis with zero ridge penalty");
  }
  coef_.assign(beta.data(), beta.data() + beta.size());
  intercept_ = y_mean;
}

}  // namespace

std::unique_ptr<Regressor> train_regressor(std::span<const double> covariates, std::size_t dim,
                                           std::span<const double> target,
                                           std::span<const std::size_t> rows,
                                           const PredictorConfig& config, std::uint64_t stream) {
  config.check();
  if (config.family == PredictorFamily::BoostedTrees) {
    return std::make_unique<BoostedTrees>(covariates, dim, target, rows, config.trees,
                                          make_rng(config.seed, {stream::kTrees, stream}));
  }
  return std::make_unique<BasisRidge>(covariates, dim, target, rows, config.ridge);
}

ProxyColumn cross_fit(std::span<const double> covariates, std::size_t dim,
                      std::span<const double> target, const PredictorConfig& config,
                      const FoldAssignment& folds, std::span<const std::uint8_t> trainable) {
  config.check();
  const std::size_t n = target.size();
  if (folds.fold_of_unit.size() != n || covariates.size() != n * dim) {
    throw Error(ErrorCode::InvalidConfig, "fold assignment or covariates do not match target");
  }
  if (!trainable.empty() && trainable.size() != n) {
    throw Error(ErrorCode::InvalidConfig, "training mask length mismatch");
  }
  ProxyColumn out;
  out.yhat.assign(n, 0.0);
  out.model_tag = model_tag(config);
  out.folds = folds;
  parallel_for(folds.k, config.threads, [&](std::size_t fold) {
    std::vector<std::size_t> train, predict;
    for (std::size_t i = 0; i < n; ++i) {
      if (folds.fold_of_unit[i] == fold) {
        predict.push_back(i);
      } else if (trainable.empty() || trainable[i]) {
        train.push_back(i);
      }
    }
    const auto model = train_regressor(covariates, dim, target, train, config, fold);
    for (std::size_t i : predict) {
      const double v = model->predict(covariates.subspan(i * dim, dim));
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFinitePrediction, "non-finite proxy at unit " + std::to_string(i));
      }
      out.yhat[i] = v;
    }
  });
  return out;
}

namespace {

ProxyColumn fit_target(const ExperimentFrame& frame, std::span<const double> target,
                       const PredictorConfig& config) {
  const FoldAssignment folds = assign_folds(frame.size(), config.k, config.seed);
  std::vector<std::uint8_t> mask;
  if (config.pool == TrainingPool::ControlOnly) {
    mask.resize(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) mask[i] = frame.treatment()[i] == 0.0;
  }
  return cross_fit(frame.covariates(), frame.dim(), target, config, folds, mask);
}

}  // namespace

ProxyColumn fit_proxy(const ExperimentFrame& frame, const PredictorConfig& config) {
  return fit_target(frame, frame.y(), config);
}

ProxyColumn proxy_for_p(const ExperimentFrame& frame, std::span<const double> p_labels,
                        const PredictorConfig& config) {
  if (p_labels.size() != frame.size()) {
    throw Error(ErrorCode::InvalidConfig, "transformed labels do not match frame size");
  }
  return fit_target(frame, p_labels, config);
}

}  // namespace statekit
