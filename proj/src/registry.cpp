#include "statekit/registry.hpp"

#include <algorithm>

namespace statekit {

namespace {

struct Entry {
  std::string tag;
  EstimatorNeeds needs;
};

const std::vector<Entry>& entries() {
  using M = MetricKind;
  static const std::vector<Entry> table = {
      {"dim", {false, false, false, M::Count}},
      {"cuped", {false, false, true, M::Count}},
      {"cupac", {true, false, false, M::Count}},
      {"mlrate", {true, false, false, M::Count}},
      {"state", {true, false, false, M::Count}},
      {"winsorized_dim", {false, false, false, M::Count}},
      {"winsorized_cuped", {false, false, true, M::Count}},
      {"winsorized_cupac", {true, false, false, M::Count}},
      {"winsorized_mlrate", {true, false, false, M::Count}},
      {"huber", {true, false, false, M::Count}},
      {"ratio_dim", {false, false, false, M::Ratio}},
      {"ratio_cuped_delta", {false, false, true, M::Ratio}},
      {"ratio_state", {false, true, false, M::Ratio}},
      {"ratio_transformed_dim", {false, false, false, M::Ratio}},
  };
  return table;
}

const Entry* find(std::string_view tag) {
  const auto& t = entries();
  const auto it = std::find_if(t.begin(), t.end(), [&](const Entry& e) { return e.tag == tag; });
  return it == t.end() ? nullptr : &*it;
}

template <class T>
const T& require(const T* p, std::string_view tag, const char* what) {
  if (!p) {
    throw Error(ErrorCode::InvalidConfig, std::string(tag) + " needs " + what);
  }
  return *p;
}

AteReport retag(AteReport r, std::string_view tag) {
  r.estimator_tag = tag;
  return r;
}

}  // namespace

const std::vector<std::string>& registered_estimators() {
  static const std::vector<std::string> tags = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.tag);
    return out;
  }();
  return tags;
}

bool is_registered(std::string_view tag) { return find(tag) != nullptr; }

EstimatorNeeds needs_of(std::string_view tag) {
  const Entry* e = find(tag);
  if (!e) throw Error(ErrorCode::InvalidConfig, "unknown estimator '" + std::string(tag) + "'");
  return e->needs;
}

std::string_view baseline_for(MetricKind metric) {
  return metric == MetricKind::Ratio ? "ratio_dim" : "dim";
}

void check_estimators(std::span<const std::string> tags, MetricKind metric) {
  if (tags.empty()) throw Error(ErrorCode::InvalidConfig, "no estimators requested");
  for (const auto& tag : tags) {
    if (needs_of(tag).metric != metric) {
      throw Error(ErrorCode::InvalidConfig,
                  "estimator '" + tag + "' does not apply to a " +
                      (metric == MetricKind::Ratio ? "ratio" : "count") + " metric");
    }
  }
}

AteReport run_estimator(std::string_view tag, const EstimatorInputs& in) {
  const EstimatorNeeds needs = needs_of(tag);
  const ExperimentFrame& frame = require(in.frame, tag, "a frame");
  const EstimatorOptions defaults;
  const EstimatorOptions& opt = in.options ? *in.options : defaults;
  const double alpha = opt.alpha;
  if (needs.covariate && in.covariate.empty()) {
    throw Error(ErrorCode::InvalidConfig, std::string(tag) + " needs a covariate");
  }
  auto winsorized = [&] { return winsorize(frame, opt.winsor_percentile, opt.winsor_two_sided); };

  if (tag == "dim") return dim_count(frame, alpha);
  if (tag == "cuped") return cuped(frame, in.covariate, alpha);
  if (tag == "cupac") {
    return regression_adjusted(frame, require(in.proxy_y, tag, "a proxy"), AdjustmentFlavor::Cupac,
                               alpha);
  }
  if (tag == "mlrate") {
    return regression_adjusted(frame, require(in.proxy_y, tag, "a proxy"),
                               AdjustmentFlavor::Mlrate, alpha);
  }
  if (tag == "state") {
    return state_estimate(frame, require(in.proxy_y, tag, "a proxy"), opt.em, alpha);
  }
  if (tag == "winsorized_dim") return retag(dim_count(winsorized(), alpha), tag);
  if (tag == "winsorized_cuped") return retag(cuped(winsorized(), in.covariate, alpha), tag);
  if (tag == "winsorized_cupac") {
    return retag(regression_adjusted(winsorized(), require(in.proxy_y, tag, "a proxy"),
                                     AdjustmentFlavor::Cupac, alpha),
                 tag);
  }
  if (tag == "winsorized_mlrate") {
    return retag(regression_adjusted(winsorized(), require(in.proxy_y, tag, "a proxy"),
                                     AdjustmentFlavor::Mlrate, alpha),
                 tag);
  }
  if (tag == "huber") {
    return huber_regression(frame, require(in.proxy_y, tag, "a proxy"), opt.huber, alpha);
  }
  if (tag == "ratio_dim") return dim_ratio(frame, alpha);
  if (tag == "ratio_cuped_delta") return ratio_cuped_delta(frame, in.covariate, alpha);

  std::optional<RatioTransform> local;
  if (!in.transform) local = build_transform(frame);
  const RatioTransform& tr = in.transform ? *in.transform : *local;
  if (tag == "ratio_transformed_dim") return dim_on_p(frame, tr, alpha);
  return state_on_ratio(frame, tr, require(in.proxy_p, tag, "a proxy for P"), opt.em, alpha);
}

}  // namespace statekit
