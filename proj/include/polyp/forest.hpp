#pragma once

// Random survival forest: bootstrap survival trees split on the two-group
// log-rank statistic, Nelson-Aalen cumulative hazard in the leaves, ensemble
// CHF prediction, OOB concordance error, permutation importance and
// time-dependent ROC.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyp/dataset.hpp"
#include "polyp/rng.hpp"

namespace polyp {

struct ForestConfig {
  int n_trees = 1000;
  int mtry = 0;  // 0 selects ceil(sqrt(p))
  int min_node_events = 3;
  int min_node_size = 15;
  int n_split_candidates = 10;
  std::uint64_t seed = 1;
  int n_threads = 1;

  int resolved_mtry(std::size_t num_variables) const;
};

// Cumulative hazard step function: jumps[k] = (event time, H after the jump).
struct StepFunction {
  std::vector<std::pair<double, double>> jumps;

  double operator()(double t) const;
};

// H(t) = sum over distinct event times t_i <= t of d_i / n_i.
StepFunction nelson_aalen(const std::vector<double>& times, const std::vector<bool>& events);

struct Split {
  std::size_t variable = 0;
  bool is_factor = false;
  double threshold = 0.0;        // continuous: x <= threshold goes left
  std::uint64_t left_levels = 0;  // factor: bit l set sends level l left
  double statistic = 0.0;         // two-group log-rank chi-square, left = group 1

  bool goes_left(double x) const {
    return is_factor ? ((left_levels >> static_cast<unsigned>(x)) & 1U) != 0 : x <= threshold;
  }
};

struct Leaf {
  std::vector<std::uint32_t> grid_index;  // jump positions in the forest's event grid
  std::vector<double> chf;                // H after each jump
  double mortality = 0.0;                 // sum of H over the event grid
};

struct TreeNode {
  std::optional<Split> split;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;
};

using ValueAccessor = std::function<double(std::size_t variable)>;

struct SurvivalTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<Leaf> leaves;
  std::vector<std::uint32_t> in_bag;  // bootstrap multiplicity per training case

  template <typename Get>
  const Leaf& leaf_for(Get&& value) const {
    std::size_t id = 0;
    while (nodes[id].split) {
      const Split& s = *nodes[id].split;
      id = static_cast<std::size_t>(s.goes_left(value(s.variable)) ? nodes[id].left : nodes[id].right);
    }
    return leaves[static_cast<std::size_t>(nodes[id].leaf)];
  }
};

struct Forest {
  ForestConfig config;
  std::vector<Variable> schema;
  std::vector<double> event_grid;  // pooled distinct training event times
  std::vector<SurvivalTree> trees;

  std::size_t num_training_cases() const { return trees.empty() ? 0 : trees.front().in_bag.size(); }
  // Number of trees for which each training case is out of bag.
  std::vector<std::size_t> oob_counts() const;
};

struct NodeData {
  const SurvivalDataset* dataset = nullptr;
  std::vector<std::size_t> samples;  // training rows, repeated per bootstrap draw, time-ascending
};

// Log-rank split search over `mtry` randomly chosen variables. Returns
// nothing when no candidate yields two children with at least
// min_node_size cases and min_node_events events each.
std::optional<Split> best_logrank_split(const NodeData& node, const ForestConfig& config, Rng& rng);

// Throws Error(NoEvents) or Error(InvalidConfig).
Forest grow_forest(const SurvivalDataset& dataset, const ForestConfig& config);

struct ForestPrediction {
  std::vector<double> chf;  // on Forest::event_grid
  double mortality = 0.0;
};

struct AllTrees {};
struct OobOnly {
  std::size_t case_index;
};

// Throws Error(NoOobTrees) when OobOnly selects no tree.
ForestPrediction predict(const Forest& forest, const CovariateRow& row, AllTrees = {});
ForestPrediction predict(const Forest& forest, const SurvivalDataset& dataset, std::size_t row,
                         AllTrees = {});
ForestPrediction predict(const Forest& forest, const SurvivalDataset& dataset, OobOnly oob);

// Mean OOB leaf mortality per training case. Throws Error(NoOobTrees) if a
// case is in bag for every tree.
std::vector<double> oob_mortality(const Forest& forest, const SurvivalDataset& dataset);

// Harrell's C: a pair is usable when the earlier time is an event (or both
// times tie and only one is an event); higher score should fail first; score
// ties count one half. Throws Error(NoUsablePairs).
double harrell_concordance(const std::vector<double>& times, const std::vector<bool>& events,
                           const std::vector<double>& scores);

double oob_concordance_error(const Forest& forest, const SurvivalDataset& dataset);

// Permutation importance: increase in OOB concordance error when a
// variable's values are permuted among each tree's OOB cases.
std::vector<std::pair<std::string, double>> variable_importance(const Forest& forest,
                                                                const SurvivalDataset& dataset,
                                                                Rng& rng);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.5;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Positive: event at or before the horizon. Negative: time beyond the
// horizon. Cases censored at or before the horizon are excluded.
// Throws Error(InvalidArgument) for a horizon outside the observed range,
// Error(DegenerateLabels) when only one class remains.
RocResult time_dependent_auc(const std::vector<double>& scores, const SurvivalDataset& dataset,
                             double horizon_days);

// In-bag training rows (with multiplicity) reaching each node of a tree.
std::vector<std::vector<std::size_t>> in_bag_node_samples(const SurvivalTree& tree,
                                                          const SurvivalDataset& dataset);

// Versioned JSON dump; see README for the schema.
nlohmann::json forest_to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& j);

}  // namespace polyp
