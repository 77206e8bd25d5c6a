#include "polyp/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "polyp/error.hpp"
#include "polyp/survival.hpp"

namespace polyp {

namespace {

constexpr int kForestFormatVersion = 1;

struct ChildCounts {
  std::size_t n_left = 0;
  std::size_t events_left = 0;
};

// Two-group log-rank statistic of the partition `left` over the node's
// time-ascending samples, or nothing if a child would be too small.
std::optional<double> score_partition(const NodeData& node, const std::vector<char>& left,
                                      std::size_t node_events, const ForestConfig& config) {
  const auto& ds = *node.dataset;
  const std::size_t m = node.samples.size();
  ChildCounts c;
  for (std::size_t k = 0; k < m; ++k) {
    if (left[k]) {
      ++c.n_left;
      if (ds.event[node.samples[k]]) ++c.events_left;
    }
  }
  const auto min_size = static_cast<std::size_t>(config.min_node_size);
  const auto min_events = static_cast<std::size_t>(config.min_node_events);
  if (c.n_left < min_size || m - c.n_left < min_size || c.events_left < min_events ||
      node_events - c.events_left < min_events) {
    return std::nullopt;
  }

  double n = static_cast<double>(m);
  double n1 = static_cast<double>(c.n_left);
  double u = 0.0;
  double v = 0.0;
  std::size_t k = 0;
  while (k < m) {
    const double t = ds.time[node.samples[k]];
    double d = 0.0;
    double d1 = 0.0;
    double out = 0.0;
    double out1 = 0.0;
    for (; k < m && ds.time[node.samples[k]] == t; ++k) {
      const bool ev = ds.event[node.samples[k]];
      if (ev) d += 1.0;
      out += 1.0;
      if (left[k]) {
        if (ev) d1 += 1.0;
        out1 += 1.0;
      }
    }
    if (d > 0.0) detail::logrank_accumulate(d, n, d1, n1, u, v);
    n -= out;
    n1 -= out1;
  }
  if (!(v > 0.0)) return std::nullopt;
  return detail::logrank_statistic(u, v);
}

// Partial Fisher-Yates: the first k entries of 0..n-1 in random order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<double> build_event_grid(const SurvivalDataset& ds) {
  std::vector<double> grid;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.event[i]) grid.push_back(ds.time[i]);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

Leaf make_leaf(const NodeData& node, const std::vector<double>& grid) {
  const auto& ds = *node.dataset;
  Leaf leaf;
  const std::size_t m = node.samples.size();
  double at_risk = static_cast<double>(m);
  double h = 0.0;
  std::size_t k = 0;
  while (k < m) {
    const double t = ds.time[node.samples[k]];
    double d = 0.0;
    double out = 0.0;
    for (; k < m && ds.time[node.samples[k]] == t; ++k) {
      if (ds.event[node.samples[k]]) d += 1.0;
      out += 1.0;
    }
    if (d > 0.0) {
      h += d / at_risk;
      const auto pos = std::lower_bound(grid.begin(), grid.end(), t) - grid.begin();
      leaf.grid_index.push_back(static_cast<std::uint32_t>(pos));
      leaf.chf.push_back(h);
    }
    at_risk -= out;
  }
  for (std::size_t j = 0; j < leaf.chf.size(); ++j) {
    const std::size_t next = j + 1 < leaf.grid_index.size() ? leaf.grid_index[j + 1] : grid.size();
    leaf.mortality += leaf.chf[j] * static_cast<double>(next - leaf.grid_index[j]);
  }
  return leaf;
}

std::size_t count_events(const NodeData& node) {
  std::size_t e = 0;
  for (std::size_t i : node.samples) e += node.dataset->event[i] ? 1 : 0;
  return e;
}

SurvivalTree grow_tree(const SurvivalDataset& ds, const ForestConfig& config,
                       const std::vector<double>& grid, const std::vector<std::size_t>& time_order,
                       Rng rng) {
  const std::size_t n = ds.size();
  SurvivalTree tree;
  tree.in_bag.assign(n, 0);
  std::uniform_int_distribution<std::size_t> draw(0, n - 1);
  for (std::size_t i = 0; i < n; ++i) ++tree.in_bag[draw(rng)];

  NodeData root{&ds, {}};
  root.samples.reserve(n);
  for (std::size_t i : time_order) {
    for (std::uint32_t r = 0; r < tree.in_bag[i]; ++r) root.samples.push_back(i);
  }

  tree.nodes.emplace_back();
  std::vector<std::pair<std::size_t, NodeData>> stack;
  stack.emplace_back(0, std::move(root));
  const auto min_size = static_cast<std::size_t>(config.min_node_size);
  const auto min_events = static_cast<std::size_t>(config.min_node_events);

  while (!stack.empty()) {
    auto [id, node] = std::move(stack.back());
    stack.pop_back();

    std::optional<Split> split;
    if (node.samples.size() >= 2 * min_size && count_events(node) >= 2 * min_events) {
      split = best_logrank_split(node, config, rng);
    }
    if (!split) {
      tree.nodes[id].leaf = static_cast<std::int32_t>(tree.leaves.size());
      tree.leaves.push_back(make_leaf(node, grid));
      continue;
    }

    NodeData left{&ds, {}};
    NodeData right{&ds, {}};
    const auto& col = ds.columns[split->variable];
    for (std::size_t i : node.samples) {
      (split->goes_left(col[i]) ? left : right).samples.push_back(i);
    }
    const auto left_id = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[id].split = split;
    tree.nodes[id].left = static_cast<std::int32_t>(left_id);
    tree.nodes[id].right = static_cast<std::int32_t>(left_id + 1);
    stack.emplace_back(left_id + 1, std::move(right));
    stack.emplace_back(left_id, std::move(left));
  }
  return tree;
}

void validate(const SurvivalDataset& ds, const ForestConfig& config) {
  if (config.n_trees < 1) throw Error(ErrorCode::InvalidConfig, "n_trees must be at least 1");
  if (ds.num_variables() == 0) throw Error(ErrorCode::InvalidConfig, "forest needs covariates");
  const int mtry = config.resolved_mtry(ds.num_variables());
  if (mtry < 1 || mtry > static_cast<int>(ds.num_variables())) {
    throw Error(ErrorCode::InvalidConfig, "mtry must lie in [1, number of variables]");
  }
  if (config.min_node_size < 1 || config.min_node_events < 1 || config.n_split_candidates < 1) {
    throw Error(ErrorCode::InvalidConfig, "node limits and split candidates must be positive");
  }
  for (const auto& var : ds.schema) {
    if (var.is_factor() && var.levels.size() > 64) {
      throw Error(ErrorCode::InvalidConfig, "factor '" + var.name + "' has more than 64 levels");
    }
  }
}

ForestPrediction average_curves(const Forest& forest, const std::vector<const Leaf*>& leaves) {
  ForestPrediction out;
  out.chf.assign(forest.event_grid.size(), 0.0);
  for (const Leaf* leaf : leaves) {
    for (std::size_t j = 0; j < leaf->chf.size(); ++j) {
      const std::size_t next = j + 1 < leaf->grid_index.size() ? leaf->grid_index[j + 1] : out.chf.size();
      for (std::size_t g = leaf->grid_index[j]; g < next; ++g) out.chf[g] += leaf->chf[j];
    }
  }
  const double count = static_cast<double>(leaves.size());
  for (double& h : out.chf) {
    h /= count;
    out.mortality += h;
  }
  return out;
}

std::vector<double> concordance_scores(const std::vector<double>& sums,
                                       const std::vector<std::size_t>& counts) {
  std::vector<double> out(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (counts[i] == 0) {
      throw Error(ErrorCode::NoOobTrees, "case " + std::to_string(i) + " is never out of bag");
    }
    out[i] = sums[i] / static_cast<double>(counts[i]);
  }
  return out;
}

void check_training_data(const Forest& forest, const SurvivalDataset& ds) {
  if (ds.size() != forest.num_training_cases()) {
    throw Error(ErrorCode::InvalidArgument, "dataset is not the forest's training data");
  }
}

}  // namespace

int ForestConfig::resolved_mtry(std::size_t num_variables) const {
  if (mtry > 0) return mtry;
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_variables))));
}

double StepFunction::operator()(double t) const {
  double h = 0.0;
  for (const auto& [time, value] : jumps) {
    if (time > t) break;
    h = value;
  }
  return h;
}

StepFunction nelson_aalen(const std::vector<double>& times, const std::vector<bool>& events) {
  if (times.size() != events.size()) {
    throw Error(ErrorCode::InvalidArgument, "times and events differ in length");
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
  StepFunction f;
  double at_risk = static_cast<double>(times.size());
  double h = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = times[order[k]];
    double d = 0.0;
    double out = 0.0;
    for (; k < order.size() && times[order[k]] == t; ++k) {
      if (events[order[k]]) d += 1.0;
      out += 1.0;
    }
    if (d > 0.0) {
      h += d / at_risk;
      f.jumps.emplace_back(t, h);
    }
    at_risk -= out;
  }
  return f;
}

std::vector<std::size_t> Forest::oob_counts() const {
  std::vector<std::size_t> counts(num_training_cases(), 0);
  for (const auto& tree : trees) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += tree.in_bag[i] == 0 ? 1 : 0;
  }
  return counts;
}

std::optional<Split> best_logrank_split(const NodeData& node, const ForestConfig& config, Rng& rng) {
  const SurvivalDataset& ds = *node.dataset;
  const std::size_t m = node.samples.size();
  const std::size_t node_events = count_events(node);
  const auto n_candidates = static_cast<std::size_t>(config.n_split_candidates);
  const auto mtry = static_cast<std::size_t>(config.resolved_mtry(ds.num_variables()));

  std::optional<Split> best;
  std::vector<char> left(m);
  auto consider = [&](Split candidate) {
    const auto& col = ds.columns[candidate.variable];
    for (std::size_t k = 0; k < m; ++k) left[k] = candidate.goes_left(col[node.samples[k]]) ? 1 : 0;
    if (auto stat = score_partition(node, left, node_events, config)) {
      if (!best || *stat > best->statistic) {
        candidate.statistic = *stat;
        best = candidate;
      }
    }
  };

  for (std::size_t var : sample_without_replacement(ds.num_variables(), mtry, rng)) {
    const auto& col = ds.columns[var];
    if (!ds.schema[var].is_factor()) {
      std::vector<double> distinct;
      distinct.reserve(m);
      for (std::size_t i : node.samples) distinct.push_back(col[i]);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (distinct.size() < 2) continue;
      auto cuts = sample_without_replacement(distinct.size() - 1, n_candidates, rng);
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t c : cuts) {
        Split s;
        s.variable = var;
        s.threshold = (distinct[c] + distinct[c + 1]) / 2.0;
        consider(s);
      }
      continue;
    }

    std::uint64_t present = 0;
    for (std::size_t i : node.samples) present |= std::uint64_t{1} << static_cast<unsigned>(col[i]);
    std::vector<unsigned> levels;
    for (unsigned l = 0; l < 64; ++l) {
      if ((present >> l) & 1U) levels.push_back(l);
    }
    if (levels.size() < 2) continue;
    // The first observed level always goes left, so each partition has one
    // encoding: a mask over the remaining levels, not all set.
    const std::size_t free_bits = levels.size() - 1;
    const std::uint64_t n_partitions =
        free_bits >= 63 ? std::numeric_limits<std::uint64_t>::max() : (std::uint64_t{1} << free_bits) - 1;
    std::vector<std::uint64_t> masks;
    if (n_partitions <= n_candidates) {
      for (std::uint64_t mask = 0; mask < n_partitions; ++mask) masks.push_back(mask);
    } else {
      std::set<std::uint64_t> seen;
      std::uniform_int_distribution<std::uint64_t> pick(0, n_partitions - 1);
      while (seen.size() < n_candidates) {
        const std::uint64_t mask = pick(rng);
        if (seen.insert(mask).second) masks.push_back(mask);
      }
    }
    for (std::uint64_t mask : masks) {
      Split s;
      s.variable = var;
      s.is_factor = true;
      s.left_levels = std::uint64_t{1} << levels[0];
      for (std::size_t b = 0; b < free_bits; ++b) {
        if ((mask >> b) & 1U) s.left_levels |= std::uint64_t{1} << levels[b + 1];
      }
      consider(s);
    }
  }
  return best;
}

Forest grow_forest(const SurvivalDataset& dataset, const ForestConfig& config) {
  if (dataset.num_events() == 0) throw Error(ErrorCode::NoEvents, "forest needs at least one event");
  validate(dataset, config);

  Forest forest;
  forest.config = config;
  forest.schema = dataset.schema;
  forest.event_grid = build_event_grid(dataset);

  std::vector<std::size_t> time_order(dataset.size());
  std::iota(time_order.begin(), time_order.end(), 0);
  std::stable_sort(time_order.begin(), time_order.end(),
                   [&](auto a, auto b) { return dataset.time[a] < dataset.time[b]; });

  const auto n_trees = static_cast<std::size_t>(config.n_trees);
  forest.trees.resize(n_trees);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t t = first; t < n_trees; t += stride) {
      forest.trees[t] = grow_tree(dataset, config, forest.event_grid, time_order, stream_rng(config.seed, t));
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, config.n_threads));
  if (n_threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(work, k, n_threads);
    for (auto& th : pool) th.join();
  }
  return forest;
}

ForestPrediction predict(const Forest& forest, const CovariateRow& row, AllTrees) {
  std::vector<double> values(forest.schema.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> known(forest.schema.size(), false);
  for (std::size_t v = 0; v < forest.schema.size(); ++v) {
    const Variable& var = forest.schema[v];
    auto it = row.find(var.name);
    if (it == row.end()) continue;
    if (var.is_factor()) {
      const auto* level = std::get_if<std::string>(&it->second);
      auto idx = level ? var.level_index(*level) : std::nullopt;
      if (!idx) throw Error(ErrorCode::InvalidArgument, "invalid level for '" + var.name + "'");
      values[v] = static_cast<double>(*idx);
    } else {
      const auto* x = std::get_if<double>(&it->second);
      if (!x) throw Error(ErrorCode::InvalidArgument, "'" + var.name + "' must be numeric");
      values[v] = *x;
    }
    known[v] = true;
  }
  auto get = [&](std::size_t v) {
    if (!known[v]) {
      throw Error(ErrorCode::MissingCovariate, "row lacks split variable '" + forest.schema[v].name + "'");
    }
    return values[v];
  };
  std::vector<const Leaf*> leaves;
  for (const auto& tree : forest.trees) leaves.push_back(&tree.leaf_for(get));
  return average_curves(forest, leaves);
}

ForestPrediction predict(const Forest& forest, const SurvivalDataset& dataset, std::size_t row, AllTrees) {
  auto get = [&](std::size_t v) { return dataset.columns[v][row]; };
  std::vector<const Leaf*> leaves;
  for (const auto& tree : forest.trees) leaves.push_back(&tree.leaf_for(get));
  return average_curves(forest, leaves);
}

ForestPrediction predict(const Forest& forest, const SurvivalDataset& dataset, OobOnly oob) {
  check_training_data(forest, dataset);
  const std::size_t row = oob.case_index;
  auto get = [&](std::size_t v) { return dataset.columns[v][row]; };
  std::vector<const Leaf*> leaves;
  for (const auto& tree : forest.trees) {
    if (tree.in_bag[row] == 0) leaves.push_back(&tree.leaf_for(get));
  }
  if (leaves.empty()) throw Error(ErrorCode::NoOobTrees, "case has no out-of-bag trees");
  return average_curves(forest, leaves);
}

std::vector<double> oob_mortality(const Forest& forest, const SurvivalDataset& dataset) {
  check_training_data(forest, dataset);
  const std::size_t n = dataset.size();
  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  for (const auto& tree : forest.trees) {
    for (std::size_t i = 0; i < n; ++i) {
      if (tree.in_bag[i] != 0) continue;
      sums[i] += tree.leaf_for([&](std::size_t v) { return dataset.columns[v][i]; }).mortality;
      ++counts[i];
    }
  }
  return concordance_scores(sums, counts);
}

double harrell_concordance(const std::vector<double>& times, const std::vector<bool>& events,
                           const std::vector<double>& scores) {
  const std::size_t n = times.size();
  if (events.size() != n || scores.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "concordance inputs differ in length");
  }
  double usable = 0.0;
  double concordant = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::size_t first = i;
      std::size_t second = j;
      if (times[j] < times[i]) std::swap(first, second);
      if (times[first] == times[second]) {
        if (events[first] == events[second]) continue;
        if (!events[first]) std::swap(first, second);
      } else if (!events[first]) {
        continue;
      }
      usable += 1.0;
      if (scores[first] > scores[second]) {
        concordant += 1.0;
      } else if (scores[first] == scores[second]) {
        concordant += 0.5;
      }
    }
  }
  if (usable == 0.0) throw Error(ErrorCode::NoUsablePairs, "no usable pairs for concordance");
  return concordant / usable;
}

double oob_concordance_error(const Forest& forest, const SurvivalDataset& dataset) {
  return 1.0 - harrell_concordance(dataset.time, dataset.event, oob_mortality(forest, dataset));
}

std::vector<std::pair<std::string, double>> variable_importance(const Forest& forest,
                                                                const SurvivalDataset& dataset,
                                                                Rng& rng) {
  check_training_data(forest, dataset);
  const double baseline = oob_concordance_error(forest, dataset);
  const std::size_t n = dataset.size();

  std::vector<std::pair<std::string, double>> out;
  std::vector<double> sums(n);
  std::vector<std::size_t> counts(n);
  std::vector<std::size_t> oob;
  std::vector<double> permuted;
  for (std::size_t var = 0; var < dataset.num_variables(); ++var) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& tree : forest.trees) {
      oob.clear();
      permuted.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (tree.in_bag[i] == 0) {
          oob.push_back(i);
          permuted.push_back(dataset.columns[var][i]);
        }
      }
      std::shuffle(permuted.begin(), permuted.end(), rng);
      for (std::size_t k = 0; k < oob.size(); ++k) {
        const std::size_t i = oob[k];
        const Leaf& leaf = tree.leaf_for(
            [&](std::size_t v) { return v == var ? permuted[k] : dataset.columns[v][i]; });
        sums[i] += leaf.mortality;
        ++counts[i];
      }
    }
    const double error =
        1.0 - harrell_concordance(dataset.time, dataset.event, concordance_scores(sums, counts));
    out.emplace_back(dataset.schema[var].name, error - baseline);
  }
  return out;
}

RocResult time_dependent_auc(const std::vector<double>& scores, const SurvivalDataset& dataset,
                             double horizon_days) {
  if (scores.size() != dataset.size()) {
    throw Error(ErrorCode::InvalidArgument, "one score per case is required");
  }
  if (dataset.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty dataset");
  const auto [tmin, tmax] = std::minmax_element(dataset.time.begin(), dataset.time.end());
  if (horizon_days < *tmin || horizon_days > *tmax) {
    throw Error(ErrorCode::InvalidArgument, "horizon lies outside the observed time range");
  }

  std::vector<std::pair<double, bool>> labelled;
  RocResult roc;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.time[i] <= horizon_days) {
      if (!dataset.event[i]) continue;
      labelled.emplace_back(scores[i], true);
      ++roc.positives;
    } else {
      labelled.emplace_back(scores[i], false);
      ++roc.negatives;
    }
  }
  if (roc.positives == 0 || roc.negatives == 0) {
    throw Error(ErrorCode::DegenerateLabels, "only one outcome class at the horizon");
  }
  std::stable_sort(labelled.begin(), labelled.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  const auto pos = static_cast<double>(roc.positives);
  const auto neg = static_cast<double>(roc.negatives);
  double tp = 0.0;
  double fp = 0.0;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t k = 0;
  roc.auc = 0.0;
  while (k < labelled.size()) {
    const double threshold = labelled[k].first;
    for (; k < labelled.size() && labelled[k].first == threshold; ++k) {
      (labelled[k].second ? tp : fp) += 1.0;
    }
    const RocPoint& prev = roc.points.back();
    RocPoint next{fp / neg, tp / pos, threshold};
    roc.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    roc.points.push_back(next);
  }
  return roc;
}

std::vector<std::vector<std::size_t>> in_bag_node_samples(const SurvivalTree& tree,
                                                          const SurvivalDataset& dataset) {
  std::vector<std::vector<std::size_t>> members(tree.nodes.size());
  for (std::size_t i = 0; i < tree.in_bag.size(); ++i) {
    std::size_t id = 0;
    while (true) {
      for (std::uint32_t r = 0; r < tree.in_bag[i]; ++r) members[id].push_back(i);
      if (!tree.nodes[id].split) break;
      const Split& s = *tree.nodes[id].split;
      id = static_cast<std::size_t>(s.goes_left(dataset.columns[s.variable][i]) ? tree.nodes[id].left
                                                                                 : tree.nodes[id].right);
    }
  }
  return members;
}

nlohmann::json forest_to_json(const Forest& forest) {
  using nlohmann::json;
  json j;
  j["format"] = "polyp-survival-forest";
  j["version"] = kForestFormatVersion;
  const ForestConfig& c = forest.config;
  j["config"] = {{"n_trees", c.n_trees},
                 {"mtry", c.mtry},
                 {"min_node_events", c.min_node_events},
                 {"min_node_size", c.min_node_size},
                 {"n_split_candidates", c.n_split_candidates},
                 {"seed", c.seed}};
  json schema = json::array();
  for (const auto& var : forest.schema) {
    schema.push_back({{"name", var.name},
                      {"kind", var.is_factor() ? "factor" : "continuous"},
                      {"levels", var.levels}});
  }
  j["schema"] = schema;
  j["event_grid"] = forest.event_grid;
  json trees = json::array();
  for (const auto& tree : forest.trees) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
      if (node.split) {
        const Split& s = *node.split;
        json jn = {{"variable", s.variable}, {"statistic", s.statistic},
                   {"left", node.left},      {"right", node.right}};
        if (s.is_factor) {
          jn["left_levels"] = s.left_levels;
        } else {
          jn["threshold"] = s.threshold;
        }
        nodes.push_back(jn);
      } else {
        const Leaf& leaf = tree.leaves[static_cast<std::size_t>(node.leaf)];
        nodes.push_back({{"leaf", {{"grid_index", leaf.grid_index},
                                   {"chf", leaf.chf},
                                   {"mortality", leaf.mortality}}}});
      }
    }
    trees.push_back({{"in_bag", tree.in_bag}, {"nodes", nodes}});
  }
  j["trees"] = trees;
  return j;
}

Forest forest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "polyp-survival-forest") {
    throw Error(ErrorCode::Parse, "not a survival forest dump");
  }
  if (j.at("version").get<int>() != kForestFormatVersion) {
    throw Error(ErrorCode::Parse, "unsupported forest format version");
  }
  Forest forest;
  const auto& c = j.at("config");
  forest.config.n_trees = c.at("n_trees").get<int>();
  forest.config.mtry = c.at("mtry").get<int>();
  forest.config.min_node_events = c.at("min_node_events").get<int>();
  forest.config.min_node_size = c.at("min_node_size").get<int>();
  forest.config.n_split_candidates = c.at("n_split_candidates").get<int>();
  forest.config.seed = c.at("seed").get<std::uint64_t>();
  for (const auto& v : j.at("schema")) {
    Variable var;
    var.name = v.at("name").get<std::string>();
    var.kind = v.at("kind").get<std::string>() == "factor" ? VariableKind::Factor : VariableKind::Continuous;
    var.levels = v.at("levels").get<std::vector<std::string>>();
    forest.schema.push_back(std::move(var));
  }
  forest.event_grid = j.at("event_grid").get<std::vector<double>>();
  for (const auto& jt : j.at("trees")) {
    SurvivalTree tree;
    tree.in_bag = jt.at("in_bag").get<std::vector<std::uint32_t>>();
    for (const auto& jn : jt.at("nodes")) {
      TreeNode node;
      if (jn.contains("leaf")) {
        const auto& jl = jn.at("leaf");
        Leaf leaf;
        leaf.grid_index = jl.at("grid_index").get<std::vector<std::uint32_t>>();
        leaf.chf = jl.at("chf").get<std::vector<double>>();
        leaf.mortality = jl.at("mortality").get<double>();
        node.leaf = static_cast<std::int32_t>(tree.leaves.size());
        tree.leaves.push_back(std::move(leaf));
      } else {
        Split s;
        s.variable = jn.at("variable").get<std::size_t>();
        s.statistic = jn.at("statistic").get<double>();
        if (jn.contains("left_levels")) {
          s.is_factor = true;
          s.left_levels = jn.at("left_levels").get<std::uint64_t>();
        } else {
          s.threshold = jn.at("threshold").get<double>();
        }
        node.split = s;
        node.left = jn.at("left").get<std::int32_t>();
        node.right = jn.at("right").get<std::int32_t>();
      }
      tree.nodes.push_back(std::move(node));
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace polyp
