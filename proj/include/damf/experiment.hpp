#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "damf/data_io.hpp"
#include "damf/metrics.hpp"
#include "damf/propensity.hpp"
#include "damf/synth.hpp"
#include "damf/trainers.hpp"

namespace damf {

// Flat `key = value` config files; '#' starts a comment, blank lines are
// ignored. Keys are documented in the README.
class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::string& path) {
    std::ifstream in = detail::open_in(path);
    KeyValueConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw std::runtime_error(path + ": expected `key = value` at line " +
                                   std::to_string(line_no));
        continue;
      }
      cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse<double>(key, it->second);
  }

  int get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse<int>(key, it->second);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse<std::uint64_t>(key, it->second);
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream ss(get_string(key));
    std::string part;
    while (std::getline(ss, part, ',')) {
      part = trim(part);
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  template <typename T>
  static T parse(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T out;
    if (!(ss >> out)) throw std::runtime_error("config: cannot parse value for " + key);
    return out;
  }

  std::map<std::string, std::string> values_;
};

inline TrainConfig train_config_from(const KeyValueConfig& cfg, std::uint64_t seed) {
  TrainConfig tc;
  tc.dim = cfg.get_int("train.dim", 20);
  tc.l2 = cfg.get_double("train.l2", 1e-4);
  tc.tradeoff = cfg.get_double("train.beta", 0.1);
  tc.batch_size = cfg.get_int("train.batch_size", 1024);
  tc.inner_steps = cfg.get_int("train.inner_steps", 1);
  tc.learning_rate = cfg.get_double("train.learning_rate", 0.01);
  tc.max_iterations = cfg.get_int("train.max_iterations", 2500);
  tc.seed = seed;
  tc.validate();
  return tc;
}

inline SynthSpec synth_spec_from(const KeyValueConfig& cfg) {
  SynthSpec spec;
  spec.num_users = cfg.get_int("synth.users", spec.num_users);
  spec.num_items = cfg.get_int("synth.items", spec.num_items);
  spec.latent_dim = cfg.get_int("synth.latent_dim", spec.latent_dim);
  spec.noise = cfg.get_double("synth.noise", spec.noise);
  spec.selection_strength = cfg.get_double("synth.selection_strength", spec.selection_strength);
  spec.base_rate = cfg.get_double("synth.base_rate", spec.base_rate);
  spec.seed = cfg.get_u64("synth.seed", spec.seed);
  spec.zero_block_users = cfg.get_int("synth.zero_block_users", 0);
  spec.zero_block_items = cfg.get_int("synth.zero_block_items", 0);
  spec.validate();
  return spec;
}

// Per-method metric aggregate over seeds (Table-2-style row).
struct MetricReport {
  std::string method;
  int k = 5;
  std::vector<double> mse_runs;
  std::vector<double> ndcg_runs;
  std::vector<double> recall_runs;

  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }

  static double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }
};

struct ExperimentResult {
  std::vector<MetricReport> reports;
  std::optional<DatasetStats> stats;
};

namespace detail {

struct ExperimentData {
  InteractionSet train;
  InteractionSet test;
  std::optional<Matrix> true_ratings;        // synthetic only
  std::optional<PropensityMap> true_propensity;
};

inline ExperimentData prepare_data(const KeyValueConfig& cfg) {
  if (cfg.has("synth.users")) {
    const SynthSpec spec = synth_spec_from(cfg);
    TrueWorld world = gen_true_world(spec);
    InteractionSet train =
        sample_observation(world.ratings, world.propensities, spec.seed, spec.scale);
    const double test_rate = cfg.get_double("synth.test_rate", 0.2);
    InteractionSet test = sample_observation(
        world.ratings, PropensityMap::uniform(test_rate), spec.seed + 1000003, spec.scale);
    return ExperimentData{std::move(train), std::move(test), std::move(world.ratings),
                          std::move(world.propensities)};
  }
  const std::string train_path = cfg.get_string("data.train");
  const std::string test_path = cfg.get_string("data.test");
  if (train_path.empty() || test_path.empty())
    throw std::runtime_error("config: need data.train/data.test or synth.* keys");
  const int m = cfg.get_int("data.num_users", 0);
  const int n = cfg.get_int("data.num_items", 0);
  InteractionSet train = load_triples(train_path, m, n);
  InteractionSet test = load_triples(test_path, std::max(m, train.num_users()),
                                     std::max(n, train.num_items()));
  const int mm = std::max(train.num_users(), test.num_users());
  const int nn = std::max(train.num_items(), test.num_items());
  train = InteractionSet(mm, nn, train.triples(), train.scale());
  test = InteractionSet(mm, nn, test.triples(), test.scale());
  return ExperimentData{std::move(train), std::move(test), std::nullopt, std::nullopt};
}

inline PropensityMap propensity_for(const std::string& method, const ExperimentData& data,
                                    const KeyValueConfig& cfg, std::uint64_t base_seed) {
  if (method == "user") return user_propensity(data.train);
  if (method == "item") return item_propensity(data.train);
  if (method == "user-item") return user_item_propensity(data.train);
  if (method == "1bitmc") {
    OneBitMCConfig mc;
    mc.nuclear_cap_scale = cfg.get_double("onebitmc.tau", mc.nuclear_cap_scale);
    mc.entry_cap = cfg.get_double("onebitmc.gamma", mc.entry_cap);
    mc.step_size = cfg.get_double("onebitmc.step_size", mc.step_size);
    mc.iterations = cfg.get_int("onebitmc.iterations", mc.iterations);
    return one_bit_mc(data.train, mc).propensities;
  }
  if (method == "nb-true") {
    // The reference protocol estimates the marginal rating distribution from
    // a small MCAR slice of the test set (5% by default).
    const double frac = cfg.get_double("propensity.mcar_fraction", 0.05);
    auto [rest, sample] = split_train_val(data.test, frac, base_seed + 42424242ULL);
    (void)rest;
    return true_propensity_naive_bayes(data.train, sample);
  }
  if (method == "true") {
    if (!data.true_propensity)
      throw std::runtime_error("config: propensity.method=true requires synthetic data");
    return *data.true_propensity;
  }
  if (method.rfind("file:", 0) == 0) return load_propensity(method.substr(5));
  throw std::runtime_error("config: unknown propensity method: " + method);
}

}  // namespace detail

// Trains every listed method over `seeds` seeds, evaluates MSE / NDCG@K /
// Recall@K on the test set, and writes results.csv (mean +/- SD per method),
// results_per_seed.csv, and per-seed bound traces for DAMF.
inline ExperimentResult run_experiment(const std::string& config_path,
                                       const std::string& out_dir) {
  const KeyValueConfig cfg = KeyValueConfig::load(config_path);
  std::filesystem::create_directories(out_dir);
  detail::ExperimentData data = detail::prepare_data(cfg);

  const int seeds = cfg.get_int("seeds", 5);
  if (seeds < 1) throw std::runtime_error("config: seeds must be >= 1");
  const std::uint64_t base_seed = cfg.get_u64("base_seed", 0);
  const int k = cfg.get_int("metrics.k", 5);
  const double validation_fraction = cfg.get_double("validation.fraction", 0.0);
  std::vector<std::string> methods = cfg.get_list("methods");
  if (methods.empty()) throw std::runtime_error("config: no methods listed");

  std::optional<InteractionSet> train_core;  // train minus validation
  std::optional<InteractionSet> validation;
  if (validation_fraction > 0.0) {
    auto [tr, val] = split_train_val(data.train, validation_fraction, base_seed + 999);
    train_core = std::move(tr);
    validation = std::move(val);
  }
  const InteractionSet& train = train_core ? *train_core : data.train;
  const InteractionSet* val_ptr = validation ? &*validation : nullptr;

  std::optional<PropensityMap> propensity;
  const std::string propensity_method = cfg.get_string("propensity.method", "user");
  for (const std::string& method : methods) {
    if (method == "mf-ips" || method == "mf-dr") {
      propensity = detail::propensity_for(propensity_method, data, cfg, base_seed);
      break;
    }
  }

  std::optional<InteractionSet> cause_mcar;
  for (const std::string& method : methods) {
    if (method == "cause") {
      const double frac = cfg.get_double("cause.mcar_fraction", 0.1);
      auto [rest, sample] = split_train_val(data.test, frac, base_seed + 777);
      (void)rest;
      cause_mcar = std::move(sample);
      break;
    }
  }

  ExperimentResult result;
  result.stats = dataset_stats(train, data.test);
  for (const std::string& method : methods) {
    MetricReport report;
    report.method = method;
    report.k = k;
    for (int s = 0; s < seeds; ++s) {
      const TrainConfig tc = train_config_from(cfg, base_seed + static_cast<std::uint64_t>(s));
      std::optional<FactorModel> model;
      if (method == "mf") {
        model = train_mf(train, tc, val_ptr);
      } else if (method == "mf-ips") {
        model = train_mf_ips(train, *propensity, tc, val_ptr);
      } else if (method == "mf-dr") {
        model = train_mf_dr(train, *propensity, tc, val_ptr);
      } else if (method == "cause") {
        model = train_cause(train, *cause_mcar, tc, val_ptr);
      } else if (method == "damf") {
        TraceOptions opts;
        if (data.true_ratings) opts.true_ratings = &*data.true_ratings;
        DamfResult damf = train_damf(train, tc, opts, val_ptr);
        save_trace(damf.trace,
                   out_dir + "/bound_trace_seed" + std::to_string(s) + ".csv");
        model = std::move(damf.model);
      } else {
        throw std::runtime_error("config: unknown method: " + method);
      }
      report.mse_runs.push_back(mse(data.test, *model));
      report.ndcg_runs.push_back(ndcg_at_k(data.test, *model, k));
      report.recall_runs.push_back(recall_at_k(data.test, *model, k));
    }
    result.reports.push_back(std::move(report));
  }

  std::ofstream summary = detail::open_out(out_dir + "/results.csv");
  summary << "method,mse_mean,mse_sd,ndcg_mean,ndcg_sd,recall_mean,recall_sd\n";
  for (const MetricReport& r : result.reports)
    summary << r.method << ',' << detail::format_double(MetricReport::mean(r.mse_runs)) << ','
            << detail::format_double(MetricReport::stddev(r.mse_runs)) << ','
            << detail::format_double(MetricReport::mean(r.ndcg_runs)) << ','
            << detail::format_double(MetricReport::stddev(r.ndcg_runs)) << ','
            << detail::format_double(MetricReport::mean(r.recall_runs)) << ','
            << detail::format_double(MetricReport::stddev(r.recall_runs)) << '\n';

  std::ofstream per_seed = detail::open_out(out_dir + "/results_per_seed.csv");
  per_seed << "method,seed,mse,ndcg,recall\n";
  for (const MetricReport& r : result.reports)
    for (std::size_t s = 0; s < r.mse_runs.size(); ++s)
      per_seed << r.method << ',' << s << ',' << detail::format_double(r.mse_runs[s]) << ','
               << detail::format_double(r.ndcg_runs[s]) << ','
               << detail::format_double(r.recall_runs[s]) << '\n';
  return result;
}

}  // namespace damf
