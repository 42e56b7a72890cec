// Command-line front end: synthetic data generation, propensity estimation,
// training, evaluation, bound tracing, and the full experiment runner.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "damf/damf.hpp"

namespace {

struct TrainArgs {
  std::string method;
  std::string train_path;
  std::string config_path;
  std::string propensity_path;
  std::string mcar_path;
  std::string truth_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

damf::TrainConfig make_train_config(const std::string& config_path, std::uint64_t seed) {
  if (config_path.empty()) {
    damf::TrainConfig tc;
    tc.seed = seed;
    return tc;
  }
  return damf::train_config_from(damf::KeyValueConfig::load(config_path), seed);
}

int cmd_generate(const std::string& spec_path, const std::string& out_dir) {
  const damf::KeyValueConfig cfg = damf::KeyValueConfig::load(spec_path);
  const damf::SynthSpec spec = damf::synth_spec_from(cfg);
  std::filesystem::create_directories(out_dir);
  const damf::TrueWorld world = damf::gen_true_world(spec);
  const damf::InteractionSet observed =
      damf::sample_observation(world.ratings, world.propensities, spec.seed, spec.scale);
  damf::save_triples(observed, out_dir + "/train.txt");
  damf::save_dense_matrix(world.ratings, out_dir + "/true_ratings.txt");
  damf::save_propensity(world.propensities, spec.num_users, spec.num_items,
                        out_dir + "/propensity.txt");
  std::cout << "wrote " << observed.size() << " observed triples over a " << spec.num_users
            << "x" << spec.num_items << " grid to " << out_dir << "\n";
  return 0;
}

int cmd_estimate_propensity(const std::string& method, const std::string& train_path,
                            const std::string& mcar_path, const std::string& out_path,
                            const damf::OneBitMCConfig& mc) {
  const damf::InteractionSet train = damf::load_triples(train_path);
  std::optional<damf::PropensityMap> map;
  if (method == "user") {
    map = damf::user_propensity(train);
  } else if (method == "item") {
    map = damf::item_propensity(train);
  } else if (method == "user-item") {
    map = damf::user_item_propensity(train);
  } else if (method == "1bitmc") {
    damf::OneBitMCResult result = damf::one_bit_mc(train, mc);
    if (!result.converged)
      std::cerr << "warning: 1bitmc stopped early; returning the best iterate\n";
    map = std::move(result.propensities);
  } else if (method == "nb-true") {
    if (mcar_path.empty()) {
      std::cerr << "estimate-propensity: nb-true needs --mcar <triples>\n";
      return 1;
    }
    map = damf::true_propensity_naive_bayes(train, damf::load_triples(mcar_path));
  } else {
    std::cerr << "estimate-propensity: unknown method " << method << "\n";
    return 1;
  }
  damf::save_propensity(*map, train.num_users(), train.num_items(), out_path);
  std::cout << "wrote " << train.num_users() << "x" << train.num_items()
            << " propensity matrix to " << out_path << "\n";
  return 0;
}

int cmd_train(const TrainArgs& args) {
  const damf::InteractionSet train = damf::load_triples(args.train_path);
  damf::TrainConfig tc = make_train_config(args.config_path, args.seed);
  if (args.seed_set) tc.seed = args.seed;
  std::filesystem::create_directories(args.out_dir);

  std::optional<damf::FactorModel> model;
  if (args.method == "mf") {
    model = damf::train_mf(train, tc);
  } else if (args.method == "mf-ips" || args.method == "mf-dr") {
    if (args.propensity_path.empty()) {
      std::cerr << "train: " << args.method << " needs --propensity <file>\n";
      return 1;
    }
    const damf::PropensityMap propensity = damf::load_propensity(args.propensity_path);
    model = args.method == "mf-ips" ? damf::train_mf_ips(train, propensity, tc)
                                    : damf::train_mf_dr(train, propensity, tc);
  } else if (args.method == "cause") {
    if (args.mcar_path.empty()) {
      std::cerr << "train: cause needs --mcar <triples>\n";
      return 1;
    }
    const damf::InteractionSet mcar =
        damf::load_triples(args.mcar_path, train.num_users(), train.num_items());
    model = damf::train_cause(train, mcar, tc);
  } else if (args.method == "damf") {
    damf::TraceOptions opts;
    std::optional<damf::Matrix> truth;
    if (!args.truth_path.empty()) {
      truth = damf::load_dense_matrix(args.truth_path);
      opts.true_ratings = &*truth;
    }
    damf::DamfResult result = damf::train_damf(train, tc, opts);
    damf::save_trace(result.trace, args.out_dir + "/bound_trace.csv");
    damf::save_model(result.adversary, args.out_dir + "/adversary.txt");
    model = std::move(result.model);
  } else {
    std::cerr << "train: unknown method " << args.method << "\n";
    return 1;
  }
  damf::save_model(*model, args.out_dir + "/model.txt");
  std::cout << "trained " << args.method << " (seed " << tc.seed << "); model written to "
            << args.out_dir << "/model.txt\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& test_path, int k,
                 const std::string& out_path) {
  const damf::FactorModel model = damf::load_model(model_path);
  const damf::InteractionSet test =
      damf::load_triples(test_path, model.num_users(), model.num_items());
  const double test_mse = damf::mse(test, model);
  const double test_ndcg = damf::ndcg_at_k(test, model, k);
  const double test_recall = damf::recall_at_k(test, model, k);
  std::cout << "mse " << test_mse << "\nndcg@" << k << " " << test_ndcg << "\nrecall@" << k
            << " " << test_recall << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << "mse,ndcg,recall,k\n"
        << test_mse << ',' << test_ndcg << ',' << test_recall << ',' << k << '\n';
  }
  return 0;
}

int cmd_trace_bound(const std::string& model_path, const std::string& adversary_path,
                    const std::string& train_path, const std::string& truth_path,
                    double confidence, std::uint64_t seed, const std::string& out_path) {
  const damf::FactorModel model = damf::load_model(model_path);
  const damf::FactorModel adversary = damf::load_model(adversary_path);
  const damf::InteractionSet train = damf::load_triples(train_path);
  std::optional<damf::Matrix> truth;
  if (!truth_path.empty()) truth = damf::load_dense_matrix(truth_path);
  damf::Rng rng(seed, damf::rng_stream::kTrace);
  const damf::BoundConfig cfg = damf::BoundConfig::for_scale(train.scale(), confidence);
  damf::TraceRecord rec =
      damf::trace_bound(model, adversary, train, cfg, rng, truth ? &*truth : nullptr);
  std::cout << "naive " << rec.naive << "\npmd " << rec.pmd << "\ncomplexity "
            << rec.complexity << "\nconfidence " << rec.confidence << "\nbound " << rec.bound
            << "\n";
  if (rec.ideal) std::cout << "ideal " << *rec.ideal << "\n";
  if (!out_path.empty()) {
    damf::TrainTrace trace;
    trace.records.push_back(rec);
    damf::save_trace(trace, out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix factorization for MNAR explicit feedback"};
  app.require_subcommand(1);

  // generate-synthetic
  std::string spec_path, gen_out = ".";
  CLI::App* gen = app.add_subcommand("generate-synthetic",
                                     "Sample a synthetic MNAR world and write its files");
  gen->add_option("--spec", spec_path, "synthetic spec (key = value file)")->required();
  gen->add_option("--out", gen_out, "output directory");

  // estimate-propensity
  std::string prop_method, prop_train, prop_mcar, prop_out = "propensity.txt";
  damf::OneBitMCConfig mc;
  CLI::App* est = app.add_subcommand("estimate-propensity",
                                     "Estimate observation propensities from MNAR data");
  est->add_option("--method", prop_method, "user|item|user-item|1bitmc|nb-true")->required();
  est->add_option("--train", prop_train, "training triples")->required();
  est->add_option("--mcar", prop_mcar, "MCAR triples (nb-true only)");
  est->add_option("--out", prop_out, "output propensity file");
  est->add_option("--tau", mc.nuclear_cap_scale, "1bitmc nuclear cap scale");
  est->add_option("--gamma", mc.entry_cap, "1bitmc entrywise cap");
  est->add_option("--step-size", mc.step_size, "1bitmc initial step size");
  est->add_option("--iterations", mc.iterations, "1bitmc iteration budget");

  // train
  TrainArgs targs;
  CLI::App* tr = app.add_subcommand("train", "Train a rating predictor");
  tr->add_option("--method", targs.method, "mf|mf-ips|mf-dr|cause|damf")->required();
  tr->add_option("--train", targs.train_path, "training triples")->required();
  tr->add_option("--config", targs.config_path, "train.* config file");
  tr->add_option("--propensity", targs.propensity_path, "propensity file (mf-ips, mf-dr)");
  tr->add_option("--mcar", targs.mcar_path, "MCAR triples (cause)");
  tr->add_option("--truth", targs.truth_path, "true-rating matrix (damf trace)");
  tr->add_option("--out", targs.out_dir, "output directory");
  tr->add_option("--seed", targs.seed, "training seed")
      ->each([&targs](const std::string&) { targs.seed_set = true; });

  // evaluate
  std::string eval_model, eval_test, eval_out;
  int eval_k = 5;
  CLI::App* ev = app.add_subcommand("evaluate", "Score a model on a test set");
  ev->add_option("--model", eval_model, "model file")->required();
  ev->add_option("--test", eval_test, "test triples")->required();
  ev->add_option("--k", eval_k, "ranking cutoff K");
  ev->add_option("--out", eval_out, "optional CSV output");

  // run-experiment
  std::string exp_config, exp_out = "results";
  CLI::App* ex = app.add_subcommand("run-experiment",
                                    "Train and evaluate every configured method");
  ex->add_option("--config", exp_config, "experiment config file")->required();
  ex->add_option("--out", exp_out, "output directory");

  // trace-bound
  std::string tb_model, tb_adv, tb_train, tb_truth, tb_out;
  double tb_confidence = 0.05;
  std::uint64_t tb_seed = 0;
  CLI::App* tb = app.add_subcommand("trace-bound",
                                    "Evaluate the generalization-bound components once");
  tb->add_option("--model", tb_model, "model file")->required();
  tb->add_option("--adversary", tb_adv, "adversary model file")->required();
  tb->add_option("--train", tb_train, "training triples")->required();
  tb->add_option("--truth", tb_truth, "true-rating matrix");
  tb->add_option("--confidence", tb_confidence, "bound confidence delta");
  tb->add_option("--seed", tb_seed, "seed for the uniform MCAR sample");
  tb->add_option("--out", tb_out, "optional CSV output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(spec_path, gen_out);
    if (est->parsed())
      return cmd_estimate_propensity(prop_method, prop_train, prop_mcar, prop_out, mc);
    if (tr->parsed()) return cmd_train(targs);
    if (ev->parsed()) return cmd_evaluate(eval_model, eval_test, eval_k, eval_out);
    if (ex->parsed()) {
      const damf::ExperimentResult result = damf::run_experiment(exp_config, exp_out);
      for (const damf::MetricReport& r : result.reports)
        std::cout << r.method << ": mse " << damf::MetricReport::mean(r.mse_runs) << " (+/- "
                  << damf::MetricReport::stddev(r.mse_runs) << "), ndcg@" << r.k << " "
                  << damf::MetricReport::mean(r.ndcg_runs) << ", recall@" << r.k << " "
                  << damf::MetricReport::mean(r.recall_runs) << "\n";
      std::cout << "results written to " << exp_out << "/results.csv\n";
      return 0;
    }
    if (tb->parsed())
      return cmd_trace_bound(tb_model, tb_adv, tb_train, tb_truth, tb_confidence, tb_seed,
                             tb_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
