#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dqmp/config.hpp"
#include "dqmp/errors.hpp"
#include "dqmp/specfn.hpp"
#include "selftest.hpp"

using namespace dqmp;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fwrite(text.data(), 1, text.size(), f);
  if (std::fclose(f) != 0) throw IoError("write failed for '" + path + "'");
}

struct Options {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string config;
  std::string kind;
  std::string out;
  std::string in;
  std::string train;
  std::string val;
  std::string history;
  std::string init;
  std::string curve;
  std::string din;
  std::string drn;
  std::string trajectory;
  std::size_t count = 0;
  std::vector<double> theta;
  std::string fn;
  std::vector<double> args;
};

NetworkSet load_networks(const RunConfig& cfg, const std::vector<std::string>& methods,
                         const std::vector<kvfd::Protocol>& protocols, const std::string& din_flag,
                         const std::string& drn_flag) {
  bool need_din = false, need_drn = false;
  for (const auto& m : methods) {
    need_din = need_din || method_needs_din(m, cfg);
    need_drn = need_drn || method_needs_drn(m);
  }
  const std::string din_pat = din_flag.empty() ? cfg.din_path : din_flag;
  const std::string drn_pat = drn_flag.empty() ? cfg.drn_path : drn_flag;
  if (need_din && din_pat.empty()) throw UsageError("an initial-guess network is required (--din or paths.din)");
  if (need_drn && drn_pat.empty()) throw UsageError("a reward network is required (--drn or paths.drn)");
  NetworkSet nets;
  for (auto p : protocols) {
    if (need_din) nets.din[p] = nnet::load_network(expand_path(din_pat, p));
    if (need_drn) nets.drn[p] = nnet::load_network(expand_path(drn_pat, p));
  }
  return nets;
}

int cmd_gen(const RunConfig& cfg, const Options& o) {
  const std::size_t count = o.count > 0 ? o.count : cfg.gen_count;
  if (o.kind == "curve") {
    if (o.theta.size() != 3) throw UsageError("gen curve needs --theta e0,alpha,tau");
    const kvfd::ParameterVector p{o.theta[0], o.theta[1], o.theta[2]};
    std::mt19937_64 rng(cfg.seed);
    kvfd::write_curve_csv(o.out, add_noise(kvfd::sample_curve(p, cfg.protocol, cfg.m), cfg.noise, rng));
    return 0;
  }
  GenReport report;
  Dataset ds;
  if (o.kind == "din") {
    DinGenConfig g;
    g.count = count;
    g.box = cfg.box;
    g.proto = cfg.protocol;
    g.m = cfg.m;
    g.noise = cfg.noise;
    g.threads = cfg.threads;
    ds = gen_din_dataset(g, cfg.seed, &report);
  } else {
    DrnGenConfig g;
    g.count = count;
    g.box = cfg.box;
    g.proto = cfg.protocol;
    g.m = cfg.m;
    g.step_frac = cfg.gen_step_frac;
    g.reward = cfg.reward;
    g.noise = cfg.noise;
    g.threads = cfg.threads;
    ds = gen_drn_dataset(g, cfg.seed, &report);
  }
  write_dataset(o.out, ds);
  std::printf("records = %zu\ndegenerate = %zu\n", ds.size(), report.degenerate);
  return 0;
}

int cmd_split(const RunConfig& cfg, const Options& o) {
  const auto parts = split_dataset(read_dataset(o.in), cfg.split, cfg.seed);
  const char* names[] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    write_dataset(o.out + "." + names[i] + ".ds", parts[i]);
    std::printf("%s = %zu\n", names[i], parts[i].size());
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const Options& o) {
  const bool din = o.kind == "din";
  const auto train_set = read_dataset(o.train);
  const auto val_set = read_dataset(o.val);
  const auto want = din ? DatasetKind::Din : DatasetKind::Drn;
  if (train_set.kind() != want || val_set.kind() != want) {
    throw DomainError(std::string("train ") + o.kind + ": dataset kind does not match");
  }
  nnet::NetworkSpec spec = din ? nnet::din_spec(train_set.input_len()) : nnet::drn_spec(train_set.input_len());
  spec.lstm_layers = din ? cfg.din_layers : cfg.drn_layers;
  nnet::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 1);
  tc.loss.kind = din ? nnet::LossKind::Initial : nnet::LossKind::Reward;
  tc.loss.curve_points = train_set.input_len();
  const auto init = o.init.empty() ? nnet::init_network(spec, derive_seed(cfg.seed, 0)) : nnet::load_network(o.init);
  const auto result = nnet::train(init, train_set, val_set, tc);
  nnet::save_network(o.out, result.net);
  if (!o.history.empty()) nnet::write_loss_history(o.history, result.history);
  const auto& best = result.history.at(result.best_epoch);
  std::printf("best_epoch = %zu\nval_loss = %.17g\n", result.best_epoch, best.val_loss);
  return 0;
}

int cmd_fit(RunConfig cfg, const Options& o) {
  if (!o.trajectory.empty()) cfg.dqmp.record_trajectory = true;
  const auto curve = kvfd::read_curve_csv(o.curve, cfg.protocol);
  const auto nets = load_networks(cfg, {o.kind}, {cfg.protocol.protocol}, o.din, o.drn);
  const auto fitter = make_fitter(o.kind, cfg, nets);
  const auto r = fitter.fit(curve, cfg.seed);
  write_fit_report(o.out, r);
  if (!o.trajectory.empty()) write_trajectory_csv(o.trajectory, r.trajectory);
  std::fputs(fit_report(r).c_str(), stdout);
  return 0;
}

int cmd_phantom(const RunConfig& cfg, const Options& o) {
  const auto nets = load_networks(cfg, cfg.phantom_methods, {cfg.protocol.protocol}, o.din, o.drn);
  std::vector<Fitter> fitters;
  for (const auto& m : cfg.phantom_methods) fitters.push_back(make_fitter(m, cfg, nets));
  const auto result = run_phantom(cfg.phantom, fitters, cfg.seed, cfg.threads);
  write_phantom_outputs(o.out, result);
  write_text((std::filesystem::path(o.out) / "config.txt").string(), format_config(cfg));
  std::vector<MethodSummary> rows;
  for (const auto& m : result.methods) rows.push_back(m.summary);
  std::fputs(summary_table(rows).c_str(), stdout);
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const Options& o) {
  const auto nets = load_networks(cfg, {cfg.sweep_method}, cfg.sweep_protocols, o.din, o.drn);
  const auto fitter = make_fitter(cfg.sweep_method, cfg, nets);
  const auto cells = run_noise_sweep(cfg.sweep, fitter, cfg.seed, cfg.threads);
  std::filesystem::create_directories(o.out);
  const std::filesystem::path dir(o.out);
  write_text((dir / "sweep.txt").string(), sweep_table(cells));
  write_text((dir / "sweep.csv").string(), sweep_csv(cells));
  write_text((dir / "config.txt").string(), format_config(cfg));
  std::fputs(sweep_table(cells).c_str(), stdout);
  return 0;
}

int cmd_specfn(const Options& o) {
  const auto& a = o.args;
  auto need = [&](std::size_t n) {
    if (a.size() != n) throw UsageError("specfn eval " + o.fn + " takes " + std::to_string(n) + " arguments");
  };
  double v = 0.0;
  if (o.fn == "gamma") {
    need(1);
    v = specfn::gamma(a[0]);
  } else if (o.fn == "log_gamma") {
    need(1);
    v = specfn::log_gamma(a[0]);
  } else if (o.fn == "reciprocal_gamma") {
    need(1);
    v = specfn::reciprocal_gamma(a[0]);
  } else if (o.fn == "beta") {
    need(2);
    v = specfn::beta_complete(a[0], a[1]);
  } else if (o.fn == "beta_inc") {
    need(3);
    v = specfn::beta_incomplete(a[0], a[1], a[2]);
  } else if (o.fn == "ml") {
    need(3);
    v = specfn::mittag_leffler(a[0], a[1], a[2]);
  } else {
    throw UsageError("unknown function '" + o.fn + "' (gamma, log_gamma, reciprocal_gamma, beta, beta_inc, ml)");
  }
  std::printf("%.17g\n", v);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Q-learning estimation of KVFD viscoelastic parameters", "dqmp"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  auto* seed_opt = app.add_option("--seed", o.seed, "master seed for all randomness");
  auto* threads_opt = app.add_option("--threads", o.threads, "worker threads; 1 is bit-reproducible");
  app.add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen", "generate a training dataset, or one curve");
  gen->add_option("kind", o.kind, "din | drn | curve")->required()->check(CLI::IsMember({"din", "drn", "curve"}));
  gen->add_option("--out", o.out, "dataset file (curve: CSV)")->required();
  gen->add_option("--count", o.count, "records (overrides gen.count)")->check(CLI::PositiveNumber);
  gen->add_option("--theta", o.theta, "curve parameters e0,alpha,tau")->delimiter(',')->expected(3);

  auto* split = app.add_subcommand("split", "split a dataset into train/val/test");
  split->add_option("--in", o.in, "dataset file")->required()->check(CLI::ExistingFile);
  split->add_option("--out-prefix", o.out, "writes <prefix>.{train,val,test}.ds")->required();

  auto* train = app.add_subcommand("train", "train a network");
  train->add_option("kind", o.kind, "din | drn")->required()->check(CLI::IsMember({"din", "drn"}));
  train->add_option("--train", o.train, "training dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--val", o.val, "validation dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "network file")->required();
  train->add_option("--history", o.history, "per-epoch loss CSV");
  train->add_option("--init", o.init, "start from this network")->check(CLI::ExistingFile);

  auto* fit = app.add_subcommand("fit", "fit one curve");
  fit->add_option("method", o.kind, "dqmp | ql | lsm")->required()->check(CLI::IsMember({"dqmp", "ql", "lsm"}));
  fit->add_option("--curve", o.curve, "curve CSV (t,y)")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", o.out, "fit report")->required();
  fit->add_option("--din", o.din, "initial-guess network")->check(CLI::ExistingFile);
  fit->add_option("--drn", o.drn, "reward network")->check(CLI::ExistingFile);
  fit->add_option("--trajectory", o.trajectory, "per-iteration CSV");

  auto* phantom = app.add_subcommand("phantom", "phantom imaging comparison");
  phantom->add_option("--out", o.out, "output directory")->required();
  phantom->add_option("--din", o.din, "initial-guess network");
  phantom->add_option("--drn", o.drn, "reward network");

  auto* sweep = app.add_subcommand("noise-sweep", "noise robustness sweep");
  sweep->add_option("--out", o.out, "output directory")->required();
  sweep->add_option("--din", o.din, "initial-guess network; {protocol} expands");
  sweep->add_option("--drn", o.drn, "reward network; {protocol} expands");

  auto* specfn_cmd = app.add_subcommand("specfn", "special-function debugging");
  specfn_cmd->group("");
  specfn_cmd->require_subcommand(1);
  auto* eval = specfn_cmd->add_subcommand("eval", "evaluate one function");
  eval->add_option("fn", o.fn, "gamma | log_gamma | reciprocal_gamma | beta | beta_inc | ml")->required();
  eval->add_option("args", o.args, "arguments")->required();

  auto* selftest = app.add_subcommand("selftest", "built-in numerical checks");

  auto* config_cmd = app.add_subcommand("config", "print every key with its default, or the effective --config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  RunConfig cfg;
  try {
    if (!o.config.empty()) cfg = load_config(o.config);
    if (seed_opt->count() > 0) cfg.seed = o.seed;
    if (threads_opt->count() > 0) cfg.threads = o.threads;
    cfg.propagate();
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (config_cmd->parsed()) {
      std::fputs(o.config.empty() ? config_reference().c_str() : format_config(cfg).c_str(), stdout);
      return 0;
    }
    if (selftest->parsed()) return tool::run_selftest(stdout) == 0 ? 0 : 2;
    if (eval->parsed()) return cmd_specfn(o);
    if (gen->parsed()) return cmd_gen(cfg, o);
    if (split->parsed()) return cmd_split(cfg, o);
    if (train->parsed()) return cmd_train(cfg, o);
    if (fit->parsed()) return cmd_fit(cfg, o);
    if (phantom->parsed()) return cmd_phantom(cfg, o);
    if (sweep->parsed()) return cmd_sweep(cfg, o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
