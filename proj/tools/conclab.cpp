// conclab: run concentration experiments from configs or flags.
//
// Every experiment flag is sugar for a key under "params"; --dump-config
// prints the config a flag set stands for, and running that config gives
// the same report.

#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "conclab/errors.hpp"
#include "conclab/experiment.hpp"

using nlohmann::json;
using namespace conclab;

namespace {

enum class FlagType { integer, real, text, boolean, int_list, real_list };

struct FlagSpec {
  const char* flag;
  const char* path;  // dotted key under params
  FlagType type;
  const char* help;
};

struct CommandSpec {
  const char* name;
  ExperimentKind kind;
  const char* help;
  std::vector<FlagSpec> flags;
};

const std::vector<CommandSpec>& command_specs() {
  using T = FlagType;
  static const std::vector<CommandSpec> specs{
      {"tail", ExperimentKind::tail, "empirical tails, exponent fits and envelope checks",
       {{"--model", "model.kind", T::text, "vector family"},
        {"--dim", "model.dim", T::integer, "dimension"},
        {"--q", "model.q", T::real, "q of the lq ball"},
        {"--dims", "dims", T::int_list, "several dimensions"},
        {"--n", "N", T::integer, "number of draws"},
        {"--unit-linear", "unit_linear", T::integer, "random unit linear observations"},
        {"--coordinate", "coordinates", T::int_list, "coordinate observations"},
        {"--norm", "norm", T::boolean, "observe the euclidean norm"},
        {"--center", "center", T::text, "median, mean or independent_copy"},
        {"--delta", "delta", T::real, "DKW confidence level"}}},
      {"diameter", ExperimentKind::diameter, "observable diameters",
       {{"--model", "model.kind", T::text, "vector family"},
        {"--dim", "model.dim", T::integer, "dimension"},
        {"--dims", "dims", T::int_list, "several dimensions"},
        {"--n", "N", T::integer, "number of draws"},
        {"--unit-linear", "unit_linear", T::integer, "random unit linear observations"}}},
      {"product", ExperimentKind::product, "entrywise products and sample covariances",
       {{"--mode", "mode", T::text, "hadamard or covariance"},
        {"--m", "m_values", T::int_list, "numbers of factors"},
        {"--n", "N", T::integer, "number of draws"},
        {"--dims", "dims", T::int_list, "covariance sizes n"},
        {"--trials", "trials", T::integer, "covariance trials"}}},
      {"hanson-wright", ExperimentKind::hanson_wright, "bilinear forms x^T A y",
       {{"--p", "p", T::integer, "dimension"},
        {"--n", "N", T::integer, "number of draws"},
        {"--matrices", "matrices", T::integer, "random matrices A"},
        {"--chunk", "chunk", T::integer, "draws per block"}}},
      {"xdy", ExperimentKind::xdy, "X D Y^T functionals",
       {{"--mode", "mode", T::text, "action or mean"},
        {"--dims", "dims", T::int_list, "sizes n"},
        {"--trials", "trials", T::integer, "trials"},
        {"--unit-linear", "unit_linear", T::integer, "random unit linear observations"}}},
      {"norm-degree", ExperimentKind::norm_degree, "E||Z - EZ|| against the norm degree",
       {{"--trials", "trials", T::integer, "trials per dimension"},
        {"--gamma-trials", "gamma_trials", T::integer, "trials for the gaussian norm check"}}},
      {"resolvent", ExperimentKind::resolvent, "resolvent deterministic equivalents and leave-one-out identities",
       {{"--mode", "mode", T::text, "deterministic_equivalent or schur"},
        {"--isotropic", "isotropic", T::boolean, "gaussian columns with X = Y"},
        {"--p", "p", T::integer, "rows"},
        {"--n", "n", T::integer, "columns"},
        {"--d", "d", T::real, "constant diagonal"},
        {"--trials", "trials", T::integer, "Monte Carlo trials"},
        {"--epsilon", "epsilon", T::real, "admissibility margin"},
        {"--scaling-n", "scaling_n", T::int_list, "sizes for the log n scaling"},
        {"--draws", "draws", T::integer, "draws for the identities"}}},
      {"robust", ExperimentKind::robust, "robust regression fixed point",
       {{"--p", "p", T::integer, "dimension"},
        {"--n", "n_values", T::int_list, "sample sizes"},
        {"--epsilon", "epsilon", T::real, "contraction margin"}}},
      {"moments", ExperimentKind::moments, "centered moments against moment bounds",
       {{"--n", "N", T::integer, "number of draws"}, {"--orders", "orders", T::real_list, "moment orders"}}},
  };
  return specs;
}

struct CommandState {
  const CommandSpec* spec = nullptr;
  CLI::App* app = nullptr;
  std::vector<std::vector<std::string>> values;  // one slot per flag
  std::vector<bool> switches;
  std::string config;
  std::vector<std::string> params;
  std::vector<std::string> tolerances;
  std::string reference;
  bool dump = false;
};

json& at_path(json& root, const std::string& dotted) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty()) throw ConfigError("empty key in '" + dotted + "'");
    if (!node->is_object()) *node = json::object();
    node = &(*node)[key];
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

double to_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "' for " + what);
  }
}

long long to_integer(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer '" + s + "' for " + what);
  }
}

ExperimentConfig build_config(const CommandState& st) {
  json cfg = json::object();
  if (!st.config.empty()) {
    cfg = ExperimentConfig::load(st.config).to_json();
    if (cfg.at("experiment") != to_string(st.spec->kind)) {
      throw ConfigError("config " + st.config + " is not a " + std::string(to_string(st.spec->kind)) + " experiment");
    }
  }
  cfg["experiment"] = to_string(st.spec->kind);
  json& params = cfg["params"];
  if (!params.is_object()) params = json::object();
  for (std::size_t i = 0; i < st.spec->flags.size(); ++i) {
    const FlagSpec& f = st.spec->flags[i];
    if (f.type == FlagType::boolean) {
      if (st.switches[i]) at_path(params, f.path) = true;
      continue;
    }
    const auto& v = st.values[i];
    if (v.empty()) continue;
    json& slot = at_path(params, f.path);
    switch (f.type) {
      case FlagType::integer: slot = to_integer(v.back(), f.flag); break;
      case FlagType::real: slot = to_real(v.back(), f.flag); break;
      case FlagType::text: slot = v.back(); break;
      case FlagType::int_list:
        slot = json::array();
        for (const auto& s : v) slot.push_back(to_integer(s, f.flag));
        break;
      case FlagType::real_list:
        slot = json::array();
        for (const auto& s : v) slot.push_back(to_real(s, f.flag));
        break;
      case FlagType::boolean: break;
    }
  }
  for (const auto& kv : st.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects key=json, got '" + kv + "'");
    try {
      at_path(params, kv.substr(0, eq)) = json::parse(kv.substr(eq + 1));
    } catch (const json::parse_error&) {
      at_path(params, kv.substr(0, eq)) = kv.substr(eq + 1);  // bare strings
    }
  }
  for (const auto& t : st.tolerances) {
    const auto eq = t.find('=');
    const auto colon = t.find(':', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || colon == std::string::npos) {
      throw ConfigError("--tol expects metric=lo:hi, got '" + t + "'");
    }
    json tol = json::object();
    const std::string lo = t.substr(eq + 1, colon - eq - 1), hi = t.substr(colon + 1);
    if (!lo.empty()) tol["min"] = to_real(lo, "--tol");
    if (!hi.empty()) tol["max"] = to_real(hi, "--tol");
    cfg["tolerances"][t.substr(0, eq)] = tol;
  }
  if (!st.reference.empty()) cfg["reference"] = st.reference;
  return ExperimentConfig::from_json(cfg);
}

void add_commands(CLI::App& parent, std::vector<std::unique_ptr<CommandState>>& states) {
  for (const auto& spec : command_specs()) {
    auto st = std::make_unique<CommandState>();
    st->spec = &spec;
    st->app = parent.add_subcommand(spec.name, spec.help);
    st->values.resize(spec.flags.size());
    st->switches.resize(spec.flags.size());
    for (std::size_t i = 0; i < spec.flags.size(); ++i) {
      const FlagSpec& f = spec.flags[i];
      if (f.type == FlagType::boolean) {
        // vector<bool> has no addressable elements; route through a callback
        st->app->add_flag_callback(f.flag, [s = st.get(), i] { s->switches[i] = true; }, f.help);
      } else if (f.type == FlagType::int_list || f.type == FlagType::real_list) {
        st->app->add_option(f.flag, st->values[i], f.help)->expected(1, -1);
      } else {
        st->app->add_option(f.flag, st->values[i], f.help)->expected(1);
      }
    }
    st->app->add_option("--config", st->config, "base config file")->check(CLI::ExistingFile);
    st->app->add_option("--param", st->params, "extra params entry key=json (dotted keys)");
    st->app->add_option("--tol", st->tolerances, "tolerance metric=lo:hi (either side may be empty)");
    st->app->add_option("--reference", st->reference, "free text carried into reports");
    st->app->add_flag("--dump-config", st->dump, "print the config and exit");
    states.push_back(std::move(st));
  }
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string format = "json";
};

int emit(const ExperimentReport& rep, const Globals& g, const std::string& stem) {
  const std::string out = !g.out.empty() ? g.out : rep.config.output;
  if (out.empty()) {
    std::cout << (g.format == "md" ? rep.to_markdown() : rep.to_json().dump(2) + "\n");
  } else {
    write_report(rep, out, stem, g.format);
    std::cout << rep.status() << " " << (std::filesystem::path(out) / (stem + ".json")).string() << "\n";
  }
  if (!rep.error.empty()) std::cerr << "error: " << rep.error << "\n";
  for (const auto& c : rep.checks) {
    if (!c.pass) std::cerr << "check failed: " << c.metric << " = " << c.value << "\n";
  }
  return rep.exit_code;
}

int run_config(ExperimentConfig cfg, bool dump, const Globals& g, const std::string& stem) {
  if (g.seed) cfg.seed = *g.seed;
  if (dump) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return kExitPass;
  }
  return emit(run_experiment(cfg), g, stem);
}

void apply_threads(const Globals& g) {
  int k = 0;
  if (g.threads) {
    k = *g.threads;
  } else if (const char* env = std::getenv("CONC_LAB_THREADS")) {
    try {
      k = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CONC_LAB_THREADS is not an integer: ") + env);
    }
  }
  if (k < 0) throw ConfigError("thread count must be positive");
  if (k > 0) omp_set_num_threads(k);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conclab: concentration of measure experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  int threads = 0;
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (default: CONC_LAB_THREADS or all cores)")
                          ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "report directory");
  app.add_option("--format", g.format, "report format")->check(CLI::IsMember({"json", "csv", "md"}));

  std::vector<std::unique_ptr<CommandState>> states;
  add_commands(app, states);

  CLI::App* run = app.add_subcommand("run", "run a config file, or an experiment given by flags");
  std::string run_config_path;
  run->add_option("config_file", run_config_path, "config file")->check(CLI::ExistingFile);
  add_commands(*run, states);

  CLI::App* reproduce = app.add_subcommand("reproduce", "run every config of a suite directory");
  std::string suite;
  reproduce->add_option("suite", suite, "suite directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (*seed_opt) g.seed = seed;
  if (*threads_opt) g.threads = threads;

  try {
    apply_threads(g);
    if (*reproduce) {
      const std::string out = g.out.empty() ? "reports" : g.out;
      const SuiteSummary s = reproduce_all(suite, out, g.format, g.seed);
      std::cout << s.to_markdown();
      return s.exit_code;
    }
    for (const auto& st : states) {
      if (*st->app) return run_config(build_config(*st), st->dump, g, st->spec->name);
    }
    if (*run) {
      if (run_config_path.empty()) {
        std::cerr << "run: give a config file or an experiment subcommand\n";
        return kExitConfig;
      }
      return run_config(ExperimentConfig::load(run_config_path), false, g,
                        std::filesystem::path(run_config_path).stem().string());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
