#include "dgm/config.hpp"

#include "dgm/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dgm {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Line of `key` inside `[section]`, or of the section header when key is empty.
int find_line(const std::string& text, const std::string& section, const std::string& key) {
  std::istringstream in(text);
  std::string line, current;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      current = trim(t.substr(1, t.size() - 2));
      if (current == section && key.empty()) return number;
      continue;
    }
    const auto eq = t.find('=');
    if (current == section && eq != std::string::npos && trim(t.substr(0, eq)) == key) return number;
  }
  return 0;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& v) {
  long long out = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_double(item));
  }
  return out;
}

template <class Enum>
Enum parse_choice(const std::string& v, std::initializer_list<std::pair<const char*, Enum>> choices) {
  const auto s = trim(v);
  std::string names;
  for (const auto& [name, value] : choices) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError("expected one of " + names + ", got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Table = std::map<std::string, std::map<std::string, Setter>>;

const Table& setters() {
  static const Table table = [] {
    Table t;
    auto& e = t["experiment"];
    e["problem"] = [](ExperimentConfig& c, const std::string& v) { c.problem = trim(v); };
    e["seed"] = [](ExperimentConfig& c, const std::string& v) {
      const long long s = parse_int(v);
      if (s < 0) throw ConfigError("seed must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
      c.train.seed = c.seed;
    };
    e["name"] = [](ExperimentConfig& c, const std::string& v) { c.name = trim(v); };
    e["dump_batches"] = [](ExperimentConfig& c, const std::string& v) { c.dump_batches = trim(v); };

    auto& p = t["problem"];
    p["agents"] = [](ExperimentConfig& c, const std::string& v) { c.agents = static_cast<int>(parse_int(v)); };
    p["horizon"] = [](ExperimentConfig& c, const std::string& v) { c.horizon = parse_double(v); };
    p["lower"] = [](ExperimentConfig& c, const std::string& v) { c.box.lower = parse_double(v); };
    p["upper"] = [](ExperimentConfig& c, const std::string& v) { c.box.upper = parse_double(v); };
    p["sigma"] = [](ExperimentConfig& c, const std::string& v) {
      c.costs.sigma = parse_double(v);
      c.lqr_sigma = c.costs.sigma;
    };
    p["gamma"] = [](ExperimentConfig& c, const std::string& v) { c.costs.gamma = parse_double(v); };
    p["lambda"] = [](ExperimentConfig& c, const std::string& v) { c.costs.lambda = parse_double(v); };
    p["beta"] = [](ExperimentConfig& c, const std::string& v) { c.beta = parse_double(v); };
    p["kappa"] = [](ExperimentConfig& c, const std::string& v) { c.kappa = parse_double(v); };
    p["target"] = [](ExperimentConfig& c, const std::string& v) { c.target = parse_double(v); };
    p["target_atoms"] = [](ExperimentConfig& c, const std::string& v) { c.target_atoms = parse_list(v); };

    auto& n = t["network"];
    n["kind"] = [](ExperimentConfig& c, const std::string& v) {
      c.arch_kind = parse_choice<ArchKind>(v, {{"residual", ArchKind::residual}, {"mlp", ArchKind::mlp}});
    };
    n["width"] = [](ExperimentConfig& c, const std::string& v) { c.width = static_cast<int>(parse_int(v)); };
    n["blocks"] = [](ExperimentConfig& c, const std::string& v) { c.blocks = static_cast<int>(parse_int(v)); };
    n["head_init_scale"] = [](ExperimentConfig& c, const std::string& v) { c.train.head_init_scale = parse_double(v); };

    auto& r = t["train"];
    r["iterations"] = [](ExperimentConfig& c, const std::string& v) { c.train.iterations = static_cast<int>(parse_int(v)); };
    r["lr"] = [](ExperimentConfig& c, const std::string& v) { c.train.lr = parse_double(v); };
    r["batch_domain"] = [](ExperimentConfig& c, const std::string& v) { c.train.batch_domain = static_cast<int>(parse_int(v)); };
    r["batch_terminal"] = [](ExperimentConfig& c, const std::string& v) { c.train.batch_terminal = static_cast<int>(parse_int(v)); };
    r["w1"] = [](ExperimentConfig& c, const std::string& v) { c.train.weights.w1 = parse_double(v); };
    r["w2"] = [](ExperimentConfig& c, const std::string& v) { c.train.weights.w2 = parse_double(v); };
    r["w3"] = [](ExperimentConfig& c, const std::string& v) { c.train.weights.w3 = parse_double(v); };
    r["n_scaling"] = [](ExperimentConfig& c, const std::string& v) { c.train.weights.n_scaling = parse_bool(v); };
    r["time_weighting"] = [](ExperimentConfig& c, const std::string& v) { c.train.weights.time_weighting = parse_bool(v); };
    r["chunk"] = [](ExperimentConfig& c, const std::string& v) { c.train.weights.chunk = parse_int(v); };
    r["sampler"] = [](ExperimentConfig& c, const std::string& v) {
      c.train.sampler = parse_choice<DomainSampler>(v, {{"uniform", DomainSampler::uniform},
                                                        {"clustered", DomainSampler::clustered},
                                                        {"relaxation", DomainSampler::relaxation}});
    };
    r["relax_rate"] = [](ExperimentConfig& c, const std::string& v) { c.train.relax_rate = parse_double(v); };
    r["rollout_steps"] = [](ExperimentConfig& c, const std::string& v) { c.train.rollout_steps = static_cast<int>(parse_int(v)); };
    r["plateau_decay"] = [](ExperimentConfig& c, const std::string& v) { c.train.plateau_decay = parse_double(v); };
    r["plateau_window"] = [](ExperimentConfig& c, const std::string& v) { c.train.plateau_window = static_cast<int>(parse_int(v)); };
    r["plateau_tolerance"] = [](ExperimentConfig& c, const std::string& v) { c.train.plateau_tolerance = parse_double(v); };
    r["adam_beta1"] = [](ExperimentConfig& c, const std::string& v) { c.train.adam_beta1 = parse_double(v); };
    r["adam_beta2"] = [](ExperimentConfig& c, const std::string& v) { c.train.adam_beta2 = parse_double(v); };
    r["adam_eps"] = [](ExperimentConfig& c, const std::string& v) { c.train.adam_eps = parse_double(v); };
    r["monitor_every"] = [](ExperimentConfig& c, const std::string& v) { c.train.monitor_every = static_cast<int>(parse_int(v)); };
    r["monitor_samples"] = [](ExperimentConfig& c, const std::string& v) { c.train.monitor_samples = static_cast<int>(parse_int(v)); };
    r["divergence_threshold"] = [](ExperimentConfig& c, const std::string& v) { c.train.divergence_threshold = parse_double(v); };

    // Same keys for both sampler laws.
    auto law = [](InitialDistribution ExperimentConfig::*which) {
      std::map<std::string, Setter> s;
      s["kind"] = [which](ExperimentConfig& c, const std::string& v) {
        (c.*which).kind = parse_choice<InitialDistribution::Kind>(
            v, {{"uniform", InitialDistribution::Kind::uniform},
                {"clustered", InitialDistribution::Kind::clustered}});
      };
      s["sigma_tn"] = [which](ExperimentConfig& c, const std::string& v) { (c.*which).cluster.sigma_tn = parse_double(v); };
      s["epsilon"] = [which](ExperimentConfig& c, const std::string& v) {
        if (trim(v) == "random") {
          (c.*which).cluster.epsilon.reset();
        } else {
          (c.*which).cluster.epsilon = parse_double(v);
        }
      };
      s["symmetric_offsets"] = [which](ExperimentConfig& c, const std::string& v) {
        (c.*which).cluster.symmetric_offsets = parse_bool(v);
      };
      return s;
    };
    t["initial"] = law(&ExperimentConfig::initial);
    t["terminal"] = law(&ExperimentConfig::terminal);

    auto& v = t["evaluate"];
    v["seeds"] = [](ExperimentConfig& c, const std::string& s) { c.eval.seeds = static_cast<int>(parse_int(s)); };
    v["steps"] = [](ExperimentConfig& c, const std::string& s) { c.eval.steps = static_cast<int>(parse_int(s)); };
    v["alphas"] = [](ExperimentConfig& c, const std::string& s) { c.eval.alphas = parse_list(s); };
    v["bound_samples"] = [](ExperimentConfig& c, const std::string& s) { c.eval.bound_samples = static_cast<int>(parse_int(s)); };
    v["bound_resamples"] = [](ExperimentConfig& c, const std::string& s) { c.eval.bound_resamples = static_cast<int>(parse_int(s)); };
    v["riccati_steps"] = [](ExperimentConfig& c, const std::string& s) { c.eval.riccati_steps = static_cast<int>(parse_int(s)); };
    return t;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (problem != "lqr" && problem != "sznajd" && problem != "hk" && problem != "hk_measure") {
    throw ConfigError("unknown problem '" + problem + "' (expected lqr, sznajd, hk or hk_measure)");
  }
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(box.lower < box.upper)) throw ConfigError("lower must be below upper");
  if (problem != "lqr" && agents < 1) throw ConfigError("agents must be >= 1");
  if (problem == "hk_measure" && static_cast<int>(target_atoms.size()) != agents) {
    throw ConfigError("target_atoms needs one atom per agent (" + std::to_string(agents) + ")");
  }
  if (problem != "hk_measure" && !target_atoms.empty()) {
    throw ConfigError("target_atoms is only used by hk_measure");
  }
  if (eval.seeds < 1 || eval.steps < 1 || eval.bound_samples < 2 || eval.bound_resamples < 1) {
    throw ConfigError("evaluate settings must be positive");
  }
  if (problem == "lqr" && eval.steps % 4 != 0) {
    throw ConfigError("evaluate steps must be a multiple of 4 for the bound check at T/4, T/2, 3T/4");
  }
  initial.cluster.validate();
  terminal.cluster.validate();
  train.validate();
  try {
    arch().validate();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
}

std::unique_ptr<ControlProblem> ExperimentConfig::make_problem() const {
  validate();
  try {
    if (problem == "lqr") {
      LqrConstants c = LqrConstants::defaults();
      c.sigma = lqr_sigma;
      return std::make_unique<LqrProblem>(c, horizon, box);
    }
    const Target t = problem == "hk_measure" ? Target::measure(target_atoms)
                                             : Target::uniform_point(agents, target);
    if (problem == "sznajd") {
      return std::make_unique<SznajdProblem>(agents, horizon, box, costs, t, SznajdConstants{beta});
    }
    return std::make_unique<HkProblem>(agents, horizon, box, costs, t, HkConstants{beta, kappa});
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

NetArch ExperimentConfig::arch() const { return NetArch{arch_kind, state_dim() + 1, width, blocks}; }

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message(), static_cast<int>(e.line()));
  }
  ExperimentConfig cfg;
  bool terminal_set = false;
  const Table& table = setters();
  // Two passes so that [terminal] defaults to the final [initial] law.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& [section, body] : tree) {
      const bool is_terminal = section == "terminal";
      if ((pass == 0) == is_terminal) continue;
      const auto known = table.find(section);
      if (known == table.end()) {
        throw ConfigError(source + ": unknown section [" + section + "]", find_line(text, section, ""));
      }
      if (!body.data().empty()) {
        throw ConfigError(source + ": key '" + section + "' outside any section", find_line(text, "", section));
      }
      if (is_terminal && !terminal_set) {
        cfg.terminal = cfg.initial;
        terminal_set = true;
      }
      for (const auto& [key, value] : body) {
        const int line = find_line(text, section, key);
        const auto setter = known->second.find(key);
        if (setter == known->second.end()) {
          throw ConfigError(source + ": unknown key '" + key + "' in [" + section + "]", line);
        }
        try {
          setter->second(cfg, value.data());
        } catch (const ConfigError& e) {
          throw ConfigError(source + ": " + section + "." + key + ": " + e.what(), line);
        }
      }
    }
    if (pass == 0 && !terminal_set) cfg.terminal = cfg.initial;
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig cfg = parse_config(text.str(), path.string());
  if (cfg.name.empty()) cfg.name = path.stem().string();
  return cfg;
}

}  // namespace dgm
