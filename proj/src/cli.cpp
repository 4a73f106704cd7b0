#include "pdatt/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "pdatt/errors.hpp"
#include "pdatt/estimators.hpp"
#include "pdatt/inference.hpp"
#include "pdatt/simulation.hpp"

namespace pdatt {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    auto b = cur.find_first_not_of(" \t");
    auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

enum class Kind { Int, Float, Bool, Str, StrList, FloatList };

struct Key {
  std::string name;  // config key; the flag is --name with '_' -> '-'
  Kind kind;
  json def;  // null means "not set"
  std::string help;
};

std::string flag_of(const std::string& key) {
  std::string f = key;
  for (auto& ch : f)
    if (ch == '_') ch = '-';
  return "--" + f;
}

// keys a manifest carries that are not run settings
const std::set<std::string> kMetaKeys{"command", "version", "wall_time_seconds", "outputs", "config"};

std::vector<Key> common_keys() {
  return {{"threads", Kind::Int, 0, "worker threads (0 = available parallelism)"},
          {"format", Kind::StrList, json::array({"csv"}), "output formats: csv,json"},
          {"output_dir", Kind::Str, "pdatt_out", "output directory (env PDATT_OUTPUT_DIR overrides config)"},
          {"seed", Kind::Int, 42, "random seed"},
          {"level", Kind::Float, 0.95, "confidence level"}};
}

std::vector<Key> schema_keys() {
  return {{"input", Kind::Str, nullptr, "input csv"},
          {"delta_y", Kind::Str, "", "outcome change column"},
          {"y0", Kind::Str, "", "baseline outcome column"},
          {"y2", Kind::Str, "", "final outcome column"},
          {"s", Kind::Str, "", "observation indicator column"},
          {"d1", Kind::Str, "d1", "middle-period treatment column"},
          {"d2", Kind::Str, "d2", "final-period treatment column"},
          {"covariates", Kind::StrList, json::array(), "covariate columns (default: all unmapped columns)"}};
}

std::vector<Key> dgp_keys() {
  return {{"n", Kind::Int, 10000, "sample size"},
          {"c", Kind::Float, 0.0, "missingness intercept shift"},
          {"eta_p", Kind::Float, nullptr, "propensity correctness weight"},
          {"eta_m", Kind::Float, nullptr, "missingness correctness weight"},
          {"eta_o", Kind::Float, nullptr, "outcome correctness weight"},
          {"truth_draws", Kind::Int, static_cast<long>(kTruthDraws), "draws for the true PDATT"}};
}

std::vector<Key> keys_for(const std::string& cmd) {
  std::vector<Key> k = common_keys();
  auto add = [&](std::vector<Key> more) { k.insert(k.end(), more.begin(), more.end()); };
  if (cmd == "estimate") {
    add(schema_keys());
    add({{"estimator", Kind::StrList, json::array({"R", "DR"}), "estimator tags"},
         {"pdatt", Kind::StrList, json::array({"11", "10", "01"}), "target paths"}});
  } else if (cmd == "bounds") {
    add(schema_keys());
    add({{"y_min", Kind::Float, nullptr, "lower bound of the outcome support"}});
  } else if (cmd == "simulate") {
    add(dgp_keys());
    add({{"scenario", Kind::Str, "none", "none, M, P, O, M-P, M-O, P-O, all"},
         {"reps", Kind::Int, 1000, "replications"},
         {"estimator", Kind::StrList, json::array({"R", "DR"}), "estimator tags"},
         {"pdatt", Kind::StrList, json::array({"11", "10", "01"}), "target paths"},
         {"seb", Kind::Bool, false, "also estimate the efficiency bound"}});
  } else if (cmd == "sweep") {
    add(dgp_keys());
    add({{"kind", Kind::Str, "missingness", "missingness or misspecification"},
         {"scenario", Kind::Str, nullptr, "base scenario (default M for missingness, none otherwise)"},
         {"grid", Kind::FloatList, nullptr, "grid of c or eta_m values"},
         {"n_large", Kind::Int, 100000, "sample size per grid point"}});
  } else if (cmd == "power") {
    add(dgp_keys());
    add({{"scenario", Kind::Str, "none", "base scenario"},
         {"reps", Kind::Int, 1000, "replications per grid point"},
         {"estimator", Kind::StrList, json::array({"R", "DR"}), "estimator tags"},
         {"grid", Kind::FloatList, nullptr, "grid of true 11-00 effects"}});
  }
  return k;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("cli", "'" + key + "' expects a number, got '" + s + "'");
  return v;
}

long parse_long(const std::string& key, const std::string& s) {
  double v = parse_double(key, s);
  if (v != std::floor(v)) throw ConfigError("cli", "'" + key + "' expects an integer, got '" + s + "'");
  return static_cast<long>(v);
}

json from_flag(const Key& k, const std::string& s) {
  switch (k.kind) {
    case Kind::Int: return parse_long(k.name, s);
    case Kind::Float: return parse_double(k.name, s);
    case Kind::Bool: return s == "true" || s == "1" || s.empty();
    case Kind::Str: return s;
    case Kind::StrList: return split(s);
    case Kind::FloatList: {
      json a = json::array();
      for (const auto& t : split(s)) a.push_back(parse_double(k.name, t));
      return a;
    }
  }
  return nullptr;
}

// type-checks a config value and normalizes it to the flag representation
json from_config(const Key& k, const json& v) {
  auto bad = [&] { return ConfigError("cli", "config key '" + k.name + "' has the wrong type"); };
  switch (k.kind) {
    case Kind::Int:
      if (!v.is_number()) throw bad();
      if (v.get<double>() != std::floor(v.get<double>())) throw bad();
      return static_cast<long>(v.get<double>());
    case Kind::Float:
      if (!v.is_number()) throw bad();
      return v.get<double>();
    case Kind::Bool:
      if (!v.is_boolean()) throw bad();
      return v;
    case Kind::Str:
      if (!v.is_string()) throw bad();
      return v;
    case Kind::StrList:
      if (v.is_string()) return split(v.get<std::string>());
      if (!v.is_array()) throw bad();
      for (const auto& e : v)
        if (!e.is_string()) throw bad();
      return v;
    case Kind::FloatList:
      if (v.is_string()) return from_flag(k, v.get<std::string>());
      if (!v.is_array()) throw bad();
      for (const auto& e : v)
        if (!e.is_number()) throw bad();
      return v;
  }
  return nullptr;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cli", "cannot open config " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("cli", "config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("cli", "malformed config " + path + ": " + e.what());
  }
}

struct Run {
  std::string command;
  json cfg;  // merged settings, one entry per key
  std::vector<std::string> outputs;

  long i(const std::string& k) const { return cfg.at(k).get<long>(); }
  double f(const std::string& k) const { return cfg.at(k).get<double>(); }
  std::string s(const std::string& k) const { return cfg.at(k).get<std::string>(); }
  bool has(const std::string& k) const { return cfg.contains(k) && !cfg.at(k).is_null(); }
  std::vector<std::string> strs(const std::string& k) const { return cfg.at(k).get<std::vector<std::string>>(); }
  bool wants(const std::string& fmt_name) const {
    for (const auto& f : strs("format"))
      if (f == fmt_name) return true;
    return false;
  }
  fs::path out(const std::string& name) {
    outputs.push_back(name);
    return fs::path(s("output_dir")) / name;
  }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream o(p, std::ios::binary);
  if (!o) throw ConfigError("cli", "cannot write " + p.string());
  o << text;
  if (!o) throw ConfigError("cli", "write failed for " + p.string());
}

void prepare_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cli", "output directory " + dir + " is not writable");
  fs::path probe = fs::path(dir) / ".pdatt_write_probe";
  {
    std::ofstream o(probe);
    if (!o) throw ConfigError("cli", "output directory " + dir + " is not writable");
  }
  fs::remove(probe, ec);
}

// rows of string cells; first row is the header
using Table = std::vector<std::vector<std::string>>;

std::string to_csv(const Table& t) {
  std::string out;
  for (const auto& row : t) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      const auto& cell = row[j];
      if (cell.find_first_of(",\"\n") != std::string::npos) {
        out += '"';
        for (char ch : cell) {
          if (ch == '"') out += '"';
          out += ch;
        }
        out += '"';
      } else {
        out += cell;
      }
    }
    out += '\n';
  }
  return out;
}

void emit(Run& run, const std::string& stem, const Table& t, const json& j) {
  if (run.wants("csv")) write_text(run.out(stem + ".csv"), to_csv(t));
  if (run.wants("json")) write_text(run.out(stem + ".json"), j.dump(2) + "\n");
}

std::vector<EstimandSpec> specs_of(const Run& run) {
  std::vector<EstimandSpec> specs;
  for (const auto& p : run.strs("pdatt")) specs.push_back(spec_from_label(p, run.f("level")));
  if (specs.empty()) throw ConfigError("cli", "no pdatt given");
  return specs;
}

std::vector<Method> methods_of(const Run& run) {
  std::vector<Method> ms;
  for (const auto& t : run.strs("estimator")) ms.push_back(parse_method(t));
  if (ms.empty()) throw ConfigError("cli", "no estimator given");
  return ms;
}

PanelSample load_input(const Run& run) {
  if (!run.has("input")) throw ConfigError("cli", "--input is required");
  std::string path = run.s("input");
  if (!fs::exists(path)) throw ConfigError("cli", "input file " + path + " does not exist");
  CsvSchema schema;
  schema.delta_y = run.s("delta_y");
  schema.y0 = run.s("y0");
  schema.y2 = run.s("y2");
  schema.s = run.s("s");
  schema.d1 = run.s("d1");
  schema.d2 = run.s("d2");
  schema.covariates = run.strs("covariates");
  if (schema.covariates.empty()) {
    // every column the schema does not map
    std::set<std::string> mapped{schema.delta_y, schema.y0, schema.y2, schema.s, schema.d1, schema.d2};
    for (const auto& c : read_csv_header(path))
      if (!mapped.count(c)) schema.covariates.push_back(c);
  }
  return load_csv(path, schema);
}

DgpConfig dgp_of(const Run& run, const std::string& scenario) {
  DgpConfig base;
  base.n = static_cast<int>(run.i("n"));
  base.c = run.f("c");
  base.seed = static_cast<std::uint64_t>(run.i("seed"));
  DgpConfig cfg = scenario_config(scenario, base);
  if (run.has("eta_p")) cfg.eta_p = run.f("eta_p");
  if (run.has("eta_m")) cfg.eta_m = run.f("eta_m");
  if (run.has("eta_o")) cfg.eta_o = run.f("eta_o");
  if (cfg.n < 2) throw ConfigError("cli", "n must be at least 2");
  return cfg;
}

void cmd_estimate(Run& run) {
  PanelSample sample = load_input(run);
  auto specs = specs_of(run);
  auto methods = methods_of(run);
  Table t{{"estimator", "pdatt", "tau_hat", "se", "ci_lower", "ci_upper", "n", "n_eff_1", "n_eff_2", "n_eff_3",
           "n_eff_4", "diagnostics", "notes"}};
  json rows = json::array();
  for (Method m : methods) {
    FitCache cache;
    for (const auto& spec : specs) {
      EstimateResult r = estimate(sample, spec, m, &cache);
      std::string diag, notes;
      for (const auto& [k, v] : r.diagnostics) diag += (diag.empty() ? "" : ";") + k + "=" + fmt(v);
      for (const auto& nt : r.notes) notes += (notes.empty() ? "" : ";") + nt;
      t.push_back({method_tag(m), spec.label(), fmt(r.tau_hat), fmt(r.se), fmt(r.ci.first), fmt(r.ci.second),
                   std::to_string(r.n), std::to_string(r.n_effective[0]), std::to_string(r.n_effective[1]),
                   std::to_string(r.n_effective[2]), std::to_string(r.n_effective[3]), diag, notes});
      rows.push_back({{"estimator", method_tag(m)},
                      {"pdatt", spec.label()},
                      {"tau_hat", r.tau_hat},
                      {"se", r.se},
                      {"ci", {r.ci.first, r.ci.second}},
                      {"n", r.n},
                      {"n_effective", r.n_effective},
                      {"diagnostics", r.diagnostics},
                      {"notes", r.notes}});
    }
  }
  emit(run, "estimate", t, rows);
}

void cmd_bounds(Run& run) {
  if (!run.has("y_min")) throw ConfigError("cli", "--y-min is required");
  PanelSample sample = load_input(run);
  BoundsResult b = partial_id_bounds(sample, run.f("y_min"));
  Table t{{"lower", "upper", "y_min"}, {fmt(b.lower), fmt(b.upper), fmt(b.y_min)}};
  emit(run, "bounds", t, json{{"lower", b.lower}, {"upper", b.upper}, {"y_min", b.y_min}});
}

void cmd_simulate(Run& run) {
  std::string scenario = run.s("scenario");
  DgpConfig cfg = dgp_of(run, scenario);
  McOptions opt;
  opt.methods = methods_of(run);
  opt.specs = specs_of(run);
  opt.seb = run.cfg.at("seb").get<bool>();
  opt.threads = static_cast<int>(run.i("threads"));
  opt.truth_draws = run.i("truth_draws");
  long reps = run.i("reps");
  if (reps < 1) throw ConfigError("cli", "reps must be positive");
  McResult res = run_monte_carlo(cfg, static_cast<int>(reps), opt);

  Table t{{"scenario", "estimator", "pdatt", "truth", "reps_ok", "failures", "mean_estimate", "bias", "sd",
           "mean_se", "coverage", "size", "n_var_hat", "n_var_mc", "seb", "missing_share"}};
  json rows = json::array();
  for (const auto& c : res.cells) {
    std::string seb = opt.seb ? fmt(c.mean_seb) : "NA";
    t.push_back({scenario, method_tag(c.method), c.pdatt, fmt(c.truth), std::to_string(c.reps_ok),
                 std::to_string(c.failures), fmt(c.mean_estimate), fmt(c.bias), fmt(c.sd), fmt(c.mean_se),
                 fmt(c.coverage), fmt(c.size), fmt(c.mean_n_var_hat), fmt(c.n_var_mc), seb,
                 fmt(res.mean_missing_share)});
    json row{{"scenario", scenario},  {"estimator", method_tag(c.method)},
             {"pdatt", c.pdatt},      {"truth", c.truth},
             {"reps_ok", c.reps_ok},  {"failures", c.failures},
             {"mean_estimate", c.mean_estimate}, {"bias", c.bias},
             {"sd", c.sd},            {"mean_se", c.mean_se},
             {"coverage", c.coverage}, {"size", c.size},
             {"n_var_hat", c.mean_n_var_hat}, {"n_var_mc", c.n_var_mc},
             {"missing_share", res.mean_missing_share}};
    row["seb"] = opt.seb ? json(c.mean_seb) : json(nullptr);
    rows.push_back(row);
  }
  emit(run, "simulate", t, rows);
}

std::vector<double> grid_or(const Run& run, double from, double to, double step) {
  if (run.has("grid")) return run.cfg.at("grid").get<std::vector<double>>();
  std::vector<double> g;
  int steps = static_cast<int>(std::lround((to - from) / step));
  for (int i = 0; i <= steps; ++i) g.push_back(from + step * i);
  return g;
}

Table long_header() { return {{"scenario", "estimator", "pdatt", "metric", "x", "y"}}; }

void cmd_sweep(Run& run) {
  std::string kind = run.s("kind");
  if (kind != "missingness" && kind != "misspecification")
    throw ConfigError("cli", "unknown sweep kind '" + kind + "'");
  bool miss = kind == "missingness";
  std::string scenario = run.has("scenario") ? run.s("scenario") : (miss ? "M" : "none");
  DgpConfig cfg = dgp_of(run, scenario);
  long n_large = run.i("n_large");
  if (n_large < 2) throw ConfigError("cli", "n_large must be at least 2");
  auto grid = miss ? grid_or(run, -5.0, 5.0, 0.5) : grid_or(run, 1.0, 0.0, -0.1);
  auto rows = miss ? sweep_missingness(grid, cfg, static_cast<int>(n_large), run.i("truth_draws"))
                   : sweep_misspecification(grid, cfg, static_cast<int>(n_large), run.i("truth_draws"));
  Table t = long_header();
  json out = json::array();
  std::set<double> share_done;
  for (const auto& r : rows) {
    auto push = [&](const std::string& est, const std::string& pd, const std::string& metric, double y) {
      t.push_back({scenario, est, pd, metric, fmt(r.x), fmt(y)});
      out.push_back({{"scenario", scenario}, {"estimator", est}, {"pdatt", pd},
                     {"metric", metric},     {"x", r.x},         {"y", std::isnan(y) ? json(nullptr) : json(y)}});
    };
    double nan = std::nan("");
    push(method_tag(r.method), r.pdatt, "bias", r.failed ? nan : r.bias);
    push(method_tag(r.method), r.pdatt, "estimate", r.failed ? nan : r.estimate);
    push(method_tag(r.method), r.pdatt, "truth", r.truth);
    if (miss && share_done.insert(r.x).second) push("", "", "missing_share", r.missing_share);
  }
  emit(run, "sweep", t, out);
}

void cmd_power(Run& run) {
  std::string scenario = run.s("scenario");
  DgpConfig cfg = dgp_of(run, scenario);
  auto grid = grid_or(run, -0.3, 0.3, 0.05);
  auto methods = methods_of(run);
  long reps = run.i("reps");
  if (reps < 1) throw ConfigError("cli", "reps must be positive");
  PowerCurve pc = power_curve(cfg, grid, static_cast<int>(reps), methods, static_cast<int>(run.i("threads")),
                              run.i("truth_draws"));
  Table t = long_header();
  json out = json::array();
  for (std::size_t m = 0; m < pc.methods.size(); ++m)
    for (std::size_t g = 0; g < pc.grid.size(); ++g) {
      std::string tag = method_tag(pc.methods[m]);
      t.push_back({scenario, tag, "11-00", "rejection", fmt(pc.grid[g]), fmt(pc.rejection[m][g])});
      t.push_back({scenario, tag, "11-00", "reps_ok", fmt(pc.grid[g]), std::to_string(pc.reps_ok[m][g])});
      out.push_back({{"scenario", scenario}, {"estimator", tag}, {"pdatt", "11-00"}, {"metric", "rejection"},
                     {"x", pc.grid[g]},      {"y", pc.rejection[m][g]}});
      out.push_back({{"scenario", scenario}, {"estimator", tag}, {"pdatt", "11-00"}, {"metric", "reps_ok"},
                     {"x", pc.grid[g]},      {"y", pc.reps_ok[m][g]}});
    }
  emit(run, "power", t, out);
}

int report(const std::string& kind, const std::string& module, const std::string& cause, int code) {
  json e{{"error", {{"kind", kind}, {"module", module}, {"cause", cause}}}};
  std::cerr << e.dump() << "\n";
  return code;
}

}  // namespace

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

int run_cli(const std::vector<std::string>& args) {
  const auto t0 = std::chrono::steady_clock::now();
  CLI::App app{"Path-dependent ATT estimation and simulation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  const std::vector<std::string> commands{"estimate", "simulate", "sweep", "power", "bounds"};
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, std::map<std::string, CLI::Option*>> opts;
  std::map<std::string, std::string> config_path;
  std::map<std::string, bool> flag_store;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd);
    sub->add_option("--config", config_path[cmd], "JSON config; flags override it");
    for (const auto& k : keys_for(cmd)) {
      if (k.kind == Kind::Bool)
        opts[cmd][k.name] = sub->add_flag(flag_of(k.name), flag_store[cmd + "." + k.name], k.help);
      else
        opts[cmd][k.name] = sub->add_option(flag_of(k.name), raw[cmd][k.name], k.help);
    }
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("config", "cli", e.what(), 2);
  }

  Run run;
  for (const auto& cmd : commands)
    if (app.got_subcommand(cmd)) run.command = cmd;

  try {
    const auto keys = keys_for(run.command);
    json file_cfg = json::object();
    if (!config_path[run.command].empty()) file_cfg = load_config(config_path[run.command]);
    std::set<std::string> known;
    for (const auto& k : keys) known.insert(k.name);
    for (const auto& [k, v] : file_cfg.items()) {
      if (!known.count(k) && !kMetaKeys.count(k)) throw ConfigError("cli", "unknown config key '" + k + "'");
    }
    if (file_cfg.contains("command") && file_cfg["command"] != run.command)
      throw ConfigError("cli", "config was written for '" + file_cfg["command"].get<std::string>() + "'");

    const char* env_out = std::getenv("PDATT_OUTPUT_DIR");
    for (const auto& k : keys) {
      CLI::Option* o = opts[run.command][k.name];
      json v = k.def;
      if (file_cfg.contains(k.name) && !file_cfg[k.name].is_null()) v = from_config(k, file_cfg[k.name]);
      if (k.name == "output_dir" && env_out && *env_out) v = std::string(env_out);
      if (o->count() > 0)
        v = k.kind == Kind::Bool ? json(flag_store[run.command + "." + k.name]) : from_flag(k, raw[run.command][k.name]);
      run.cfg[k.name] = v;
    }
    for (const auto& f : run.strs("format"))
      if (f != "csv" && f != "json") throw ConfigError("cli", "unknown format '" + f + "'");
    long threads = run.i("threads");
    if (threads < 0) throw ConfigError("cli", "threads must be nonnegative");
    if (threads > 0) omp_set_num_threads(static_cast<int>(threads));
    double level = run.f("level");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("cli", "level must lie in (0, 1)");

    prepare_output_dir(run.s("output_dir"));

    if (run.command == "estimate") cmd_estimate(run);
    else if (run.command == "simulate") cmd_simulate(run);
    else if (run.command == "sweep") cmd_sweep(run);
    else if (run.command == "power") cmd_power(run);
    else cmd_bounds(run);

    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json manifest = run.cfg;
    manifest["command"] = run.command;
    manifest["version"] = kVersion;
    manifest["wall_time_seconds"] = wall;
    manifest["outputs"] = run.outputs;
    write_text(fs::path(run.s("output_dir")) / "manifest.json", manifest.dump(2) + "\n");
  } catch (const Error& e) {
    static const char* names[] = {"config", "data", "numerical"};
    int k = static_cast<int>(e.kind());
    std::string what = e.what();
    std::string cause = what.substr(std::min(what.size(), e.module().size() + 2));
    return report(names[k], e.module(), cause, 2 + k);
  } catch (const std::exception& e) {
    return report("numerical", "unknown", e.what(), 4);
  }
  return 0;
}

}  // namespace pdatt
