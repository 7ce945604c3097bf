#include "ckmm/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ckmm/error.hpp"
#include "ckmm/eval.hpp"
#include "ckmm/io.hpp"
#include "ckmm/rng.hpp"
#include "ckmm/simulate.hpp"

namespace ckmm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Setter = std::function<void(const json&)>;
using Registry = std::map<std::string, Setter>;

std::string json_key(std::string flag) {
  for (auto& c : flag)
    if (c == '-') c = '_';
  return flag;
}

template <class T>
Setter setter_for(T& var, const std::string& key) {
  return [&var, key](const json& j) {
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = j.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = j.is_string();
    } else if constexpr (std::is_integral_v<T>) {
      ok = j.is_number_unsigned();
    } else {
      ok = j.is_number();
    }
    if (!ok) throw Error(ErrorCode::config, "config key '" + key + "' has the wrong type");
    var = j.get<T>();
  };
}

template <class T>
void option(CLI::App* app, Registry& reg, const std::string& flag, T& var, const std::string& help) {
  if constexpr (std::is_same_v<T, bool>) {
    app->add_flag("--" + flag, var, help);
  } else {
    app->add_option("--" + flag, var, help)->capture_default_str();
  }
  reg[json_key(flag)] = setter_for(var, json_key(flag));
}

void fit_options(CLI::App* app, Registry& reg, ExperimentConfig& c) {
  FitConfig& f = c.fit;
  option(app, reg, "restarts", f.restarts, "independent k-means initializations");
  option(app, reg, "seed", f.seed, "random seed");
  option(app, reg, "epsilon", f.epsilon, "relative log-likelihood tolerance");
  option(app, reg, "max-iterations", f.max_iterations, "iteration cap per restart");
  option(app, reg, "eta", f.eta, "bandwidth learning rate");
  option(app, reg, "delta-h", f.delta_h, "first bandwidth probe as a fraction of h");
  option(app, reg, "bandwidth-lower", f.bandwidth_lower, "lower bandwidth bound, multiple of the initial bandwidth");
  option(app, reg, "bandwidth-upper", f.bandwidth_upper, "upper bandwidth bound, multiple of the initial bandwidth");
  option(app, reg, "bandwidth-substeps", f.max_bandwidth_substeps, "bandwidth search steps per M-step");
  option(app, reg, "kmeans-seedings", f.kmeans_seedings, "k-means++ seedings per restart");
  option(app, reg, "difference", c.difference, "take first differences along time before fitting");
  option(app, reg, "standardize", c.standardize, "z-score each feature before fitting");
  option(app, reg, "timing", c.timing, "record wall-clock runtime_ms (output is then not reproducible)");
  app->add_option("--threads", f.threads, "worker threads, 0 = all cores")->envname("CKMM_THREADS")->capture_default_str();
  reg["threads"] = setter_for(f.threads, "threads");
}

void apply_config_file(const std::string& path, const Registry& reg) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::config, path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = reg.find(key);
    if (it == reg.end()) throw Error(ErrorCode::config, path + ": unknown key '" + key + "'");
    it->second(value);
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::io, "cannot create output directory " + dir.string());
}

std::string to_string_with(const std::function<void(std::ostream&)>& f) {
  std::ostringstream ss;
  f(ss);
  return ss.str();
}

std::string fixed4(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

LongitudinalDataset preprocess(LongitudinalDataset data, const ExperimentConfig& c) {
  if (c.difference) data = difference(data);
  if (c.standardize) data = standardize(data);
  return data;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

struct ManifestEntry {
  std::string file;
  std::uint64_t seed = 0;
  std::vector<int> labels;
};

struct Manifest {
  std::string scenario;
  std::size_t times = 0;
  std::size_t subjects = 0;
  std::vector<ManifestEntry> datasets;
  fs::path dir;
};

Manifest read_manifest(const fs::path& path) {
  const json j = read_json(path);
  Manifest m;
  try {
    if (j.at("format_version").get<int>() != 1) throw Error(ErrorCode::format, path.string() + ": unsupported manifest version");
    m.scenario = j.at("scenario").get<std::string>();
    m.times = j.at("T").get<std::size_t>();
    m.subjects = j.at("N").get<std::size_t>();
    for (const auto& e : j.at("datasets")) {
      m.datasets.push_back({e.at("file").get<std::string>(), e.at("seed").get<std::uint64_t>(),
                            e.at("labels").get<std::vector<int>>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, path.string() + ": " + e.what());
  }
  m.dir = path.parent_path();
  return m;
}

std::string stem_of(const std::string& file) { return fs::path(file).stem().string(); }

// One fit with all of its output files; returns the summary line.
std::string fit_one(const LongitudinalDataset& data, const ExperimentConfig& c, const fs::path& dir,
                    const std::string& name) {
  ensure_dir(dir);
  const auto start = std::chrono::steady_clock::now();
  const FitResult f = fit(data, c.clusters, c.fit);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  write_file(dir / "model.ckmm", to_string_with([&](std::ostream& o) { write_model(o, f.model); }));
  write_file(dir / "labels.csv", to_string_with([&](std::ostream& o) { write_labels_csv(o, f.labels); }));
  write_file(dir / "responsibilities.csv",
             to_string_with([&](std::ostream& o) { write_responsibilities_csv(o, f.responsibilities); }));
  write_file(dir / "trace.csv", to_string_with([&](std::ostream& o) { write_trace_csv(o, f.loglik_trace); }));
  json s;
  s["G"] = c.clusters;
  s["N"] = data.subjects();
  s["D"] = data.features();
  s["T"] = data.times();
  s["loglik"] = f.loglik();
  s["adjusted_bic"] = adjusted_bic(f, data);
  s["iterations"] = f.iterations;
  s["converged"] = f.converged;
  s["restart_index"] = f.restart_index;
  s["restart_logliks"] = f.restart_logliks;
  s["warnings"] = f.warnings;
  if (c.timing) s["runtime_ms"] = ms;
  write_file(dir / "fit.json", s.dump(2) + "\n");
  return name + " G=" + std::to_string(c.clusters) + " loglik=" + format_double(f.loglik()) +
         " iterations=" + std::to_string(f.iterations) + (f.converged ? "" : " (not converged)");
}

int cmd_simulate(const ExperimentConfig& c, std::ostream& out) {
  const Scenario sc = scenario_by_name(c.scenario, c.times, c.subjects);
  const fs::path dir(c.out);
  ensure_dir(dir);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(c.count - 1).size());
  json manifest;
  manifest["format_version"] = 1;
  manifest["scenario"] = sc.name;
  manifest["T"] = c.times;
  manifest["N"] = c.subjects;
  manifest["count"] = c.count;
  manifest["seed"] = c.fit.seed;
  manifest["label_probability"] = sc.label_probability;
  manifest["datasets"] = json::array();
  for (std::size_t i = 0; i < c.count; ++i) {
    const std::uint64_t seed = derive_seed(c.fit.seed, i);
    const SimulatedData sim = generate_dataset(sc, seed);
    std::ostringstream name;
    name << "dataset_" << std::setw(static_cast<int>(width)) << std::setfill('0') << i << ".csv";
    write_file(dir / name.str(), to_string_with([&](std::ostream& o) { write_dataset_csv(o, sim.data); }));
    manifest["datasets"].push_back({{"file", name.str()}, {"seed", seed}, {"labels", sim.labels}});
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << c.count << " " << sc.name << " datasets (T=" << c.times << ", N=" << c.subjects << ") and manifest.json to "
      << dir.string() << "\n";
  return 0;
}

int cmd_fit(const ExperimentConfig& c, std::ostream& out) {
  const fs::path dir(c.out);
  if (!c.data.empty()) {
    const auto loaded = load_dataset(c.data);
    out << fit_one(preprocess(loaded.data, c), c, dir, fs::path(c.data).filename().string()) << "\n";
    return 0;
  }
  const Manifest m = read_manifest(c.manifest);
  for (const auto& e : m.datasets) {
    const auto loaded = load_dataset(m.dir / e.file);
    out << fit_one(preprocess(loaded.data, c), c, dir / stem_of(e.file), e.file) << "\n";
  }
  return 0;
}

int cmd_select(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const auto loaded = load_dataset(c.data);
  const LongitudinalDataset data = preprocess(loaded.data, c);
  std::vector<int> truth = loaded.labels;
  if (!c.truth.empty()) {
    std::istringstream in(read_file(c.truth));
    truth = read_labels_csv(in, c.truth);
  }
  if (!truth.empty() && truth.size() != data.subjects()) {
    throw Error(ErrorCode::invalid_input, "truth labels do not match the dataset's subject count");
  }
  const fs::path dir(c.out);
  ensure_dir(dir);
  ExperimentConfig per_g = c;
  std::map<std::size_t, FitResult> fits;
  std::map<std::size_t, std::string> status;
  for (std::size_t g = std::min<std::size_t>(1, c.g_min); g <= c.g_max; ++g) {
    if (g != 1 && g < c.g_min) continue;
    try {
      fits.emplace(g, fit(data, g, c.fit));
      status[g] = "ok";
      write_file(dir / ("labels_G" + std::to_string(g) + ".csv"),
                 to_string_with([&](std::ostream& o) { write_labels_csv(o, fits.at(g).labels); }));
    } catch (const Error& e) {
      status[g] = std::string(error_code_name(e.code()));
      err << "warning: fit with G=" << g << " failed: " << e.what() << "\n";
    }
  }
  std::optional<NecTable> table;
  if (fits.count(1)) {
    table = nec(fits);
    if (table->best_multi != 0) {
      try {
        const FitResult ref = fit_fixed_correlation(data, table->best_multi, c.fit, fits.at(1).model.corr[0]);
        table = nec(fits, &ref);
      } catch (const Error& e) {
        err << "warning: one-cluster NEC reference fit failed: " << e.what() << "\n";
      }
    }
    for (const auto& w : table->warnings) err << "warning: " << w << "\n";
  } else {
    err << "warning: NEC needs a successful G=1 fit\n";
  }
  std::map<std::size_t, double> bic;
  std::size_t bic_best = 0;
  for (const auto& [g, f] : fits) {
    if (g < c.g_min) continue;
    bic[g] = adjusted_bic(f, data);
    if (bic_best == 0 || bic[g] < bic[bic_best]) bic_best = g;
  }
  std::ostringstream csv;
  csv << "G,status,loglik,adjusted_bic,nec,ari,selected\n";
  for (std::size_t g = c.g_min; g <= c.g_max; ++g) {
    csv << g << ',' << status[g] << ',';
    const auto it = fits.find(g);
    if (it != fits.end()) csv << format_double(it->second.loglik());
    csv << ',';
    if (bic.count(g)) csv << format_double(bic[g]);
    csv << ',';
    if (table) {
      if (g == 1 && table->one_cluster) csv << format_double(*table->one_cluster);
      if (g != 1 && table->values.count(g)) csv << format_double(table->values.at(g));
    }
    csv << ',';
    if (it != fits.end() && !truth.empty()) csv << format_double(ari(it->second.labels, truth));
    csv << ',';
    std::string sel;
    if (g == bic_best) sel = "bic";
    if (table && table->selected == g) sel += sel.empty() ? "nec" : ";nec";
    csv << sel << '\n';
  }
  write_file(dir / "selection.csv", csv.str());
  out << csv.str();
  return 0;
}

struct Stats {
  std::vector<double> v;
  void add(double x) { v.push_back(x); }
  double mean() const {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
  double sd() const {
    if (v.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }
};

int cmd_evaluate(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path fits_dir(c.fits);
  std::optional<Manifest> manifest;
  if (fs::exists(c.manifest)) {
    manifest = read_manifest(c.manifest);
  } else {
    err << "warning: manifest " << c.manifest << " not found; ARI and baseline rows omitted\n";
  }
  std::vector<std::string> names;
  if (manifest) {
    for (const auto& e : manifest->datasets) names.push_back(e.file);
  } else {
    if (!fs::is_directory(fits_dir)) throw Error(ErrorCode::io, "fits directory " + c.fits + " not found");
    for (const auto& entry : fs::directory_iterator(fits_dir))
      if (entry.is_directory() && fs::exists(entry.path() / "fit.json")) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
  }
  std::ostringstream csv;
  csv << "scenario,T,seed,method,ari,loglik,iterations,kde_mse,corr_mse,runtime_ms\n";
  std::map<std::string, std::map<std::string, Stats>> stats;
  std::optional<Scenario> sc;
  if (manifest) sc = scenario_by_name(manifest->scenario, manifest->times, manifest->subjects);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const fs::path fit_dir = fits_dir / stem_of(names[i]);
    const std::string scenario = manifest ? manifest->scenario : "";
    const std::string times = manifest ? std::to_string(manifest->times) : "";
    const std::string seed = manifest ? std::to_string(manifest->datasets[i].seed) : stem_of(names[i]);
    const ManifestEntry* entry = manifest ? &manifest->datasets[i] : nullptr;
    std::optional<LongitudinalDataset> data;
    if (entry) data = load_dataset(manifest->dir / entry->file).data;
    if (fs::exists(fit_dir / "labels.csv")) {
      std::istringstream lin(read_file(fit_dir / "labels.csv"));
      const auto labels = read_labels_csv(lin, (fit_dir / "labels.csv").string());
      const json summary = read_json(fit_dir / "fit.json");
      csv << scenario << ',' << times << ',' << seed << ",ckmm,";
      if (entry) {
        const double a = ari(labels, entry->labels);
        stats["ckmm"]["ari"].add(a);
        csv << format_double(a);
      }
      csv << ',' << format_double(summary.at("loglik").get<double>()) << ',' << summary.at("iterations").get<std::size_t>()
          << ',';
      if (entry && fs::exists(fit_dir / "model.ckmm")) {
        std::istringstream min(read_file(fit_dir / "model.ckmm"));
        const CkmmModel model = read_model(min, (fit_dir / "model.ckmm").string());
        if (model.clusters == Scenario::kClusters && model.features == Scenario::kFeatures && model.times == sc->times) {
          const auto map = match_clusters(labels, entry->labels, static_cast<int>(model.clusters));
          double kde = 0.0, corr = 0.0;
          for (std::size_t g = 0; g < model.clusters; ++g) {
            const auto tg = static_cast<std::size_t>(map[g]);
            corr += correlation_mse(model.corr[g], build_covariance(*sc, tg, sc->times)) / 2.0;
            for (std::size_t d = 0; d < model.features; ++d)
              kde += kde_mse(model.kde(g, d), sc->clusters[tg].margins[d]) / 4.0;
          }
          stats["ckmm"]["kde_mse"].add(kde);
          stats["ckmm"]["corr_mse"].add(corr);
          csv << format_double(kde) << ',' << format_double(corr);
        } else {
          csv << ',';
        }
      } else {
        csv << ',';
      }
      csv << ',';
      if (summary.contains("runtime_ms")) csv << format_double(summary.at("runtime_ms").get<double>());
      csv << '\n';
    } else {
      err << "warning: no fit found for " << names[i] << "\n";
    }
    if (entry) {
      const double a = ari(oracle_classify(*data, *sc), entry->labels);
      stats["baseline"]["ari"].add(a);
      csv << scenario << ',' << times << ',' << seed << ",baseline," << format_double(a) << ",,,,,\n";
    }
  }
  const fs::path dir(c.out);
  ensure_dir(dir);
  write_file(dir / "evaluation.csv", csv.str());
  std::ostringstream summary;
  summary << "method,metric,n,mean,sd,se,mean(sd)\n";
  for (const auto& [method, metrics] : stats)
    for (const auto& [metric, s] : metrics) {
      const double se = s.v.empty() ? 0.0 : s.sd() / std::sqrt(static_cast<double>(s.v.size()));
      summary << method << ',' << metric << ',' << s.v.size() << ',' << format_double(s.mean()) << ','
              << format_double(s.sd()) << ',' << format_double(se) << ',' << fixed4(s.mean()) << '(' << fixed4(s.sd())
              << ")\n";
    }
  write_file(dir / "summary.txt", summary.str());
  out << summary.str();
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::config, w); };
  if (command == "simulate") {
    if (scenario.empty()) bad("simulate needs --scenario");
    if (out.empty()) bad("simulate needs --out");
    if (count == 0) bad("--count must be positive");
    if (times < 2) bad("--T must be at least 2");
    if (subjects < 2) bad("--N must be at least 2");
  }
  if (command == "fit" || command == "select") {
    fit.validate();
    if (out.empty()) bad(command + " needs --out");
  }
  if (command == "fit") {
    if (data.empty() == manifest.empty()) bad("fit needs exactly one of --data and --manifest");
    if (clusters == 0) bad("--g must be at least 1");
  }
  if (command == "select") {
    if (data.empty()) bad("select needs --data");
    if (g_min == 0 || g_min > g_max) bad("need 1 <= --g-min <= --g-max");
  }
  if (command == "evaluate") {
    if (fits.empty()) bad("evaluate needs --fits");
    if (out.empty()) bad("evaluate needs --out");
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  ExperimentConfig c;
  c.fit.threads = 0;
  CLI::App app{"Copula kernel mixture model clustering for balanced multivariate longitudinal data", "ckmm"};
  app.require_subcommand(1);
  std::map<CLI::App*, Registry> registries;

  auto* sim = app.add_subcommand("simulate", "generate datasets from a catalog scenario");
  auto& rs = registries[sim];
  option(sim, rs, "scenario", c.scenario, "scenario id S1..S6");
  option(sim, rs, "T", c.times, "time points");
  option(sim, rs, "N", c.subjects, "subjects per dataset");
  option(sim, rs, "count", c.count, "number of datasets");
  option(sim, rs, "seed", c.fit.seed, "random seed");
  option(sim, rs, "out", c.out, "output directory");

  auto* fit_cmd = app.add_subcommand("fit", "fit a CKMM to one dataset or to every dataset of a manifest");
  auto& rf = registries[fit_cmd];
  option(fit_cmd, rf, "data", c.data, "dataset (.csv long format or .ts)");
  option(fit_cmd, rf, "manifest", c.manifest, "manifest.json written by simulate");
  option(fit_cmd, rf, "g", c.clusters, "number of clusters");
  option(fit_cmd, rf, "out", c.out, "output directory");
  fit_options(fit_cmd, rf, c);

  auto* sel = app.add_subcommand("select", "choose the number of clusters by adjusted BIC and NEC");
  auto& rl = registries[sel];
  option(sel, rl, "data", c.data, "dataset (.csv long format or .ts)");
  option(sel, rl, "truth", c.truth, "optional labels.csv used for the ari column");
  option(sel, rl, "g-min", c.g_min, "smallest cluster count");
  option(sel, rl, "g-max", c.g_max, "largest cluster count");
  option(sel, rl, "out", c.out, "output directory");
  fit_options(sel, rl, c);

  auto* ev = app.add_subcommand("evaluate", "score fits against the manifest truth and the true-parameter baseline");
  auto& re = registries[ev];
  option(ev, re, "manifest", c.manifest, "manifest.json written by simulate");
  option(ev, re, "fits", c.fits, "directory written by fit --manifest");
  option(ev, re, "out", c.out, "output directory");

  for (auto& [sub, reg] : registries) sub->add_option("--config", c.config_file, "JSON file overriding the flags");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    for (auto* sub : app.get_subcommands()) {
      out << sub->help();
      return 0;
    }
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }
  try {
    CLI::App* sub = app.get_subcommands().front();
    c.command = sub->get_name();
    if (!c.config_file.empty()) apply_config_file(c.config_file, registries.at(sub));
    c.validate();
    if (c.command == "simulate") return cmd_simulate(c, out);
    if (c.command == "fit") return cmd_fit(c, out);
    if (c.command == "select") return cmd_select(c, out, err);
    return cmd_evaluate(c, out, err);
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace ckmm
