#include "gmgp/cli.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "gmgp/bench.hpp"
#include "gmgp/design.hpp"
#include "gmgp/error.hpp"
#include "gmgp/io.hpp"

namespace gmgp::cli {

namespace {

namespace fs = std::filesystem;
using io::json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One per output directory; written last so a manifest implies complete outputs.
struct Manifest {
  std::string command;
  json config = json::object();
  json seed = nullptr;
  json inputs = json::object();
  std::string started = utc_now();

  void add_input(const fs::path& p) { inputs[p.string()] = io::sha256_file(p); }

  void write(const fs::path& dir) const {
    io::write_json(dir / "run_manifest.json", {{"command", command},
                                               {"config", config},
                                               {"seed", seed},
                                               {"tool_version", std::string(kToolVersion)},
                                               {"inputs", inputs},
                                               {"started_at", started},
                                               {"finished_at", utc_now()}});
  }
};

// "1:75,2:75,3:25"
std::map<NodeId, int> parse_sizes(const std::string& s) {
  std::map<NodeId, int> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      std::size_t used = 0;
      const NodeId t = std::stoi(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument(item);
      const std::string n_text = item.substr(colon + 1);
      const int n = std::stoi(n_text, &used);
      if (used != n_text.size()) throw std::invalid_argument(item);
      out[t] = n;
    } catch (const std::logic_error&) {
      fail(ErrorKind::Parse, "--sizes: expected id:size pairs separated by commas, got '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::Parse, "--sizes: empty");
  return out;
}

std::string cell(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

int cmd_validate(const fs::path& dag_path, std::ostream& out) {
  const MultiFidelityDag dag = io::load_dag(dag_path);
  out << std::left << std::setw(6) << "id" << std::setw(12) << "label" << std::setw(10) << "cost" << std::setw(7)
      << "depth" << std::setw(5) << "|Pa|" << "|Des|\n";
  for (NodeId t : dag.node_ids()) {
    const DagNode& n = dag.node(t);
    out << std::left << std::setw(6) << t << std::setw(12) << n.label << std::setw(10) << cell(n.cost_per_run)
        << std::setw(7) << dag.depth(t) << std::setw(5) << dag.parents(t).size() << dag.descendants(t).size() << "\n";
  }
  out << (dag.is_in_tree() ? "valid in-tree, " : "valid DAG (not an in-tree), ") << dag.size() << " nodes, depth "
      << dag.max_depth() + 1 << "\n";
  return 0;
}

struct DesignArgs {
  std::string dag;
  std::optional<double> budget;
  double rho = 0.5;
  double nu = 2.5;
  std::string sizes;
  int dim = 1;
  std::uint64_t seed = 1;
  int iters = 10000;
  std::string out;
};

int cmd_design(const DesignArgs& a, std::ostream& out) {
  if (a.budget.has_value() == !a.sizes.empty()) fail(ErrorKind::InvalidArgument, "give either --budget or --sizes");
  if (a.dim < 1) fail(ErrorKind::InvalidArgument, "--dim must be at least 1");
  if (a.iters < 0) fail(ErrorKind::InvalidArgument, "--iters must be non-negative");
  const MultiFidelityDag dag = io::load_dag(a.dag);
  Manifest m;
  m.command = "design";
  m.add_input(a.dag);
  m.seed = a.seed;
  m.config = {{"dag", a.dag}, {"rho", a.rho}, {"nu", a.nu}, {"dim", a.dim}, {"iters", a.iters}};

  std::map<NodeId, int> sizes;
  std::optional<Allocation> alloc;
  if (a.budget) {
    alloc = allocate_sizes(dag, *a.budget, a.rho, a.nu, a.dim);
    sizes = alloc->sizes;
    m.config["budget"] = *a.budget;
  } else {
    sizes = parse_sizes(a.sizes);
  }
  m.config["sizes"] = json::object();
  for (const auto& [t, n] : sizes) m.config["sizes"][std::to_string(t)] = n;

  const DesignPlan plan = nested_bfs_design(dag, sizes, a.dim, SlhdConfig{a.iters, a.seed});
  const double phi = phi_criterion(dag, sizes, a.rho, a.nu, a.dim);

  out << std::left << std::setw(6) << "node" << std::setw(10) << "cost" << std::setw(14) << "real size" << std::setw(7)
      << "size" << "slices\n";
  for (NodeId t : dag.node_ids()) {
    std::string slices;
    for (int s : plan.slice_assignment.at(t)) slices += (slices.empty() ? "" : ",") + std::to_string(s);
    out << std::left << std::setw(6) << t << std::setw(10) << cell(dag.node(t).cost_per_run) << std::setw(14)
        << (alloc ? cell(alloc->real.at(t)) : std::string("-")) << std::setw(7) << sizes.at(t)
        << (slices.empty() ? "-" : slices) << "\n";
  }
  out << "Phi = " << cell(phi, 10) << ", cost = " << cell(design_cost(dag, sizes), 10) << ", slices = " << plan.slhd.M
      << " x " << plan.slhd.n_per_slice << "\n";

  const fs::path dir = a.out;
  json files = json::object();
  json slices = json::object();
  for (const auto& [t, X] : plan.designs) {
    const std::string f = "design_node_" + std::to_string(t) + ".csv";
    io::write_points_csv(dir / f, X);
    files[std::to_string(t)] = f;
    slices[std::to_string(t)] = plan.slice_assignment.at(t);
  }
  io::write_json(dir / "design.json", {{"sizes", m.config["sizes"]},
                                       {"files", files},
                                       {"slice_assignment", slices},
                                       {"slices", plan.slhd.M},
                                       {"points_per_slice", plan.slhd.n_per_slice},
                                       {"phi", phi},
                                       {"seed", a.seed},
                                       {"iters", a.iters}});
  m.write(dir);
  return 0;
}

struct FitArgs {
  std::string model;
  std::string bundle;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const io::ModelType type = io::model_type_from_string(a.model);
  io::FitSettings settings;
  Manifest m;
  m.command = "fit";
  if (!a.config.empty()) {
    settings = io::fit_settings_from_json(io::read_json(a.config));
    m.add_input(a.config);
  }
  if (a.seed) settings.mle.seed = *a.seed;
  const GmgpDataBundle bundle = io::load_bundle(a.bundle);
  m.add_input(a.bundle);
  m.seed = settings.mle.seed;
  m.config = {{"model", a.model}, {"bundle", a.bundle}, {"settings", io::to_json(settings)}};

  const io::SavedModel model = io::fit_model(type, bundle, settings);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  const json doc = io::model_to_json(model, a.bundle, dir);
  io::write_json(dir / "model.json", doc);
  for (const json& n : doc["nodes"]) {
    out << "node " << n["id"].get<int>() << ": sigma2 = " << cell(n["sigma2"].get<double>()) << ", nugget = "
        << cell(n["nugget"].get<double>()) << "\n";
  }
  out << "wrote " << (dir / "model.json").string() << "\n";
  m.write(dir);
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string query;
  std::string out;
  std::optional<NodeId> node;
  int mc_samples = 1000;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool samples = false;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  Manifest m;
  m.command = "predict";
  const io::SavedModel model = io::load_model(a.model);
  m.add_input(a.model);
  const Matrix Xq = io::read_points_csv(a.query);
  m.add_input(a.query);
  McConfig mc;
  mc.samples = a.mc_samples;
  mc.seed = a.seed;
  mc.jobs = a.jobs;
  mc.validate();
  m.seed = a.seed;
  m.config = {{"model", a.model}, {"query", a.query}, {"mc_samples", a.mc_samples}, {"samples", a.samples}};
  m.config["node"] = a.node ? json(*a.node) : json(nullptr);

  const io::PredictionTable t = io::predict_model(model, Xq, a.node, mc);
  const fs::path dir = a.out;
  io::write_summary_csv(dir / "summary.csv", t);
  if (a.samples) {
    if (!t.samples) fail(ErrorKind::InvalidArgument, "--samples needs a dgmgp model");
    io::write_samples_csv(dir / "samples.csv", *t.samples);
  }
  out << "predicted node " << t.node << " at " << Xq.rows() << " points -> " << (dir / "summary.csv").string() << "\n";
  m.write(dir);
  return 0;
}

struct BenchArgs {
  std::string config;
  std::string out;
  std::optional<int> jobs;
  bool dry_run = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const json raw = io::read_json(a.config);
  io::BenchConfig cfg;
  try {
    cfg = io::bench_config_from_json(raw);
  } catch (const Error& e) {
    // Well-formed JSON that does not describe an experiment is a config error.
    if (e.kind() != ErrorKind::Parse) throw;
    fail(ErrorKind::InvalidArgument, a.config + ": " + std::string(e.what()).substr(7));
  }
  if (a.jobs) {
    if (*a.jobs < 1) fail(ErrorKind::InvalidArgument, "--jobs must be at least 1");
    cfg.table.jobs = *a.jobs;
    cfg.study.jobs = *a.jobs;
  }
  fs::path dir = a.out;
  if (dir.empty()) {
    if (!raw.contains("output_dir")) fail(ErrorKind::InvalidArgument, "no --out and no output_dir in the config");
    dir = raw["output_dir"].get<std::string>();
  }

  if (a.dry_run) {
    std::size_t jobs = 0;
    if (cfg.type == io::BenchConfig::Type::Table) {
      const ExperimentConfig& e = cfg.table;
      for (const auto& sizes : e.size_sets) {
        std::string s;
        for (const auto& [t, n] : sizes) s += (s.empty() ? "" : ",") + std::to_string(t) + ":" + std::to_string(n);
        for (ModelKind k : e.models) {
          out << "plan " << to_string(e.family) << " sizes " << s << " model " << to_string(k) << " x " << e.seeds.size()
              << " seeds\n";
          jobs += e.seeds.size();
        }
      }
    } else {
      const DesignStudyConfig& st = cfg.study;
      for (double b : st.budgets) {
        for (const std::string& s : design_strategies(st)) {
          out << "plan " << to_string(st.family) << " budget " << cell(b) << " strategy " << s << " x "
              << st.seeds.size() << " seeds\n";
          jobs += st.seeds.size();
        }
      }
    }
    out << jobs << " fits planned, output " << dir.string() << " (dry run, nothing written)\n";
    return 0;
  }

  Manifest m;
  m.command = "bench";
  m.add_input(a.config);
  m.config = io::to_json(cfg);
  m.config["output_dir"] = dir.string();
  if (cfg.type == io::BenchConfig::Type::Table) {
    m.seed = cfg.table.seeds;
    const MetricReport report = run_experiment(cfg.table);
    io::write_metrics_csv(dir / "metrics.csv", report);
    io::write_median_csv(dir / "median.csv", report, cfg.table.models);
    if (cfg.table.curve_seed) io::write_curves_csv(dir / "curves.csv", report);
    std::vector<int> n_roots;
    for (const MetricRow& r : report.rows)
      if (std::find(n_roots.begin(), n_roots.end(), r.n_root) == n_roots.end()) n_roots.push_back(r.n_root);
    for (int n : n_roots) {
      for (ModelKind k : cfg.table.models) {
        const std::string name(to_string(k));
        out << std::left << std::setw(18) << name << " n_root " << std::setw(5) << n << " median RMSE "
            << std::setw(12) << cell(report.median_rmse(name, n)) << " median P-RMSE "
            << cell(report.median_p_rmse(name, n)) << "\n";
      }
    }
  } else {
    m.seed = cfg.study.seeds;
    const DesignStudyReport report = run_design_study(cfg.study);
    io::write_design_rows_csv(dir / "design_rows.csv", report);
    io::write_budget_curve_csv(dir / "rmse_vs_budget.csv", report, cfg.study);
    for (const std::string& s : design_strategies(cfg.study)) {
      out << std::left << std::setw(14) << s;
      for (double b : cfg.study.budgets) out << " " << std::setw(10) << cell(report.median_rmse(s, b));
      out << "\n";
    }
  }
  m.write(dir);
  return 0;
}

int exit_code(ErrorKind kind) { return kind == ErrorKind::Io || kind == ErrorKind::Parse ? 1 : 2; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graphical multi-fidelity Gaussian process emulators", "gmgp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string validate_dag;
  auto* validate = app.add_subcommand("validate", "check a DAG file and print its node table");
  validate->add_option("dag", validate_dag, "DAG JSON file")->required();

  DesignArgs da;
  auto* design = app.add_subcommand("design", "nested sliced Latin hypercube design for a DAG");
  design->add_option("--dag", da.dag, "DAG JSON file")->required();
  design->add_option("--budget", da.budget, "total cost; sizes from the budget allocation");
  design->add_option("--sizes", da.sizes, "explicit sizes, e.g. 1:75,2:75,3:25");
  design->add_option("--rho", da.rho, "cross-fidelity correlation for the allocation")->capture_default_str();
  design->add_option("--nu", da.nu, "kernel smoothness for the allocation")->capture_default_str();
  design->add_option("--dim", da.dim, "input dimension")->capture_default_str();
  design->add_option("--seed", da.seed, "design seed")->capture_default_str();
  design->add_option("--iters", da.iters, "maximin swap proposals")->capture_default_str();
  design->add_option("--out", da.out, "output directory")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "estimate a model on a data bundle");
  fit->add_option("--model", fa.model, "gp, rgmgp or dgmgp")->required();
  fit->add_option("--bundle", fa.bundle, "bundle manifest JSON")->required();
  fit->add_option("--config", fa.config, "fit settings JSON");
  fit->add_option("--seed", fa.seed, "seed of the likelihood multistart");
  fit->add_option("--out", fa.out, "output directory")->required();

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "posterior summaries at query points");
  predict->add_option("--model", pa.model, "model.json written by fit")->required();
  predict->add_option("--query", pa.query, "CSV with header x1,...,xd")->required();
  predict->add_option("--out", pa.out, "output directory")->required();
  predict->add_option("--node", pa.node, "node to predict (default root)");
  predict->add_option("--mc-samples", pa.mc_samples, "Monte-Carlo samples (dgmgp)")->capture_default_str();
  predict->add_option("--seed", pa.seed, "Monte-Carlo seed (dgmgp)")->capture_default_str();
  predict->add_option("--jobs", pa.jobs, "threads for the Monte-Carlo draws")->capture_default_str();
  predict->add_flag("--samples", pa.samples, "also write the sample matrix (dgmgp)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "run a benchmark experiment");
  bench->add_option("--config", ba.config, "experiment JSON")->required();
  bench->add_option("--out", ba.out, "output directory (default: output_dir in the config)");
  bench->add_option("--jobs", ba.jobs, "parallel fits; results do not depend on it");
  bench->add_flag("--dry-run", ba.dry_run, "list the planned fits and exit");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*validate) return cmd_validate(validate_dag, out);
    if (*design) return cmd_design(da, out);
    if (*fit) return cmd_fit(fa, out);
    if (*predict) return cmd_predict(pa, out);
    if (*bench) return cmd_bench(ba, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: Io: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace gmgp::cli
