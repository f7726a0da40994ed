#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmgp/bench.hpp"
#include "gmgp/cli.hpp"
#include "gmgp/design.hpp"
#include "gmgp/error.hpp"
#include "gmgp/io.hpp"

using namespace gmgp;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun gmgp_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
    std::replace(name.begin(), name.end(), '/', '_');
    dir_ = fs::temp_directory_path() / ("gmgp_cli_" + name);
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    io::write_text(dir_ / name, text);
    return path(name);
  }

  std::string three_node_dag() const {
    return write("dag.json", R"({"nodes":[{"id":1,"label":"L1","cost":2},{"id":2,"label":"L2","cost":2},
      {"id":3,"label":"H","cost":32}],"edges":[[1,3],[2,3]],"root":3})");
  }

  // Forrester bundle on a nested design; returns the manifest path.
  std::string forrester_bundle(const std::string& sub = "bundle") const {
    const TestFamily fam = make_family(FamilyKind::Forrester1d);
    const DesignPlan plan = nested_bfs_design(fam.dag(), {{1, 16}, {2, 16}, {3, 8}}, 1, SlhdConfig{200, 11});
    return io::save_bundle(dir_ / sub, make_bundle(fam, plan.designs)).string();
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST_F(CliTest, ValidateFigureTwoTree) {
  const std::string dag = write("five.json", R"({"nodes":[{"id":1},{"id":2},{"id":3},{"id":4},{"id":5}],
    "edges":[[1,3],[2,3],[3,5],[4,5]],"root":5})");
  const CliRun r = gmgp_cli({"validate", dag});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("valid in-tree, 5 nodes, depth 3"), std::string::npos) << r.out;
}

TEST_F(CliTest, ValidateCycleExitsTwoAndNamesCycle) {
  const std::string dag = write("cyc.json", R"({"nodes":[{"id":1},{"id":2},{"id":3}],
    "edges":[[1,2],[2,1],[2,3]],"root":3})");
  const CliRun r = gmgp_cli({"validate", dag});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("CycleDetected"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("1 -> 2 -> 1"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateMissingFileExitsOne) {
  const CliRun r = gmgp_cli({"validate", path("absent.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Io"), std::string::npos) << r.err;
}

TEST_F(CliTest, MalformedJsonReportsPosition) {
  const std::string dag = write("bad.json", "{\n  \"nodes\": [\n  ,\n}");
  const CliRun r = gmgp_cli({"validate", dag});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.json:3:"), std::string::npos) << r.err;
}

TEST_F(CliTest, DagFieldErrorsNameTheField) {
  const std::string dag = write("f.json", R"({"nodes":[{"id":"one"}],"edges":[],"root":1})");
  const CliRun r = gmgp_cli({"validate", dag});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nodes[0].id"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(gmgp_cli({}).code, 1);
  EXPECT_EQ(gmgp_cli({"design", "--dag"}).code, 1);
  EXPECT_EQ(gmgp_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(gmgp_cli({"--help"}).code, 0);
}

TEST_F(CliTest, DesignFromBudgetMatchesAllocation) {
  const std::string dag = three_node_dag();
  const CliRun r = gmgp_cli({"design", "--dag", dag, "--budget", "320", "--rho", "0.5", "--nu", "2.5", "--seed", "7",
                          "--iters", "300", "--out", path("plan")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Allocation a = allocate_sizes(io::load_dag(dag), 320, 0.5, 2.5, 1);
  const io::json plan = io::read_json(dir_ / "plan" / "design.json");
  for (const auto& [t, n] : a.sizes) {
    EXPECT_EQ(plan["sizes"][std::to_string(t)].get<int>(), n);
    EXPECT_EQ(io::read_points_csv(dir_ / "plan" / ("design_node_" + std::to_string(t) + ".csv")).rows(), n);
  }
  EXPECT_NE(r.out.find("Phi = "), std::string::npos);

  const io::json m = io::read_json(dir_ / "plan" / "run_manifest.json");
  EXPECT_EQ(m["command"], "design");
  EXPECT_EQ(m["seed"].get<int>(), 7);
  EXPECT_EQ(m["inputs"][dag].get<std::string>(), io::sha256_file(dag));
  EXPECT_EQ(m["tool_version"].get<std::string>(), std::string(cli::kToolVersion));
  int manifests = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "plan")) manifests += e.path().filename() == "run_manifest.json";
  EXPECT_EQ(manifests, 1);
}

TEST_F(CliTest, DesignExplicitSizesIsNested) {
  const std::string dag = three_node_dag();
  const CliRun r = gmgp_cli({"design", "--dag", dag, "--sizes", "1:75,2:75,3:25", "--iters", "200", "--out", path("p")});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::json plan = io::read_json(dir_ / "p" / "design.json");
  // H owns one slice and each source adds two of its own.
  EXPECT_EQ(plan["slices"].get<int>(), 5);
  EXPECT_EQ(plan["points_per_slice"].get<int>(), 25);
  const Matrix H = io::read_points_csv(dir_ / "p" / "design_node_3.csv");
  for (int t : {1, 2}) {
    const Matrix L = io::read_points_csv(dir_ / "p" / ("design_node_" + std::to_string(t) + ".csv"));
    EXPECT_EQ(L.rows(), 75);
    for (auto idx : match_rows(H, L)) EXPECT_GE(idx, 0);
  }
}

TEST_F(CliTest, DesignIsDeterministicPerSeed) {
  const std::string dag = three_node_dag();
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(gmgp_cli({"design", "--dag", dag, "--sizes", "1:16,2:16,3:8", "--seed", "3", "--iters", "500", "--out",
                        path(out)})
                  .code,
              0);
  }
  for (int t = 1; t <= 3; ++t) {
    const std::string f = "design_node_" + std::to_string(t) + ".csv";
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f));
  }
}

TEST_F(CliTest, DesignDomainErrorsExitTwo) {
  const std::string dag = three_node_dag();
  CliRun r = gmgp_cli({"design", "--dag", dag, "--sizes", "1:70,2:75,3:25", "--out", path("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("SizeNotMultiple"), std::string::npos) << r.err;
  r = gmgp_cli({"design", "--dag", dag, "--budget", "10", "--out", path("y")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("BudgetTooSmall"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "y" / "run_manifest.json"));
  r = gmgp_cli({"design", "--dag", dag, "--sizes", "1-75", "--out", path("z")});
  EXPECT_EQ(r.code, 1);
}

class FitPredictRoundTrip : public CliTest, public ::testing::WithParamInterface<std::string> {};

TEST_P(FitPredictRoundTrip, PredictsTargetsAtTrainingPoints) {
  const std::string kind = GetParam();
  const std::string bundle = forrester_bundle();
  CliRun r = gmgp_cli({"fit", "--model", kind, "--bundle", bundle, "--seed", "5", "--out", path("fit")});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::json model = io::read_json(dir_ / "fit" / "model.json");
  EXPECT_EQ(model["nodes"].size(), kind == "gp" ? 1u : 3u);

  const GmgpDataBundle b = io::load_bundle(bundle);
  io::write_points_csv(dir_ / "q.csv", b.data(3).X);
  r = gmgp_cli({"predict", "--model", path("fit/model.json"), "--query", path("q.csv"), "--out", path("pred"),
                "--mc-samples", "200", "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::CsvTable t = io::read_csv(dir_ / "pred" / "summary.csv");
  ASSERT_EQ(t.header, (std::vector<std::string>{"point_index", "mean", "var", "q025", "q975"}));
  ASSERT_EQ(t.rows.size(), static_cast<std::size_t>(b.data(3).size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_NEAR(t.rows[i][1], b.data(3).y[static_cast<Eigen::Index>(i)], 1e-6) << kind << " row " << i;
    const double ulp = 1e-14 * std::max(1.0, std::abs(t.rows[i][1]));
    EXPECT_LE(t.rows[i][3], t.rows[i][1] + ulp);
    EXPECT_GE(t.rows[i][4], t.rows[i][1] - ulp);
  }
  EXPECT_TRUE(fs::exists(dir_ / "pred" / "run_manifest.json"));
}

INSTANTIATE_TEST_SUITE_P(Models, FitPredictRoundTrip, ::testing::Values("gp", "rgmgp", "dgmgp"));

TEST_F(CliTest, SavedModelReproducesInMemoryPredictions) {
  const std::string bundle = forrester_bundle();
  const GmgpDataBundle b = io::load_bundle(bundle);
  const Matrix Xq = test_points(1, 41, 0);
  McConfig mc;
  mc.samples = 300;
  for (io::ModelType type : {io::ModelType::Gp, io::ModelType::Rgmgp, io::ModelType::Dgmgp}) {
    io::FitSettings s;
    s.mle.seed = 2;
    const io::SavedModel fitted = io::fit_model(type, b, s);
    io::write_json(dir_ / "m.json", io::model_to_json(fitted, bundle, dir_));
    const io::SavedModel loaded = io::load_model(dir_ / "m.json");
    const auto p0 = io::predict_model(fitted, Xq, std::nullopt, mc);
    const auto p1 = io::predict_model(loaded, Xq, std::nullopt, mc);
    EXPECT_LT((p0.mean - p1.mean).cwiseAbs().maxCoeff(), 1e-9) << io::to_string(type);
    EXPECT_LT((p0.variance - p1.variance).cwiseAbs().maxCoeff(), 1e-9) << io::to_string(type);
  }
}

TEST_F(CliTest, ChangedBundleIsRejected) {
  const std::string bundle = forrester_bundle();
  ASSERT_EQ(gmgp_cli({"fit", "--model", "rgmgp", "--bundle", bundle, "--out", path("fit")}).code, 0);
  const fs::path csv = dir_ / "bundle" / "node_3.csv";
  std::string text = slurp(csv);
  text.back() = text.back() == '\n' ? ' ' : '\n';
  io::write_text(csv, text + "\n");
  io::write_points_csv(dir_ / "q.csv", test_points(1, 5, 0));
  const CliRun r = gmgp_cli({"predict", "--model", path("fit/model.json"), "--query", path("q.csv"), "--out", path("p")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("SHA-256"), std::string::npos) << r.err;
}

TEST_F(CliTest, TamperedHyperparametersAreRejected) {
  const std::string bundle = forrester_bundle();
  ASSERT_EQ(gmgp_cli({"fit", "--model", "gp", "--bundle", bundle, "--out", path("fit")}).code, 0);
  io::json doc = io::read_json(dir_ / "fit" / "model.json");
  doc["nodes"][0]["sigma2"] = doc["nodes"][0]["sigma2"].get<double>() * 1.5;
  io::write_json(dir_ / "fit" / "model.json", doc);
  EXPECT_THROW(io::load_model(dir_ / "fit" / "model.json"), Error);
}

TEST_F(CliTest, DgmgpPredictionIsReproducible) {
  const std::string bundle = forrester_bundle();
  ASSERT_EQ(gmgp_cli({"fit", "--model", "dgmgp", "--bundle", bundle, "--out", path("fit")}).code, 0);
  io::write_points_csv(dir_ / "q.csv", test_points(1, 23, 0));
  for (const auto& [out, jobs] : std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "1"}, {"c", "3"}}) {
    const CliRun r = gmgp_cli({"predict", "--model", path("fit/model.json"), "--query", path("q.csv"), "--out",
                            path(out), "--mc-samples", "250", "--seed", "4", "--jobs", jobs, "--samples"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"summary.csv", "samples.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "c" / f)) << f;
  }
  EXPECT_EQ(io::read_csv(dir_ / "a" / "samples.csv").rows.size(), 23u * 250u);
  gmgp_cli({"predict", "--model", path("fit/model.json"), "--query", path("q.csv"), "--out", path("d"),
            "--mc-samples", "250", "--seed", "5"});
  EXPECT_NE(slurp(dir_ / "a" / "summary.csv"), slurp(dir_ / "d" / "summary.csv"));
}

TEST_F(CliTest, NonNestedBundleFailsWithNotNested) {
  const TestFamily fam = make_family(FamilyKind::Forrester1d);
  std::map<NodeId, Matrix> designs{{1, test_points(1, 10, 0)}, {2, test_points(1, 10, 0)}, {3, Matrix(3, 1)}};
  designs[3] << 0.123, 0.456, 0.789;
  const std::string bundle = io::save_bundle(dir_ / "nn", make_bundle(fam, designs)).string();
  const CliRun r = gmgp_cli({"fit", "--model", "rgmgp", "--bundle", bundle, "--out", path("fit")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NotNested"), std::string::npos) << r.err;
}

TEST_F(CliTest, DgmgpOnGeneralDagNeedsInTree) {
  const TestFamily fam = make_family(FamilyKind::Forrester1d);
  const DesignPlan plan = nested_bfs_design(fam.dag(), {{1, 16}, {2, 16}, {3, 8}}, 1, SlhdConfig{50, 1});
  GmgpDataBundle b = make_bundle(fam, plan.designs);
  // 1 -> 2 -> 3 plus 1 -> 3: node 1 has two children.
  GmgpDataBundle g{MultiFidelityDag({{1, "L1", 1}, {2, "L2", 1}, {3, "H", 1}}, {{1, 2}, {2, 3}, {1, 3}}, 3),
                   {{1, b.data(1)}, {2, b.data(1)}, {3, b.data(3)}}};
  g.datasets.at(2).y *= 0.5;
  const std::string bundle = io::save_bundle(dir_ / "g", g).string();
  const CliRun r = gmgp_cli({"fit", "--model", "dgmgp", "--bundle", bundle, "--out", path("fit")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("InTreeRequired"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadDatasetCsvIsParseError) {
  const std::string bundle = forrester_bundle();
  io::write_text(dir_ / "bundle" / "node_2.csv", "x1,y\n0.5,1.0\n0.25\n");
  const CliRun r = gmgp_cli({"fit", "--model", "rgmgp", "--bundle", bundle, "--out", path("fit")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("node_2.csv:3"), std::string::npos) << r.err;
}

TEST_F(CliTest, FitConfigIsApplied) {
  const std::string bundle = forrester_bundle();
  const std::string cfg = write("fit.json", R"({"kernel":"se","trend":"linear","mle":{"starts":2}})");
  ASSERT_EQ(gmgp_cli({"fit", "--model", "gp", "--bundle", bundle, "--config", cfg, "--out", path("fit")}).code, 0);
  const io::json doc = io::read_json(dir_ / "fit" / "model.json");
  EXPECT_EQ(doc["settings"]["kernel"], "squared_exponential");
  EXPECT_EQ(doc["nodes"][0]["beta"].size(), 2u);
  const std::string bad = write("bad.json", R"({"kernal":"se"})");
  const CliRun r = gmgp_cli({"fit", "--model", "gp", "--bundle", bundle, "--config", bad, "--out", path("f2")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("kernal"), std::string::npos) << r.err;
}

TEST_F(CliTest, BenchDryRunWritesNothing) {
  const CliRun r = gmgp_cli({"bench", "--config", GMGP_SOURCE_DIR "/experiments/1d.json", "--out", path("out"), "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("120 fits planned"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir_ / "out"));
  const CliRun s = gmgp_cli({"bench", "--config", GMGP_SOURCE_DIR "/experiments/design_study_1d.json", "--out",
                          path("out"), "--dry-run"});
  ASSERT_EQ(s.code, 0) << s.err;
  // 6 budgets x 5 strategies x 20 seeds
  EXPECT_NE(s.out.find("600 fits planned"), std::string::npos) << s.out;
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(CliTest, BundledConfigsParse) {
  for (const char* f : {"1d", "5d", "20d", "design_study_1d"}) {
    const io::json doc = io::read_json(fs::path(GMGP_SOURCE_DIR) / "experiments" / (std::string(f) + ".json"));
    const io::BenchConfig cfg = io::bench_config_from_json(doc);
    const io::BenchConfig again = io::bench_config_from_json(io::to_json(cfg));
    EXPECT_EQ(io::to_json(cfg), io::to_json(again)) << f;
  }
}

TEST_F(CliTest, BenchConfigErrorsExitTwo) {
  CliRun r = gmgp_cli({"bench", "--config", write("c.json", R"({"family":"1d","sizes":{"1":15},"seeds":[1],"nope":1})"),
                    "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope"), std::string::npos) << r.err;
  r = gmgp_cli({"bench", "--config", write("d.json", R"({"family":"1d","sizes":{"1":15},"seeds":[1],"models":["X"]})"),
                "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  r = gmgp_cli({"bench", "--config", write("e.json", "{"), "--out", path("o")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, SmallBenchRunIsIndependentOfJobs) {
  const std::string cfg = write("b.json", R"({"name":"tiny","family":"forrester1d","models":["HF-GP","r-GMGP"],
    "sizes":{"1":8,"2":8,"3":4},"seeds":[1,2],"n_test":50,"slhd_iters":100,"mle":{"starts":2},"curve_seed":2})");
  CliRun r = gmgp_cli({"bench", "--config", cfg, "--out", path("j1"), "--jobs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = gmgp_cli({"bench", "--config", cfg, "--out", path("j2"), "--jobs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"metrics.csv", "median.csv", "curves.csv"}) {
    EXPECT_EQ(slurp(dir_ / "j1" / f), slurp(dir_ / "j2" / f)) << f;
  }
  std::istringstream metrics(slurp(dir_ / "j1" / "metrics.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(metrics, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_NE(slurp(dir_ / "j1" / "curves.csv").find("model,n_root,point_index,x1,truth,mean,lower,upper"),
            std::string::npos);
  const io::json m = io::read_json(dir_ / "j1" / "run_manifest.json");
  EXPECT_EQ(m["command"], "bench");
  EXPECT_EQ(m["seed"], io::json({1, 2}));
}

TEST(IoFormat, NumbersRoundTripAtDefaultPrecision) {
  ::unsetenv("GMGP_PRECISION");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 6.02214076e23}) {
    EXPECT_EQ(std::strtod(io::format_number(v).c_str(), nullptr), v);
  }
  ::setenv("GMGP_PRECISION", "4", 1);
  EXPECT_EQ(io::format_number(1.0 / 3.0), "0.3333");
  ::setenv("GMGP_PRECISION", "garbage", 1);
  EXPECT_EQ(io::output_precision(), 17);
  ::unsetenv("GMGP_PRECISION");
}

TEST(IoFormat, Sha256KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(IoFormat, DagJsonRoundTrip) {
  const MultiFidelityDag dag = graphs::five_node_tree({1, 2, 3, 4, 5});
  const MultiFidelityDag back = io::dag_from_json(io::dag_to_json(dag));
  EXPECT_EQ(back.node_ids(), dag.node_ids());
  EXPECT_EQ(back.edges(), dag.edges());
  EXPECT_EQ(back.root(), dag.root());
  EXPECT_DOUBLE_EQ(back.node(4).cost_per_run, 4.0);
}
