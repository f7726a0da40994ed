#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmgp/bench.hpp"
#include "gmgp/dgmgp.hpp"
#include "gmgp/gmgp.hpp"
#include "gmgp/gp.hpp"

namespace gmgp::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Significant digits for numeric output; GMGP_PRECISION overrides the
/// default of 17 (enough to round-trip a double).
int output_precision();
std::string format_number(double v);

std::string read_text(const fs::path& path);
/// Creates parent directories as needed.
void write_text(const fs::path& path, const std::string& text);
/// Parses with line/column in the error message.
json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& doc);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

// DAG documents: {"nodes":[{"id":1,"label":"L1","cost":2.0},...],"edges":[[1,3],[2,3]],"root":3}
MultiFidelityDag dag_from_json(const json& doc);
json dag_to_json(const MultiFidelityDag& dag);
MultiFidelityDag load_dag(const fs::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& values);

/// Header x1,...,xd,y.
NodeDataset read_dataset_csv(const fs::path& path);
void write_dataset_csv(const fs::path& path, const NodeDataset& data);
/// Header x1,...,xd (a trailing y column, if present, is ignored).
Matrix read_points_csv(const fs::path& path);
void write_points_csv(const fs::path& path, const Matrix& X);

/// Bundle manifest: {"dag": "dag.json", "data": {"1": "node_1.csv", ...}},
/// paths relative to the manifest.
GmgpDataBundle load_bundle(const fs::path& manifest);
/// Writes dag.json, node_<id>.csv and bundle.json into `dir`; returns the
/// manifest path.
fs::path save_bundle(const fs::path& dir, const GmgpDataBundle& bundle);

enum class ModelType { Gp, Rgmgp, Dgmgp };
std::string_view to_string(ModelType type);
ModelType model_type_from_string(std::string_view name);

/// Estimation settings of `fit`; unused fields are ignored by other types.
struct FitSettings {
  KernelFamily family = KernelFamily::Matern52;  // gp and rgmgp
  TrendKind trend = TrendKind::Constant;          // gp and rgmgp
  std::optional<TrendKind> source_trend;          // rgmgp, dgmgp
  RhoBasis rho = RhoBasis::Constant;
  NestedPolicy nested = NestedPolicy::Strict;
  bool standardize_parent_outputs = true;  // dgmgp
  MleConfig mle;
  std::optional<NodeId> node;  // gp: which node to model (default root)
};

FitSettings fit_settings_from_json(const json& doc);
json to_json(const FitSettings& s);

/// A fitted model together with the data it was conditioned on. Saved files
/// hold the hyperparameters and a reference to the bundle; loading recomputes
/// the factorisations.
struct SavedModel {
  ModelType type = ModelType::Gp;
  FitSettings settings;
  GmgpDataBundle bundle;
  NodeId node = 0;  // gp only
  std::optional<FittedGp> gp;
  std::optional<FittedGmgp> rgmgp;
  std::optional<FittedDeepGmgp> dgmgp;
};

SavedModel fit_model(ModelType type, const GmgpDataBundle& bundle, const FitSettings& settings);
json model_to_json(const SavedModel& model, const fs::path& bundle_manifest, const fs::path& model_dir);
/// Throws InvalidArgument when the bundle digest or the re-derived
/// estimates disagree with the file.
SavedModel load_model(const fs::path& path);

struct PredictionTable {
  NodeId node = 0;
  Vector mean;
  Vector variance;
  Vector q025;
  Vector q975;
  std::optional<Matrix> samples;  // N x m, dgmgp only
};

/// Gaussian models report mean +- 1.96 sd as the interval.
PredictionTable predict_model(const SavedModel& model, const Matrix& Xq, std::optional<NodeId> node,
                              const McConfig& mc);

/// point_index,mean,var,q025,q975
void write_summary_csv(const fs::path& path, const PredictionTable& table);
/// point_index,sample_index,value
void write_samples_csv(const fs::path& path, const Matrix& samples);

// Experiment configs. "type" is "table" (default) or "design_study".
struct BenchConfig {
  enum class Type { Table, DesignStudy } type = Type::Table;
  std::string name;
  ExperimentConfig table;
  DesignStudyConfig study;
};

BenchConfig bench_config_from_json(const json& doc);
json to_json(const BenchConfig& cfg);

/// model,seed,rmse,prmse,n_root,status
void write_metrics_csv(const fs::path& path, const MetricReport& report);
/// model,n_root,median_rmse,median_prmse
void write_median_csv(const fs::path& path, const MetricReport& report, const std::vector<ModelKind>& models);
/// model,n_root,point_index,x1..xd,truth,mean,lower,upper
void write_curves_csv(const fs::path& path, const MetricReport& report);
/// strategy,budget,seed,sizes,rmse,status
void write_design_rows_csv(const fs::path& path, const DesignStudyReport& report);
/// strategy,budget,median_rmse
void write_budget_curve_csv(const fs::path& path, const DesignStudyReport& report, const DesignStudyConfig& cfg);

}  // namespace gmgp::io
