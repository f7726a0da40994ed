#include "gmgp/io.hpp"

#include <openssl/evp.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "gmgp/correlation.hpp"
#include "gmgp/error.hpp"

namespace gmgp::io {

namespace {

constexpr int kModelFormatVersion = 1;
constexpr double kZ975 = 1.959963984540054;

std::string where_of(const fs::path& path) { return path.string(); }

// Field access with a readable location for error messages.
const json& field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::Parse, where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::Parse, where + ": missing field '" + key + "'");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(ErrorKind::Parse, where + ": expected a number");
  return v.get<double>();
}

long long integer(const json& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<long long>(d);
  }
  fail(ErrorKind::Parse, where + ": expected an integer");
}

int small_int(const json& v, const std::string& where) {
  const long long x = integer(v, where);
  if (x < INT32_MIN || x > INT32_MAX) fail(ErrorKind::Parse, where + ": integer out of range");
  return static_cast<int>(x);
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) fail(ErrorKind::Parse, where + ": expected a string");
  return v.get<std::string>();
}

bool boolean(const json& v, const std::string& where) {
  if (!v.is_boolean()) fail(ErrorKind::Parse, where + ": expected true or false");
  return v.get<bool>();
}

const json& array(const json& v, const std::string& where) {
  if (!v.is_array()) fail(ErrorKind::Parse, where + ": expected an array");
  return v;
}

void only_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::Parse, where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) fail(ErrorKind::Parse, where + ": unknown field '" + it.key() + "'");
  }
}

NodeId node_key(const std::string& key, const std::string& where) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(key.c_str(), &end, 10);
  if (key.empty() || *end != '\0' || errno != 0) fail(ErrorKind::Parse, where + ": '" + key + "' is not a node id");
  return static_cast<NodeId>(v);
}

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vec_from(const json& v, const std::string& where) {
  array(v, where);
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = number(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

json mat_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string join_numbers(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::string s;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j) s += ',';
    s += format_number(row[j]);
  }
  return s;
}

// Digest over the manifest, the DAG file and the data files in id order.
std::string bundle_digest(const fs::path& manifest) {
  const json doc = read_json(manifest);
  const fs::path base = manifest.parent_path();
  std::string all = sha256_file(manifest);
  all += sha256_file(base / text(field(doc, "dag", where_of(manifest)), where_of(manifest) + ".dag"));
  std::map<NodeId, std::string> files;
  const json& data = field(doc, "data", where_of(manifest));
  for (auto it = data.begin(); it != data.end(); ++it) {
    files[node_key(it.key(), where_of(manifest) + ".data")] = text(it.value(), where_of(manifest) + ".data." + it.key());
  }
  for (const auto& [t, f] : files) all += sha256_file(base / f);
  return sha256_hex(all);
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-8 * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

void check_close(double stored, double derived, const std::string& what) {
  if (!close(stored, derived)) {
    std::ostringstream os;
    os.precision(17);
    os << "model file does not match its bundle (" << what << ": file " << stored << ", recomputed " << derived << ")";
    fail(ErrorKind::InvalidArgument, os.str());
  }
}

std::string window_mode_text(WindowMode m) { return m == WindowMode::Absolute ? "absolute" : "proportional"; }

WindowMode window_mode_from(const std::string& s, const std::string& where) {
  if (s == "absolute") return WindowMode::Absolute;
  if (s == "proportional") return WindowMode::Proportional;
  fail(ErrorKind::Parse, where + ": window mode must be 'absolute' or 'proportional'");
}

std::string nested_text(NestedPolicy p) { return p == NestedPolicy::Strict ? "strict" : "plug_in_parent_mean"; }

NestedPolicy nested_from(const std::string& s, const std::string& where) {
  if (s == "strict") return NestedPolicy::Strict;
  if (s == "plug_in_parent_mean") return NestedPolicy::PlugInParentMean;
  fail(ErrorKind::Parse, where + ": nested policy must be 'strict' or 'plug_in_parent_mean'");
}

void read_mle(const json& doc, MleConfig& m, const std::string& where) {
  only_keys(doc, {"starts", "seed", "max_iterations", "optimizer"}, where);
  if (doc.contains("starts")) m.starts = small_int(doc["starts"], where + ".starts");
  if (doc.contains("seed")) m.seed = static_cast<std::uint64_t>(integer(doc["seed"], where + ".seed"));
  if (doc.contains("max_iterations")) m.local.max_iterations = small_int(doc["max_iterations"], where + ".max_iterations");
  if (doc.contains("optimizer")) {
    const std::string o = text(doc["optimizer"], where + ".optimizer");
    if (o == "auto") m.optimizer = OptimizerChoice::Auto;
    else if (o == "simplex") m.optimizer = OptimizerChoice::Simplex;
    else if (o == "bfgs") m.optimizer = OptimizerChoice::Bfgs;
    else fail(ErrorKind::Parse, where + ".optimizer: expected auto, simplex or bfgs");
  }
  if (m.starts < 1) fail(ErrorKind::InvalidArgument, where + ".starts must be at least 1");
}

json mle_json(const MleConfig& m) {
  const char* opt = m.optimizer == OptimizerChoice::Auto ? "auto" : m.optimizer == OptimizerChoice::Simplex ? "simplex" : "bfgs";
  return {{"starts", m.starts}, {"seed", m.seed}, {"max_iterations", m.local.max_iterations}, {"optimizer", opt}};
}

std::vector<std::uint64_t> read_seeds(const json& v, const std::string& where) {
  std::vector<std::uint64_t> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(static_cast<std::uint64_t>(integer(v[i], where + "[" + std::to_string(i) + "]")));
    }
  } else {
    only_keys(v, {"first", "count"}, where);
    const long long first = v.contains("first") ? integer(v["first"], where + ".first") : 1;
    const long long count = integer(field(v, "count", where), where + ".count");
    for (long long k = 0; k < count; ++k) out.push_back(static_cast<std::uint64_t>(first + k));
  }
  if (out.empty()) fail(ErrorKind::InvalidArgument, where + ": no seeds");
  return out;
}

std::map<NodeId, int> read_sizes(const json& v, const std::string& where) {
  if (!v.is_object()) fail(ErrorKind::Parse, where + ": expected {\"node id\": size, ...}");
  std::map<NodeId, int> out;
  for (auto it = v.begin(); it != v.end(); ++it) {
    out[node_key(it.key(), where)] = small_int(it.value(), where + "." + it.key());
  }
  return out;
}

template <typename T>
json keyed(const std::map<NodeId, T>& m) {
  json o = json::object();
  for (const auto& [k, v] : m) o[std::to_string(k)] = v;
  return o;
}

}  // namespace

int output_precision() {
  if (const char* env = std::getenv("GMGP_PRECISION")) {
    char* end = nullptr;
    const long p = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && p >= 1 && p <= 17) return static_cast<int>(p);
  }
  return 17;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", output_precision(), v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, "error reading '" + path.string() + "'");
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << content;
  out.flush();
  if (!out) fail(ErrorKind::Io, "error writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  const std::string s = read_text(path);
  try {
    return json::parse(s);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < s.size(); ++i) {
      if (s[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Io, "SHA-256 computation failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

MultiFidelityDag dag_from_json(const json& doc) {
  const std::string w = "dag";
  only_keys(doc, {"nodes", "edges", "root"}, w);
  const json& nodes = array(field(doc, "nodes", w), w + ".nodes");
  std::vector<DagNode> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string wi = w + ".nodes[" + std::to_string(i) + "]";
    only_keys(nodes[i], {"id", "label", "cost"}, wi);
    DagNode n;
    n.id = small_int(field(nodes[i], "id", wi), wi + ".id");
    n.label = nodes[i].contains("label") ? text(nodes[i]["label"], wi + ".label") : "node" + std::to_string(n.id);
    n.cost_per_run = nodes[i].contains("cost") ? number(nodes[i]["cost"], wi + ".cost") : 1.0;
    out.push_back(std::move(n));
  }
  const json& edges = array(field(doc, "edges", w), w + ".edges");
  std::vector<MultiFidelityDag::Edge> e;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string wi = w + ".edges[" + std::to_string(i) + "]";
    if (!edges[i].is_array() || edges[i].size() != 2) fail(ErrorKind::Parse, wi + ": expected [parent, child]");
    e.emplace_back(small_int(edges[i][0], wi + "[0]"), small_int(edges[i][1], wi + "[1]"));
  }
  return MultiFidelityDag(std::move(out), std::move(e), small_int(field(doc, "root", w), w + ".root"));
}

json dag_to_json(const MultiFidelityDag& dag) {
  json nodes = json::array();
  for (const DagNode& n : dag.nodes()) nodes.push_back({{"id", n.id}, {"label", n.label}, {"cost", n.cost_per_run}});
  json edges = json::array();
  for (const auto& [p, c] : dag.edges()) edges.push_back({p, c});
  return {{"nodes", nodes}, {"edges", edges}, {"root", dag.root()}};
}

MultiFidelityDag load_dag(const fs::path& path) {
  const json doc = read_json(path);
  try {
    return dag_from_json(doc);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
}

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_row(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                 std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0') {
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": '" + c + "' is not a number");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) fail(ErrorKind::Parse, path.string() + ": empty file");
  return t;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& values) {
  std::string s;
  for (std::size_t j = 0; j < header.size(); ++j) s += (j ? "," : "") + header[j];
  s += '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) s += join_numbers(values.row(i)) + '\n';
  write_text(path, s);
}

namespace {

Eigen::Index x_columns(const CsvTable& t, const fs::path& path, bool want_y) {
  Eigen::Index d = 0;
  while (d < static_cast<Eigen::Index>(t.header.size()) && t.header[static_cast<std::size_t>(d)] == "x" + std::to_string(d + 1)) ++d;
  const auto rest = static_cast<Eigen::Index>(t.header.size()) - d;
  const bool has_y = rest == 1 && t.header.back() == "y";
  if (d == 0 || (rest != 0 && !has_y) || (want_y && !has_y)) {
    fail(ErrorKind::Parse, path.string() + ": header must be x1,...,xd" + (want_y ? ",y" : "[,y]"));
  }
  return d;
}

}  // namespace

NodeDataset read_dataset_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const Eigen::Index d = x_columns(t, path, true);
  NodeDataset data{Matrix(static_cast<Eigen::Index>(t.rows.size()), d), Vector(static_cast<Eigen::Index>(t.rows.size()))};
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (Eigen::Index l = 0; l < d; ++l) data.X(static_cast<Eigen::Index>(i), l) = t.rows[i][static_cast<std::size_t>(l)];
    data.y[static_cast<Eigen::Index>(i)] = t.rows[i].back();
  }
  try {
    data.validate();
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
  return data;
}

void write_dataset_csv(const fs::path& path, const NodeDataset& data) {
  Matrix m(data.size(), data.dim() + 1);
  m << data.X, data.y;
  std::vector<std::string> h;
  for (Eigen::Index l = 0; l < data.dim(); ++l) h.push_back("x" + std::to_string(l + 1));
  h.push_back("y");
  write_csv(path, h, m);
}

Matrix read_points_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const Eigen::Index d = x_columns(t, path, false);
  Matrix X(static_cast<Eigen::Index>(t.rows.size()), d);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (Eigen::Index l = 0; l < d; ++l) X(static_cast<Eigen::Index>(i), l) = t.rows[i][static_cast<std::size_t>(l)];
  }
  if (X.rows() == 0) fail(ErrorKind::EmptyInput, path.string() + ": no points");
  if (!X.allFinite()) fail(ErrorKind::Parse, path.string() + ": non-finite coordinate");
  return X;
}

void write_points_csv(const fs::path& path, const Matrix& X) {
  std::vector<std::string> h;
  for (Eigen::Index l = 0; l < X.cols(); ++l) h.push_back("x" + std::to_string(l + 1));
  write_csv(path, h, X);
}

GmgpDataBundle load_bundle(const fs::path& manifest) {
  const json doc = read_json(manifest);
  const std::string w = manifest.string();
  only_keys(doc, {"dag", "data"}, w);
  const fs::path base = manifest.parent_path();
  MultiFidelityDag dag = load_dag(base / text(field(doc, "dag", w), w + ".dag"));
  std::map<NodeId, NodeDataset> sets;
  const json& data = field(doc, "data", w);
  if (!data.is_object()) fail(ErrorKind::Parse, w + ".data: expected {\"node id\": \"file.csv\", ...}");
  for (auto it = data.begin(); it != data.end(); ++it) {
    const NodeId t = node_key(it.key(), w + ".data");
    if (!dag.contains(t)) fail(ErrorKind::UnknownNode, w + ".data: node " + it.key() + " is not in the DAG");
    sets.emplace(t, read_dataset_csv(base / text(it.value(), w + ".data." + it.key())));
  }
  GmgpDataBundle b{std::move(dag), std::move(sets)};
  b.validate();
  return b;
}

fs::path save_bundle(const fs::path& dir, const GmgpDataBundle& bundle) {
  write_json(dir / "dag.json", dag_to_json(bundle.dag));
  json data = json::object();
  for (const auto& [t, d] : bundle.datasets) {
    const std::string f = "node_" + std::to_string(t) + ".csv";
    write_dataset_csv(dir / f, d);
    data[std::to_string(t)] = f;
  }
  const fs::path manifest = dir / "bundle.json";
  write_json(manifest, {{"dag", "dag.json"}, {"data", data}});
  return manifest;
}

std::string_view to_string(ModelType type) {
  switch (type) {
    case ModelType::Gp: return "gp";
    case ModelType::Rgmgp: return "rgmgp";
    case ModelType::Dgmgp: return "dgmgp";
  }
  return "?";
}

ModelType model_type_from_string(std::string_view name) {
  if (name == "gp") return ModelType::Gp;
  if (name == "rgmgp") return ModelType::Rgmgp;
  if (name == "dgmgp") return ModelType::Dgmgp;
  fail(ErrorKind::Parse, "unknown model type '" + std::string(name) + "' (expected gp, rgmgp or dgmgp)");
}

FitSettings fit_settings_from_json(const json& doc) {
  const std::string w = "fit config";
  only_keys(doc, {"kernel", "trend", "source_trend", "rho", "nested", "standardize_parent_outputs", "mle", "node"}, w);
  FitSettings s;
  if (doc.contains("kernel")) s.family = kernel_family_from_string(text(doc["kernel"], w + ".kernel"));
  if (doc.contains("trend")) s.trend = trend_kind_from_string(text(doc["trend"], w + ".trend"));
  if (doc.contains("source_trend") && !doc["source_trend"].is_null()) {
    s.source_trend = trend_kind_from_string(text(doc["source_trend"], w + ".source_trend"));
  }
  if (doc.contains("rho")) s.rho = rho_basis_from_string(text(doc["rho"], w + ".rho"));
  if (doc.contains("nested")) s.nested = nested_from(text(doc["nested"], w + ".nested"), w + ".nested");
  if (doc.contains("standardize_parent_outputs")) {
    s.standardize_parent_outputs = boolean(doc["standardize_parent_outputs"], w + ".standardize_parent_outputs");
  }
  if (doc.contains("mle")) read_mle(doc["mle"], s.mle, w + ".mle");
  if (doc.contains("node") && !doc["node"].is_null()) s.node = small_int(doc["node"], w + ".node");
  return s;
}

json to_json(const FitSettings& s) {
  json j = {{"kernel", to_string(s.family)},
            {"trend", to_string(s.trend)},
            {"rho", to_string(s.rho)},
            {"nested", nested_text(s.nested)},
            {"standardize_parent_outputs", s.standardize_parent_outputs},
            {"mle", mle_json(s.mle)}};
  j["source_trend"] = s.source_trend ? json(to_string(*s.source_trend)) : json(nullptr);
  j["node"] = s.node ? json(*s.node) : json(nullptr);
  return j;
}

namespace {

RgmgpConfig rgmgp_config(const FitSettings& s) {
  RgmgpConfig c;
  c.family = s.family;
  c.trend = s.trend;
  c.source_trend = s.source_trend;
  c.rho = s.rho;
  c.nested = s.nested;
  c.mle = s.mle;
  return c;
}

DeepConfig deep_config(const FitSettings& s) {
  DeepConfig c;
  c.mle = s.mle;
  c.nested = s.nested;
  c.standardize_parent_outputs = s.standardize_parent_outputs;
  c.source_trend = s.source_trend.value_or(TrendKind::None);
  return c;
}

FittedGp gp_from(const NodeDataset& data, const FitSettings& s, const FixedCorrelation* fixed) {
  const TrendBasis basis{s.trend, data.dim()};
  if (fixed == nullptr) return fit_gp(data, s.family, basis, s.mle);
  FittedGp m = condition_fixed(std::make_unique<StationaryCorrelation>(make_kernel(s.family, static_cast<std::size_t>(data.dim()))),
                               *fixed, data.X, data.y, basis.evaluate(data.X), s.mle);
  m.basis = basis;
  m.family = s.family;
  return m;
}

json gp_node_json(NodeId id, const std::vector<NodeId>& parents, const FittedGp& gp) {
  json j = {{"id", id},
            {"parents", parents},
            {"log_params", vec_json(gp.corr->log_params())},
            {"nugget", gp.nugget},
            {"sigma2", gp.sigma2},
            {"beta", vec_json(gp.beta)},
            {"offset", gp.offset}};
  return j;
}

FixedCorrelation fixed_from(const json& node, const std::string& where) {
  return {vec_from(field(node, "log_params", where), where + ".log_params"),
          number(field(node, "nugget", where), where + ".nugget")};
}

}  // namespace

SavedModel fit_model(ModelType type, const GmgpDataBundle& bundle, const FitSettings& settings) {
  SavedModel m{type, settings, bundle, 0, {}, {}, {}};
  switch (type) {
    case ModelType::Gp: {
      m.node = settings.node.value_or(bundle.dag.root());
      if (!bundle.dag.contains(m.node)) fail(ErrorKind::UnknownNode, "node " + std::to_string(m.node) + " is not in the DAG");
      m.gp = gp_from(bundle.data(m.node), settings, nullptr);
      break;
    }
    case ModelType::Rgmgp:
      m.rgmgp = fit_rgmgp(bundle, rgmgp_config(settings));
      break;
    case ModelType::Dgmgp:
      m.dgmgp = fit_dgmgp(bundle, deep_config(settings));
      break;
  }
  return m;
}

json model_to_json(const SavedModel& model, const fs::path& bundle_manifest, const fs::path& model_dir) {
  json j;
  j["format"] = "gmgp-model";
  j["version"] = kModelFormatVersion;
  j["type"] = to_string(model.type);
  const fs::path abs_manifest = fs::absolute(bundle_manifest);
  const fs::path rel = fs::relative(abs_manifest, fs::absolute(model_dir));
  j["bundle"] = {{"path", (rel.empty() ? abs_manifest : rel).generic_string()}, {"sha256", bundle_digest(bundle_manifest)}};
  j["settings"] = to_json(model.settings);
  json nodes = json::array();
  switch (model.type) {
    case ModelType::Gp: {
      json n = gp_node_json(model.node, {}, *model.gp);
      n["lengthscales"] = vec_json(model.gp->kernel_spec().lengthscales);
      nodes.push_back(n);
      break;
    }
    case ModelType::Rgmgp:
      for (NodeId t : model.rgmgp->dag.fit_order()) {
        const FittedNode& fn = model.rgmgp->nodes.at(t);
        json n = gp_node_json(t, fn.parents, fn.gp);
        n["lengthscales"] = vec_json(fn.gp.kernel_spec().lengthscales);
        n["beta"] = vec_json(fn.beta);
        n["rho"] = mat_json(fn.rho);
        nodes.push_back(n);
      }
      break;
    case ModelType::Dgmgp:
      for (NodeId t : model.dgmgp->dag.fit_order()) {
        const FittedDeepNode& fn = model.dgmgp->nodes.at(t);
        json n = gp_node_json(t, fn.parents, fn.gp);
        n["z_center"] = vec_json(fn.z_center);
        n["z_scale"] = vec_json(fn.z_scale);
        nodes.push_back(n);
      }
      break;
  }
  j["nodes"] = nodes;
  return j;
}

SavedModel load_model(const fs::path& path) {
  const json doc = read_json(path);
  const std::string w = path.string();
  if (!doc.is_object() || doc.value("format", "") != "gmgp-model") fail(ErrorKind::Parse, w + ": not a model file");
  if (integer(field(doc, "version", w), w + ".version") != kModelFormatVersion) {
    fail(ErrorKind::Parse, w + ": unsupported model format version");
  }
  const ModelType type = model_type_from_string(text(field(doc, "type", w), w + ".type"));
  const json& b = field(doc, "bundle", w);
  fs::path manifest = text(field(b, "path", w + ".bundle"), w + ".bundle.path");
  if (manifest.is_relative()) manifest = path.parent_path() / manifest;
  const std::string digest = bundle_digest(manifest);
  if (digest != text(field(b, "sha256", w + ".bundle"), w + ".bundle.sha256")) {
    fail(ErrorKind::InvalidArgument, w + ": bundle files changed since the model was fitted (SHA-256 mismatch)");
  }
  const FitSettings settings = fit_settings_from_json(field(doc, "settings", w));
  GmgpDataBundle bundle = load_bundle(manifest);

  std::map<NodeId, FixedCorrelation> fixed;
  std::map<NodeId, double> sigma2;
  const json& nodes = array(field(doc, "nodes", w), w + ".nodes");
  NodeId first = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string wi = w + ".nodes[" + std::to_string(i) + "]";
    const NodeId t = small_int(field(nodes[i], "id", wi), wi + ".id");
    if (i == 0) first = t;
    fixed[t] = fixed_from(nodes[i], wi);
    sigma2[t] = number(field(nodes[i], "sigma2", wi), wi + ".sigma2");
  }
  if (nodes.empty()) fail(ErrorKind::Parse, w + ": no nodes");

  SavedModel m{type, settings, bundle, 0, {}, {}, {}};
  switch (type) {
    case ModelType::Gp:
      m.node = first;
      if (!bundle.dag.contains(m.node)) fail(ErrorKind::UnknownNode, w + ": node " + std::to_string(m.node) + " is not in the DAG");
      m.gp = gp_from(bundle.data(m.node), settings, &fixed.at(m.node));
      check_close(sigma2.at(m.node), m.gp->sigma2, "sigma2 of node " + std::to_string(m.node));
      break;
    case ModelType::Rgmgp: {
      RgmgpConfig c = rgmgp_config(settings);
      c.fixed = fixed;
      for (NodeId t : bundle.dag.node_ids()) {
        if (!fixed.count(t)) fail(ErrorKind::Parse, w + ": no parameters for node " + std::to_string(t));
      }
      m.rgmgp = fit_rgmgp(bundle, c);
      for (const auto& [t, s2] : sigma2) check_close(s2, m.rgmgp->nodes.at(t).gp.sigma2, "sigma2 of node " + std::to_string(t));
      break;
    }
    case ModelType::Dgmgp: {
      DeepConfig c = deep_config(settings);
      c.fixed = fixed;
      for (NodeId t : bundle.dag.node_ids()) {
        if (!fixed.count(t)) fail(ErrorKind::Parse, w + ": no parameters for node " + std::to_string(t));
      }
      m.dgmgp = fit_dgmgp(bundle, c);
      for (const auto& [t, s2] : sigma2) check_close(s2, m.dgmgp->nodes.at(t).gp.sigma2, "sigma2 of node " + std::to_string(t));
      break;
    }
  }
  return m;
}

PredictionTable predict_model(const SavedModel& model, const Matrix& Xq, std::optional<NodeId> node, const McConfig& mc) {
  const NodeId root = model.bundle.dag.root();
  PredictionTable out;
  out.node = model.type == ModelType::Gp ? node.value_or(model.node) : node.value_or(root);
  if (!model.bundle.dag.contains(out.node)) fail(ErrorKind::UnknownNode, "node " + std::to_string(out.node) + " is not in the DAG");
  if (Xq.cols() != model.bundle.dim()) {
    fail(ErrorKind::DimensionMismatch, "query points have " + std::to_string(Xq.cols()) + " columns, model expects " +
                                           std::to_string(model.bundle.dim()));
  }
  auto gaussian = [&](const PosteriorSummary& s) {
    out.mean = s.mean;
    out.variance = s.variance;
    const Vector sd = s.variance.cwiseMax(0.0).cwiseSqrt();
    out.q025 = s.mean - kZ975 * sd;
    out.q975 = s.mean + kZ975 * sd;
  };
  switch (model.type) {
    case ModelType::Gp:
      if (out.node != model.node) {
        fail(ErrorKind::InvalidArgument, "this GP models node " + std::to_string(model.node) + " only");
      }
      gaussian(gp_posterior(*model.gp, Xq));
      break;
    case ModelType::Rgmgp:
      gaussian(predict_rgmgp(*model.rgmgp, Xq).at(out.node));
      break;
    case ModelType::Dgmgp: {
      auto all = predict_dgmgp(*model.dgmgp, Xq, mc);
      SamplePosterior& s = all.at(out.node);
      out.mean = s.mean;
      out.variance = s.variance;
      out.q025 = s.q025;
      out.q975 = s.q975;
      out.samples = std::move(s.samples);
      break;
    }
  }
  return out;
}

void write_summary_csv(const fs::path& path, const PredictionTable& t) {
  Matrix m(t.mean.size(), 5);
  for (Eigen::Index i = 0; i < t.mean.size(); ++i) {
    m.row(i) << static_cast<double>(i), t.mean[i], t.variance[i], t.q025[i], t.q975[i];
  }
  write_csv(path, {"point_index", "mean", "var", "q025", "q975"}, m);
}

void write_samples_csv(const fs::path& path, const Matrix& samples) {
  std::string s = "point_index,sample_index,value\n";
  for (Eigen::Index q = 0; q < samples.cols(); ++q) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      s += std::to_string(q) + ',' + std::to_string(i) + ',' + format_number(samples(i, q)) + '\n';
    }
  }
  write_text(path, s);
}

BenchConfig bench_config_from_json(const json& doc) {
  const std::string w = "experiment";
  if (!doc.is_object()) fail(ErrorKind::Parse, w + ": expected an object");
  BenchConfig cfg;
  const std::string type = doc.contains("type") ? text(doc["type"], w + ".type") : "table";
  if (type == "table") {
    cfg.type = BenchConfig::Type::Table;
  } else if (type == "design_study") {
    cfg.type = BenchConfig::Type::DesignStudy;
  } else {
    fail(ErrorKind::Parse, w + ".type: expected 'table' or 'design_study'");
  }
  cfg.name = doc.contains("name") ? text(doc["name"], w + ".name") : "experiment";
  const FamilyKind family = family_kind_from_string(text(field(doc, "family", w), w + ".family"));

  if (cfg.type == BenchConfig::Type::Table) {
    only_keys(doc, {"name", "type", "family", "models", "sizes", "seeds", "n_test", "slhd_iters", "mle", "mc", "welch",
                    "kernels", "curve_seed", "jobs", "output_dir"},
              w);
    ExperimentConfig& e = cfg.table;
    e.name = cfg.name;
    e.family = family;
    if (doc.contains("models")) {
      e.models.clear();
      const json& ms = array(doc["models"], w + ".models");
      for (std::size_t i = 0; i < ms.size(); ++i) {
        e.models.push_back(model_kind_from_string(text(ms[i], w + ".models[" + std::to_string(i) + "]")));
      }
    }
    const json& sizes = field(doc, "sizes", w);
    if (sizes.is_object()) {
      e.size_sets.push_back(read_sizes(sizes, w + ".sizes"));
    } else {
      array(sizes, w + ".sizes");
      for (std::size_t i = 0; i < sizes.size(); ++i) e.size_sets.push_back(read_sizes(sizes[i], w + ".sizes[" + std::to_string(i) + "]"));
    }
    e.seeds = read_seeds(field(doc, "seeds", w), w + ".seeds");
    if (doc.contains("n_test")) e.n_test = small_int(doc["n_test"], w + ".n_test");
    if (doc.contains("slhd_iters")) e.slhd_iters = small_int(doc["slhd_iters"], w + ".slhd_iters");
    if (doc.contains("mle")) read_mle(doc["mle"], e.model.mle, w + ".mle");
    if (doc.contains("mc")) {
      only_keys(doc["mc"], {"samples"}, w + ".mc");
      if (doc["mc"].contains("samples")) e.model.mc.samples = small_int(doc["mc"]["samples"], w + ".mc.samples");
      e.model.mc.validate();
    }
    if (doc.contains("welch")) {
      const json& o = doc["welch"];
      const std::string ww = w + ".welch";
      only_keys(o, {"mode", "medium_half_width", "low_half_width", "qmc_points"}, ww);
      if (o.contains("mode")) e.welch.mode = window_mode_from(text(o["mode"], ww + ".mode"), ww + ".mode");
      if (o.contains("medium_half_width")) e.welch.medium_half_width = number(o["medium_half_width"], ww + ".medium_half_width");
      if (o.contains("low_half_width")) e.welch.low_half_width = number(o["low_half_width"], ww + ".low_half_width");
      if (o.contains("qmc_points")) e.welch.qmc_points = small_int(o["qmc_points"], ww + ".qmc_points");
    }
    if (doc.contains("kernels")) {
      const json& k = doc["kernels"];
      const std::string wk = w + ".kernels";
      only_keys(k, {"hf", "linear", "trend"}, wk);
      if (k.contains("hf")) e.model.hf_family = kernel_family_from_string(text(k["hf"], wk + ".hf"));
      if (k.contains("linear")) e.model.linear_family = kernel_family_from_string(text(k["linear"], wk + ".linear"));
      if (k.contains("trend")) e.model.trend = trend_kind_from_string(text(k["trend"], wk + ".trend"));
    }
    if (doc.contains("curve_seed") && !doc["curve_seed"].is_null()) {
      e.curve_seed = static_cast<std::uint64_t>(integer(doc["curve_seed"], w + ".curve_seed"));
    }
    if (doc.contains("jobs")) e.jobs = small_int(doc["jobs"], w + ".jobs");
    if (e.models.empty() || e.size_sets.empty()) fail(ErrorKind::InvalidArgument, w + ": needs models and sizes");
    if (e.n_test < 0 || e.slhd_iters < 0 || e.jobs < 1) fail(ErrorKind::InvalidArgument, w + ": negative count or jobs < 1");
  } else {
    only_keys(doc, {"name", "type", "family", "costs", "budgets", "rhos", "ratios", "nu", "seeds", "n_test", "slhd_iters",
                    "mle", "jobs", "output_dir"},
              w);
    DesignStudyConfig& s = cfg.study;
    s.family = family;
    const json& costs = field(doc, "costs", w);
    if (!costs.is_object()) fail(ErrorKind::Parse, w + ".costs: expected {\"node id\": cost, ...}");
    for (auto it = costs.begin(); it != costs.end(); ++it) {
      s.costs[node_key(it.key(), w + ".costs")] = number(it.value(), w + ".costs." + it.key());
    }
    {
      const Vector b = vec_from(field(doc, "budgets", w), w + ".budgets");
      s.budgets.assign(b.data(), b.data() + b.size());
    }
    if (doc.contains("rhos")) {
      const Vector r = vec_from(doc["rhos"], w + ".rhos");
      s.rhos.assign(r.data(), r.data() + r.size());
    }
    if (doc.contains("ratios")) {
      const json& r = array(doc["ratios"], w + ".ratios");
      for (std::size_t i = 0; i < r.size(); ++i) s.ratios.push_back(small_int(r[i], w + ".ratios[" + std::to_string(i) + "]"));
    }
    if (doc.contains("nu")) s.nu = number(doc["nu"], w + ".nu");
    s.seeds = read_seeds(field(doc, "seeds", w), w + ".seeds");
    if (doc.contains("n_test")) s.n_test = small_int(doc["n_test"], w + ".n_test");
    if (doc.contains("slhd_iters")) s.slhd_iters = small_int(doc["slhd_iters"], w + ".slhd_iters");
    if (doc.contains("mle")) read_mle(doc["mle"], s.mle, w + ".mle");
    if (doc.contains("jobs")) s.jobs = small_int(doc["jobs"], w + ".jobs");
    if (s.budgets.empty()) fail(ErrorKind::InvalidArgument, w + ".budgets: no budgets");
    if (s.n_test < 0 || s.slhd_iters < 0 || s.jobs < 1) fail(ErrorKind::InvalidArgument, w + ": negative count or jobs < 1");
  }
  return cfg;
}

json to_json(const BenchConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  if (cfg.type == BenchConfig::Type::Table) {
    const ExperimentConfig& e = cfg.table;
    j["type"] = "table";
    j["family"] = to_string(e.family);
    json models = json::array();
    for (ModelKind k : e.models) models.push_back(to_string(k));
    j["models"] = models;
    json sizes = json::array();
    for (const auto& s : e.size_sets) sizes.push_back(keyed(s));
    j["sizes"] = sizes;
    j["seeds"] = e.seeds;
    j["n_test"] = e.n_test;
    j["slhd_iters"] = e.slhd_iters;
    j["mle"] = mle_json(e.model.mle);
    j["mc"] = {{"samples", e.model.mc.samples}};
    j["welch"] = {{"mode", window_mode_text(e.welch.mode)},
                  {"medium_half_width", e.welch.medium_half_width},
                  {"low_half_width", e.welch.low_half_width},
                  {"qmc_points", e.welch.qmc_points}};
    j["kernels"] = {{"hf", to_string(e.model.hf_family)},
                    {"linear", to_string(e.model.linear_family)},
                    {"trend", to_string(e.model.trend)}};
    j["curve_seed"] = e.curve_seed ? json(*e.curve_seed) : json(nullptr);
    j["jobs"] = e.jobs;
  } else {
    const DesignStudyConfig& s = cfg.study;
    j["type"] = "design_study";
    j["family"] = to_string(s.family);
    j["costs"] = keyed(s.costs);
    j["budgets"] = s.budgets;
    j["rhos"] = s.rhos;
    j["ratios"] = s.ratios;
    j["nu"] = s.nu;
    j["seeds"] = s.seeds;
    j["n_test"] = s.n_test;
    j["slhd_iters"] = s.slhd_iters;
    j["mle"] = mle_json(s.mle);
    j["jobs"] = s.jobs;
  }
  return j;
}

void write_metrics_csv(const fs::path& path, const MetricReport& report) {
  std::string s = "model,seed,rmse,prmse,n_root,status\n";
  for (const MetricRow& r : report.rows) {
    s += r.model + ',' + std::to_string(r.seed) + ',' + format_number(r.rmse) + ',' + format_number(r.p_rmse) + ',' +
         std::to_string(r.n_root) + ',' + json(r.status).dump() + '\n';
  }
  write_text(path, s);
}

void write_median_csv(const fs::path& path, const MetricReport& report, const std::vector<ModelKind>& models) {
  std::vector<int> n_roots;
  for (const MetricRow& r : report.rows)
    if (std::find(n_roots.begin(), n_roots.end(), r.n_root) == n_roots.end()) n_roots.push_back(r.n_root);
  std::string s = "model,n_root,median_rmse,median_prmse\n";
  for (int n : n_roots) {
    for (ModelKind k : models) {
      const std::string name(to_string(k));
      s += name + ',' + std::to_string(n) + ',' + format_number(report.median_rmse(name, n)) + ',' +
           format_number(report.median_p_rmse(name, n)) + '\n';
    }
  }
  write_text(path, s);
}

void write_curves_csv(const fs::path& path, const MetricReport& report) {
  std::string s = "model,n_root,point_index";
  const Eigen::Index d = report.curves.empty() ? 0 : report.curves.front().X.cols();
  for (Eigen::Index l = 0; l < d; ++l) s += ",x" + std::to_string(l + 1);
  s += ",truth,mean,lower,upper\n";
  for (const PredictionCurve& c : report.curves) {
    for (Eigen::Index i = 0; i < c.X.rows(); ++i) {
      const double sd = std::sqrt(std::max(0.0, c.variance[i]));
      s += c.model + ',' + std::to_string(c.n_root) + ',' + std::to_string(i);
      for (Eigen::Index l = 0; l < d; ++l) s += ',' + format_number(c.X(i, l));
      s += ',' + format_number(c.truth[i]) + ',' + format_number(c.mean[i]) + ',' +
           format_number(c.mean[i] - kZ975 * sd) + ',' + format_number(c.mean[i] + kZ975 * sd) + '\n';
    }
  }
  write_text(path, s);
}

void write_design_rows_csv(const fs::path& path, const DesignStudyReport& report) {
  std::string s = "strategy,budget,seed,sizes,rmse,status\n";
  for (const DesignStudyRow& r : report.rows) {
    std::string sizes;
    for (const auto& [t, n] : r.sizes) sizes += (sizes.empty() ? "" : ";") + std::to_string(t) + ":" + std::to_string(n);
    s += r.strategy + ',' + format_number(r.budget) + ',' + std::to_string(r.seed) + ',' + sizes + ',' +
         format_number(r.rmse) + ',' + json(r.status).dump() + '\n';
  }
  write_text(path, s);
}

void write_budget_curve_csv(const fs::path& path, const DesignStudyReport& report, const DesignStudyConfig& cfg) {
  std::string s = "strategy,budget,median_rmse\n";
  for (const std::string& st : design_strategies(cfg)) {
    for (double b : cfg.budgets) s += st + ',' + format_number(b) + ',' + format_number(report.median_rmse(st, b)) + '\n';
  }
  write_text(path, s);
}

}  // namespace gmgp::io
