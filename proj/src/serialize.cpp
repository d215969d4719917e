#include "mvcs/serialize.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

namespace mvcs {

namespace {

// JSON has no infinity; thresholds may legitimately be +inf.
Json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

double real_from_json(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("json: unexpected string for a real: " + s);
  }
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("json: matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw std::invalid_argument("json: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json mlp_to_json(const Mlp& net) {
  Json j;
  j["widths"] = net.widths;
  j["activation"] = "relu";
  j["weights"] = Json::array();
  j["biases"] = Json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    j["weights"].push_back(matrix_to_json(net.weights[l]));
    j["biases"].push_back(vector_to_json(net.biases[l]));
  }
  return j;
}

Mlp mlp_from_json(const Json& j) {
  Mlp net = Mlp::zeros(j.at("widths").get<std::vector<int>>());
  const Json& w = j.at("weights");
  const Json& b = j.at("biases");
  if (w.size() != net.weights.size() || b.size() != net.biases.size()) {
    throw std::invalid_argument("json: layer count does not match widths");
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    net.weights[l] = matrix_from_json(w.at(l));
    net.biases[l] = vector_from_json(b.at(l));
  }
  net.validate();
  return net;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"batch_size", c.batch_size},
          {"epochs_warm", c.epochs_warm},
          {"epochs_matrix", c.epochs_matrix},
          {"epochs_joint", c.epochs_joint},
          {"epochs_pinball", c.epochs_pinball},
          {"lr_warm", c.lr_warm},
          {"lr_model", c.lr_model},
          {"lr_matrix", c.lr_matrix},
          {"lr_p", c.lr_p},
          {"lr_pinball", c.lr_pinball},
          {"hidden_center", c.hidden_center},
          {"layers_center", c.layers_center},
          {"hidden_matrix", c.hidden_matrix},
          {"layers_matrix", c.layers_matrix},
          {"p_init", c.p_init},
          {"learn_p", c.learn_p},
          {"m_neighbors", c.m_neighbors},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  read_if(j, "alpha", c.alpha);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "epochs_warm", c.epochs_warm);
  read_if(j, "epochs_matrix", c.epochs_matrix);
  read_if(j, "epochs_joint", c.epochs_joint);
  read_if(j, "epochs_pinball", c.epochs_pinball);
  read_if(j, "lr_warm", c.lr_warm);
  read_if(j, "lr_model", c.lr_model);
  read_if(j, "lr_matrix", c.lr_matrix);
  read_if(j, "lr_p", c.lr_p);
  read_if(j, "lr_pinball", c.lr_pinball);
  read_if(j, "hidden_center", c.hidden_center);
  read_if(j, "layers_center", c.layers_center);
  read_if(j, "hidden_matrix", c.hidden_matrix);
  read_if(j, "layers_matrix", c.layers_matrix);
  read_if(j, "p_init", c.p_init);
  read_if(j, "learn_p", c.learn_p);
  read_if(j, "m_neighbors", c.m_neighbors);
  read_if(j, "seed", c.seed);
  return c;
}

Json synthetic_config_to_json(const SyntheticConfig& c) {
  Json j = {{"d", c.d},
            {"k", c.k},
            {"n", c.n},
            {"anchors", c.anchors},
            {"noise", c.noise == NoiseKind::gaussian ? "gaussian" : "exponential"},
            {"transform_fixed", c.transform_fixed},
            {"fixed_radius", c.fixed_radius},
            {"seed", c.seed}};
  if (c.has_parameters()) {
    Json p;
    p["anchor_points"] = Json::array();
    p["rotations"] = Json::array();
    for (const Vector& a : c.anchor_points) p["anchor_points"].push_back(vector_to_json(a));
    for (const Matrix& r : c.rotations) p["rotations"].push_back(matrix_to_json(r));
    p["v"] = vector_to_json(c.v);
    p["beta"] = matrix_to_json(c.beta);
    p["j2"] = matrix_to_json(c.j2);
    j["parameters"] = std::move(p);
  }
  return j;
}

SyntheticConfig synthetic_config_from_json(const Json& j) {
  SyntheticConfig c;
  read_if(j, "d", c.d);
  read_if(j, "k", c.k);
  read_if(j, "n", c.n);
  read_if(j, "anchors", c.anchors);
  if (j.contains("noise")) {
    const auto s = j.at("noise").get<std::string>();
    if (s == "gaussian") {
      c.noise = NoiseKind::gaussian;
    } else if (s == "exponential") {
      c.noise = NoiseKind::exponential;
    } else {
      throw std::invalid_argument("synthetic config: unknown noise kind '" + s + "'");
    }
  }
  read_if(j, "transform_fixed", c.transform_fixed);
  read_if(j, "fixed_radius", c.fixed_radius);
  read_if(j, "seed", c.seed);
  if (j.contains("parameters")) {
    const Json& p = j.at("parameters");
    for (const Json& a : p.at("anchor_points")) c.anchor_points.push_back(vector_from_json(a));
    for (const Json& r : p.at("rotations")) c.rotations.push_back(matrix_from_json(r));
    const Json& v = p.at("v");
    // A d x k matrix is accepted; its first column is used.
    c.v = v.size() && v.at(0).is_array() ? Vector(matrix_from_json(v).col(0)) : vector_from_json(v);
    c.beta = matrix_from_json(p.at("beta"));
    c.j2 = matrix_from_json(p.at("j2"));
  }
  c.validate();
  return c;
}

Json split_spec_to_json(const SplitSpec& s) {
  return {{"train", s.train}, {"val", s.val}, {"calib", s.calib}, {"test", s.test}, {"seed", s.seed}};
}

SplitSpec split_spec_from_json(const Json& j, SplitSpec s) {
  read_if(j, "train", s.train);
  read_if(j, "val", s.val);
  read_if(j, "calib", s.calib);
  read_if(j, "test", s.test);
  read_if(j, "seed", s.seed);
  return s;
}

Json transform_to_json(const DatasetTransform& t) {
  auto cols = [](const std::vector<QuantileTransform>& v) {
    Json a = Json::array();
    for (const auto& q : v) a.push_back({{"identity", q.identity}, {"knots", q.knots}, {"levels", q.levels}});
    return a;
  };
  return {{"x", cols(t.x)}, {"y", cols(t.y)}};
}

DatasetTransform transform_from_json(const Json& j) {
  auto cols = [](const Json& a) {
    std::vector<QuantileTransform> v;
    for (const Json& q : a) {
      QuantileTransform t;
      t.identity = q.at("identity").get<bool>();
      t.knots = q.at("knots").get<std::vector<double>>();
      t.levels = q.at("levels").get<std::vector<double>>();
      v.push_back(std::move(t));
    }
    return v;
  };
  DatasetTransform t;
  if (j.is_null()) return t;
  t.x = cols(j.at("x"));
  t.y = cols(j.at("y"));
  return t;
}

Json eval_report_to_json(const EvalReport& r, bool with_points) {
  Json j = {{"coverage", r.coverage},
            {"mean_normalized_volume", real_to_json(r.mean_normalized_volume)},
            {"n_test", r.n_test},
            {"covered", r.covered}};
  if (with_points) {
    Json pts = Json::array();
    for (double v : r.per_point_volumes) pts.push_back(real_to_json(v));
    j["per_point_volumes"] = std::move(pts);
  }
  return j;
}

Json dc_state_to_json(const DcState& s) {
  return {{"lambda", matrix_to_json(s.lambda)}, {"eta", vector_to_json(s.eta)}, {"objective_trace", s.objective_trace}};
}

Json single_norm_state_to_json(const SingleNormState& s) {
  return {{"a", matrix_to_json(s.a)},
          {"mu", vector_to_json(s.mu)},
          {"p_raw", s.p_raw},
          {"p", s.effective_p()},
          {"objective_trace", s.objective_trace}};
}

Json multi_norm_state_to_json(const MultiNormState& s) {
  Json d = Json::array();
  for (const Vector& v : s.d_raw) d.push_back(vector_to_json(v));
  return {{"q_raw", matrix_to_json(s.q_raw)}, {"d_raw", d},          {"p_raw", s.p_raw},
          {"mu", vector_to_json(s.mu)},       {"empty_orthants", s.empty_orthants}, {"objective_trace", s.objective_trace}};
}

Json predictor_to_json(const SetPredictor& p) {
  Json j;
  j["method"] = p.method();
  j["q_hat"] = p.q_hat ? real_to_json(*p.q_hat) : Json(nullptr);
  if (const auto* a = dynamic_cast<const AdaptivePredictor*>(&p)) {
    j["center"] = mlp_to_json(a->center.net);
    j["p_raw"] = a->p_raw;
    j["p"] = a->p();
    j["scale"] = a->scale;
    if (a->matrix) {
      j["matrix"] = mlp_to_json(a->matrix->net);
      j["k"] = a->matrix->k;
    } else {
      j["global_a"] = matrix_to_json(a->global_a);
    }
  } else if (const auto* q = dynamic_cast<const QuantileNets*>(&p)) {
    j["lower"] = mlp_to_json(q->lower);
    j["upper"] = mlp_to_json(q->upper);
    j["tilde_alpha"] = q->tilde_alpha;
  } else if (const auto* c = dynamic_cast<const CovBaseline*>(&p)) {
    j["center"] = mlp_to_json(c->center.net);
    j["sigma"] = matrix_to_json(c->sigma);
    j["sigma_half_inv"] = matrix_to_json(c->sigma_half_inv);
  } else if (const auto* l = dynamic_cast<const LocalCovBaseline*>(&p)) {
    j["center"] = mlp_to_json(l->center.net);
    j["train_x"] = matrix_to_json(l->train_x);
    j["train_residuals"] = matrix_to_json(l->train_residuals);
    j["m_neighbors"] = l->m_neighbors;
  } else {
    throw std::invalid_argument("predictor_to_json: unsupported predictor type " + p.method());
  }
  return j;
}

std::unique_ptr<SetPredictor> predictor_from_json(const Json& j) {
  const auto method = j.at("method").get<std::string>();
  std::unique_ptr<SetPredictor> out;
  if (method == "mvcs_adaptive" || method == "mvcs_global") {
    auto a = std::make_unique<AdaptivePredictor>();
    a->center.net = mlp_from_json(j.at("center"));
    a->p_raw = j.at("p_raw").get<double>();
    read_if(j, "scale", a->scale);
    if (method == "mvcs_adaptive") {
      a->matrix = MatrixModel{mlp_from_json(j.at("matrix")), j.at("k").get<int>()};
    } else {
      a->global_a = matrix_from_json(j.at("global_a"));
    }
    out = std::move(a);
  } else if (method == "naive_qr") {
    auto q = std::make_unique<QuantileNets>();
    q->lower = mlp_from_json(j.at("lower"));
    q->upper = mlp_from_json(j.at("upper"));
    q->tilde_alpha = j.at("tilde_alpha").get<double>();
    out = std::move(q);
  } else if (method == "emp_cov") {
    auto c = std::make_unique<CovBaseline>();
    c->center.net = mlp_from_json(j.at("center"));
    c->sigma = matrix_from_json(j.at("sigma"));
    c->sigma_half_inv = matrix_from_json(j.at("sigma_half_inv"));
    out = std::move(c);
  } else if (method == "local_cov") {
    auto l = std::make_unique<LocalCovBaseline>();
    l->center.net = mlp_from_json(j.at("center"));
    l->train_x = matrix_from_json(j.at("train_x"));
    l->train_residuals = matrix_from_json(j.at("train_residuals"));
    l->m_neighbors = j.at("m_neighbors").get<int>();
    out = std::move(l);
  } else {
    throw std::invalid_argument("predictor_from_json: unknown method '" + method + "'");
  }
  if (j.contains("q_hat") && !j.at("q_hat").is_null()) out->q_hat = real_from_json(j.at("q_hat"));
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (!ckpt.predictor) throw std::invalid_argument("save_checkpoint: no predictor");
  Json j;
  j["predictor"] = predictor_to_json(*ckpt.predictor);
  j["transform"] = ckpt.transform.empty() ? Json(nullptr) : transform_to_json(ckpt.transform);
  j["alpha"] = ckpt.alpha;
  j["meta"] = ckpt.meta;
  write_json_file(j, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const Json j = read_json_file(path);
  Checkpoint c;
  c.predictor = predictor_from_json(j.at("predictor"));
  if (j.contains("transform")) c.transform = transform_from_json(j.at("transform"));
  read_if(j, "alpha", c.alpha);
  if (j.contains("meta")) c.meta = j.at("meta");
  return c;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace mvcs
