#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "mvcs/baselines.hpp"
#include "mvcs/conformal.hpp"
#include "mvcs/datagen.hpp"
#include "mvcs/mvcs_core.hpp"
#include "mvcs/regression.hpp"

// JSON documents for configs, fitted states and predictor checkpoints.
// Matrices are nested arrays (row-major lists of rows).

namespace mvcs {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const Json& j);

/// Missing keys keep their defaults, so partial configs are accepted.
Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json synthetic_config_to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const Json& j);
Json split_spec_to_json(const SplitSpec& s);
SplitSpec split_spec_from_json(const Json& j, SplitSpec base = {});

Json transform_to_json(const DatasetTransform& t);
DatasetTransform transform_from_json(const Json& j);

Json eval_report_to_json(const EvalReport& r, bool with_points = false);

Json dc_state_to_json(const DcState& s);
Json single_norm_state_to_json(const SingleNormState& s);
Json multi_norm_state_to_json(const MultiNormState& s);

/// A fitted predictor plus the preprocessing it expects on raw data.
struct Checkpoint {
  std::unique_ptr<SetPredictor> predictor;
  DatasetTransform transform;
  double alpha = 0.1;
  Json meta = Json::object();
};

Json predictor_to_json(const SetPredictor& p);
std::unique_ptr<SetPredictor> predictor_from_json(const Json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Json read_json_file(const std::string& path);
void write_json_file(const Json& j, const std::string& path);

}  // namespace mvcs
