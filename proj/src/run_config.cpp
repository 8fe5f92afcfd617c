#include "mpmri/run_config.hpp"

#include <json.hpp>

namespace mpmri {
namespace fs = std::filesystem;

fs::path RunConfig::labels_path() const {
  return labels_manifest.empty() ? data_root / "labels.tsv" : labels_manifest;
}

fs::path RunConfig::fold_plan_path() const {
  return fold_plan.empty() ? checkpoint_dir / "fold_plan.json" : fold_plan;
}

ClassifierConfig RunConfig::classifier() const {
  ClassifierConfig c = model;
  c.input_shape = preprocess.target_shape;
  return c;
}

TrainConfig RunConfig::training() const {
  TrainConfig t = train;
  t.seed = seed;
  t.rotation_probability = preprocess.rotation_probability;
  return t;
}

void RunConfig::validate() const {
  classifier().validate();
  training().validate();
  for (Index d : preprocess.target_shape)
    if (d <= 0) throw ValidationError("target shape must be positive");
  if (!(preprocess.target_spacing.array() > 0.0).all()) throw ValidationError("target spacing must be positive");
  if (!(preprocess.percentile_low >= 0 && preprocess.percentile_low < preprocess.percentile_high &&
        preprocess.percentile_high <= 100))
    throw ValidationError("percentiles must satisfy 0 <= low < high <= 100");
  if (!(preprocess.rotation_probability >= 0 && preprocess.rotation_probability <= 1))
    throw ValidationError("rotation probability must lie in [0, 1]");
  if (!(test_fraction >= 0 && test_fraction < 1)) throw ValidationError("test fraction must lie in [0, 1)");
  if (folds_to_train < 1 || folds_to_train > kNumFolds)
    throw ValidationError("folds to train must lie in 1.." + std::to_string(kNumFolds));
}

std::string describe(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["data_root"] = c.data_root.string();
  j["labels_manifest"] = c.labels_path().string();
  j["checkpoint_dir"] = c.checkpoint_dir.string();
  j["report_dir"] = c.report_dir.string();
  const auto& p = c.preprocess;
  j["preprocess"] = {{"target_spacing", {p.target_spacing[0], p.target_spacing[1], p.target_spacing[2]}},
                     {"target_shape", p.target_shape},
                     {"percentile_low", p.percentile_low},
                     {"percentile_high", p.percentile_high},
                     {"rotation_probability", p.rotation_probability}};
  const auto t = c.training();
  j["train"] = {{"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"adam_beta1", t.adam.beta1},
                {"adam_beta2", t.adam.beta2},
                {"adam_epsilon", t.adam.epsilon},
                {"test_fraction", c.test_fraction},
                {"folds_to_train", c.folds_to_train}};
  const auto m = c.classifier();
  j["model"] = {{"architecture", token(m.architecture)},
                {"growth_rate", m.growth_rate},
                {"block_layers", m.block_layers},
                {"compression", m.compression},
                {"init_features", m.init_features},
                {"resnet_blocks", m.resnet_blocks},
                {"input_shape", m.input_shape}};
  return j.dump(2);
}

}  // namespace mpmri
