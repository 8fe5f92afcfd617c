#include "mpmri/training.hpp"
#include "mpmri/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <unordered_set>

namespace mpmri {
namespace fs = std::filesystem;

namespace {

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXf>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

FoldPlan make_fold_plan(std::span<const PatientStudies> patients, double test_fraction, std::uint64_t seed,
                        int num_folds) {
  if (num_folds < 2) throw ValidationError("need at least 2 folds");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ValidationError("test fraction must lie in [0, 1)");
  if (patients.size() < 10)
    throw ValidationError("need at least 10 patients for a fold plan, got " + std::to_string(patients.size()));

  std::vector<std::string> ids;
  ids.reserve(patients.size());
  for (const auto& p : patients) ids.push_back(p.patient_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ValidationError("patient ids must be unique in a fold plan");

  auto rng = substream(seed, "split");
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  const auto n_test = static_cast<std::ptrdiff_t>(std::llround(test_fraction * static_cast<double>(n)));
  const auto remaining = n - n_test;
  if (remaining < num_folds)
    throw ValidationError("only " + std::to_string(remaining) + " patients left for " + std::to_string(num_folds) +
                          " validation groups");

  FoldPlan plan;
  plan.seed = seed;
  plan.test_fraction = test_fraction;
  plan.test_patients.assign(ids.begin(), ids.begin() + n_test);
  std::sort(plan.test_patients.begin(), plan.test_patients.end());

  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(num_folds));
  const auto base = remaining / num_folds, extra = remaining % num_folds;
  auto it = ids.begin() + n_test;
  for (std::ptrdiff_t g = 0; g < num_folds; ++g) {
    const auto size = base + (g < extra ? 1 : 0);
    groups[static_cast<std::size_t>(g)].assign(it, it + size);
    std::sort(groups[static_cast<std::size_t>(g)].begin(), groups[static_cast<std::size_t>(g)].end());
    it += size;
  }
  for (int k = 0; k < num_folds; ++k) {
    FoldSplit split;
    split.val_patients = groups[static_cast<std::size_t>(k)];
    for (int g = 0; g < num_folds; ++g)
      if (g != k)
        split.train_patients.insert(split.train_patients.end(), groups[static_cast<std::size_t>(g)].begin(),
                                    groups[static_cast<std::size_t>(g)].end());
    std::sort(split.train_patients.begin(), split.train_patients.end());
    plan.folds.push_back(std::move(split));
  }
  return plan;
}

void write_fold_plan(const FoldPlan& plan, const fs::path& path) {
  nlohmann::ordered_json j;
  j["seed"] = plan.seed;
  j["test_fraction"] = plan.test_fraction;
  j["test_patients"] = plan.test_patients;
  j["folds"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    nlohmann::ordered_json f;
    f["fold"] = k;
    f["train_patients"] = plan.folds[k].train_patients;
    f["val_patients"] = plan.folds[k].val_patients;
    j["folds"].push_back(std::move(f));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write fold plan " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing fold plan " + path.string());
}

FoldPlan read_fold_plan(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fold plan " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    FoldPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.test_fraction = j.at("test_fraction").get<double>();
    plan.test_patients = j.at("test_patients").get<std::vector<std::string>>();
    for (const auto& f : j.at("folds")) {
      FoldSplit split;
      split.train_patients = f.at("train_patients").get<std::vector<std::string>>();
      split.val_patients = f.at("val_patients").get<std::vector<std::string>>();
      plan.folds.push_back(std::move(split));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed fold plan " + path.string() + ": " + e.what());
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");
  if (epochs <= 0) throw ValidationError("epoch count must be positive");
}

std::vector<std::size_t> Dataset::indices_for(const std::vector<std::string>& patients) const {
  const std::unordered_set<std::string> wanted(patients.begin(), patients.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (wanted.count(samples_[i].patient_id) != 0) out.push_back(i);
  return out;
}

Dataset make_dataset(const std::vector<Study>& studies, const PreprocessConfig& config,
                     std::vector<std::string>* failures) {
  Dataset data;
  for (const auto& study : studies) {
    for (const auto& series : study.series) {
      if (!series.label) continue;
      try {
        Sample s;
        s.input = preprocess_chain(series, config);
        s.label = index_of(*series.label);
        s.patient_id = study.patient_id.empty() ? series.patient_id : study.patient_id;
        s.study_uid = study.study_uid;
        s.b_value = series.b_value;
        data.add(std::move(s));
      } catch (const std::exception& e) {
        if (failures != nullptr) failures->push_back(series.series_uid + ": " + e.what());
      }
    }
  }
  return data;
}

double validation_accuracy(Classifier<float>& model, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const Sample& s = data.fetch(i);
    const nn::Batch<float> batch{as_feature_map<float>(s.input.voxels)};
    const auto logits = model.forward(batch, false);
    if (argmax_lowest(logits.col(0)) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

FoldResult train_fold(int fold, const FoldPlan& plan, const TrainConfig& config, const ClassifierConfig& model_config,
                      const Dataset& data, const TrainHooks& hooks) {
  config.validate();
  if (fold < 0 || fold >= static_cast<int>(plan.folds.size()))
    throw ValidationError("fold " + std::to_string(fold) + " is not in the plan");
  const FoldSplit& split = plan.folds[static_cast<std::size_t>(fold)];
  const auto train_idx = data.indices_for(split.train_patients);
  const auto val_idx = data.indices_for(split.val_patients);
  if (train_idx.empty()) throw TrainingError("fold " + std::to_string(fold) + ": empty training set");
  if (val_idx.empty()) throw TrainingError("fold " + std::to_string(fold) + ": empty validation set");

  Classifier<float> model(model_config, substream_seed(config.seed, "init", static_cast<std::uint64_t>(fold)));
  nn::AdamOptions adam = config.adam;
  adam.learning_rate = config.learning_rate;
  nn::Adam<float> optimizer(model.parameters(), adam);
  auto shuffle_rng = substream(config.seed, "shuffle", static_cast<std::uint64_t>(fold));
  auto augment_rng = substream(config.seed, "augment", static_cast<std::uint64_t>(fold));

  FoldResult result;
  double best_accuracy = -1.0;
  int best_epoch = 0;
  ModelState<float> best_state;
  std::vector<std::size_t> order = train_idx;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      nn::Batch<float> inputs;
      std::vector<int> labels;
      std::string uids;
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = data.fetch(order[b]);
        inputs.push_back(
            as_feature_map<float>(augment_rot90(s.input.voxels, augment_rng, config.rotation_probability)));
        labels.push_back(s.label);
        uids += (uids.empty() ? "" : ", ") + s.input.series_uid;
      }
      try {
        loss_sum += training_step(model, optimizer, inputs, labels, config.batch_size);
      } catch (const TrainingError& e) {
        throw TrainingError("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " batch [" + uids +
                            "]: " + e.what());
      }
      ++batches;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.mean_train_loss = loss_sum / static_cast<double>(batches);
    record.val_accuracy = validation_accuracy(model, data, val_idx);
    if (hooks.accuracy_override) record.val_accuracy = hooks.accuracy_override(epoch, record.val_accuracy);
    if (record.val_accuracy > best_accuracy) {
      best_accuracy = record.val_accuracy;
      best_epoch = epoch;
      best_state = model.state();
    }
    result.history.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(fold, record);
  }

  auto& m = result.checkpoint.manifest;
  m.config = model_config;
  m.class_order = canonical_class_order();
  m.fold = fold;
  m.best_val_accuracy = best_accuracy;
  m.best_epoch = best_epoch;
  m.epochs_run = config.epochs;
  m.seed = config.seed;
  m.parameter_count = model.parameter_count();
  m.weights_file = "fold_" + std::to_string(fold) + ".weights";
  result.checkpoint.state = std::move(best_state);
  return result;
}

void write_epoch_log(const std::vector<EpochRecord>& history, std::ostream& out) {
  out << "epoch,mean_train_loss,val_accuracy\n";
  out << std::fixed << std::setprecision(8);
  for (const auto& r : history) out << r.epoch << ',' << r.mean_train_loss << ',' << r.val_accuracy << '\n';
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  save_weights(checkpoint.state, dir / checkpoint.manifest.weights_file);
  write_manifest(checkpoint.manifest, dir / ("fold_" + std::to_string(checkpoint.manifest.fold) + ".json"));
}

ModelCheckpoint load_checkpoint(const fs::path& manifest_path) {
  ModelCheckpoint c;
  c.manifest = read_manifest(manifest_path);
  c.state = load_weights(manifest_path.parent_path() / c.manifest.weights_file);
  return c;
}

}  // namespace mpmri
