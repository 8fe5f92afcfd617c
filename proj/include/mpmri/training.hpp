#pragma once

#include "mpmri/models.hpp"
#include "mpmri/nn/adam.hpp"
#include "mpmri/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mpmri {

inline constexpr int kNumFolds = 5;

struct PatientStudies {
  std::string patient_id;
  std::vector<std::string> study_ids;
};

struct FoldSplit {
  std::vector<std::string> train_patients;
  std::vector<std::string> val_patients;
};

/// Patient-level split: one fixed test set, the rest cross-validated.
struct FoldPlan {
  std::vector<FoldSplit> folds;
  std::vector<std::string> test_patients;
  double test_fraction = 0;
  std::uint64_t seed = 0;
};

/**
 * Carves round(test_fraction * n) patients into a fixed test set, then deals
 * the remaining patients into num_folds near-equal validation groups; fold k
 * trains on every other group. Patients are ordered by id before the seeded
 * shuffle, so the plan does not depend on input order.
 */
FoldPlan make_fold_plan(std::span<const PatientStudies> patients, double test_fraction = 0.18,
                        std::uint64_t seed = 0, int num_folds = kNumFolds);

void write_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);
FoldPlan read_fold_plan(const std::filesystem::path& path);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 2;
  int epochs = 25;
  nn::AdamOptions adam{};  // learning_rate above takes precedence
  std::uint64_t seed = 0;
  double rotation_probability = 0.5;

  void validate() const;
};

/// A preprocessed, labeled series.
struct Sample {
  ModelInput input;
  int label = 0;
  std::string patient_id;
  std::string study_uid;
  std::optional<double> b_value;
};

/// Training samples with an optional record of which patients were read.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}

  std::size_t size() const { return samples_.size(); }
  void add(Sample s) { samples_.push_back(std::move(s)); }

  /// Reads one sample; records its patient when an access log is attached.
  const Sample& fetch(std::size_t i) const {
    const Sample& s = samples_.at(i);
    if (access_log_ != nullptr) access_log_->insert(s.patient_id);
    return s;
  }

  /// Patient id of a sample without counting as a read of its voxels.
  const std::string& patient_of(std::size_t i) const { return samples_.at(i).patient_id; }

  void attach_access_log(std::set<std::string>* log) { access_log_ = log; }

  std::vector<std::size_t> indices_for(const std::vector<std::string>& patients) const;

 private:
  std::vector<Sample> samples_;
  std::set<std::string>* access_log_ = nullptr;
};

/// Builds a Dataset from ingested studies; unlabeled series are skipped.
Dataset make_dataset(const std::vector<Study>& studies, const PreprocessConfig& config,
                     std::vector<std::string>* failures = nullptr);

/**
 * Mean cross-entropy of the batch, one backward pass and one Adam update.
 * Returns the loss before the update. Throws TrainingError on non-finite
 * loss or gradients.
 */
template <typename Scalar>
double training_step(Classifier<Scalar>& model, nn::Adam<Scalar>& optimizer, const nn::Batch<Scalar>& inputs,
                     std::span<const int> labels, int max_batch_size) {
  if (static_cast<int>(inputs.size()) > max_batch_size)
    throw ValidationError("batch of " + std::to_string(inputs.size()) + " exceeds batch size " +
                          std::to_string(max_batch_size));
  optimizer.zero_grad();
  const auto logits = model.forward(inputs, true);
  const auto lg = softmax_cross_entropy<Scalar>(logits, labels);
  if (!std::isfinite(lg.loss)) throw TrainingError("non-finite loss " + std::to_string(lg.loss));
  model.backward(lg.grad_logits);
  for (auto* p : model.parameters())
    if (!p->grad.allFinite()) throw TrainingError("non-finite gradient in " + p->name);
  optimizer.step();
  return lg.loss;
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_train_loss = 0;
  double val_accuracy = 0;
};

struct ModelCheckpoint {
  CheckpointManifest manifest;
  ModelState<float> state;
};

struct FoldResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  // Called after every epoch.
  std::function<void(int fold, const EpochRecord&)> on_epoch;
  // Overrides the measured validation accuracy (used to exercise checkpoint selection).
  std::function<double(int epoch, double measured)> accuracy_override;
};

/// Fraction of samples whose argmax prediction matches the label (evaluation mode).
double validation_accuracy(Classifier<float>& model, const Dataset& data, std::span<const std::size_t> indices);

/**
 * Trains one fold for exactly config.epochs epochs and keeps the parameters
 * of the epoch with the highest validation accuracy (ties keep the earlier
 * epoch). Only samples of the fold's train and validation patients are read.
 */
FoldResult train_fold(int fold, const FoldPlan& plan, const TrainConfig& config, const ClassifierConfig& model_config,
                      const Dataset& data, const TrainHooks& hooks = {});

void write_epoch_log(const std::vector<EpochRecord>& history, std::ostream& out);

/// fold_<k>.weights + fold_<k>.json in dir.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& dir);
ModelCheckpoint load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace mpmri
