#pragma once

#include "mpmri/ingest.hpp"
#include "mpmri/models.hpp"
#include "mpmri/preprocess.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mpmri {

using Probabilities = Eigen::VectorXd;

/// Index of the largest component; ties go to the lowest index.
int argmax_lowest(const Eigen::Ref<const Probabilities>& p);

struct EnsemblePrediction {
  std::string series_uid;
  std::string study_uid;
  std::optional<double> b_value;
  Probabilities mean_probabilities;
  std::vector<Probabilities> per_fold_probabilities;
  std::vector<int> fold_predictions;  // argmax of each fold
  int predicted = 0;

  SeriesLabel label() const { return label_from_index(predicted); }
};

/**
 * Averages per-fold class probabilities and takes the argmax. Each component
 * is summed in sorted order, so the result does not depend on fold order.
 */
EnsemblePrediction combine_fold_probabilities(std::vector<Probabilities> per_fold);

/// Frozen fold classifiers that share architecture, input shape and class order.
class Ensemble {
 public:
  Ensemble(std::vector<CheckpointManifest> manifests, std::vector<ModelState<float>> states);

  /// Loads fold manifests and their weight files; mismatched members are a DataError.
  static Ensemble load(const std::vector<std::filesystem::path>& manifest_paths);

  /// Every fold_<k>.json in dir, ordered by file name.
  static std::vector<std::filesystem::path> find_manifests(const std::filesystem::path& dir);

  std::size_t size() const { return members_.size(); }
  const ClassifierConfig& config() const { return manifests_.front().config; }
  const std::vector<CheckpointManifest>& manifests() const { return manifests_; }

  /// Softmax of every member in evaluation mode, then the probability mean.
  EnsemblePrediction predict(const ModelInput& input);

 private:
  std::vector<CheckpointManifest> manifests_;
  std::vector<Classifier<float>> members_;
};

/**
 * One prediction per series of the study (evaluation-mode preprocessing).
 * Series that fail preprocessing are skipped and described in failures.
 */
std::vector<EnsemblePrediction> predict_study(const Study& study, Ensemble& ensemble,
                                              const PreprocessConfig& config = {},
                                              std::vector<std::string>* failures = nullptr);

struct HangingEntry {
  std::string series_uid;
  SeriesLabel label = SeriesLabel::T1wPre;
  std::optional<double> b_value;
};

struct HangingOrder {
  std::string study_uid;
  std::vector<HangingEntry> series;
};

/// Stable sort by (label index, b-value within DWI, series uid).
HangingOrder hang(const std::vector<EnsemblePrediction>& predictions);

/// One line per series: uid, label, b-value, 8 mean probabilities (6 decimals), per-fold argmax.
void write_predictions(const std::vector<EnsemblePrediction>& predictions, std::ostream& out);
std::vector<EnsemblePrediction> read_predictions(std::istream& in);

void write_hanging_order(const HangingOrder& order, std::ostream& out);

}  // namespace mpmri
