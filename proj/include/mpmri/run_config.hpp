#pragma once

#include "mpmri/models.hpp"
#include "mpmri/phantom.hpp"
#include "mpmri/preprocess.hpp"
#include "mpmri/training.hpp"

#include <filesystem>
#include <string>

namespace mpmri {

/// Everything one pipeline command needs; every random stream derives from seed.
struct RunConfig {
  std::filesystem::path data_root;
  std::filesystem::path labels_manifest;  // defaults to <data_root>/labels.tsv
  std::filesystem::path checkpoint_dir;
  std::filesystem::path report_dir;
  std::filesystem::path fold_plan;  // defaults to <checkpoint_dir>/fold_plan.json

  PreprocessConfig preprocess;
  TrainConfig train;
  ClassifierConfig model;
  PhantomSpec phantom;
  double test_fraction = 0.18;
  int folds_to_train = kNumFolds;
  std::uint64_t seed = 0;

  std::filesystem::path labels_path() const;
  std::filesystem::path fold_plan_path() const;

  /// Model configuration with the preprocessing output shape as its input shape.
  ClassifierConfig classifier() const;
  TrainConfig training() const;

  void validate() const;
};

/// JSON record of the effective configuration, written next to command outputs.
std::string describe(const RunConfig& config);

}  // namespace mpmri
