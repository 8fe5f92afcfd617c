// mpmri: phantom generation, ingestion, splitting, training, prediction,
// evaluation and hanging-order emission for mpMRI series classification.

#include "mpmri/evaluation.hpp"
#include "mpmri/inference.hpp"
#include "mpmri/ingest.hpp"
#include "mpmri/phantom.hpp"
#include "mpmri/run_config.hpp"
#include "mpmri/training.hpp"
#include "mpmri/volume_archive.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace mpmri;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kTraining = 3 };

void ensure_parent(const fs::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw DataError("cannot create " + path.parent_path().string() + ": " + ec.message());
}

std::ofstream open_output(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void require_dir(const fs::path& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string("missing ") + what + " path");
  std::error_code ec;
  if (!fs::is_directory(p, ec)) throw DataError(std::string(what) + " " + p.string() + " is not a readable directory");
}

void require_file(const fs::path& p, const char* what) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw DataError(std::string(what) + " " + p.string() + " does not exist");
}

ScanResult scan_labeled(const RunConfig& cfg) {
  require_dir(cfg.data_root, "data root");
  require_file(cfg.labels_path(), "labels manifest");
  const auto labels = read_label_manifest(cfg.labels_path());
  auto scan = scan_study_tree(cfg.data_root, &labels);
  for (const auto& w : scan.report.warnings) std::cerr << "warning: " << w << '\n';
  return scan;
}

std::vector<PatientStudies> cohort(const std::vector<Study>& studies) {
  std::map<std::string, std::vector<std::string>> by_patient;
  for (const auto& s : studies) by_patient[s.patient_id].push_back(s.study_uid);
  std::vector<PatientStudies> out;
  for (auto& [id, uids] : by_patient) out.push_back({id, std::move(uids)});
  return out;
}

FoldPlan load_or_make_plan(const RunConfig& cfg, const std::vector<Study>& studies, bool write_if_absent) {
  const fs::path path = cfg.fold_plan_path();
  std::error_code ec;
  if (fs::exists(path, ec)) return read_fold_plan(path);
  const auto patients = cohort(studies);
  auto plan = make_fold_plan(patients, cfg.test_fraction, cfg.seed);
  if (write_if_absent) {
    ensure_parent(path);
    write_fold_plan(plan, path);
  }
  return plan;
}

std::vector<Study> studies_of(const std::vector<Study>& studies, const std::vector<std::string>& patients,
                              bool keep) {
  const std::set<std::string> set(patients.begin(), patients.end());
  std::vector<Study> out;
  for (const auto& s : studies)
    if ((set.count(s.patient_id) != 0) == keep) out.push_back(s);
  return out;
}

int cmd_phantom(RunConfig cfg, const fs::path& out) {
  if (out.empty()) throw ValidationError("phantom needs --out");
  cfg.phantom.seed = cfg.seed;
  cfg.phantom.validate();
  write_dicom_tree(generate_studies(cfg.phantom), out);
  std::cout << "wrote " << cfg.phantom.num_studies << " studies to " << out.string() << '\n';
  return kOk;
}

int cmd_ingest(const RunConfig& cfg, const fs::path& cache) {
  require_dir(cfg.data_root, "data root");
  std::optional<LabelManifest> labels;
  std::error_code ec;
  if (fs::is_regular_file(cfg.labels_path(), ec)) labels = read_label_manifest(cfg.labels_path());
  const auto scan = scan_study_tree(cfg.data_root, labels ? &*labels : nullptr);
  if (!cfg.report_dir.empty()) {
    auto out = open_output(cfg.report_dir / "ingest_report.json");
    write_ingest_report(scan.report, out);
  } else {
    write_ingest_report(scan.report, std::cout);
  }
  if (!cache.empty()) {
    fs::create_directories(cache, ec);
    if (ec) throw DataError("cannot create cache " + cache.string() + ": " + ec.message());
    for (const auto& study : scan.studies)
      for (const auto& series : study.series) {
        const auto input = preprocess_chain(series, cfg.preprocess);
        write_volume_archive(input.voxels, cfg.preprocess.target_spacing, cache / (series.series_uid + ".vol"));
      }
  }
  return kOk;
}

int cmd_split(const RunConfig& cfg) {
  const auto scan = scan_labeled(cfg);
  const auto plan = make_fold_plan(cohort(scan.studies), cfg.test_fraction, cfg.seed);
  ensure_parent(cfg.fold_plan_path());
  write_fold_plan(plan, cfg.fold_plan_path());
  std::cout << "test patients: " << plan.test_patients.size() << '\n';
  for (std::size_t k = 0; k < plan.folds.size(); ++k)
    std::cout << "fold " << k << ": train " << plan.folds[k].train_patients.size() << ", val "
              << plan.folds[k].val_patients.size() << '\n';
  return kOk;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.checkpoint_dir.empty()) throw ValidationError("train needs --checkpoints");
  const auto scan = scan_labeled(cfg);
  const auto plan = load_or_make_plan(cfg, scan.studies, true);
  std::vector<std::string> failures;
  const Dataset data = make_dataset(studies_of(scan.studies, plan.test_patients, false), cfg.preprocess, &failures);
  for (const auto& f : failures) std::cerr << "warning: skipped " << f << '\n';
  open_output(cfg.checkpoint_dir / "run.json") << describe(cfg) << '\n';

  for (int fold = 0; fold < cfg.folds_to_train; ++fold) {
    TrainHooks hooks;
    hooks.on_epoch = [](int k, const EpochRecord& r) {
      std::cerr << "fold " << k << " epoch " << r.epoch << " loss " << r.mean_train_loss << " val_acc "
                << r.val_accuracy << '\n';
    };
    FoldResult result;
    try {
      result = train_fold(fold, plan, cfg.training(), cfg.classifier(), data, hooks);
    } catch (const TrainingError& e) {
      std::cerr << "error: training fold " << fold << " failed: " << e.what() << '\n';
      return kTraining;
    }
    save_checkpoint(result.checkpoint, cfg.checkpoint_dir);
    auto log = open_output(cfg.checkpoint_dir / ("fold_" + std::to_string(fold) + "_epochs.csv"));
    write_epoch_log(result.history, log);
    std::cout << "fold " << fold << ": best epoch " << result.checkpoint.manifest.best_epoch << ", val accuracy "
              << result.checkpoint.manifest.best_val_accuracy << '\n';
  }
  return kOk;
}

void write_prediction_file(const std::vector<EnsemblePrediction>& p, std::uint64_t seed, const fs::path& path) {
  auto out = open_output(path);
  out << "# seed " << seed << '\n';
  write_predictions(p, out);
}

int cmd_predict(const RunConfig& cfg, const fs::path& study_dir, const fs::path& out_path) {
  require_dir(study_dir, "study directory");
  auto ensemble = Ensemble::load(Ensemble::find_manifests(cfg.checkpoint_dir));
  const auto scan = scan_study_tree(study_dir);
  if (scan.studies.empty()) throw DataError("no axial series found under " + study_dir.string());
  for (const auto& study : scan.studies) {
    std::vector<std::string> failures;
    const auto predictions = predict_study(study, ensemble, cfg.preprocess, &failures);
    for (const auto& f : failures) std::cerr << "warning: skipped " << f << '\n';
    fs::path path = out_path;
    if (path.empty() || scan.studies.size() > 1)
      path = (cfg.report_dir.empty() ? fs::path(".") : cfg.report_dir) / (study.study_uid + ".predictions.tsv");
    write_prediction_file(predictions, cfg.seed, path);
    std::cout << path.string() << '\n';
  }
  return kOk;
}

int cmd_hang(const RunConfig& cfg, const fs::path& predictions_path, const fs::path& study_dir,
             const fs::path& out_path) {
  std::vector<std::vector<EnsemblePrediction>> per_study;
  if (!predictions_path.empty()) {
    require_file(predictions_path, "prediction file");
    std::ifstream in(predictions_path);
    per_study.push_back(read_predictions(in));
  } else {
    require_dir(study_dir, "study directory");
    auto ensemble = Ensemble::load(Ensemble::find_manifests(cfg.checkpoint_dir));
    for (const auto& study : scan_study_tree(study_dir).studies)
      per_study.push_back(predict_study(study, ensemble, cfg.preprocess));
  }
  for (const auto& predictions : per_study) {
    const auto order = hang(predictions);
    if (out_path.empty() || per_study.size() > 1) {
      if (per_study.size() > 1 && !cfg.report_dir.empty()) {
        auto out = open_output(cfg.report_dir / (order.study_uid + ".hanging.txt"));
        out << "# seed " << cfg.seed << '\n';
        write_hanging_order(order, out);
      } else {
        write_hanging_order(order, std::cout);
      }
    } else {
      auto out = open_output(out_path);
      out << "# seed " << cfg.seed << '\n';
      write_hanging_order(order, out);
    }
  }
  return kOk;
}

void write_report_set(const MetricsReport& report, const fs::path& dir, const std::string& stem, std::uint64_t seed) {
  {
    auto out = open_output(dir / (stem + ".json"));
    write_report_json(report, out, seed);
  }
  open_output(dir / (stem + ".txt")) << render_table(report);
  {
    auto out = open_output(dir / (stem + "_confusion.csv"));
    write_confusion_csv(report.cm, out);
  }
  open_output(dir / (stem + "_confusion.txt")) << render_confusion_text(report.cm);
  auto svg = open_output(dir / (stem + "_confusion.svg"));
  write_confusion_svg(report.cm, svg, stem);
}

std::vector<EvaluatedSeries> evaluate_ensemble(Ensemble& ensemble, const std::vector<Study>& studies,
                                               const PreprocessConfig& pre,
                                               std::vector<EnsemblePrediction>* all_predictions) {
  std::vector<EvaluatedSeries> out;
  for (const auto& study : studies) {
    std::vector<std::string> failures;
    const auto predictions = predict_study(study, ensemble, pre, &failures);
    for (const auto& f : failures) std::cerr << "warning: skipped " << f << '\n';
    for (const auto& p : predictions) {
      const auto it = std::find_if(study.series.begin(), study.series.end(),
                                   [&](const SeriesVolume& s) { return s.series_uid == p.series_uid; });
      if (it == study.series.end() || !it->label) continue;
      out.push_back({study.study_uid, p.series_uid, index_of(*it->label), p.predicted, p.b_value});
      if (all_predictions != nullptr) all_predictions->push_back(p);
    }
  }
  return out;
}

int cmd_evaluate(const RunConfig& cfg, bool all_studies, const fs::path& compare_dir) {
  if (cfg.report_dir.empty()) throw ValidationError("evaluate needs --reports");
  auto ensemble = Ensemble::load(Ensemble::find_manifests(cfg.checkpoint_dir));
  std::optional<Ensemble> other;
  if (!compare_dir.empty()) other = Ensemble::load(Ensemble::find_manifests(compare_dir));
  const auto scan = scan_labeled(cfg);
  std::vector<Study> studies = scan.studies;
  if (!all_studies) {
    const fs::path plan_path = cfg.fold_plan_path();
    require_file(plan_path, "fold plan");
    studies = studies_of(scan.studies, read_fold_plan(plan_path).test_patients, true);
  }
  if (studies.empty()) throw DataError("no studies to evaluate");

  std::vector<EnsemblePrediction> predictions;
  const auto series = evaluate_ensemble(ensemble, studies, cfg.preprocess, &predictions);
  write_prediction_file(predictions, cfg.seed, cfg.report_dir / "predictions.tsv");
  const auto report = macro_report(confusion(series));
  write_report_set(report, cfg.report_dir, "report", cfg.seed);
  write_report_set(macro_report(confusion(collapse_dwi_duplicates(series))), cfg.report_dir, "report_dwi_collapsed",
                   cfg.seed);
  std::cout << render_table(report) << '\n' << render_confusion_text(report.cm);

  if (other) {
    const auto other_report = macro_report(confusion(evaluate_ensemble(*other, studies, cfg.preprocess, nullptr)));
    const auto cmp = compare_models(report, other_report, std::string(token(ensemble.config().architecture)),
                                    std::string(token(other->config().architecture)) + " (" +
                                        compare_dir.filename().string() + ")");
    open_output(cfg.report_dir / "comparison.txt") << render_comparison(cmp);
    std::cout << '\n' << render_comparison(cmp);
  }
  return kOk;
}

template <typename T, std::size_t N>
std::vector<T> to_vec(const std::array<T, N>& a) {
  return {a.begin(), a.end()};
}

template <typename T, std::size_t N>
void from_vec(std::array<T, N>& a, const std::vector<T>& v, const char* what) {
  if (v.size() != N) throw ValidationError(std::string(what) + " needs " + std::to_string(N) + " values");
  std::copy(v.begin(), v.end(), a.begin());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpMRI series classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a TOML/INI file (flags override it)");

  RunConfig cfg;
  std::string arch = "densenet121";
  std::vector<double> spacing = {1.5, 1.5, 7.8};
  std::vector<Index> shape = to_vec(cfg.preprocess.target_shape);
  std::vector<double> percentiles = {cfg.preprocess.percentile_low, cfg.preprocess.percentile_high};
  std::vector<int> blocks = to_vec(cfg.model.block_layers);
  std::vector<int> resnet_blocks = to_vec(cfg.model.resnet_blocks);
  std::vector<Index> image_shape = to_vec(cfg.phantom.image_shape);

  app.add_option("--seed", cfg.seed, "Seed of every random stream")->capture_default_str();
  app.add_option("--arch", arch, "Classifier architecture")
      ->check(CLI::IsMember({"densenet121", "resnet50", "tiny"}))
      ->capture_default_str();
  app.add_option("--data", cfg.data_root, "Root of the DICOM tree");
  app.add_option("--labels", cfg.labels_manifest, "Labels manifest (default <data>/labels.tsv)");
  app.add_option("--checkpoints", cfg.checkpoint_dir, "Checkpoint directory");
  app.add_option("--reports", cfg.report_dir, "Report directory");
  app.add_option("--plan", cfg.fold_plan, "Fold plan file (default <checkpoints>/fold_plan.json)");
  app.add_option("--spacing", spacing, "Target voxel spacing in mm")->expected(3)->capture_default_str();
  app.add_option("--shape", shape, "Model input shape")->expected(3)->capture_default_str();
  app.add_option("--percentiles", percentiles, "Normalization percentiles")->expected(2)->capture_default_str();
  app.add_option("--rotation-prob", cfg.preprocess.rotation_probability, "Rotation augmentation probability")
      ->capture_default_str();
  app.add_option("--lr", cfg.train.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--batch", cfg.train.batch_size, "Batch size")->capture_default_str();
  app.add_option("--epochs", cfg.train.epochs, "Epochs per fold")->capture_default_str();
  app.add_option("--test-fraction", cfg.test_fraction, "Fraction of patients held out for testing")
      ->capture_default_str();
  app.add_option("--growth", cfg.model.growth_rate, "DenseNet growth rate")->capture_default_str();
  app.add_option("--blocks", blocks, "DenseNet layers per block")->expected(4)->capture_default_str();
  app.add_option("--compression", cfg.model.compression, "DenseNet transition compression")->capture_default_str();
  app.add_option("--init-features", cfg.model.init_features, "Stem width")->capture_default_str();
  app.add_option("--resnet-blocks", resnet_blocks, "ResNet blocks per stage")->expected(4)->capture_default_str();

  auto* phantom = app.add_subcommand("phantom", "Generate a labeled phantom DICOM tree");
  fs::path phantom_out;
  phantom->add_option("--out", phantom_out, "Output directory")->required();
  phantom->add_option("--studies", cfg.phantom.num_studies, "Number of studies")->capture_default_str();
  phantom->add_option("--image-shape", image_shape, "Image shape")->expected(3)->capture_default_str();
  phantom->add_option("--dwi-bvalues", cfg.phantom.num_dwi_bvalues, "DWI series per study (1-3)")
      ->capture_default_str();
  phantom->add_option("--noise", cfg.phantom.noise_sigma, "Noise sigma")->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Scan a DICOM tree and write the ingestion report");
  fs::path cache;
  ingest->add_option("--cache", cache, "Write preprocessed volume archives here");

  auto* split = app.add_subcommand("split", "Write the patient-level fold plan");

  auto* train = app.add_subcommand("train", "Train the fold classifiers");
  train->add_option("--folds", cfg.folds_to_train, "Train only the first N folds")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Predict series labels of a study");
  fs::path study_dir, out_path;
  predict->add_option("--study", study_dir, "Study directory")->required();
  predict->add_option("--out", out_path, "Prediction file");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate the ensemble on the test patients");
  bool all_studies = false;
  fs::path compare_dir;
  evaluate->add_flag("--all", all_studies, "Evaluate every study instead of the test split");
  evaluate->add_option("--compare", compare_dir, "Second checkpoint directory for a side-by-side table");

  auto* hang_cmd = app.add_subcommand("hang", "Emit the hanging order of a study");
  fs::path predictions_path;
  hang_cmd->add_option("--predictions", predictions_path, "Prediction file");
  hang_cmd->add_option("--study", study_dir, "Study directory (predicted with --checkpoints)");
  hang_cmd->add_option("--out", out_path, "Hanging order file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    cfg.model.architecture = parse_architecture(arch);
    from_vec(cfg.preprocess.target_shape, shape, "--shape");
    from_vec(cfg.model.block_layers, blocks, "--blocks");
    from_vec(cfg.model.resnet_blocks, resnet_blocks, "--resnet-blocks");
    from_vec(cfg.phantom.image_shape, image_shape, "--image-shape");
    cfg.preprocess.target_spacing = Spacing3(spacing[0], spacing[1], spacing[2]);
    cfg.preprocess.percentile_low = percentiles[0];
    cfg.preprocess.percentile_high = percentiles[1];
    cfg.validate();

    if (phantom->parsed()) return cmd_phantom(cfg, phantom_out);
    if (ingest->parsed()) return cmd_ingest(cfg, cache);
    if (split->parsed()) return cmd_split(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (predict->parsed()) return cmd_predict(cfg, study_dir, out_path);
    if (evaluate->parsed()) return cmd_evaluate(cfg, all_studies, compare_dir);
    if (hang_cmd->parsed()) {
      if (predictions_path.empty() == study_dir.empty())
        throw ValidationError("hang needs exactly one of --predictions and --study");
      return cmd_hang(cfg, predictions_path, study_dir, out_path);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
