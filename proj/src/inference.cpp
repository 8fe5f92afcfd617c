#include "mpmri/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mpmri {
namespace fs = std::filesystem;

namespace {

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string format_b_value(const std::optional<double>& b) {
  if (!b) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", *b);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_double(const std::string& text, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError("prediction line " + std::to_string(line_no) + ": bad number '" + text + "'");
  }
}

}  // namespace

int argmax_lowest(const Eigen::Ref<const Probabilities>& p) {
  int best = 0;
  for (int i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

EnsemblePrediction combine_fold_probabilities(std::vector<Probabilities> per_fold) {
  if (per_fold.empty()) throw ValidationError("ensemble needs at least one fold");
  const Index classes = per_fold.front().size();
  for (const auto& p : per_fold)
    if (p.size() != classes) throw ValidationError("fold probability vectors differ in length");

  EnsemblePrediction out;
  out.mean_probabilities.resize(classes);
  std::vector<double> column(per_fold.size());
  for (Index c = 0; c < classes; ++c) {
    for (std::size_t f = 0; f < per_fold.size(); ++f) column[f] = per_fold[f][c];
    std::sort(column.begin(), column.end());
    double sum = 0;
    for (double v : column) sum += v;
    out.mean_probabilities[c] = sum / static_cast<double>(per_fold.size());
  }
  for (const auto& p : per_fold) out.fold_predictions.push_back(argmax_lowest(p));
  out.predicted = argmax_lowest(out.mean_probabilities);
  out.per_fold_probabilities = std::move(per_fold);
  return out;
}

Ensemble::Ensemble(std::vector<CheckpointManifest> manifests, std::vector<ModelState<float>> states)
    : manifests_(std::move(manifests)) {
  if (manifests_.empty()) throw DataError("ensemble has no checkpoints");
  if (manifests_.size() != states.size()) throw DataError("checkpoint manifests and weights differ in count");
  const auto& first = manifests_.front();
  if (first.class_order != canonical_class_order())
    throw DataError("checkpoint for fold " + std::to_string(first.fold) + " has a non-canonical class order");
  if (first.config.num_classes != static_cast<Index>(first.class_order.size()))
    throw DataError("checkpoint class order does not match its class count");
  for (const auto& m : manifests_) {
    if (m.class_order != first.class_order)
      throw DataError("class order of fold " + std::to_string(m.fold) + " differs from fold " +
                      std::to_string(first.fold));
    if (!(m.config == first.config))
      throw DataError("architecture or input shape of fold " + std::to_string(m.fold) + " differs from fold " +
                      std::to_string(first.fold));
  }
  for (std::size_t i = 0; i < manifests_.size(); ++i) {
    Classifier<float> model(manifests_[i].config, 0);
    model.load_state(states[i]);
    members_.push_back(std::move(model));
  }
}

Ensemble Ensemble::load(const std::vector<fs::path>& manifest_paths) {
  std::vector<CheckpointManifest> manifests;
  std::vector<ModelState<float>> states;
  for (const auto& path : manifest_paths) {
    manifests.push_back(read_manifest(path));
    states.push_back(load_weights(path.parent_path() / manifests.back().weights_file));
  }
  return Ensemble(std::move(manifests), std::move(states));
}

std::vector<fs::path> Ensemble::find_manifests(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("checkpoint directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const auto stem = entry.path().stem().string();
    const bool numbered = stem.size() > 5 && stem.find_first_not_of("0123456789", 5) == std::string::npos;
    if (entry.is_regular_file() && name.starts_with("fold_") && numbered && entry.path().extension() == ".json")
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no fold manifests in " + dir.string());
  return out;
}

EnsemblePrediction Ensemble::predict(const ModelInput& input) {
  const nn::Batch<float> batch{as_feature_map<float>(input.voxels)};
  std::vector<Probabilities> per_fold;
  for (auto& model : members_) {
    const Eigen::VectorXd logits = model.forward(batch, false).col(0).cast<double>();
    per_fold.push_back(softmax(logits));
  }
  auto out = combine_fold_probabilities(std::move(per_fold));
  out.series_uid = input.series_uid;
  return out;
}

std::vector<EnsemblePrediction> predict_study(const Study& study, Ensemble& ensemble, const PreprocessConfig& config,
                                              std::vector<std::string>* failures) {
  std::vector<EnsemblePrediction> out;
  for (const auto& series : study.series) {
    try {
      auto p = ensemble.predict(preprocess_chain(series, config));
      p.study_uid = series.study_uid.empty() ? study.study_uid : series.study_uid;
      p.b_value = series.b_value;
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      if (failures != nullptr) failures->push_back(series.series_uid + ": " + e.what());
    }
  }
  return out;
}

HangingOrder hang(const std::vector<EnsemblePrediction>& predictions) {
  HangingOrder order;
  for (const auto& p : predictions) {
    if (order.series.empty())
      order.study_uid = p.study_uid;
    else if (p.study_uid != order.study_uid)
      throw ValidationError("cannot hang series of different studies (" + order.study_uid + ", " + p.study_uid +
                            ")");
    order.series.push_back({p.series_uid, p.label(), p.b_value});
  }
  auto dwi_b = [](const HangingEntry& e) {
    if (e.label != SeriesLabel::DWI || !e.b_value) return -std::numeric_limits<double>::infinity();
    return *e.b_value;
  };
  std::stable_sort(order.series.begin(), order.series.end(), [&](const HangingEntry& a, const HangingEntry& b) {
    if (a.label != b.label) return index_of(a.label) < index_of(b.label);
    if (dwi_b(a) != dwi_b(b)) return dwi_b(a) < dwi_b(b);
    return a.series_uid < b.series_uid;
  });
  return order;
}

void write_predictions(const std::vector<EnsemblePrediction>& predictions, std::ostream& out) {
  out << "series_uid\tstudy_uid\tpredicted\tb_value";
  for (auto t : kLabelTokens) out << "\tp_" << t;
  out << "\tfold_argmax\n";
  for (const auto& p : predictions) {
    if (p.mean_probabilities.size() != kNumLabels)
      throw ValidationError("prediction for " + p.series_uid + " does not have " + std::to_string(kNumLabels) +
                            " classes");
    out << p.series_uid << '\t' << p.study_uid << '\t' << token(p.label()) << '\t' << format_b_value(p.b_value);
    for (Index c = 0; c < kNumLabels; ++c) out << '\t' << format_fixed(p.mean_probabilities[c], 6);
    out << '\t';
    for (std::size_t f = 0; f < p.fold_predictions.size(); ++f)
      out << (f == 0 ? "" : ",") << token(label_from_index(p.fold_predictions[f]));
    out << '\n';
  }
}

std::vector<EnsemblePrediction> read_predictions(std::istream& in) {
  std::vector<EnsemblePrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.starts_with("series_uid\t") || line.starts_with("#")) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5 + kNumLabels)
      throw DataError("prediction line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                      " fields, expected " + std::to_string(5 + kNumLabels));
    EnsemblePrediction p;
    p.series_uid = f[0];
    p.study_uid = f[1];
    const auto label = parse_label(f[2]);
    if (!label) throw DataError("prediction line " + std::to_string(line_no) + ": unknown label '" + f[2] + "'");
    p.predicted = index_of(*label);
    if (f[3] != "-") p.b_value = parse_double(f[3], line_no);
    p.mean_probabilities.resize(kNumLabels);
    for (Index c = 0; c < kNumLabels; ++c)
      p.mean_probabilities[c] = parse_double(f[4 + static_cast<std::size_t>(c)], line_no);
    std::stringstream folds(f.back());
    std::string tok;
    while (std::getline(folds, tok, ',')) {
      const auto fl = parse_label(tok);
      if (!fl) throw DataError("prediction line " + std::to_string(line_no) + ": unknown fold label '" + tok + "'");
      p.fold_predictions.push_back(index_of(*fl));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_hanging_order(const HangingOrder& order, std::ostream& out) {
  out << "# study " << order.study_uid << '\n';
  std::size_t position = 1;
  for (const auto& e : order.series)
    out << position++ << '\t' << e.series_uid << '\t' << token(e.label) << '\t' << format_b_value(e.b_value) << '\n';
}

}  // namespace mpmri
