#include "helpers.hpp"
#include "mpmri/inference.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

using namespace mpmri;

namespace {

Probabilities probs(std::initializer_list<double> v) {
  Probabilities p(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

Probabilities random_simplex(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.7, 1.0);
  Probabilities p(kNumLabels);
  for (Index i = 0; i < kNumLabels; ++i) p[i] = g(rng);
  return p / p.sum();
}

const Shape3 kShape{8, 8, 4};

// A tiny network whose logits are exactly the given bias.
ModelState<float> constant_logit_state(const std::vector<float>& bias) {
  Classifier<float> m(test::tiny_config(kShape), 0);
  auto params = m.parameters();
  params[params.size() - 2]->value.setZero();
  for (std::size_t i = 0; i < bias.size(); ++i) params.back()->value(static_cast<Index>(i)) = bias[i];
  return m.state();
}

CheckpointManifest tiny_manifest(int fold) {
  CheckpointManifest m;
  m.config = test::tiny_config(kShape);
  m.class_order = canonical_class_order();
  m.fold = fold;
  m.weights_file = "fold_" + std::to_string(fold) + ".weights";
  return m;
}

Ensemble random_ensemble(int members) {
  std::vector<CheckpointManifest> mans;
  std::vector<ModelState<float>> states;
  for (int k = 0; k < members; ++k) {
    mans.push_back(tiny_manifest(k));
    states.push_back(Classifier<float>(mans.back().config, 100 + static_cast<std::uint64_t>(k)).state());
  }
  return Ensemble(std::move(mans), std::move(states));
}

EnsemblePrediction prediction(const std::string& uid, SeriesLabel label, std::optional<double> b = {},
                              const std::string& study = "1.2") {
  EnsemblePrediction p;
  p.series_uid = uid;
  p.study_uid = study;
  p.predicted = index_of(label);
  p.b_value = b;
  p.mean_probabilities = Probabilities::Constant(kNumLabels, 0.0);
  p.mean_probabilities[p.predicted] = 1.0;
  p.fold_predictions = {p.predicted};
  return p;
}

}  // namespace

TEST_CASE("combining fold probabilities") {
  SUBCASE("mean of five folds") {
    std::vector<Probabilities> folds;
    for (int k = 0; k < 5; ++k) {
      Probabilities p = Probabilities::Constant(kNumLabels, 0.0);
      p[k < 3 ? 2 : 4] = 1.0;
      folds.push_back(p);
    }
    const auto out = combine_fold_probabilities(folds);
    CHECK(out.mean_probabilities[2] == doctest::Approx(0.6));
    CHECK(out.mean_probabilities[4] == doctest::Approx(0.4));
    CHECK(out.predicted == 2);
    CHECK(out.fold_predictions == std::vector<int>{2, 2, 2, 4, 4});
  }
  SUBCASE("ties go to the lowest class index") {
    const auto out = combine_fold_probabilities({probs({0.4, 0.1, 0.4, 0.1}), probs({0.1, 0.4, 0.1, 0.4})});
    CHECK(out.predicted == 0);
    CHECK(argmax_lowest(probs({0.2, 0.3, 0.3, 0.2})) == 1);
  }
  SUBCASE("fold order does not change the result in any bit") {
    std::mt19937_64 rng(4);
    std::vector<Probabilities> folds;
    for (int k = 0; k < 5; ++k) folds.push_back(random_simplex(rng));
    const auto ref = combine_fold_probabilities(folds).mean_probabilities;
    std::vector<int> perm = {0, 1, 2, 3, 4};
    int seen = 0;
    do {
      std::vector<Probabilities> shuffled;
      for (int i : perm) shuffled.push_back(folds[static_cast<std::size_t>(i)]);
      REQUIRE(combine_fold_probabilities(shuffled).mean_probabilities == ref);
      ++seen;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(seen == 120);
  }
  SUBCASE("means stay on the simplex") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 500; ++t) {
      std::vector<Probabilities> folds;
      for (int k = 0; k < 5; ++k) folds.push_back(random_simplex(rng));
      const auto p = combine_fold_probabilities(folds).mean_probabilities;
      REQUIRE(std::abs(p.sum() - 1.0) < 1e-9);
      REQUIRE(p.minCoeff() >= 0.0);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(combine_fold_probabilities({}), ValidationError);
    CHECK_THROWS_AS(combine_fold_probabilities({probs({0.5, 0.5}), probs({1.0})}), ValidationError);
  }
}

TEST_CASE("the ensemble averages probabilities, not logits") {
  std::vector<float> a(kNumLabels, 0.f), b(kNumLabels, 0.f);
  a[0] = 100.f;
  b[0] = -100.f;
  b[1] = 1.f;
  // Mean logits favour class 1; mean probabilities favour class 0.
  Ensemble e({tiny_manifest(0), tiny_manifest(1)}, {constant_logit_state(a), constant_logit_state(b)});
  ModelInput input{Volume<float>(kShape, 0.3f), "7.7"};
  const auto p = e.predict(input);
  CHECK(p.predicted == 0);
  CHECK(p.fold_predictions == std::vector<int>{0, 1});
  CHECK(p.mean_probabilities[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(p.series_uid == "7.7");
}

TEST_CASE("ensemble membership checks") {
  auto state = Classifier<float>(test::tiny_config(kShape), 1).state();
  SUBCASE("class order must be canonical") {
    auto m = tiny_manifest(0);
    std::swap(m.class_order[1], m.class_order[2]);
    CHECK_THROWS_AS(Ensemble({m}, {state}), DataError);
  }
  SUBCASE("members must agree") {
    auto m1 = tiny_manifest(1);
    m1.config.input_shape = {8, 8, 8};
    CHECK_THROWS_AS(Ensemble({tiny_manifest(0), m1}, {state, state}), DataError);
  }
  SUBCASE("empty") { CHECK_THROWS_AS(Ensemble({}, {}), DataError); }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(Ensemble::find_manifests("/nonexistent/mpmri/checkpoints"), DataError);
  }
}

TEST_CASE("ensemble load from disk") {
  test::TempDir dir("ens");
  for (int k = 0; k < 3; ++k) {
    ModelCheckpoint c{tiny_manifest(k), Classifier<float>(test::tiny_config(kShape), 10 + k).state()};
    save_checkpoint(c, dir.path());
  }
  const auto paths = Ensemble::find_manifests(dir.path());
  REQUIRE(paths.size() == 3);
  CHECK(paths[0].filename() == "fold_0.json");
  auto e = Ensemble::load(paths);
  CHECK(e.size() == 3);
  const auto p = e.predict({Volume<float>(kShape, 0.5f), "1"});
  CHECK(p.per_fold_probabilities.size() == 3);
}

TEST_CASE("predict_study") {
  auto e = random_ensemble(2);
  PreprocessConfig cfg;
  cfg.target_shape = kShape;
  PhantomSpec spec;
  spec.image_shape = {16, 16, 4};
  spec.num_dwi_bvalues = 3;
  auto study = generate_study(spec, 0);

  SUBCASE("one prediction per series") {
    const auto out = predict_study(study, e, cfg);
    CHECK(out.size() == 10);
    int with_b = 0;
    for (const auto& p : out) {
      CHECK(p.study_uid == study.study_uid);
      CHECK(p.mean_probabilities.size() == kNumLabels);
      with_b += p.b_value.has_value();
    }
    CHECK(with_b == 3);
  }
  SUBCASE("empty study") {
    Study empty;
    CHECK(predict_study(empty, e, cfg).empty());
  }
  SUBCASE("a failing series is skipped and reported") {
    study.series[4].voxels = Volume<float>();
    std::vector<std::string> failures;
    const auto out = predict_study(study, e, cfg, &failures);
    CHECK(out.size() == 9);
    REQUIRE(failures.size() == 1);
    CHECK(failures[0].find(study.series[4].series_uid) != std::string::npos);
  }
}

TEST_CASE("hanging protocol") {
  SUBCASE("canonical order with DWI ascending by b-value") {
    std::vector<EnsemblePrediction> ps = {
        prediction("s9", SeriesLabel::ADC),        prediction("s1", SeriesLabel::DWI, 800.0),
        prediction("s2", SeriesLabel::DWI, 50.0),  prediction("s3", SeriesLabel::T2),
        prediction("s4", SeriesLabel::T1wPre),     prediction("s5", SeriesLabel::T1wDel),
        prediction("s6", SeriesLabel::DWI, 1000.0), prediction("s7", SeriesLabel::T1wArt),
    };
    const auto order = hang(ps);
    std::vector<std::string> uids;
    for (const auto& s : order.series) uids.push_back(s.series_uid);
    CHECK(uids == std::vector<std::string>{"s4", "s7", "s5", "s3", "s2", "s1", "s6", "s9"});
    CHECK(order.study_uid == "1.2");
  }
  SUBCASE("duplicate labels fall back to uid order") {
    const auto order = hang({prediction("b", SeriesLabel::T2), prediction("a", SeriesLabel::T2)});
    CHECK(order.series[0].series_uid == "a");
  }
  SUBCASE("DWI without a b-value goes first") {
    const auto order = hang({prediction("x", SeriesLabel::DWI, 50.0), prediction("y", SeriesLabel::DWI)});
    CHECK(order.series[0].series_uid == "y");
  }
  SUBCASE("output is a permutation of the input") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> lab(0, 7);
    std::vector<EnsemblePrediction> ps;
    for (int i = 0; i < 30; ++i) ps.push_back(prediction("u" + std::to_string(i), label_from_index(lab(rng)), i * 10.0));
    const auto order = hang(ps);
    std::multiset<std::string> in, out;
    for (const auto& p : ps) in.insert(p.series_uid);
    for (const auto& s : order.series) out.insert(s.series_uid);
    CHECK(in == out);
    for (std::size_t i = 1; i < order.series.size(); ++i)
      CHECK(index_of(order.series[i - 1].label) <= index_of(order.series[i].label));
  }
  SUBCASE("mixed studies are rejected") {
    CHECK_THROWS_AS(hang({prediction("a", SeriesLabel::T2, {}, "1"), prediction("b", SeriesLabel::T2, {}, "2")}),
                    ValidationError);
  }
  SUBCASE("written order") {
    std::ostringstream out;
    write_hanging_order(hang({prediction("s2", SeriesLabel::DWI, 50.0), prediction("s1", SeriesLabel::T2)}), out);
    CHECK(out.str() == "# study 1.2\n1\ts1\tT2\t-\n2\ts2\tDWI\t50\n");
  }
}

TEST_CASE("prediction TSV round trip") {
  std::vector<EnsemblePrediction> ps = {prediction("1.1", SeriesLabel::T2FS), prediction("1.3", SeriesLabel::DWI, 800.0)};
  ps[1].mean_probabilities = Probabilities::Constant(kNumLabels, 0.125);
  ps[1].fold_predictions = {6, 6, 7, 6, 0};
  std::ostringstream out;
  out << "# seed 3\n";
  write_predictions(ps, out);
  std::istringstream in(out.str());
  const auto back = read_predictions(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].series_uid == "1.1");
  CHECK(back[0].predicted == index_of(SeriesLabel::T2FS));
  CHECK(!back[0].b_value);
  CHECK(*back[1].b_value == 800.0);
  CHECK(back[1].fold_predictions == ps[1].fold_predictions);
  CHECK((back[1].mean_probabilities.array() == 0.125).all());

  std::istringstream bad("1\t2\tnot_a_label\t-\t0\t0\t0\t0\t0\t0\t0\t0\tT2\n");
  CHECK_THROWS_AS(read_predictions(bad), DataError);
}
