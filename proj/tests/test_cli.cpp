#include "helpers.hpp"
#include "mpmri/inference.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace mpmri;
namespace fs = std::filesystem;

namespace {

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run(const std::string& args, const fs::path& log = {}) {
  std::string cmd = quote(MPMRI_CLI_PATH) + " " + args;
  cmd += log.empty() ? " >/dev/null 2>&1" : " >" + quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

const std::string kToy = "--arch tiny --shape 16 16 4 --epochs 1 --lr 0.01 --batch 4 --seed 3";

// One phantom tree and one trained toy ensemble shared by the tests below.
struct Workspace {
  test::TempDir dir{"cli"};
  fs::path data = dir / "data";
  fs::path ckpt = dir / "ckpt";
  int phantom_rc = -1;
  int train_rc = -1;

  Workspace() {
    phantom_rc = run("--seed 3 phantom --out " + quote(data.string()) + " --studies 12 --image-shape 16 16 4");
    train_rc = run(kToy + " --data " + quote(data.string()) + " --checkpoints " + quote(ckpt.string()) + " train",
                   dir / "train.log");
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("phantom writes one directory per study") {
  auto& w = workspace();
  REQUIRE(w.phantom_rc == 0);
  std::size_t studies = 0;
  for (const auto& e : fs::directory_iterator(w.data)) studies += e.is_directory();
  CHECK(studies == 12);
  CHECK(fs::exists(w.data / "labels.tsv"));

  test::TempDir dir("cli_phantom");
  REQUIRE(run("phantom --out " + quote((dir / "a").string()) + " --studies 10 --image-shape 12 12 3") == 0);
  REQUIRE(run("phantom --out " + quote((dir / "b").string()) + " --studies 10 --image-shape 12 12 3") == 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) n += e.is_directory();
  CHECK(n == 10);
  CHECK(tree_contents(dir / "a") == tree_contents(dir / "b"));
}

TEST_CASE("phantom into an unwritable location fails cleanly") {
  test::TempDir dir("cli_unwritable");
  std::ofstream(dir / "blocker") << "x";
  CHECK(run("phantom --out " + quote((dir / "blocker" / "tree").string()) + " --studies 2") != 0);
  CHECK(!fs::exists(dir / "blocker" / "tree"));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
  CHECK(entries == 1);
}

TEST_CASE("train writes five fold checkpoints and the run record") {
  auto& w = workspace();
  INFO(slurp(w.dir / "train.log"));
  REQUIRE(w.train_rc == 0);
  const auto manifests = Ensemble::find_manifests(w.ckpt);
  CHECK(manifests.size() == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(fs::exists(w.ckpt / ("fold_" + std::to_string(k) + ".weights")));
    CHECK(fs::exists(w.ckpt / ("fold_" + std::to_string(k) + "_epochs.csv")));
  }
  CHECK(fs::exists(w.ckpt / "fold_plan.json"));
  const auto run_json = nlohmann::json::parse(slurp(w.ckpt / "run.json"));
  CHECK(run_json["seed"] == 3);
  // Test patients never enter training.
  const auto plan = read_fold_plan(w.ckpt / "fold_plan.json");
  for (const auto& f : plan.folds)
    for (const auto& id : plan.test_patients) {
      CHECK(std::find(f.train_patients.begin(), f.train_patients.end(), id) == f.train_patients.end());
      CHECK(std::find(f.val_patients.begin(), f.val_patients.end(), id) == f.val_patients.end());
    }
}

TEST_CASE("train --folds 1 writes one checkpoint") {
  auto& w = workspace();
  REQUIRE(w.phantom_rc == 0);
  test::TempDir dir("cli_one");
  REQUIRE(run(kToy + " --data " + quote(w.data.string()) + " --checkpoints " + quote(dir.path().string()) +
              " train --folds 1") == 0);
  CHECK(Ensemble::find_manifests(dir.path()).size() == 1);
}

TEST_CASE("train without a labels manifest fails before writing checkpoints") {
  auto& w = workspace();
  test::TempDir dir("cli_nolabels");
  CHECK(run(kToy + " --data " + quote(w.data.string()) + " --labels " + quote((dir / "missing.tsv").string()) +
            " --checkpoints " + quote((dir / "ck").string()) + " train") != 0);
  CHECK(!fs::exists(dir / "ck" / "fold_0.json"));
}

TEST_CASE("evaluate writes a table with eight classes and a total") {
  auto& w = workspace();
  REQUIRE(w.train_rc == 0);
  test::TempDir dir("cli_eval");
  const std::string common = kToy + " --data " + quote(w.data.string()) + " --checkpoints " + quote(w.ckpt.string());
  REQUIRE(run(common + " --reports " + quote((dir / "r1").string()) + " evaluate") == 0);
  const auto table = slurp(dir / "r1" / "report.txt");
  std::istringstream lines(table);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 10);
  for (std::size_t i = 0; i < kLabelTokens.size(); ++i) CHECK(rows[i + 1].starts_with(std::string(kLabelTokens[i])));
  CHECK(rows[9].starts_with("Total"));
  for (const char* f : {"report.json", "report_confusion.csv", "report_confusion.svg", "predictions.tsv",
                        "report_dwi_collapsed.txt"})
    CHECK(fs::exists(dir / "r1" / f));
  CHECK(slurp(dir / "r1" / "predictions.tsv").starts_with("# seed 3\n"));

  SUBCASE("reports are byte-identical on a rerun") {
    REQUIRE(run(common + " --reports " + quote((dir / "r2").string()) + " evaluate") == 0);
    CHECK(tree_contents(dir / "r1") == tree_contents(dir / "r2"));
  }
  SUBCASE("side-by-side comparison") {
    REQUIRE(run(common + " --reports " + quote((dir / "r3").string()) + " evaluate --compare " +
                quote(w.ckpt.string())) == 0);
    CHECK(slurp(dir / "r3" / "comparison.txt").find('*') != std::string::npos);
  }
}

TEST_CASE("predict then hang") {
  auto& w = workspace();
  REQUIRE(w.train_rc == 0);
  test::TempDir dir("cli_predict");
  const auto study = w.data / "STUDY_0000";
  REQUIRE(run("--checkpoints " + quote(w.ckpt.string()) + " --shape 16 16 4 predict --study " +
              quote(study.string()) + " --out " + quote((dir / "p.tsv").string())) == 0);
  std::ifstream in(dir / "p.tsv");
  const auto predictions = read_predictions(in);
  std::size_t series_dirs = 0;
  for (const auto& e : fs::directory_iterator(study)) series_dirs += e.is_directory();
  CHECK(predictions.size() == series_dirs);

  REQUIRE(run("hang --predictions " + quote((dir / "p.tsv").string()) + " --out " + quote((dir / "h.txt").string())) ==
          0);
  std::multiset<std::string> predicted, hung;
  for (const auto& p : predictions) predicted.insert(p.series_uid);
  std::istringstream lines(slurp(dir / "h.txt"));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.starts_with("#")) continue;
    std::istringstream f(line);
    std::string pos, uid;
    f >> pos >> uid;
    hung.insert(uid);
  }
  CHECK(hung == predicted);

  SUBCASE("hang needs exactly one source") {
    CHECK(run("hang --predictions " + quote((dir / "p.tsv").string()) + " --study " + quote(study.string())) == 1);
    CHECK(run("hang") == 1);
  }
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("--arch vgg train") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("--lr -1 --data /nonexistent train --checkpoints /tmp/x") == 1);
}

TEST_CASE("flags override the config file") {
  auto& w = workspace();
  REQUIRE(w.phantom_rc == 0);
  test::TempDir dir("cli_config");
  std::ofstream(dir / "run.toml") << "seed = 5\narch = \"tiny\"\nepochs = 1\nlr = 0.01\nbatch = 4\nshape = [16, 16, 4]\n";
  const std::string base = "--config " + quote((dir / "run.toml").string()) + " --data " + quote(w.data.string());
  REQUIRE(run(base + " --checkpoints " + quote((dir / "a").string()) + " train --folds 1") == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "a" / "run.json"))["seed"] == 5);
  REQUIRE(run(base + " --seed 9 --checkpoints " + quote((dir / "b").string()) + " train --folds 1") == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "b" / "run.json"))["seed"] == 9);
  CHECK(read_manifest(dir / "b" / "fold_0.json").config.architecture == Architecture::Tiny);
}

TEST_CASE("a checkpoint with a different class order is rejected") {
  auto& w = workspace();
  REQUIRE(w.train_rc == 0);
  test::TempDir dir("cli_order");
  fs::copy(w.ckpt, dir / "ck", fs::copy_options::recursive);
  auto j = nlohmann::json::parse(slurp(dir / "ck" / "fold_1.json"));
  std::swap(j["class_order"][1], j["class_order"][2]);
  std::ofstream(dir / "ck" / "fold_1.json") << j.dump(2);
  CHECK(run("--data " + quote(w.data.string()) + " --plan " + quote((w.ckpt / "fold_plan.json").string()) +
            " --checkpoints " + quote((dir / "ck").string()) + " --reports " + quote((dir / "r").string()) +
            " --shape 16 16 4 evaluate") != 0);
  CHECK(!fs::exists(dir / "r" / "report.txt"));
}
