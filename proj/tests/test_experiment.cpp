#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "corpus.h"
#include "doctest.h"
#include "errors.h"
#include "experiment.h"
#include "rng.h"

using namespace melvae;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// train.csv without its wall-clock column; everything else in it must be
// reproducible bit for bit.
std::string stripSeconds(const std::string& csv) {
  std::string out;
  size_t pos = 0;
  while (pos < csv.size()) {
    size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    std::string line = csv.substr(pos, eol - pos);
    size_t comma = line.rfind(',');
    out += (comma == std::string::npos ? line : line.substr(0, comma)) + "\n";
    pos = eol + 1;
  }
  return out;
}

struct TempTree {
  fs::path root;
  explicit TempTree(const std::string& name) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  std::string path(const std::string& leaf) const { return (root / leaf).string(); }
};

// Two distinguishable corpora on disk: a C-major "source" and a pentatonic
// "target".
void writeTestCorpora(const TempTree& tree, int sourceCount, int targetCount) {
  SynthProfile source;
  source.name = "source";
  Corpus sc = synthCorpus(source, sourceCount, 11);
  writeJsonl(sc, tree.path("source.jsonl"));

  SynthProfile target;
  target.name = "target";
  target.genre = Genre::Jazz;
  target.pitch_class_weights = {{1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0}};
  target.octave_weights = {{1, 2, 2, 0}};
  Corpus tc = synthCorpus(target, targetCount, 12);
  writeJsonl(tc, tree.path("target.jsonl"));
}

std::string tinyConfigJson(const TempTree& tree, const std::string& regime,
                           const std::string& ratios, const std::string& out) {
  std::string json = "{\"regime\":\"" + regime + "\",";
  if (!ratios.empty()) json += "\"ratios\":" + ratios + ",";
  if (regime != "baseline-target") json += "\"source\":\"" + tree.path("source.jsonl") + "\",";
  json += "\"target\":\"" + tree.path("target.jsonl") + "\",";
  json += "\"output\":\"" + tree.path(out) + "\",";
  json += "\"seed\":91,";
  json += "\"model\":{\"hidden\":6,\"dense\":12,\"dense_layers\":1,\"latent\":4},";
  json += "\"train\":{\"epochs\":2,\"stage2_epochs\":2,\"batch_size\":8,\"classifier_epochs\":2},";
  json += "\"eval\":{\"generated\":4,\"grid_points\":200}}";
  return json;
}

}  // namespace

TEST_CASE("run config defaults") {
  RunConfig c = parseRunConfig("{\"target\":\"t.jsonl\"}");
  CHECK(c.regime == Regime::BaselineTarget);
  CHECK(c.ratios == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(c.target_path == "t.jsonl");
  CHECK(c.source_path.empty());
  CHECK(c.seed == 0);
  CHECK(c.epochs == 100);
  CHECK(c.stage2_epochs == 120);
  CHECK(c.batch_size == 32);
  CHECK(c.lr == 1e-3);
  CHECK(c.classifier_epochs == 30);
  CHECK(c.model.hidden == 64);
  CHECK(c.model.latent == 32);
  CHECK(!c.rests);
  CHECK(c.grid_points == 1000);
  CHECK(c.generated == 0);
}

TEST_CASE("run config round-trips through its resolved form") {
  std::string json =
      "{\"regime\":\"fine-tune\",\"ratios\":[3,1],\"source\":\"s.jsonl\",\"target\":\"t.jsonl\","
      "\"output\":\"runs/x\",\"seed\":7,\"model\":{\"hidden\":16,\"beta\":0.5},"
      "\"train\":{\"epochs\":5,\"reset_moments\":true},\"eval\":{\"rests\":true}}";
  RunConfig c = parseRunConfig(json);
  CHECK(c.regime == Regime::FineTune);
  CHECK(c.ratios == std::vector<int>{3, 1});
  CHECK(c.model.beta == 0.5);
  CHECK(c.reset_moments);
  CHECK(c.rests);

  RunConfig again = parseRunConfig(runConfigJson(c));
  CHECK(again.regime == c.regime);
  CHECK(again.ratios == c.ratios);
  CHECK(again.seed == c.seed);
  CHECK(again.model.hidden == 16);
  CHECK(again.model.beta == 0.5);
  CHECK(again.reset_moments == c.reset_moments);
  CHECK(again.rests == c.rests);
  CHECK(runConfigJson(again) == runConfigJson(c));
}

TEST_CASE("run config rejects malformed documents") {
  CHECK_THROWS_AS(parseRunConfig("[1,2]"), DataError);
  CHECK_THROWS_AS(parseRunConfig("not json"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"typo\":1}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"model\":{\"width\":4}}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"train\":{\"momentum\":0.9}}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"eval\":{\"points\":10}}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"regime\":\"finetune\"}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{}"), DataError);  // no target
  // fine-tune and multitask need a source corpus
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"regime\":\"fine-tune\"}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"regime\":\"multitask\"}"), DataError);
  // ratio constraints
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"ratios\":[]}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"ratios\":[0]}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"ratios\":[7]}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"ratios\":[2,2]}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"ratios\":[1.5]}"), DataError);
  // type errors
  CHECK_THROWS_AS(parseRunConfig("{\"target\":3}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"seed\":\"x\"}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"model\":{\"hidden\":\"big\"}}"), DataError);
  // knob validation happens at parse time
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"train\":{\"epochs\":0}}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"model\":{\"latent\":0}}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"train\":{\"classifier_epochs\":0}}"),
                  DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"eval\":{\"generated\":-1}}"), DataError);
  CHECK_THROWS_AS(parseRunConfig("{\"target\":\"t\",\"eval\":{\"grid_points\":1}}"), DataError);
}

TEST_CASE("regime names map both ways") {
  for (Regime regime : {Regime::BaselineSource, Regime::BaselineTarget, Regime::FineTune,
                        Regime::Multitask}) {
    CHECK(regimeFromName(regimeName(regime)) == regime);
  }
  CHECK(regimeUsesSource(Regime::BaselineSource));
  CHECK(!regimeUsesSource(Regime::BaselineTarget));
  CHECK(regimeUsesSource(Regime::FineTune));
  CHECK(regimeUsesSource(Regime::Multitask));
}

TEST_CASE("per-run seeds are distinct and documented") {
  std::set<uint64_t> seeds;
  for (int r = 0; r <= 6; ++r) {
    CHECK(experimentRunSeed(91, r) == deriveSeed(91, "ratio", static_cast<uint64_t>(r)));
    seeds.insert(experimentRunSeed(91, r));
  }
  CHECK(seeds.size() == 7);
}

TEST_CASE("baseline experiment lays out the full output tree" * doctest::timeout(120)) {
  TempTree tree("melvae_exp_baseline");
  writeTestCorpora(tree, 10, 10);
  RunConfig config = parseRunConfig(tinyConfigJson(tree, "baseline-target", "", "out"));
  ExperimentSummary summary = runExperiment(config);

  REQUIRE(summary.runs.size() == 1);
  CHECK(summary.runs[0].label == "baseline-target");
  CHECK(summary.runs[0].table_label == "Baseline 2 (target)");
  CHECK(summary.runs[0].ratio == 0);
  CHECK(summary.classifier_accuracy < 0.0);

  fs::path out = tree.root / "out";
  for (const char* leaf :
       {"config.json", "target-pitch.csv", "target-pitch.svg", "target-pitch-class.csv",
        "target-pitch-class.svg", "grid.csv", "summary.csv", "baseline-target/train.csv",
        "baseline-target/final.ckpt", "baseline-target/generated.jsonl",
        "baseline-target/oa.csv"}) {
    CHECK_MESSAGE(fs::exists(out / leaf), leaf);
  }
  CHECK(!fs::exists(out / "classifier.ckpt"));

  // The resolved config re-parses to the same run.
  RunConfig resolved = parseRunConfig(slurp(out / "config.json"));
  CHECK(resolved.seed == config.seed);
  CHECK(resolved.epochs == config.epochs);

  std::string grid = slurp(out / "grid.csv");
  CHECK(grid.rfind("feature,baseline-target,best\n", 0) == 0);
  CHECK(grid.find("\naverage,") != std::string::npos);
  CHECK(grid.find(",baseline-target\n") != std::string::npos);

  std::string table = slurp(out / "summary.csv");
  CHECK(table.rfind("run,average_oa\n", 0) == 0);
  CHECK(table.find("Baseline 2 (target),") != std::string::npos);

  std::string oa = slurp(out / "baseline-target/oa.csv");
  CHECK(oa.find("# regime=baseline-target\n") != std::string::npos);
  CHECK(oa.find("# R=0\n") != std::string::npos);
  CHECK(oa.find("# seed=" + std::to_string(experimentRunSeed(91, 0)) + "\n") !=
        std::string::npos);
  CHECK(oa.find("# generated_size=4\n") != std::string::npos);

  Corpus generated = parseJsonl((out / "baseline-target/generated.jsonl").string());
  CHECK(generated.size() == 4);
}

TEST_CASE("experiment reruns are bit-identical apart from wall-clock times" *
          doctest::timeout(240)) {
  TempTree tree("melvae_exp_repeat");
  writeTestCorpora(tree, 18, 8);
  RunConfig a = parseRunConfig(tinyConfigJson(tree, "fine-tune", "[2]", "a"));
  RunConfig b = parseRunConfig(tinyConfigJson(tree, "fine-tune", "[2]", "b"));
  runExperiment(a);
  runExperiment(b);

  fs::path da = tree.root / "a", db = tree.root / "b";
  for (const char* leaf : {"grid.csv", "summary.csv", "R2/oa.csv", "R2/generated.jsonl",
                           "R2/stage1.ckpt", "R2/final.ckpt", "target-pitch.csv"}) {
    CHECK_MESSAGE(slurp(da / leaf) == slurp(db / leaf), leaf);
  }
  CHECK(stripSeconds(slurp(da / "R2/train.csv")) == stripSeconds(slurp(db / "R2/train.csv")));
}

TEST_CASE("fine-tune experiment runs one directory per requested R" * doctest::timeout(240)) {
  TempTree tree("melvae_exp_ft");
  writeTestCorpora(tree, 18, 8);
  RunConfig config = parseRunConfig(tinyConfigJson(tree, "fine-tune", "[1,2]", "out"));
  ExperimentSummary summary = runExperiment(config);

  REQUIRE(summary.runs.size() == 2);
  CHECK(summary.runs[0].label == "R1");
  CHECK(summary.runs[0].table_label == "Method 1 (R=1)");
  CHECK(summary.runs[1].label == "R2");
  CHECK(summary.runs[1].ratio == 2);

  fs::path out = tree.root / "out";
  for (const char* leaf : {"R1/stage1.ckpt", "R1/final.ckpt", "R1/train.csv", "R1/oa.csv",
                           "R2/stage1.ckpt", "R2/final.ckpt"}) {
    CHECK_MESSAGE(fs::exists(out / leaf), leaf);
  }
  std::string grid = slurp(out / "grid.csv");
  CHECK(grid.rfind("feature,R1,R2,best\n", 0) == 0);
  // ten feature rows, each naming a best run
  size_t rows = 0;
  for (size_t pos = grid.find('\n'); pos != std::string::npos; pos = grid.find('\n', pos + 1)) {
    ++rows;
  }
  CHECK(rows == 11);

  std::string table = slurp(out / "summary.csv");
  CHECK(table.find("Method 1 (R=1),") != std::string::npos);
  CHECK(table.find("Method 1 (R=2),") != std::string::npos);

  // The two runs trained under different derived seeds.
  std::string oa1 = slurp(out / "R1/oa.csv");
  std::string oa2 = slurp(out / "R2/oa.csv");
  CHECK(oa1.find("# seed=" + std::to_string(experimentRunSeed(91, 1))) != std::string::npos);
  CHECK(oa2.find("# seed=" + std::to_string(experimentRunSeed(91, 2))) != std::string::npos);
}

TEST_CASE("multitask experiment trains one shared classifier" * doctest::timeout(240)) {
  TempTree tree("melvae_exp_mt");
  writeTestCorpora(tree, 12, 8);
  RunConfig config = parseRunConfig(tinyConfigJson(tree, "multitask", "[1]", "out"));
  ExperimentSummary summary = runExperiment(config);

  REQUIRE(summary.runs.size() == 1);
  CHECK(summary.runs[0].table_label == "Method 2 (R=1)");
  CHECK(summary.classifier_accuracy >= 0.0);
  CHECK(summary.classifier_accuracy <= 1.0);

  fs::path out = tree.root / "out";
  CHECK(fs::exists(out / "classifier.ckpt"));
  CHECK(fs::exists(out / "classifier-train.csv"));
  CHECK(fs::exists(out / "R1/final.ckpt"));

  // The saved classifier is loadable and matches the run's geometry.
  ClassifierParams cls = classifierFromCheckpoint(loadCheckpoint((out / "classifier.ckpt").string()));
  CHECK(cls.config.hidden == 6);

  std::string table = slurp(out / "summary.csv");
  CHECK(table.find("# classifier_accuracy=") != std::string::npos);
}
