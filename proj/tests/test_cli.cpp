#include <gtest/gtest.h>

#include "madda/experiment/cli.hpp"
#include "support/runs.hpp"
#include "support/temp_dir.hpp"

using namespace madda;
using namespace madda::experiment;
using madda::testing::run;
using madda::testing::TempDir;
using madda::testing::tiny_run;

// ---- config -------------------------------------------------------------------

TEST(Config, DefaultsMatchTheDocumentedSetup) {
  const ExperimentConfig c;
  EXPECT_EQ(c.subsample("mnist"), 2000u);
  EXPECT_EQ(c.subsample("usps"), 1800u);
  EXPECT_EQ(c.get_size("epochs_source"), 200u);
  EXPECT_EQ(c.get_size("epochs_adapt"), 200u);
  EXPECT_EQ(c.get_size("k"), 5u);
  EXPECT_EQ(c.get_double("margin"), 1.0);
  const auto adam = c.adam();
  EXPECT_EQ(adam.learning_rate, 2e-4);
  EXPECT_EQ(adam.beta1, 0.5);
  EXPECT_EQ(c.adapt_schedule().mode, training::AdaptMode::full);
}

TEST(Config, HashIgnoresSpellingAndLocation) {
  ExperimentConfig a, b;
  b.set("lr", "2e-4");
  b.set("margin", "1.000");
  b.set("output_dir", "/elsewhere");
  b.set("data_root", "/data");
  b.set("checkpoint_every", "3");
  EXPECT_EQ(a.hash(models::Role::source), b.hash(models::Role::source));
  EXPECT_EQ(a, b);
}

TEST(Config, HashTracksSemanticsAndRole) {
  ExperimentConfig a, b;
  b.set("seed", "2");
  EXPECT_NE(a.hash(models::Role::source), b.hash(models::Role::source));
  EXPECT_NE(a.hash(models::Role::source), a.hash(models::Role::target));
  EXPECT_EQ(a.hash(models::Role::target).size(), 16u);
  ExperimentConfig c;
  c.set("mode", "center-only");
  EXPECT_NE(a.hash(models::Role::target), c.hash(models::Role::target));
}

TEST(Config, FileRoundTrip) {
  TempDir dir;
  madda::testing::write_text(dir / "c.txt", "# comment\nseed = 9   # trailing\n\nmode=adversarial-only\nsubsample.usps = full\n");
  const auto c = ExperimentConfig::from_file(dir / "c.txt");
  EXPECT_EQ(c.seed(), 9u);
  EXPECT_EQ(c.get("mode"), "adversarial-only");
  EXPECT_FALSE(c.subsample("usps").has_value());
  madda::testing::write_text(dir / "d.txt", c.serialize());
  EXPECT_EQ(ExperimentConfig::from_file(dir / "d.txt"), c);
}

TEST(Config, UsageErrorsNameTheField) {
  ExperimentConfig c;
  auto expect_named = [&](const std::string& assignment, const std::string& field) {
    try {
      c.apply_override(assignment);
      FAIL() << assignment;
    } catch (const UsageError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_named("mode=both", "mode");
  expect_named("batch_size=1", "batch_size");
  expect_named("lr=-1", "lr");
  expect_named("beta1=1", "beta1");
  expect_named("k=0", "k");
  expect_named("epochs_source=ten", "epochs_source");
  expect_named("nonsense=1", "nonsense");
  expect_named("schedule=random", "schedule");
  EXPECT_THROW(c.apply_override("novalue"), UsageError);
  EXPECT_THROW(ExperimentConfig::from_file("/no/such/config"), UsageError);
}

// ---- exit codes ------------------------------------------------------------------

TEST(Cli, UsageProblemsExitWithTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"train-source", "--set", "mode=sideways"}).code, 2);
  EXPECT_EQ(run({"eval", "--k", "1,x"}).code, 2);
  // no data location for the default domains
  TempDir dir;
  const auto r = run({"train-source", "-s", "output_dir=" + dir.path().string(), "-s",
                      "mnist.dir=" + (dir / "missing").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing"), std::string::npos) << r.err;
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, BadCheckpointsExitWithThree) {
  TempDir dir;
  auto args = tiny_run(dir.path());
  madda::testing::write_text(dir / "junk.ckpt", "not a checkpoint");
  EXPECT_EQ(run({"adapt", "--source-checkpoint", (dir / "junk.ckpt").string()}, args).code, 3);
  EXPECT_EQ(run({"adapt", "--source-checkpoint", (dir / "absent.ckpt").string()}, args).code, 3);
  // right magic, wrong version
  std::string bytes = models::serialize_checkpoint(models::Checkpoint{});
  bytes[9] = 7;
  madda::testing::write_text(dir / "v7.ckpt", bytes);
  const auto r = run({"eval", "--source-checkpoint", (dir / "v7.ckpt").string()}, args);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("version 7"), std::string::npos) << r.err;
}

TEST(Cli, ConvertUsps) {
  TempDir dir;
  std::string line = "3";
  for (int i = 0; i < 256; ++i) line += " -1";
  madda::testing::write_text(dir / "zip.train", line + "\n" + line + "\n");
  const auto r = run({"convert-usps", "-i", (dir / "zip.train").string(), "-o", (dir / "u.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data::load_usps(dir / "u.csv").size(), 2u);
  EXPECT_EQ(run({"convert-usps", "-i", (dir / "zip.train").string(), "-o", (dir / "u.csv").string(), "-f", "libsvm"}).code,
            3);
  EXPECT_EQ(run({"convert-usps", "-i", "x", "-o", "y", "-f", "png"}).code, 2);
}

// ---- end to end on the synthetic domains ------------------------------------------

TEST(EndToEnd, SourceRunWritesCheckpointAndOneRecordPerEpoch) {
  TempDir dir;
  auto args = tiny_run(dir.path());
  args.insert(args.end(), {"-s", "epochs_source=1"});
  const auto r = run({"train-source"}, args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = madda::testing::timeless(dir / "source_metrics.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0]["epoch"], 1);
  const auto ck = models::load_checkpoint(dir / "source.ckpt");
  ExperimentConfig cfg;
  for (std::size_t i = 1; i < args.size(); i += 2) cfg.apply_override(args[i]);
  EXPECT_EQ(ck.meta("config_hash"), cfg.hash(models::Role::source));
  EXPECT_EQ(recs[0]["config_hash"], cfg.hash(models::Role::source));
  EXPECT_TRUE(std::filesystem::exists(dir / "config.txt"));
}

TEST(EndToEnd, FixedSeedRunsAreBitReproducible) {
  TempDir a, b;
  for (const auto* d : {&a, &b}) {
    ASSERT_EQ(run({"train-source"}, tiny_run(d->path())).code, 0);
    ASSERT_EQ(run({"adapt"}, tiny_run(d->path())).code, 0);
  }
  EXPECT_EQ(madda::testing::read_text(a / "source.ckpt"), madda::testing::read_text(b / "source.ckpt"));
  EXPECT_EQ(madda::testing::read_text(a / "adapt.ckpt"), madda::testing::read_text(b / "adapt.ckpt"));
  EXPECT_EQ(madda::testing::timeless(a / "adapt_metrics.jsonl"), madda::testing::timeless(b / "adapt_metrics.jsonl"));
  EXPECT_EQ(madda::testing::timeless(a / "source_metrics.jsonl"), madda::testing::timeless(b / "source_metrics.jsonl"));
}

TEST(EndToEnd, ResumedAdaptationMatchesUninterrupted) {
  TempDir whole, split;
  ASSERT_EQ(run({"train-source"}, tiny_run(whole.path())).code, 0);
  std::filesystem::copy_file(whole / "source.ckpt", split / "source.ckpt");
  ASSERT_EQ(run({"adapt"}, tiny_run(whole.path())).code, 0);

  ASSERT_EQ(run({"adapt", "--max-epochs", "1"}, tiny_run(split.path())).code, 0);
  EXPECT_EQ(madda::testing::timeless(split / "adapt_metrics.jsonl").size(), 2u);
  ASSERT_EQ(run({"adapt", "--resume", "--max-epochs", "2"}, tiny_run(split.path())).code, 0);
  const auto r = run({"adapt", "--resume"}, tiny_run(split.path()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resuming at epoch 3"), std::string::npos) << r.out;

  const auto a = madda::testing::timeless(whole / "adapt_metrics.jsonl");
  const auto b = madda::testing::timeless(split / "adapt_metrics.jsonl");
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(madda::testing::read_text(whole / "adapt.ckpt"), madda::testing::read_text(split / "adapt.ckpt"));
}

TEST(EndToEnd, ResumeDropsRecordsAfterTheCheckpoint) {
  TempDir dir;
  auto args = tiny_run(dir.path());
  args.insert(args.end(), {"-s", "checkpoint_every=2"});
  ASSERT_EQ(run({"train-source"}, args).code, 0);
  ASSERT_EQ(run({"adapt", "--max-epochs", "3"}, args).code, 0);
  // simulate a crash after epoch 3 whose checkpoint never landed: roll back to epoch 2
  const auto full = madda::testing::timeless(dir / "adapt_metrics.jsonl");
  ASSERT_EQ(full.size(), 4u);
  ASSERT_EQ(run({"adapt", "--max-epochs", "2"}, args).code, 0);
  const std::string log = madda::testing::read_text(dir / "adapt_metrics.jsonl");
  madda::testing::write_text(dir / "adapt_metrics.jsonl", log + "{\"epoch\":3,\"phase\":\"adapt\"}\n");
  ASSERT_EQ(run({"adapt", "--resume"}, args).code, 0);
  const auto recs = madda::testing::timeless(dir / "adapt_metrics.jsonl");
  ASSERT_EQ(recs.size(), 5u);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(recs[i]["epoch"], i);
  EXPECT_EQ(std::vector<Record>(recs.begin(), recs.begin() + 4), full);
}

TEST(EndToEnd, ResumeWithDifferentConfigIsRefused) {
  TempDir dir;
  ASSERT_EQ(run({"train-source"}, tiny_run(dir.path())).code, 0);
  ASSERT_EQ(run({"adapt", "--max-epochs", "1"}, tiny_run(dir.path())).code, 0);
  auto args = tiny_run(dir.path());
  args.insert(args.end(), {"-s", "seed=5"});
  EXPECT_EQ(run({"adapt", "--resume"}, args).code, 2);
}

TEST(EndToEnd, ZeroEpochAdaptationIsTheSourceOnlyBaseline) {
  TempDir dir;
  auto args = tiny_run(dir.path());
  args.insert(args.end(), {"-s", "epochs_adapt=0"});
  ASSERT_EQ(run({"train-source"}, args).code, 0);
  ASSERT_EQ(run({"adapt"}, args).code, 0);
  const auto recs = madda::testing::timeless(dir / "adapt_metrics.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  const double baseline = recs[0]["accuracy"];

  auto source = experiment::load_source_model(dir / "source.ckpt");
  auto target = experiment::load_target_model(dir / "adapt.ckpt");
  auto ps = source.parameters(), pt = target.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_TRUE(bit_identical(ps[i]->value, pt[i]->value)) << ps[i]->name;

  const auto own = run({"eval"}, args);
  ASSERT_EQ(own.code, 0) << own.err;
  const auto adapted = run({"eval", "--target-checkpoint", (dir / "adapt.ckpt").string()}, args);
  ASSERT_EQ(adapted.code, 0) << adapted.err;
  char want[64];
  std::snprintf(want, sizeof want, "k=5 accuracy %.4f", baseline);
  EXPECT_NE(own.out.find(want), std::string::npos) << own.out;
  EXPECT_NE(adapted.out.find(want), std::string::npos) << adapted.out;
}

TEST(EndToEnd, EvalSweepAndExport) {
  TempDir dir;
  const auto args = tiny_run(dir.path());
  ASSERT_EQ(run({"train-source"}, args).code, 0);
  const auto r = run({"eval", "--k", "1,3,5,7", "--export", (dir / "emb.csv").string()}, args);
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t lines = 0;
  for (std::size_t pos = 0; (pos = r.out.find(" accuracy ", pos)) != std::string::npos; ++pos) ++lines;
  EXPECT_EQ(lines, 4u);
  EXPECT_NE(r.out.find("confusion"), std::string::npos);
  const auto rows = inference::read_embeddings_csv(dir / "emb.csv");
  EXPECT_EQ(rows.size(), 200u + 100u + 10u);
  EXPECT_EQ(rows.front().domain, "synthetic-thin");
  EXPECT_EQ(rows[200].domain, "synthetic-bold");
  EXPECT_EQ(rows.back().domain, "center");

  const auto ex = run({"export-embeddings", "-o", (dir / "e2.csv").string()}, args);
  ASSERT_EQ(ex.code, 0) << ex.err;
  EXPECT_EQ(madda::testing::read_text(dir / "e2.csv"), madda::testing::read_text(dir / "emb.csv"));
}

TEST(EndToEnd, SingleDirectionAblationRunsThreeCellsAndReproduces) {
  TempDir dir;
  auto args = tiny_run(dir.path());
  args.insert(args.end(), {"-s", "epochs_adapt=1"});
  ASSERT_EQ(run({"ablate", "--single-direction"}, args).code, 0);
  const std::string first = madda::testing::read_text(dir / "ablation.json");
  const auto table = nlohmann::json::parse(first);
  ASSERT_EQ(table["cells"].size(), 3u);
  EXPECT_EQ(table["cells"][0]["mode"], "center-only");
  EXPECT_EQ(table["cells"][2]["mode"], "full");
  const std::string csv = madda::testing::read_text(dir / "ablation.csv");
  EXPECT_EQ(csv.rfind("mode,synthetic-thin->synthetic-bold\n", 0), 0u) << csv;

  TempDir again;
  auto args2 = tiny_run(again.path());
  args2.insert(args2.end(), {"-s", "epochs_adapt=1"});
  ASSERT_EQ(run({"ablate", "--single-direction"}, args2).code, 0);
  EXPECT_EQ(madda::testing::read_text(again / "ablation.json"), first);
}
