#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mitonet/config.hpp"
#include "mitonet/metrics.hpp"
#include "mitonet_cli/cli.hpp"
#include "oracles.hpp"

namespace mitonet::cli {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

// Small fast config: 16 px inputs, a handful of epochs.
fs::path write_small_config(const TempDir& dir) {
  RunConfig cfg;
  cfg.augment.out_size = 16;
  cfg.model.input_size = 16;
  cfg.augment.crop_fraction = 1.0;
  cfg.optim.max_epochs = 3;
  cfg.optim.batch_size = 16;
  cfg.optim.head_lr = 1e-2;
  const fs::path p = dir / "config.json";
  save_run_config(p, cfg);
  return p;
}

TEST(Cli, SynthTrainEvaluatePipeline) {
  TempDir dir;
  const auto cfg = write_small_config(dir);
  const auto data = (dir / "data").string();
  const auto ckpt = (dir / "ckpt").string();

  auto r = run({"synth", "--out", data, "--n", "40", "--patch-size", "24", "--seed", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("wrote 40 patches"), std::string::npos);

  r = run({"train", "--config", cfg.string(), "--manifest", data + "/manifest.csv", "--out",
           ckpt, "--seed", "9"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"checkpoint.json", "history.jsonl", "val_manifest.csv", "val_report.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(ckpt) / f)) << f;
  }

  const auto report = (dir / "report.json").string();
  r = run({"evaluate", "--checkpoint", ckpt, "--manifest", ckpt + "/val_manifest.csv", "--report",
           report});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("Overall (pooled)"), std::string::npos);

  // The best epoch's validation BAcc is reproduced by scoring the saved
  // validation manifest with the saved checkpoint.
  std::ifstream hist(fs::path(ckpt) / "history.jsonl");
  std::string line;
  double best = -1;
  while (std::getline(hist, line)) {
    const auto rec = nlohmann::json::parse(line);
    if (!rec["val"]["bacc"].is_null()) best = std::max(best, rec["val"]["bacc"].get<double>());
  }
  std::ifstream rf(report);
  const auto parsed = metrics::parse_report(nlohmann::json::parse(rf));
  ASSERT_TRUE(parsed.overall_pooled.bacc.has_value());
  EXPECT_NEAR(*parsed.overall_pooled.bacc, best, 1e-9);

  r = run({"report", report});
  ASSERT_EQ(r.code, kExitOk) << r.err;
}

TEST(Cli, NormalizeWritesManifest) {
  TempDir dir;
  const auto data = (dir / "data").string();
  ASSERT_EQ(run({"synth", "--out", data, "--n", "6", "--patch-size", "16"}).code, kExitOk);
  const auto r =
      run({"normalize", "--manifest", data + "/manifest.csv", "--out", (dir / "norm").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "norm/manifest.csv"));
}

TEST(Cli, InitConfigIsLoadable) {
  TempDir dir;
  const auto path = (dir / "c.json").string();
  ASSERT_EQ(run({"init-config", "--out", path, "--seed", "4"}).code, kExitOk);
  EXPECT_EQ(load_run_config(path).seed, 4u);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({"train", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--manifest", "m.csv"}).code, kExitUsage);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir;
  auto r = run({"train", "--manifest", (dir / "missing.csv").string(), "--out",
                (dir / "o").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("error:"), std::string::npos);

  std::ofstream(dir / "bad.csv") << "path,label,domain\na.png,7,0\n";
  r = run({"train", "--manifest", (dir / "bad.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, kExitData);

  std::ofstream(dir / "cfg.json") << R"({"optim": {"learning_rate": 1}})";
  r = run({"train", "--config", (dir / "cfg.json").string(), "--manifest",
           (dir / "bad.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, kExitData);

  EXPECT_EQ(run({"evaluate", "--checkpoint", (dir / "none").string(), "--manifest",
                 (dir / "bad.csv").string()})
                .code,
            kExitData);
}

}  // namespace
}  // namespace mitonet::cli
