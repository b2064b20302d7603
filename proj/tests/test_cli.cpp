#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "meta_rdre/checkpoint.hpp"
#include "meta_rdre/cli/commands.hpp"
#include "support/finite_diff.hpp"

namespace {

using namespace meta_rdre;
using namespace meta_rdre::cli;
namespace fs = std::filesystem;
namespace mt = meta_rdre::testing;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("meta_rdre_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_args(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "meta-rdre");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

TEST(Config, FileAndOverrides) {
  RunConfig cfg;
  std::istringstream in("# comment\nseed = 9\n  alpha=0.25  # trailing\n\nbaselines = true\nsupport_sizes = 1, 2,5\n");
  apply_config_text(cfg, in, "cfg");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.alpha, 0.25);
  EXPECT_TRUE(cfg.baselines);
  EXPECT_EQ(parse_list<std::size_t>("support_sizes", cfg.support_sizes), (std::vector<std::size_t>{1, 2, 5}));
  set_value(cfg, "alpha", "0.75");
  EXPECT_EQ(cfg.alpha, 0.75);
}

TEST(Config, Errors) {
  RunConfig cfg;
  std::istringstream unknown("seed = 1\nnot_a_key = 3\n");
  try {
    apply_config_text(cfg, unknown, "cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("not_a_key"), std::string::npos);
  }
  EXPECT_THROW(set_value(cfg, "seed", "abc"), ConfigError);
  EXPECT_THROW(set_value(cfg, "max_iters", "-3"), ConfigError);
  EXPECT_THROW(set_value(cfg, "alpha", "0.5x"), ConfigError);
  EXPECT_THROW(set_value(cfg, "baselines", "maybe"), ConfigError);
  std::istringstream bad_line("seed 3\n");
  EXPECT_THROW(apply_config_text(cfg, bad_line, "cfg"), ConfigError);
  cfg.mode = "other";
  EXPECT_THROW(to_train_config(cfg), ConfigError);
}

TEST(Config, SerializeParsesBack) {
  RunConfig a;
  a.seed = 42;
  a.alpha = 0.1;
  a.out = "somewhere";
  a.include_self_pairs = false;
  a.lambda_grid = "0.5,2";
  RunConfig b;
  std::istringstream in(serialize(a));
  apply_config_text(b, in, "serialized");
  EXPECT_EQ(serialize(a), serialize(b));
  EXPECT_EQ(b.seed, 42u);
  EXPECT_FALSE(b.include_self_pairs);
}

TEST(Checkpoint, RoundTripIsExact) {
  const ModelParams p = mt::random_model(3, 2, 4, 8, 16, 0.3);
  const auto bytes = serialize_checkpoint(p);
  const ModelParams q = deserialize_checkpoint(bytes);
  EXPECT_EQ(q.dims, p.dims);
  EXPECT_EQ(q.alpha, p.alpha);
  EXPECT_EQ(q.rho, p.rho);
  std::vector<Tensor> a, b;
  for_each_parameter(p, [&](const std::string&, const Tensor& t) { a.push_back(t); });
  for_each_parameter(q, [&](const std::string&, const Tensor& t) { b.push_back(t); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_EQ(serialize_checkpoint(q), bytes);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto bytes = serialize_checkpoint(mt::random_model(4, 1, 2, 3, 4));
  // Any single flipped byte is rejected.
  for (std::size_t pos : {std::size_t{0}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x40;
    EXPECT_THROW(deserialize_checkpoint(bad), IoError) << "byte " << pos;
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 20);
  EXPECT_THROW(deserialize_checkpoint(truncated), IoError);
  EXPECT_THROW(deserialize_checkpoint({}), IoError);
}

TEST(Checkpoint, VersionMismatchNamed) {
  auto bytes = serialize_checkpoint(mt::random_model(5, 1, 2, 3, 4));
  bytes[4] = 2;
  // Re-stamp the checksum so only the version is wrong.
  const std::size_t body = bytes.size() - 8;
  const std::uint64_t h = meta_rdre::detail::fnv1a(bytes.data(), body);
  for (std::size_t i = 0; i < 8; ++i) bytes[body + i] = static_cast<unsigned char>(h >> (8 * i));
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos) << e.what();
  }
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  std::string err;
  EXPECT_EQ(run_args({"train", "--bogus", "1", "--out", dir.string()}), kConfigFailure);
  EXPECT_EQ(run_args({"train", "--alpha", "1.5", "--out", (dir / "a").string(), "--data_dir", dir.string()}),
            kConfigFailure);
  EXPECT_EQ(run_args({"train"}, &err), kConfigFailure);
  EXPECT_NE(err.find("--out"), std::string::npos);
  EXPECT_EQ(run_args({"train", "--data_dir", (dir / "missing").string(), "--out", (dir / "b").string()}), kIoFailure);
  fs::create_directories(dir / "bad" / "source");
  fs::create_directories(dir / "bad" / "validation");
  std::ofstream(dir / "bad" / "source" / "s.csv") << "1\nhello\n";
  std::ofstream(dir / "bad" / "validation" / "v.csv") << "1\n2\n";
  EXPECT_EQ(run_args({"train", "--data_dir", (dir / "bad").string(), "--out", (dir / "c").string()}, &err),
            kDataFailure);
  EXPECT_NE(err.find("s.csv:2"), std::string::npos) << err;
  EXPECT_EQ(run_args({"frobnicate", "--out", dir.string()}), kConfigFailure);
  fs::remove_all(dir);
}

TEST(Cli, EndToEndSmallRun) {
  const fs::path dir = scratch("e2e");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_args({"gen-synth", "--out", data, "--n_source", "6", "--n_target", "4", "--n_per_dataset", "60"}),
            kSuccess);
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.csv"));
  EXPECT_TRUE(fs::exists(dir / "data" / "target" / "target_003.csv"));
  {
    std::ofstream cfg(dir / "train.cfg");
    cfg << "max_iters = 30\nval_interval = 10\nn_val_episodes = 4\nlatent_dim = 4\nhidden_dim = 8\nembed_dim = 8\n";
  }
  const std::string train = (dir / "train").string();
  ASSERT_EQ(run_args({"train", "--config", (dir / "train.cfg").string(), "--data_dir", data, "--out", train}), kSuccess);
  EXPECT_TRUE(fs::exists(dir / "train" / "checkpoint.bin"));
  const std::string log = slurp(dir / "train" / "training_log.csv");
  EXPECT_EQ(log.rfind("iteration,train_loss,val_loss,n_support\n0,,", 0), 0u);
  EXPECT_NE(slurp(dir / "train" / "config.txt").find("max_iters = 30"), std::string::npos);

  const std::string ckpt = (dir / "train" / "checkpoint.bin").string();
  ASSERT_EQ(run_args({"eval", "--data_dir", data, "--checkpoint", ckpt, "--out", (dir / "eval").string(),
                      "--baselines", "true", "--grid_points", "5"}),
            kSuccess);
  const std::string pairs = slurp(dir / "eval" / "eval_pairs.csv");
  EXPECT_EQ(pairs.rfind("n_support,trial,nu,de,ours,oracle,rulsif@", 0), 0u);
  EXPECT_EQ(std::count(pairs.begin(), pairs.end(), '\n'), 1 + 16);
  EXPECT_TRUE(fs::exists(dir / "eval" / "ratio_grid.csv"));
  EXPECT_NE(slurp(dir / "eval" / "eval_summary.csv").find("rulsif_best_oracle_selected"), std::string::npos);

  ASSERT_EQ(run_args({"eval", "--data_dir", data, "--checkpoint", ckpt, "--out", (dir / "eval2").string(),
                      "--include_self_pairs", "false"}),
            kSuccess);
  const std::string no_self = slurp(dir / "eval2" / "eval_pairs.csv");
  EXPECT_EQ(std::count(no_self.begin(), no_self.end(), '\n'), 1 + 12);

  ASSERT_EQ(run_args({"compare", "--data_dir", data, "--checkpoint", ckpt, "--out", (dir / "cmp").string(),
                      "--support_sizes", "2"}),
            kSuccess);
  EXPECT_NE(slurp(dir / "cmp" / "compare_auc.csv").find("2,0,ours,"), std::string::npos);

  ASSERT_EQ(run_args({"baseline", "--data_dir", data, "--out", (dir / "base").string(), "--support_sizes", "5"}),
            kSuccess);
  EXPECT_EQ(slurp(dir / "base" / "baseline_pairs.csv").rfind("n_support,trial,nu,de,oracle,rulsif@", 0), 0u);

  // Random-split mode over a flat directory.
  ASSERT_EQ(run_args({"train", "--config", (dir / "train.cfg").string(), "--data_dir", (dir / "data" / "source").string(),
                      "--split_counts", "3,2,1", "--out", (dir / "train_split").string()}),
            kSuccess);
  // Detection needs role columns.
  EXPECT_EQ(run_args({"detect", "--data_dir", data, "--checkpoint", ckpt, "--out", (dir / "det").string()}),
            kDataFailure);
  fs::remove_all(dir);
}

TEST(Cli, PresetFileCounts) {
  const fs::path dir = scratch("presets");
  const auto count_csv = [](const fs::path& root) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      n += e.path().extension() == ".csv" && e.path().filename() != "manifest.csv";
    }
    return n;
  };
  ASSERT_EQ(run_args({"gen-synth", "--preset", "desk", "--out", (dir / "desk").string()}), kSuccess);
  EXPECT_EQ(count_csv(dir / "desk"), 123u);
  ASSERT_EQ(run_args({"gen-synth", "--preset", "full", "--out", (dir / "full").string()}), kSuccess);
  EXPECT_EQ(count_csv(dir / "full"), 623u);
  fs::remove_all(dir);
}

TEST(Cli, OutlierPipeline) {
  const fs::path dir = scratch("outlier");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_args({"gen-synth", "--preset", "outlier", "--out", data, "--n_source", "3", "--n_target", "2"}),
            kSuccess);
  const std::string train = (dir / "train").string();
  ASSERT_EQ(run_args({"train", "--mode", "outlier", "--data_dir", data, "--out", train, "--max_iters", "10",
                      "--n_val_episodes", "2", "--latent_dim", "4", "--hidden_dim", "8", "--embed_dim", "8"}),
            kSuccess);
  ASSERT_EQ(run_args({"detect", "--data_dir", data, "--checkpoint", (dir / "train" / "checkpoint.bin").string(),
                      "--out", (dir / "det").string(), "--support_sizes", "5", "--baselines", "true"}),
            kSuccess);
  const std::string aucs = slurp(dir / "det" / "detect_auc.csv");
  EXPECT_NE(aucs.find("target_000,ours,"), std::string::npos);
  EXPECT_NE(aucs.find("target_001,rulsif@0.1,"), std::string::npos);
  const std::string scores = slurp(dir / "det" / "detect_scores.csv");
  // 2 targets x (500 - 5) scored rows.
  EXPECT_EQ(std::count(scores.begin(), scores.end(), '\n'), 1 + 2 * 495);
  EXPECT_EQ(run_args({"gen-synth", "--preset", "huge", "--out", data}), kConfigFailure);
  fs::remove_all(dir);
}

}  // namespace
