#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "ntkfilter/metrics.hpp"
#include "ntkfilter/png_io.hpp"
#include "test_support.hpp"

using namespace ntkf;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  nlohmann::json summary;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  CliRun r{code, {}, err.str()};
  if (code == 0 && !out.str().empty() && out.str().front() == '{') r.summary = nlohmann::json::parse(out.str());
  return r;
}

fs::path tmp(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ntkf_cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string img(int size) { return tu::data_path("camera_" + std::to_string(size) + ".png").string(); }

}  // namespace

TEST(Cli, SummarySchemaAndDeterminism) {
  const CliRun a = run({"denoise", "--input", img(16), "--sigma", "25", "--seed", "3", "--arch", "vanilla",
                     "--kernel-size", "3", "--mode", "nystrom", "--fraction", "0.1"});
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* key : {"command", "config_hash", "psnr_best", "t_best", "wall_ms"}) {
    EXPECT_TRUE(a.summary.contains(key)) << key;
  }
  const CliRun b = run({"denoise", "--input", img(16), "--sigma", "25", "--seed", "3", "--arch", "vanilla",
                     "--kernel-size", "3", "--mode", "nystrom", "--fraction", "0.1"});
  EXPECT_EQ(a.summary["psnr_best"], b.summary["psnr_best"]);
  EXPECT_EQ(a.summary["config_hash"], b.summary["config_hash"]);
  EXPECT_EQ(cli::fnv1a_hex(""), "cbf29ce484222325");
}

TEST(Cli, FullAndNystromAgreeWithAllColumns) {
  const auto p1 = tmp("full.png"), p2 = tmp("nys.png");
  const std::vector<std::string> base{"denoise", "--input", img(16), "--sigma", "25", "--seed", "1",
                                      "--arch", "vanilla", "--kernel-size", "3"};
  auto full = base, nys = base;
  full.insert(full.end(), {"--mode", "full", "--out", p1.string()});
  nys.insert(nys.end(), {"--mode", "nystrom", "--fraction", "1.0", "--out", p2.string()});
  const CliRun a = run(full), b = run(nys);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.summary["t_best"], b.summary["t_best"]);
  EXPECT_NEAR(a.summary["psnr_best"].get<double>(), b.summary["psnr_best"].get<double>(), 1e-6);
  EXPECT_EQ(load_png(p1).data(), load_png(p2).data());
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({"denoise", "--input", "/no/such.png", "--sigma", "25"}).code, cli::kConfigError);
  EXPECT_EQ(run({"denoise", "--input", img(16)}).code, cli::kConfigError);
  EXPECT_EQ(run({"denoise", "--bogus"}).code, cli::kConfigError);
  EXPECT_EQ(run({"denoise", "--input", img(16), "--sigma", "25", "--arch", "deep_vanilla", "--mode", "nystrom"}).code,
            cli::kUnsupportedArchitecture);
  EXPECT_EQ(run({"simulate", "--input", img(8), "--sigma", "25", "--arch", "vanilla", "--kernel-size", "3",
                 "--optimizer", "gd", "--gamma", "1e4", "--channels", "8", "--iters", "300"})
                .code,
            cli::kDivergence);
}

TEST(Cli, SimulateZeroItersEmitsInitTelemetry) {
  const fs::path dir = tmp("sim");
  fs::create_directories(dir);
  const CliRun r = run({"simulate", "--input", img(16), "--sigma", "25", "--arch", "autoencoder", "--channels", "4",
                     "--iters", "0", "--input-mode", "noise", "--optimizer", "adam", "--eigenimages", "2",
                     "--out-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary["t_best"], 0);
  EXPECT_TRUE(fs::exists(dir / "telemetry.csv"));
  EXPECT_TRUE(fs::exists(dir / "weight_change.json"));
  EXPECT_TRUE(fs::exists(dir / "init_eig0.png"));
  EXPECT_EQ(r.summary["details"]["weight_change"]["global_l2_change"], 0.0);
}

TEST(Cli, KernelOnConstantImageIsRankDeficient) {
  const auto in = tmp("const4.png");
  save_png(ImageTensor(1, {4, 4}, std::vector<double>(16, 0.1)), in);
  const auto bin = tmp("theta.bin");
  const CliRun r = run({"kernel", "--input", in.string(), "--arch", "vanilla", "--kernel-size", "3", "--out", bin.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary["details"]["rank_1e-10"], 1);
  EXPECT_EQ(read_matrix_binary(bin).rows(), 16);
}

TEST(Cli, NlmWithTinyBandwidthReturnsInput) {
  const auto out = tmp("nlm.png");
  const CliRun r = run({"nlm", "--input", img(16), "--bandwidth", "1e-9", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_png(out).data(), load_png(img(16)).data());
}

TEST(Cli, GpWithNoisePriorIsNearlyConstant) {
  // The noise prior favours constant images; with observation noise well
  // above its non-constant variance the posterior collapses to mean(y).
  const CliRun r = run({"gp", "--input", img(16), "--sigma", "25", "--arch", "deep_vanilla", "--input-mode",
                        "noise", "--noise-sigma", "510"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto& d = r.summary["details"];
  EXPECT_LT(d["mean_spatial_std"].get<double>(), 0.1 * d["input_spatial_std"].get<double>());
  EXPECT_NEAR(d["mean_value"].get<double>(), d["input_mean_value"].get<double>(), 0.02);
}
