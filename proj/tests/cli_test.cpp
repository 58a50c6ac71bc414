// Copyright 2026 The bumlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the bumlab executable as a subprocess.

#include <gtest/gtest.h>

#include <unistd.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(BUMLAB_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) o.output.append(buf.data(), n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bumlab_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string small_config(const fs::path& dir) {
  auto p = dir / "small.cfg";
  std::ofstream(p) << "[experiment]\nscenario = patch\nseed = 2\n[data]\nn_per_class = 200\nnum_classes = 3\n"
                      "target_class = 0\nclass_separation = 2\n[train]\nlearning_rate = 1e-3\nepochs = 5\n[ga]\nsteps = 3\n"
                      "[lora]\nsteps = 3\n[scrub]\nsteps = 3\n[fmd]\ndamping = 100\n";
  return p.string();
}

const std::string kPatch = std::string(BUMLAB_SOURCE_DIR) + "/configs/patch.cfg";

TEST(Cli, UnknownSubcommandPrintsUsage) {
  auto o = run("frobnicate");
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.output.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownFlagPrintsUsage) {
  auto o = run("run --config " + kPatch + " --bogus");
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("Usage"), std::string::npos);
}

TEST(Cli, MissingConfigNamesPath) {
  auto o = run("run --config /no/such/file.cfg --out /tmp/never");
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("/no/such/file.cfg"), std::string::npos);
  EXPECT_EQ(std::count(o.output.begin(), o.output.end(), '\n'), 1);
}

TEST(Cli, RunThenRefuseToOverwrite) {
  auto dir = scratch("run");
  auto cfg = small_config(dir);
  auto o = run("run --config " + cfg + " --seed 4 --out " + (dir / "a").string());
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_TRUE(fs::exists(dir / "a" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "results.csv"));
  auto again = run("run --config " + cfg + " --out " + (dir / "a").string());
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.output.find("--force"), std::string::npos);
  EXPECT_EQ(run("run --config " + cfg + " --out " + (dir / "a").string() + " --force").code, 0);
  fs::remove_all(dir);
}

TEST(Cli, OutRootEnvironmentVariable) {
  auto dir = scratch("root");
  auto cfg = small_config(dir);
  const std::string cmd = "BUMLAB_OUT_ROOT=" + dir.string() + " " + std::string(BUMLAB_CLI) + " generate --config " +
                          cfg + " --out rel > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "rel" / "bundle.csv"));
  fs::remove_all(dir);
}

TEST(Cli, StepwiseSubcommandsAndCobumAnchor) {
  auto dir = scratch("steps");
  auto cfg = small_config(dir);
  const std::string d = dir.string();
  ASSERT_EQ(run("generate --config " + cfg + " --out " + d).code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --bundle " + d + "/bundle --out " + d).code, 0);
  ASSERT_EQ(run("train --gold --config " + cfg + " --bundle " + d + "/bundle --out " + d).code, 0);
  auto u = run("unlearn --config " + cfg + " --strategy ga --model " + d + "/baseline.ckpt --bundle " + d +
               "/bundle --out " + d);
  ASSERT_EQ(u.code, 0) << u.output;
  EXPECT_TRUE(fs::exists(dir / "gradient_ascent.tsv"));
  auto e = run("eval --config " + cfg + " --bundle " + d + "/bundle --out " + d + " --model " + d +
               "/baseline.ckpt --model " + d + "/hard.ckpt --model " + d + "/gradient_ascent.ckpt");
  ASSERT_EQ(e.code, 0) << e.output;
  auto c = run("cobum --config " + cfg + " --out " + d + " --unlearned " + d + "/hard.report.json --gold " + d +
               "/hard.report.json --baseline " + d + "/baseline.report.json");
  ASSERT_EQ(c.code, 0) << c.output;
  EXPECT_NE(c.output.find("U=1 "), std::string::npos) << c.output;
  EXPECT_NE(c.output.find("E=1 "), std::string::npos) << c.output;
  EXPECT_NE(c.output.find("F=1 "), std::string::npos) << c.output;
  EXPECT_NE(c.output.find("P=1 "), std::string::npos) << c.output;
  auto s = run("saliency --config " + cfg + " --model " + d + "/baseline.ckpt --bundle " + d + "/bundle --out " + d +
               " --limit 5");
  ASSERT_EQ(s.code, 0) << s.output;
  EXPECT_TRUE(fs::exists(dir / "saliency_baseline_forget.csv"));
  fs::remove_all(dir);
}

TEST(Cli, MissingCheckpointIsUserError) {
  auto dir = scratch("badckpt");
  auto cfg = small_config(dir);
  ASSERT_EQ(run("generate --config " + cfg + " --out " + dir.string()).code, 0);
  auto o = run("unlearn --config " + cfg + " --strategy ga --model " + dir.string() + "/nope.ckpt --bundle " +
               dir.string() + "/bundle --out " + dir.string());
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("nope.ckpt"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
