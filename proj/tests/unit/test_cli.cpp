/* Copyright 2026 The servesim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(SERVESIM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("servesim_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

TEST(CliTest, HelpSucceeds) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("run --help"), 0);
}

TEST(CliTest, ConfigErrorsExitTwo) {
  const auto dir = scratch("config");
  write(dir / "bad.json", R"({"layout": {"colocated_tes": "two"}})");
  write(dir / "unknown.json", R"({"surprise": true})");
  write(dir / "broken.json", "{ not json");
  EXPECT_EQ(run_cli("run"), 2);  // --config is required
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "unknown.json").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("scale-bench --model llama-70b --path teleport --out-dir " +
                    dir.string()),
            2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  fs::remove_all(dir);
}

TEST(CliTest, RuntimeErrorExitsThree) {
  const auto dir = scratch("runtime");
  write(dir / "blocker", "x");
  // The output directory cannot be created beneath a regular file.
  EXPECT_EQ(run_cli("scale-bench --model llama-70b --out-dir " +
                    (dir / "blocker" / "out").string()),
            3);
  fs::remove_all(dir);
}

TEST(CliTest, ScaleBenchSucceeds) {
  const auto dir = scratch("bench");
  EXPECT_EQ(run_cli("scale-bench --model llama-70b --path fork-hccs --n 2 "
                    "--out-dir " + dir.string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "scaling.csv"));
  EXPECT_TRUE(fs::exists(dir / "scaling.json"));
  fs::remove_all(dir);
}

}  // namespace
