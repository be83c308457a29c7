// Copyright 2026 The singval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// singval run <config.json> [--out DIR] [--seed N] [--workers K]
// singval validate <config.json>
//
// Exit codes: 0 pass, 1 error, 2 statistical criterion failed.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "singval/cli/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"singval: random matrix singular value experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;

  auto* run = app.add_subcommand("run", "execute a config and write results");
  run->add_option("config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "base output directory (default ./results)");
  run->add_option("--seed", seed, "override campaign.seed");
  run->add_option("--workers", workers, "worker threads (overrides SINGVAL_WORKERS and the config)");

  auto* validate = app.add_subcommand("validate", "audit a config without running it");
  validate->add_option("config", config, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : singval::cli::kError;
  }

  try {
    const auto j = singval::cli::read_json_file(config);
    if (validate->parsed()) {
      const auto issues = singval::cli::validate(j);
      for (const auto& msg : issues) std::cout << msg << '\n';
      if (issues.empty()) std::cout << "ok\n";
      return issues.empty() ? singval::cli::kPass : singval::cli::kError;
    }
    singval::cli::RunOptions opts;
    if (!out.empty()) opts.out_base = out;
    opts.seed = seed;
    opts.workers = workers;
    const auto outcome = singval::cli::run(j, opts);
    std::cout << outcome.out_dir.string() << '\n';
    std::cout << outcome.summary["checks"].dump(2) << '\n';
    return outcome.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "singval: error: " << e.what() << '\n';
    return singval::cli::kError;
  }
}
