// selfevo: run, ablate and verify the self-evolution training loop.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "selfevo/harness.hpp"
#include "selfevo/verify.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::optional<int> steps;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("config", f.config, "Run configuration (JSON)")->required();
  cmd->add_option("-o,--output-dir", f.output_dir, "Override the output directory");
  cmd->add_option("--seed", f.seed, "Override the scenario seed");
  cmd->add_option("--variant", f.variant, "Override the reward variant (MV, SC, JS, MV_JS, SC_JS, SC_JS_DIST)");
  cmd->add_option("--steps", f.steps, "Override the number of training steps");
}

std::optional<selfevo::RunOverrides> to_overrides(const CommonFlags& f) {
  selfevo::RunOverrides o;
  if (!f.output_dir.empty()) o.output_dir = f.output_dir;
  o.seed = f.seed;
  o.steps = f.steps;
  if (!f.variant.empty()) {
    o.variant = selfevo::parse_variant(f.variant);
    if (!o.variant) {
      std::cerr << "error: unknown variant '" << f.variant << "'\n";
      return std::nullopt;
    }
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-consistency / judge-calibrated GRPO laboratory"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "Execute one training run");
  add_common(run, run_flags);

  CommonFlags ablate_flags;
  std::vector<std::uint64_t> seeds;
  auto* ablate = app.add_subcommand("ablate", "Run every reward variant over a list of seeds");
  add_common(ablate, ablate_flags);
  ablate->add_option("--seeds", seeds, "Seeds to run (space or comma separated)")->required()->delimiter(',');

  std::string fault = "none";
  auto* verify = app.add_subcommand("verify", "Check the mathematical identities and gradient correctness");
  verify->add_option("--inject-fault", fault, "Self-test: none | flip-lse-sign")
      ->check(CLI::IsMember({"none", "flip-lse-sign"}));

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    auto o = to_overrides(run_flags);
    if (!o) return 2;
    return selfevo::cli_run(run_flags.config, *o, std::cout, std::cerr);
  }
  if (ablate->parsed()) {
    auto o = to_overrides(ablate_flags);
    if (!o) return 2;
    return selfevo::cli_ablate(ablate_flags.config, seeds, *o, std::cout, std::cerr);
  }
  const auto f = fault == "flip-lse-sign" ? selfevo::Fault::flip_lse_sign : selfevo::Fault::none;
  return selfevo::cli_verify(f, std::cout);
}
