#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pixprop/config.hpp"
#include "pixprop/errors.hpp"
#include "pixprop/workflow.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::optional<int> workers;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.sets, "override a dotted config path, e.g. --set training.epochs=10")
      ->take_all()
      ->allow_extra_args(false);
  cmd->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", f.quiet, "no progress output");
}

pixprop::RunConfig resolve(const Flags& f) {
  std::optional<std::filesystem::path> file;
  if (!f.config.empty()) file = f.config;
  std::optional<std::string> out;
  if (!f.out.empty()) out = f.out;
  return pixprop::load_run_config(file, f.sets, f.seed, out, f.workers);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixprop: pixel-wise object proposals on synthetic scenes"};
  app.require_subcommand(1);
  Flags flags;
  const char* names[][2] = {{"gen", "generate the train and test datasets"},
                            {"train", "train the localizers and the confidence network"},
                            {"infer", "write proposals for every split"},
                            {"eval", "evaluate proposals against the ground truth"},
                            {"ablate", "four-variant ablation on the test split"},
                            {"config", "print the resolved configuration"}};
  std::vector<CLI::App*> cmds;
  for (const auto& n : names) {
    CLI::App* c = app.add_subcommand(n[0], n[1]);
    add_common(c, flags);
    cmds.push_back(c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(pixprop::ErrorCategory::kConfig);
  }

  try {
    const pixprop::RunConfig config = resolve(flags);
    auto progress = [&](pixprop::NetworkRole role, int epoch, double loss) {
      if (!flags.quiet) std::fprintf(stderr, "%s epoch %d loss %.6f\n", pixprop::role_name(role).c_str(), epoch, loss);
    };
    if (cmds[0]->parsed()) pixprop::cmd_gen(config);
    else if (cmds[1]->parsed()) pixprop::cmd_train(config, progress);
    else if (cmds[2]->parsed()) pixprop::cmd_infer(config);
    else if (cmds[3]->parsed()) pixprop::cmd_eval(config);
    else if (cmds[4]->parsed()) pixprop::cmd_ablate(config);
    else std::cout << config.to_json();
  } catch (const pixprop::PixpropError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
