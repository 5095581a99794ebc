// Command line front end: phantom -> pseudolabel -> train -> eval, plus
// attribution and confusion inspection. Exit codes: 0 ok, 2 bad
// configuration or usage, 3 runtime failure.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sctseg/runner.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config, "run configuration (JSON)")->required();
  cmd->add_option("--set", args.sets, "override a config key, e.g. train.batch_size=8");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised CT segmentation with self-correcting pseudo labels"};
  app.require_subcommand(1);

  CommonArgs args;
  int stage = 2;
  std::string checkpoint, labels_a, labels_b;

  CLI::App* phantom = app.add_subcommand("phantom", "generate a synthetic test volume");
  add_common(phantom, args);

  CLI::App* pseudo = app.add_subcommand("pseudolabel", "cluster intensities into pseudo labels");
  add_common(pseudo, args);

  CLI::App* train = app.add_subcommand("train", "train stage 2 (supervised) or 3 (self-training)");
  add_common(train, args);
  train->add_option("--stage", stage, "2 or 3")->required();

  CLI::App* eval = app.add_subcommand("eval", "segment the volume and score against GT");
  add_common(eval, args);
  eval->add_option("--checkpoint", checkpoint, "explicit checkpoint path");

  CLI::App* cam = app.add_subcommand("gradcam", "class attribution heatmap for one slice");
  add_common(cam, args);
  cam->add_option("--checkpoint", checkpoint, "explicit checkpoint path");

  CLI::App* conf = app.add_subcommand("confusion", "confusion matrix between two label volumes");
  add_common(conf, args);
  conf->add_option("--rows", labels_a, "label volume for matrix rows")->required();
  conf->add_option("--cols", labels_b, "label volume for matrix columns")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    const sctseg::RunConfig cfg = sctseg::load_run_config(args.config, args.sets);
    if (phantom->parsed()) sctseg::run_phantom(cfg);
    if (pseudo->parsed()) sctseg::run_pseudolabel(cfg);
    if (train->parsed()) sctseg::run_train(cfg, stage);
    if (eval->parsed()) sctseg::run_eval(cfg, checkpoint);
    if (cam->parsed()) sctseg::run_gradcam(cfg, checkpoint);
    if (conf->parsed()) sctseg::run_confusion(cfg, labels_a, labels_b);
    return 0;
  } catch (const sctseg::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
