#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairlab/cli.hpp"
#include "fairlab/error.hpp"

namespace fs = std::filesystem;
using namespace fairlab;

namespace {

template <class T>
std::optional<T> opt(CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

void require(CLI::Option* o, const char* cmd) {
  if (!o->count()) throw ConfigError(std::string(cmd) + " needs " + o->get_name());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairlab: group-fair training, evaluation and audits"};
  app.set_version_flag("--version", std::string(cli::kToolVersion));
  app.require_subcommand(1);

  std::string config, data, out, checkpoint, baseline, fair, pretrained, preset, split = "test";
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  auto* gen_config = gen->add_option("--config", config, "generator spec file");
  auto* gen_preset = gen->add_option("--preset", preset, "dataset of a demo preset");
  auto* gen_seed = gen->add_option("--seed", seed, "overrides the spec seed");
  gen->add_option("--out", out, "run directory")->required();

  auto* tr = app.add_subcommand("train", "train a model from a config");
  auto* tr_config = tr->add_option("--config", config, "experiment config file");
  auto* tr_data = tr->add_option("--data", data, "data.csv or a directory holding it");
  auto* tr_seed = tr->add_option("--seed", seed, "overrides the config seed");
  auto* tr_pre = tr->add_option("--pretrained", pretrained, "embedding checkpoint for adversarial removal");
  auto* tr_preset = tr->add_option("--preset", preset, "not used by train");
  tr->add_option("--out", out, "run directory")->required();

  auto* ev = app.add_subcommand("evaluate", "per-group report for a checkpoint");
  auto* ev_ckpt = ev->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* ev_data = ev->add_option("--data", data, "data.csv or a directory holding it");
  auto* ev_config = ev->add_option("--config", config, "config selecting the reported loss");
  ev->add_option("--out", out, "run directory")->required();

  auto* au = app.add_subcommand("audit", "gerrymandering audit of a baseline and a fair classifier");
  auto* au_base = au->add_option("--baseline", baseline, "baseline checkpoint");
  auto* au_fair = au->add_option("--fair", fair, "fair checkpoint");
  auto* au_data = au->add_option("--data", data, "data.csv or a directory holding it");
  au->add_option("--split", split, "split to audit (default test)");
  au->add_option("--out", out, "run directory")->required();

  auto* rep = app.add_subcommand("report", "run a demo preset end to end");
  auto* rep_preset = rep->add_option("--preset", preset, "overfit-demo | holdout-demo | gerrymander-demo | "
                                                         "adversarial-demo | flip-demo");
  auto* rep_seed = rep->add_option("--seed", seed, "overrides the preset seed");
  rep->add_option("--out", out, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      cli::cmd_generate(opt<fs::path>(gen_config, config),
                        gen_preset->count() ? std::optional(cli::parse_preset(preset)) : std::nullopt,
                        opt(gen_seed, seed), out);
    } else if (tr->parsed()) {
      require(tr_config, "train");
      require(tr_data, "train");
      if (tr_preset->count()) throw ConfigError("train takes --config, not --preset; use 'report --preset'");
      cli::cmd_train(config, data, out, opt(tr_seed, seed), opt<fs::path>(tr_pre, pretrained));
    } else if (ev->parsed()) {
      require(ev_ckpt, "evaluate");
      require(ev_data, "evaluate");
      cli::cmd_evaluate(checkpoint, data, out, opt<fs::path>(ev_config, config));
    } else if (au->parsed()) {
      require(au_base, "audit");
      require(au_fair, "audit");
      require(au_data, "audit");
      cli::cmd_audit(baseline, fair, data, out, data::parse_split(split));
    } else if (rep->parsed()) {
      require(rep_preset, "report");
      const auto summary = cli::cmd_report(cli::parse_preset(preset), out, opt(rep_seed, seed));
      for (const auto& [k, v] : summary.values) std::cout << k << ' ' << v << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
