#pragma once

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "madda/data/usps.hpp"
#include "madda/errors.hpp"
#include "madda/experiment/commands.hpp"

namespace madda::experiment {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_file, "key = value config file");
    cmd->add_option("-s,--set", overrides, "override one config key (key=value), repeatable");
  }

  ExperimentConfig load() const {
    ExperimentConfig cfg = config_file.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(config_file);
    for (const auto& o : overrides) cfg.apply_override(o);
    return cfg;
  }
};

inline std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  for (auto field : data::detail::split_fields(text, ',')) {
    field = data::detail::trim(field);
    std::size_t k = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), k);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || k == 0)
      throw UsageError("--k expects a comma separated list of positive integers, got '" + text + "'");
    ks.push_back(k);
  }
  return ks;
}

// Entry point of the `madda` tool; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Metric-learning domain adaptation: train, adapt, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "madda 0.1.0");

  CommonOptions common;
  std::string source_ckpt, target_ckpt, export_path, k_list, input, output, format = "esl";
  bool resume = false, single = false;
  std::size_t max_epochs = 0;

  auto* train = app.add_subcommand("train-source", "train the source embedding model with the triplet loss");
  common.attach(train);

  auto* adapt_cmd = app.add_subcommand("adapt", "adapt a target model to the target domain");
  common.attach(adapt_cmd);
  adapt_cmd->add_option("--source-checkpoint", source_ckpt, "default: <output_dir>/source.ckpt");
  adapt_cmd->add_flag("--resume", resume, "continue from <output_dir>/adapt.ckpt");
  adapt_cmd->add_option("--max-epochs", max_epochs, "stop after this many epochs in this invocation (checkpointed)");

  auto* eval_cmd = app.add_subcommand("eval", "kNN accuracy and confusion counts on the target test split");
  common.attach(eval_cmd);
  eval_cmd->add_option("--source-checkpoint", source_ckpt, "default: <output_dir>/source.ckpt");
  eval_cmd->add_option("--target-checkpoint", target_ckpt, "adapt checkpoint; omitted = the unadapted source model");
  eval_cmd->add_option("--k", k_list, "comma separated k values, e.g. 1,3,5,7");
  eval_cmd->add_option("--export", export_path, "write reference, query and center embeddings to this CSV");

  auto* ablate_cmd = app.add_subcommand("ablate", "center-only / adversarial-only / full in both directions");
  common.attach(ablate_cmd);
  ablate_cmd->add_flag("--single-direction", single, "only source -> target");

  auto* convert = app.add_subcommand("convert-usps", "convert a USPS distribution to the CSV the loader reads");
  convert->add_option("-i,--input", input, "libsvm or zip.train-style file")->required();
  convert->add_option("-o,--output", output, "CSV to write")->required();
  convert->add_option("-f,--format", format, "libsvm | esl")->check(CLI::IsMember({"libsvm", "esl"}));

  auto* export_cmd = app.add_subcommand("export-embeddings", "write embeddings and cluster centers to CSV");
  common.attach(export_cmd);
  export_cmd->add_option("--source-checkpoint", source_ckpt, "default: <output_dir>/source.ckpt");
  export_cmd->add_option("--target-checkpoint", target_ckpt, "default: <output_dir>/adapt.ckpt if present");
  export_cmd->add_option("-o,--output", output, "CSV to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*convert) {
      const auto fmt = format == "libsvm" ? data::UspsSourceFormat::libsvm : data::UspsSourceFormat::esl;
      const auto records = data::read_usps_source(input, fmt);
      data::write_usps_csv(output, records);
      out << "wrote " << records.size() << " images to " << output << "\n";
      return 0;
    }
    const ExperimentConfig cfg = common.load();
    const RunPaths paths{cfg.output_dir()};
    const fs::path src = source_ckpt.empty() ? paths.source_checkpoint() : fs::path(source_ckpt);
    if (*train) {
      const auto res = train_source(cfg, out);
      out << "source checkpoint: " << res.checkpoint.string() << "\n";
    } else if (*adapt_cmd) {
      const auto res = adapt(cfg, src, resume, out,
                             max_epochs ? std::optional<std::size_t>(max_epochs) : std::nullopt);
      out << "final accuracy " << detail::fixed(res.final_accuracy) << " (source-only "
          << detail::fixed(res.baseline_accuracy) << ")\n";
      out << "target checkpoint: " << res.checkpoint.string() << "\n";
    } else if (*eval_cmd) {
      std::optional<fs::path> tgt, exp;
      if (!target_ckpt.empty()) tgt = target_ckpt;
      if (!export_path.empty()) exp = export_path;
      const auto rep = evaluate(cfg, src, tgt, k_list.empty() ? std::vector<std::size_t>{} : parse_k_list(k_list), exp);
      print_report(rep, out);
      if (exp) out << "embeddings: " << exp->string() << "\n";
    } else if (*ablate_cmd) {
      const auto cells = ablate(cfg, single, out);
      out << "ablation table: " << (cfg.output_dir() / "ablation.csv").string() << "\n";
    } else if (*export_cmd) {
      std::optional<fs::path> tgt;
      if (!target_ckpt.empty())
        tgt = target_ckpt;
      else if (fs::exists(paths.adapt_checkpoint()))
        tgt = paths.adapt_checkpoint();
      evaluate(cfg, src, tgt, {}, fs::path(output));
      out << "embeddings: " << output << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e));
  }
}

}  // namespace madda::experiment
