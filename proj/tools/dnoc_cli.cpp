#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dnoc/commands.hpp"

namespace {

enum ExitCode : int { kOk = 0, kGeneric = 1, kCoverage = 3, kCheckpoint = 4, kNumeric = 5, kInput = 6 };

std::vector<int> parse_values(const std::string& text) {
  std::vector<int> out;
  for (const auto& piece : dnoc::split_on(text, ',')) {
    const auto dash = piece.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const int lo = std::stoi(piece.substr(0, dash)), hi = std::stoi(piece.substr(dash + 1));
        for (int v = lo; v <= hi; ++v) out.push_back(v);
      } else {
        out.push_back(std::stoi(piece));
      }
    } catch (const std::exception&) {
      throw dnoc::ConfigError("cli", "cannot parse n_det value '" + piece + "'");
    }
  }
  if (out.empty()) throw dnoc::ConfigError("cli", "no n_det values given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled novel object captioner"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, mode, out_path, image_id, values = "1-10";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int n_det = 0;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config file (key = value)");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--n-det", n_det, "number of detections written to memory");
    cmd->add_option("--mode", mode, "dnoc | no-memory | no-placeholder");
    cmd->add_option("--checkpoint", checkpoint, "checkpoint path");
    cmd->add_option("--set", overrides, "extra key=value config overrides");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset, vocabulary and split");
  gen->add_option("--config", config_path, "world config file; built-in world when omitted");
  gen->add_option("--seed", seed, "seed override");
  gen->add_option("--out", out_path, "output directory")->default_val("data");

  auto* train = app.add_subcommand("train", "train and keep the best-validation checkpoint");
  add_run_flags(train);
  train->add_option("--out", out_path, "training log path");

  auto* caption = app.add_subcommand("caption", "caption one record");
  add_run_flags(caption);
  caption->add_option("--image-id", image_id, "record image id")->required();
  caption->add_option("--out", out_path, "write the caption to this file as well");

  auto* eval = app.add_subcommand("eval", "per-object F1 on the evaluation split");
  add_run_flags(eval);
  eval->add_option("--out", out_path, "report JSON path");

  auto* sweep = app.add_subcommand("sweep-ndet", "average held-out F1 against memory size");
  add_run_flags(sweep);
  sweep->add_option("--values", values, "comma list or ranges, e.g. 1-10 or 1,2,4");
  sweep->add_option("--out", out_path, "write the table to this file as well");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (gen->parsed()) {
      dnoc::GenDataOptions opts;
      opts.world_config = config_path;
      opts.out_dir = out_path;
      if (gen->count("--seed")) opts.seed = seed;
      dnoc::cmd_gen_data(opts, std::cout);
      return kOk;
    }

    CLI::App* cmd = app.get_subcommands().front();
    dnoc::RunConfig cfg = config_path.empty() ? dnoc::RunConfig{} : dnoc::RunConfig::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw dnoc::ConfigError("cli", "--set expects key=value, got '" + kv + "'");
      cfg.set(dnoc::trim(kv.substr(0, eq)), dnoc::trim(kv.substr(eq + 1)));
    }
    if (cmd->count("--seed")) cfg.seed = seed;
    if (cmd->count("--n-det")) cfg.n_det = n_det;
    if (cmd->count("--mode")) cfg.mode = mode;
    if (cmd->count("--checkpoint")) cfg.checkpoint = checkpoint;
    const bool has_out = cmd->count("--out") > 0;

    if (cmd == train) {
      if (has_out) cfg.train_log = out_path;
      dnoc::cmd_train(cfg, std::cout);
    } else if (cmd == caption) {
      const auto c = dnoc::cmd_caption(cfg, image_id, std::cout);
      if (has_out) {
        std::ofstream f(out_path);
        if (!f) throw dnoc::IoError("cli", "cannot write " + out_path);
        f << c.text() << '\n';
      }
    } else if (cmd == eval) {
      if (has_out) cfg.report = out_path;
      dnoc::cmd_eval(cfg, std::cout);
    } else if (cmd == sweep) {
      std::ostringstream table;
      dnoc::cmd_sweep_ndet(cfg, parse_values(values), table);
      std::cout << table.str();
      if (has_out) {
        std::ofstream f(out_path);
        if (!f) throw dnoc::IoError("cli", "cannot write " + out_path);
        f << table.str();
      }
    }
    return kOk;
  } catch (const dnoc::CoverageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCoverage;
  } catch (const dnoc::CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const dnoc::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const dnoc::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const dnoc::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const dnoc::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const dnoc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const dnoc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kGeneric;
  } catch (const std::exception& e) {
    std::cerr << "error: [cli] " << e.what() << '\n';
    return kGeneric;
  }
}
