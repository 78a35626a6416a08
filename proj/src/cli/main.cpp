#include <cstdio>
#include <exception>
#include <memory>

#include <CLI11.hpp>

#include "commands.hpp"
#include "floodseg/errors.hpp"
#include "floodseg/kernels.hpp"

namespace floodseg::cli {

namespace {

struct Invocation {
  std::string config;
  std::vector<std::string> sets;
  int threads = 0;
};

std::string key_listing(const std::vector<KeySpec>& keys) {
  std::string out = "\nKeys (--set key=value or key = value lines in --config):\n";
  for (const auto& k : keys) {
    out += "  " + k.name + " [" + k.default_value + "]  " + k.help + "\n";
  }
  return out;
}

int exit_code_of(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Config:
      return kConfigError;
    case ErrorCategory::Data:
      return kDataError;
    case ErrorCategory::Numeric:
      return kDivergence;
    case ErrorCategory::Contract:
      break;
  }
  return kFailure;
}

int dispatch(const std::string& name, const RunSpec& spec) {
  if (name == "synth") cmd_synth(spec);
  else if (name == "weaklabel") cmd_weaklabel(spec);
  else if (name == "otsu") cmd_otsu(spec);
  else if (name == "train") cmd_train(spec);
  else if (name == "teacher") cmd_teacher(spec);
  else if (name == "distill") cmd_distill(spec);
  else if (name == "eval") cmd_eval(spec);
  else if (name == "render") cmd_render(spec);
  else if (name == "gradcheck") return cmd_gradcheck(spec) ? kOk : kFailure;
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Cross-modal distillation for SAR flood segmentation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::map<std::string, Invocation> inv;
  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& name : subcommand_names()) {
    auto* sub = app.add_subcommand(name);
    auto& v = inv[name];
    sub->add_option("--config", v.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", v.sets, "key=value override, repeatable")->allow_extra_args(false);
    sub->add_option("--threads", v.threads, "OpenMP threads for the kernels (0 keeps the default)")
        ->check(CLI::NonNegativeNumber);
    sub->footer(key_listing(subcommand_keys(name)));
    subs.emplace_back(name, sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    const auto& v = inv[name];
    try {
      RunSpec spec(subcommand_keys(name));
      if (!v.config.empty()) spec.load_file(v.config);
      for (const auto& s : v.sets) spec.set(s);
      if (v.threads > 0) kernels::set_thread_count(v.threads);
      return dispatch(name, spec);
    } catch (const Error& e) {
      std::fprintf(stderr, "floodseg %s: %s\n", name.c_str(), e.what());
      return exit_code_of(e);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "floodseg %s: %s\n", name.c_str(), e.what());
      return kFailure;
    }
  }
  return kFailure;
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace floodseg::cli
