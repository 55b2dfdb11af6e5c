// Command-line driver: thin argv parsing around stylefuse::run_command.

#include <string>

#include <CLI11.hpp>

#include "stylefuse/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"stylefuse: numerical verification of block-attention style fusion"};
    app.require_subcommand(1);

    stylefuse::Command cmd;
    std::string format_text = "both";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", cmd.config_path,
                        "JSON configuration file (omit to use built-in defaults)");
        sub->add_option("--out", cmd.out_dir, "output directory")->capture_default_str();
        sub->add_option("--set", cmd.overrides,
                        "override one config field, e.g. --set dssi.kappa=1.5 (repeatable)")
            ->type_name("PATH=VALUE");
        sub->add_option("--threads", cmd.threads, "worker threads (0 = hardware concurrency)")
            ->capture_default_str();
        sub->add_option("--format", format_text, "report format: csv, json, or both")
            ->capture_default_str()
            ->check(CLI::IsMember({"csv", "json", "both"}));
    };

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"verify-propositions",
         "run every analytic bound battery and write bound_checks reports"},
        {"reflow-check", "run the flow-sampler battery and write reflow_checks reports"},
        {"mask-experiment", "masked-input noise propagation across mask fractions"},
        {"mode-ablation", "the same mask grid across all three fusion modes"},
        {"kappa-sweep", "style/prompt contribution of generation runs per kappa"},
        {"emit-config-template", "print the canonical default configuration to stdout"},
    };
    for (const Sub& s : subs) add_common(app.add_subcommand(s.name, s.help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems are exit 1; --help is 0
    }

    cmd.name = app.get_subcommands().front()->get_name();
    stylefuse::output_format_from_string(format_text, cmd.format);
    return stylefuse::run_command(cmd);
}
