#include "stylefuse/runner.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

namespace stylefuse {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInputError("cannot open output file: " + path.string());
    out << content;
    if (!out) throw InvalidInputError("failed writing output file: " + path.string());
}

// ===== JSON report builders =====

json bound_report_json(const BoundReport& r) {
    return json{{"check_name", r.check_name}, {"parameter", r.parameter},
                {"empirical", r.empirical},   {"bound", r.bound},
                {"satisfied", r.satisfied},   {"slack", r.slack},
                {"trials", r.trials},         {"seed", r.seed}};
}

json mask_cell_json(const MaskCell& c, std::uint64_t seed) {
    return json{{"mode", to_string(c.mode)},
                {"kappa", c.kappa},
                {"mask_fraction", c.mask_fraction},
                {"mae_logits", c.mae_logits},
                {"mae_alpha", c.mae_alpha},
                {"mae_output", c.mae_output},
                {"per_layer_logits", c.per_layer_logits},
                {"per_layer_alpha", c.per_layer_alpha},
                {"per_layer_output", c.per_layer_output},
                {"seed", seed}};
}

json kappa_cell_json(const KappaCell& c, std::uint64_t seed) {
    return json{{"mode", to_string(c.mode)},
                {"kappa", c.kappa},
                {"style_contribution", c.style_contribution},
                {"prompt_contribution", c.prompt_contribution},
                {"lambda_star_mean", c.lambda_star_mean},
                {"seed", seed}};
}

json config_json(const DriverConfig& cfg) {
    return json::parse(canonical_config_json(cfg));
}

// ===== output bundles =====

struct RunOutputs {
    std::vector<std::string> files;
    bool any_violation = false;
};

void emit_reports(const Command& cmd, const DriverConfig& cfg, const std::string& stem,
                  const std::string& csv_text, const json& body, RunOutputs& outputs) {
    const std::filesystem::path dir(cmd.out_dir);
    if (cmd.format == OutputFormat::csv || cmd.format == OutputFormat::both) {
        const std::string name = stem + ".csv";
        write_text_file(dir / name, csv_text);
        outputs.files.push_back(name);
    }
    if (cmd.format == OutputFormat::json || cmd.format == OutputFormat::both) {
        json doc = body;
        doc["command"] = cmd.name;
        doc["config"] = config_json(cfg);
        const std::string name = stem + ".json";
        write_text_file(dir / name, doc.dump(2) + "\n");
        outputs.files.push_back(name);
    }
}

void emit_manifest(const Command& cmd, const DriverConfig& cfg, const RunOutputs& outputs,
                   double wall_ms) {
    json doc;
    doc["version"] = kVersion;
    doc["command"] = cmd.name;
    doc["seed"] = cfg.pipeline.seed;
    doc["threads"] = cmd.threads;  // 0 = hardware concurrency
    doc["config_hash"] = config_hash(cfg);
    doc["wall_time_ms"] = static_cast<std::uint64_t>(wall_ms);
    doc["outputs"] = outputs.files;
    write_text_file(std::filesystem::path(cmd.out_dir) / "run_manifest.json",
                    doc.dump(2) + "\n");
}

// ===== subcommand bodies =====

RunOutputs run_bound_battery(const Command& cmd, const DriverConfig& cfg,
                             const std::string& stem, const std::vector<BoundReport>& rows) {
    RunOutputs outputs;
    json body;
    body["checks"] = json::array();
    bool all_ok = true;
    for (const BoundReport& r : rows) {
        body["checks"].push_back(bound_report_json(r));
        all_ok = all_ok && r.satisfied;
    }
    body["all_satisfied"] = all_ok;
    outputs.any_violation = !all_ok;
    emit_reports(cmd, cfg, stem, bound_reports_csv(rows), body, outputs);

    std::size_t failed = 0;
    for (const BoundReport& r : rows) {
        if (!r.satisfied) ++failed;
    }
    std::cout << stem << ": " << rows.size() << " checks, "
              << (failed == 0 ? "all satisfied" : std::to_string(failed) + " violated")
              << "\n";
    for (const BoundReport& r : rows) {
        if (!r.satisfied) {
            std::cout << "  VIOLATED " << r.check_name << " (parameter " << fmt_double(r.parameter)
                      << "): empirical " << fmt_double(r.empirical) << " > bound "
                      << fmt_double(r.bound) << "\n";
        }
    }
    return outputs;
}

RunOutputs run_experiment(const Command& cmd, const DriverConfig& cfg, ExperimentReport report,
                          bool kappa_schema) {
    report.config_echo_json = canonical_config_json(cfg);
    RunOutputs outputs;
    json body;
    body["experiment"] = report.experiment;
    body["seed"] = report.seed;
    if (kappa_schema) {
        body["cells"] = json::array();
        for (const KappaCell& c : report.kappa_cells) {
            body["cells"].push_back(kappa_cell_json(c, report.seed));
        }
        emit_reports(cmd, cfg, report.experiment, kappa_cells_csv(report), body, outputs);
        std::cout << report.experiment << ": " << report.kappa_cells.size() << " cells\n";
    } else {
        body["cells"] = json::array();
        for (const MaskCell& c : report.mask_cells) {
            body["cells"].push_back(mask_cell_json(c, report.seed));
        }
        emit_reports(cmd, cfg, report.experiment, mask_cells_csv(report), body, outputs);
        std::cout << report.experiment << ": " << report.mask_cells.size() << " cells\n";
    }
    return outputs;
}

}  // namespace

bool output_format_from_string(const std::string& text, OutputFormat& out) {
    if (text == "csv") {
        out = OutputFormat::csv;
        return true;
    }
    if (text == "json") {
        out = OutputFormat::json;
        return true;
    }
    if (text == "both") {
        out = OutputFormat::both;
        return true;
    }
    return false;
}

std::string bound_reports_csv(const std::vector<BoundReport>& rows) {
    std::string out = "check_name,delta_or_sigma,empirical,bound,slack,trials,seed\n";
    for (const BoundReport& r : rows) {
        out += r.check_name;
        out += ',' + fmt_double(r.parameter);
        out += ',' + fmt_double(r.empirical);
        out += ',' + fmt_double(r.bound);
        out += ',' + fmt_double(r.slack);
        out += ',' + std::to_string(r.trials);
        out += ',' + std::to_string(r.seed);
        out += '\n';
    }
    return out;
}

std::string mask_cells_csv(const ExperimentReport& report) {
    std::string out =
        "experiment,mode,kappa,mask_fraction,mae_logits,mae_alpha,mae_output,seed\n";
    for (const MaskCell& c : report.mask_cells) {
        out += report.experiment;
        out += ',' + to_string(c.mode);
        out += ',' + fmt_double(c.kappa);
        out += ',' + fmt_double(c.mask_fraction);
        out += ',' + fmt_double(c.mae_logits);
        out += ',' + fmt_double(c.mae_alpha);
        out += ',' + fmt_double(c.mae_output);
        out += ',' + std::to_string(report.seed);
        out += '\n';
    }
    return out;
}

std::string kappa_cells_csv(const ExperimentReport& report) {
    std::string out = "experiment,mode,kappa,style_contribution,prompt_contribution,seed\n";
    for (const KappaCell& c : report.kappa_cells) {
        out += report.experiment;
        out += ',' + to_string(c.mode);
        out += ',' + fmt_double(c.kappa);
        out += ',' + fmt_double(c.style_contribution);
        out += ',' + fmt_double(c.prompt_contribution);
        out += ',' + std::to_string(report.seed);
        out += '\n';
    }
    return out;
}

int run_command(const Command& cmd) {
    const auto started = std::chrono::steady_clock::now();

    if (cmd.name == "emit-config-template") {
        std::cout << config_template_json();
        return 0;
    }

    ConfigParseResult parsed;
    const char* env_seed = std::getenv("DSSI_SEED");
    if (cmd.config_path.empty()) {
        parsed = parse_config_text(config_template_json(), cmd.overrides, env_seed);
    } else {
        parsed = load_config_file(cmd.config_path, cmd.overrides, env_seed);
    }
    if (!parsed.ok) {
        for (const ConfigDiagnostic& d : parsed.diagnostics) {
            std::cerr << "config error at \"" << d.pointer << "\": " << d.message << "\n";
        }
        return 1;
    }
    const DriverConfig& cfg = parsed.config;

    try {
        std::filesystem::create_directories(cmd.out_dir);

        RunOutputs outputs;
        if (cmd.name == "verify-propositions") {
            outputs = run_bound_battery(cmd, cfg, "bound_checks",
                                        verify_propositions_battery(cfg, cmd.threads));
        } else if (cmd.name == "reflow-check") {
            outputs =
                run_bound_battery(cmd, cfg, "reflow_checks", reflow_battery(cfg.pipeline.seed));
        } else if (cmd.name == "mask-experiment") {
            outputs = run_experiment(cmd, cfg, mask_noise_experiment(cfg.pipeline, cmd.threads),
                                     false);
        } else if (cmd.name == "mode-ablation") {
            outputs = run_experiment(cmd, cfg, mode_ablation(cfg.pipeline, cmd.threads), false);
        } else if (cmd.name == "kappa-sweep") {
            outputs = run_experiment(
                cmd, cfg, kappa_sweep(cfg.pipeline, cfg.pipeline.kappas, cmd.threads), true);
        } else {
            std::cerr << "unknown subcommand: " << cmd.name << "\n";
            return 1;
        }

        const double wall_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - started)
                                   .count();
        emit_manifest(cmd, cfg, outputs, wall_ms);
        return outputs.any_violation ? 2 : 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace stylefuse
