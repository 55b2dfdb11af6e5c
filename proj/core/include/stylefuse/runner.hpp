#pragma once

#include <string>
#include <vector>

#include "stylefuse/config.hpp"
#include "stylefuse/verify.hpp"

namespace stylefuse {

enum class OutputFormat { csv, json, both };

bool output_format_from_string(const std::string& text, OutputFormat& out);

// One parsed invocation of the command-line driver.
struct Command {
    std::string name;                    // subcommand
    std::string config_path;             // empty = built-in defaults
    std::string out_dir = ".";
    std::vector<std::string> overrides;  // "dotted.path=value" assignments
    int threads = 0;                     // 0 = hardware concurrency
    OutputFormat format = OutputFormat::both;
};

// Executes a subcommand end to end: loads the configuration (file, then
// --set overrides, then the DSSI_SEED environment variable), runs the work,
// and writes reports plus a run manifest into out_dir.
//
// Returns 0 on success, 1 on usage/config/I-O errors (diagnostics go to
// stderr), 2 when every step ran but at least one bound check failed.
//
// All report files are byte-identical for a fixed configuration regardless
// of `threads`; only the manifest records volatile facts (wall time,
// requested threads).
int run_command(const Command& cmd);

// Report serialization, exposed for tests. Doubles are rendered with
// "%.17g" so values round-trip exactly.
std::string bound_reports_csv(const std::vector<BoundReport>& rows);

// mask-noise / mode-ablation cells:
// experiment,mode,kappa,mask_fraction,mae_logits,mae_alpha,mae_output,seed
std::string mask_cells_csv(const ExperimentReport& report);

// kappa-sweep cells:
// experiment,mode,kappa,style_contribution,prompt_contribution,seed
std::string kappa_cells_csv(const ExperimentReport& report);

}  // namespace stylefuse
