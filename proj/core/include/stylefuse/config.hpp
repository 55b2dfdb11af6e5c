#pragma once

#include <string>
#include <vector>

#include "stylefuse/pipeline.hpp"

namespace stylefuse {

// Debugging hooks for the verification driver.
struct VerifyOptions {
    // Appends one deliberately failing check so the bound-violation exit
    // path can be exercised end to end.
    bool inject_violation = false;
};

struct DriverConfig {
    PipelineConfig pipeline;
    VerifyOptions verify;
};

// One configuration problem, addressed by JSON pointer ("/dssi/kappa").
struct ConfigDiagnostic {
    std::string pointer;
    std::string message;
};

struct ConfigParseResult {
    bool ok = false;
    DriverConfig config;
    std::vector<ConfigDiagnostic> diagnostics;
};

// Parses and validates a configuration document. The schema is strict:
// unknown fields are rejected, required fields must be present, and every
// problem is reported with its JSON pointer (parsing does not stop at the
// first error).
//
// `overrides` are "dotted.path=value" assignments applied to the document
// before validation (values parse as JSON when possible, otherwise as
// strings). `env_seed`, when non-null, overrides the seed last — the
// driver passes the DSSI_SEED environment variable through here.
ConfigParseResult parse_config_text(const std::string& text,
                                    const std::vector<std::string>& overrides = {},
                                    const char* env_seed = nullptr);

// Same, reading from a file. A missing/unreadable file yields a diagnostic.
ConfigParseResult load_config_file(const std::string& path,
                                   const std::vector<std::string>& overrides = {},
                                   const char* env_seed = nullptr);

// Canonical serialization: every field explicit, keys sorted, stable float
// formatting. parse(canonical(x)) == x, and canonical is idempotent.
std::string canonical_config_json(const DriverConfig& config);

// The default configuration instance emitted by the template subcommand.
std::string config_template_json();

// FNV-1a 64-bit hash of the canonical serialization, hex-encoded. Recorded
// in run manifests so outputs can be matched to the exact configuration.
std::string config_hash(const DriverConfig& config);

}  // namespace stylefuse
