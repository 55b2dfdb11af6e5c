#include "stylefuse/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stylefuse {

namespace {

using nlohmann::json;

void add_diag(std::vector<ConfigDiagnostic>& diags, const std::string& pointer,
              const std::string& message) {
    diags.push_back(ConfigDiagnostic{pointer, message});
}

// ===== typed field extraction =====

bool want_object(const json& v, const std::string& ptr, std::vector<ConfigDiagnostic>& diags) {
    if (v.is_object()) return true;
    add_diag(diags, ptr, "expected an object");
    return false;
}

void read_count(const json& obj, const std::string& parent, const std::string& key,
                std::size_t& out, std::vector<ConfigDiagnostic>& diags) {
    const std::string ptr = parent + "/" + key;
    if (!obj.contains(key)) {
        add_diag(diags, ptr, "missing required field");
        return;
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        add_diag(diags, ptr, "expected a positive integer");
        return;
    }
    const std::int64_t raw = v.is_number_unsigned()
                                 ? static_cast<std::int64_t>(v.get<std::uint64_t>())
                                 : v.get<std::int64_t>();
    if (raw < 1) {
        add_diag(diags, ptr, "expected a positive integer");
        return;
    }
    out = static_cast<std::size_t>(raw);
}

void read_seed(const json& obj, const std::string& parent, const std::string& key,
               std::uint64_t& out, std::vector<ConfigDiagnostic>& diags) {
    const std::string ptr = parent + "/" + key;
    if (!obj.contains(key)) {
        add_diag(diags, ptr, "missing required field");
        return;
    }
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) {
        out = v.get<std::uint64_t>();
        return;
    }
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
        out = static_cast<std::uint64_t>(v.get<std::int64_t>());
        return;
    }
    add_diag(diags, ptr, "expected a non-negative integer");
}

void read_number(const json& obj, const std::string& parent, const std::string& key, double& out,
                 std::vector<ConfigDiagnostic>& diags, bool required) {
    const std::string ptr = parent + "/" + key;
    if (!obj.contains(key)) {
        if (required) add_diag(diags, ptr, "missing required field");
        return;
    }
    const json& v = obj.at(key);
    if (!v.is_number()) {
        add_diag(diags, ptr, "expected a number");
        return;
    }
    out = v.get<double>();
}

void read_bool(const json& obj, const std::string& parent, const std::string& key, bool& out,
               std::vector<ConfigDiagnostic>& diags) {
    const std::string ptr = parent + "/" + key;
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) {
        add_diag(diags, ptr, "expected a boolean");
        return;
    }
    out = v.get<bool>();
}

void read_number_array(const json& obj, const std::string& parent, const std::string& key,
                       std::vector<double>& out, std::vector<ConfigDiagnostic>& diags,
                       bool required) {
    const std::string ptr = parent + "/" + key;
    if (!obj.contains(key)) {
        if (required) add_diag(diags, ptr, "missing required field");
        return;
    }
    const json& v = obj.at(key);
    if (!v.is_array()) {
        add_diag(diags, ptr, "expected an array of numbers");
        return;
    }
    std::vector<double> values;
    values.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
            add_diag(diags, ptr + "/" + std::to_string(i), "expected a number");
            return;
        }
        values.push_back(v[i].get<double>());
    }
    out = std::move(values);
}

void reject_unknown(const json& obj, const std::string& parent,
                    const std::vector<std::string>& known,
                    std::vector<ConfigDiagnostic>& diags) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const std::string& k : known) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) add_diag(diags, parent + "/" + it.key(), "unknown field");
    }
}

// ===== document -> DriverConfig =====

void convert_dssi(const json& v, DssiConfig& out, std::vector<ConfigDiagnostic>& diags) {
    const std::string parent = "/dssi";
    if (!want_object(v, parent, diags)) return;
    reject_unknown(v, parent, {"kappa", "mode", "lambda_floor", "fixed_lambda", "alignment"},
                   diags);

    read_number(v, parent, "kappa", out.kappa, diags, true);
    read_number(v, parent, "lambda_floor", out.lambda_floor, diags, true);
    read_number(v, parent, "fixed_lambda", out.fixed_lambda, diags, true);

    if (!v.contains("mode")) {
        add_diag(diags, parent + "/mode", "missing required field");
    } else if (!v.at("mode").is_string()) {
        add_diag(diags, parent + "/mode", "expected one of \"vanilla\", \"fssi\", \"dssi\"");
    } else if (!fusion_mode_from_string(v.at("mode").get<std::string>(), out.mode)) {
        add_diag(diags, parent + "/mode",
                 "unknown mode \"" + v.at("mode").get<std::string>() +
                     "\" (expected \"vanilla\", \"fssi\", or \"dssi\")");
    }

    if (v.contains("alignment")) {
        if (!v.at("alignment").is_string() ||
            !alignment_axis_from_string(v.at("alignment").get<std::string>(), out.alignment)) {
            add_diag(diags, parent + "/alignment",
                     "expected \"full_axis\" or \"block_local\"");
        }
    }

    if (std::isfinite(out.kappa) && out.kappa <= 0.0) {
        add_diag(diags, parent + "/kappa", "must be > 0");
    }
    if (std::isfinite(out.lambda_floor) && out.lambda_floor <= 0.0) {
        add_diag(diags, parent + "/lambda_floor", "must be > 0");
    }
    if (std::isfinite(out.fixed_lambda) && (out.fixed_lambda < 0.0 || out.fixed_lambda > 1.0)) {
        add_diag(diags, parent + "/fixed_lambda", "must lie in [0, 1]");
    }
}

void convert_verify(const json& v, VerifyOptions& out, std::vector<ConfigDiagnostic>& diags) {
    const std::string parent = "/verify";
    if (!want_object(v, parent, diags)) return;
    reject_unknown(v, parent, {"inject_violation"}, diags);
    read_bool(v, parent, "inject_violation", out.inject_violation, diags);
}

ConfigParseResult convert_document(const json& doc) {
    ConfigParseResult result;
    std::vector<ConfigDiagnostic>& diags = result.diagnostics;

    if (!doc.is_object()) {
        add_diag(diags, "", "top-level value must be an object");
        return result;
    }
    reject_unknown(doc, "",
                   {"d", "N_p", "N_s", "N_o", "layers", "sample_steps", "seed", "mask_fractions",
                    "kappas", "dssi", "dssi_layer_mask", "reflow_time_loop", "verify"},
                   diags);

    DriverConfig cfg;
    PipelineConfig& p = cfg.pipeline;

    read_count(doc, "", "d", p.d, diags);
    read_count(doc, "", "N_p", p.n_p, diags);
    read_count(doc, "", "N_s", p.n_s, diags);
    read_count(doc, "", "N_o", p.n_o, diags);
    read_count(doc, "", "layers", p.layers, diags);
    read_count(doc, "", "sample_steps", p.sample_steps, diags);
    read_seed(doc, "", "seed", p.seed, diags);
    read_number_array(doc, "", "mask_fractions", p.mask_fractions, diags, true);
    read_number_array(doc, "", "kappas", p.kappas, diags, false);
    read_bool(doc, "", "reflow_time_loop", p.reflow_time_loop, diags);

    if (doc.contains("dssi_layer_mask")) {
        const json& v = doc.at("dssi_layer_mask");
        if (!v.is_array()) {
            add_diag(diags, "/dssi_layer_mask", "expected an array of 0/1 flags");
        } else {
            std::vector<std::uint8_t> flags;
            flags.reserve(v.size());
            bool ok = true;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const json& e = v[i];
                const bool is_int = e.is_number_integer() || e.is_number_unsigned();
                const std::int64_t raw = is_int ? e.get<std::int64_t>() : -1;
                if (!is_int || (raw != 0 && raw != 1)) {
                    add_diag(diags, "/dssi_layer_mask/" + std::to_string(i),
                             "expected 0 or 1");
                    ok = false;
                    break;
                }
                flags.push_back(static_cast<std::uint8_t>(raw));
            }
            if (ok) p.dssi_layer_mask = std::move(flags);
        }
    }

    if (!doc.contains("dssi")) {
        add_diag(diags, "/dssi", "missing required field");
    } else {
        convert_dssi(doc.at("dssi"), p.dssi, diags);
    }
    if (doc.contains("verify")) convert_verify(doc.at("verify"), cfg.verify, diags);

    // Cross-field constraints, attributed to the field that breaks them.
    for (std::size_t i = 0; i < p.mask_fractions.size(); ++i) {
        const double f = p.mask_fractions[i];
        if (!std::isfinite(f) || f < 0.0 || f > 1.0) {
            add_diag(diags, "/mask_fractions/" + std::to_string(i), "must lie in [0, 1]");
        } else if (i > 0 && f < p.mask_fractions[i - 1]) {
            add_diag(diags, "/mask_fractions/" + std::to_string(i),
                     "must be sorted ascending");
        }
    }
    for (std::size_t i = 0; i < p.kappas.size(); ++i) {
        if (!std::isfinite(p.kappas[i]) || p.kappas[i] <= 0.0) {
            add_diag(diags, "/kappas/" + std::to_string(i), "must be > 0");
        }
    }
    if (!p.dssi_layer_mask.empty() && p.dssi_layer_mask.size() != p.layers) {
        add_diag(diags, "/dssi_layer_mask",
                 "must have exactly one flag per layer (" + std::to_string(p.layers) +
                     " layers configured)");
    }

    if (diags.empty()) {
        // Backstop: the library-level validator must agree.
        try {
            p.validate();
        } catch (const std::exception& e) {
            add_diag(diags, "", e.what());
        }
    }

    result.ok = diags.empty();
    if (result.ok) result.config = cfg;
    return result;
}

// ===== overrides =====

std::string dotted_to_pointer(const std::string& dotted) {
    std::string ptr;
    std::string part;
    std::istringstream in(dotted);
    while (std::getline(in, part, '.')) ptr += "/" + part;
    return ptr;
}

bool apply_override(json& doc, const std::string& assignment,
                    std::vector<ConfigDiagnostic>& diags) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        add_diag(diags, "", "override \"" + assignment + "\" must look like path=value");
        return false;
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);

    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = text;  // fall back to a string literal

    try {
        doc[json::json_pointer(dotted_to_pointer(path))] = value;
    } catch (const json::exception& e) {
        add_diag(diags, dotted_to_pointer(path),
                 std::string("cannot apply override: ") + e.what());
        return false;
    }
    return true;
}

json full_document(const DriverConfig& config) {
    const PipelineConfig& p = config.pipeline;
    json doc;
    doc["d"] = p.d;
    doc["N_p"] = p.n_p;
    doc["N_s"] = p.n_s;
    doc["N_o"] = p.n_o;
    doc["layers"] = p.layers;
    doc["sample_steps"] = p.sample_steps;
    doc["seed"] = p.seed;
    doc["mask_fractions"] = p.mask_fractions;
    doc["kappas"] = p.kappas;
    doc["dssi"] = {
        {"kappa", p.dssi.kappa},
        {"mode", to_string(p.dssi.mode)},
        {"lambda_floor", p.dssi.lambda_floor},
        {"fixed_lambda", p.dssi.fixed_lambda},
        {"alignment", to_string(p.dssi.alignment)},
    };
    doc["dssi_layer_mask"] = p.dssi_layer_mask;
    doc["reflow_time_loop"] = p.reflow_time_loop;
    doc["verify"] = {{"inject_violation", config.verify.inject_violation}};
    return doc;
}

}  // namespace

ConfigParseResult parse_config_text(const std::string& text,
                                    const std::vector<std::string>& overrides,
                                    const char* env_seed) {
    ConfigParseResult result;

    json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) {
        add_diag(result.diagnostics, "", "config is not valid JSON");
        return result;
    }

    for (const std::string& assignment : overrides) {
        if (!apply_override(doc, assignment, result.diagnostics)) return result;
    }
    if (env_seed != nullptr) {
        json value = json::parse(env_seed, nullptr, /*allow_exceptions=*/false);
        if (value.is_discarded() || (!value.is_number_integer() && !value.is_number_unsigned()) ||
            (value.is_number_integer() && !value.is_number_unsigned() &&
             value.get<std::int64_t>() < 0)) {
            add_diag(result.diagnostics, "/seed",
                     "DSSI_SEED must be a non-negative integer, got \"" +
                         std::string(env_seed) + "\"");
            return result;
        }
        if (doc.is_object()) doc["seed"] = value;
    }

    return convert_document(doc);
}

ConfigParseResult load_config_file(const std::string& path,
                                   const std::vector<std::string>& overrides,
                                   const char* env_seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ConfigParseResult result;
        add_diag(result.diagnostics, "", "cannot open config file: " + path);
        return result;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), overrides, env_seed);
}

std::string canonical_config_json(const DriverConfig& config) {
    // nlohmann::json keeps object keys sorted, and its double formatting is
    // shortest-round-trip, so this string is a stable fingerprint.
    return full_document(config).dump(2) + "\n";
}

std::string config_template_json() {
    nlohmann::ordered_json doc;
    doc["d"] = 64;
    doc["N_p"] = 8;
    doc["N_s"] = 32;
    doc["N_o"] = 64;
    doc["layers"] = 4;
    doc["sample_steps"] = 1;
    doc["seed"] = 1;
    doc["mask_fractions"] = {0.25, 0.5, 0.75, 0.99};
    doc["dssi"] = {
        {"kappa", 2.3},
        {"mode", "dssi"},
        {"lambda_floor", 1e-6},
        {"fixed_lambda", 0.5},
    };
    return doc.dump(2) + "\n";
}

std::string config_hash(const DriverConfig& config) {
    const std::string text = canonical_config_json(config);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace stylefuse
