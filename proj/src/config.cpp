#include "tsg/config.hpp"

#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "tsg/common.hpp"

namespace tsg {

namespace {

struct Key {
    const char* name;
    std::variant<std::string TrainConfig::*, uint64_t TrainConfig::*, int TrainConfig::*, float TrainConfig::*,
                 bool TrainConfig::*>
        member;
};

const std::vector<Key>& key_table() {
    static const std::vector<Key> keys = {
        {"preset", &TrainConfig::preset},
        {"seed", &TrainConfig::seed},
        {"codec.seed", &TrainConfig::codec_seed},
        {"trainer.batch", &TrainConfig::batch},
        {"trainer.lambda", &TrainConfig::lambda},
        {"trainer.lr_g", &TrainConfig::lr_g},
        {"trainer.lr_d", &TrainConfig::lr_d},
        {"trainer.lr_t", &TrainConfig::lr_t},
        {"trainer.beta1", &TrainConfig::beta1},
        {"trainer.beta2", &TrainConfig::beta2},
        {"trainer.epochs", &TrainConfig::epochs},
        {"trainer.steps", &TrainConfig::steps},
        {"trainer.checkpoint_every", &TrainConfig::checkpoint_every},
        {"trainer.eval_every", &TrainConfig::eval_every},
        {"trainer.two_stage", &TrainConfig::two_stage},
        {"trainer.freeze_generator", &TrainConfig::freeze_generator},
        {"data.manifest", &TrainConfig::manifest},
        {"data.val_manifest", &TrainConfig::val_manifest},
        {"out.dir", &TrainConfig::out_dir},
        {"out.samples", &TrainConfig::save_samples},
        {"out.sample_rows", &TrainConfig::sample_rows},
    };
    return keys;
}

const Key& find_key(const std::string& name) {
    for (const Key& k : key_table()) {
        if (name == k.name) return k;
    }
    throw ConfigError("unknown config key: " + name);
}

void apply_json_value(TrainConfig& config, const Key& key, const nlohmann::json& value) {
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(config.*member)>;
            try {
                if constexpr (std::is_same_v<T, std::string>) {
                    config.*member = value.get<std::string>();
                } else if constexpr (std::is_same_v<T, bool>) {
                    config.*member = value.get<bool>();
                } else {
                    config.*member = value.get<T>();
                }
            } catch (const nlohmann::json::exception&) {
                throw ConfigError(std::string("config key ") + key.name + ": wrong value type");
            }
        },
        key.member);
}

void apply_string_value(TrainConfig& config, const Key& key, const std::string& value) {
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(config.*member)>;
            try {
                if constexpr (std::is_same_v<T, std::string>) {
                    config.*member = value;
                } else if constexpr (std::is_same_v<T, bool>) {
                    if (value == "true" || value == "1")
                        config.*member = true;
                    else if (value == "false" || value == "0")
                        config.*member = false;
                    else
                        throw ConfigError("");
                } else if constexpr (std::is_same_v<T, float>) {
                    size_t used = 0;
                    config.*member = std::stof(value, &used);
                    if (used != value.size()) throw ConfigError("");
                } else if constexpr (std::is_same_v<T, uint64_t>) {
                    size_t used = 0;
                    config.*member = std::stoull(value, &used);
                    if (used != value.size()) throw ConfigError("");
                } else {
                    size_t used = 0;
                    config.*member = std::stoi(value, &used);
                    if (used != value.size()) throw ConfigError("");
                }
            } catch (...) {
                throw ConfigError(std::string("config key ") + key.name + ": cannot parse value '" + value + "'");
            }
        },
        key.member);
}

}  // namespace

void apply_config_file(TrainConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config " + path.string() + ": expected a JSON object");
    for (const auto& [name, value] : j.items()) apply_json_value(config, find_key(name), value);
}

void apply_override(TrainConfig& config, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    apply_string_value(config, find_key(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

nlohmann::json config_to_json(const TrainConfig& config) {
    nlohmann::json j;
    for (const Key& k : key_table()) {
        std::visit([&](auto member) { j[k.name] = config.*member; }, k.member);
    }
    return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig config;
    for (const auto& [name, value] : j.items()) apply_json_value(config, find_key(name), value);
    return config;
}

std::string config_key_help() {
    const TrainConfig defaults;
    std::ostringstream os;
    for (const Key& k : key_table()) {
        os << "  " << k.name << " (default: ";
        std::visit(
            [&](auto member) {
                using T = std::remove_reference_t<decltype(defaults.*member)>;
                if constexpr (std::is_same_v<T, std::string>) {
                    os << "\"" << defaults.*member << "\"";
                } else if constexpr (std::is_same_v<T, bool>) {
                    os << (defaults.*member ? "true" : "false");
                } else {
                    os << defaults.*member;
                }
            },
            k.member);
        os << ")\n";
    }
    return os.str();
}

}  // namespace tsg
