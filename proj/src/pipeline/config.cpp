#include "zsil/pipeline/pipeline.hpp"

#include "zsil/common/seed.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace zsil::pipeline {
using nlohmann::json;

namespace {

json domains_json(const PipelineConfig& c) {
    const auto strip = [](const env::DomainSpec& d) { return json{{"themes", d.themes}}; };
    return {{"source", strip(c.source)}, {"target", strip(c.target)}, {"vae_training", strip(c.vae_training)}};
}

class Parser {
public:
    explicit Parser(std::vector<FieldError>& errors) : errors_(errors) {}

    void unknown_keys(const json& section, const json& reference, const std::string& prefix) {
        for (const auto& [key, _] : section.items()) {
            if (!reference.contains(key)) errors_.push_back({join(prefix, key), "unknown field"});
        }
    }

    // Parses `section` into T starting from the default; type errors become field errors.
    template <typename T>
    T section(const json& raw, const std::string& key, T fallback) {
        if (!raw.contains(key)) return fallback;
        const auto& s = raw.at(key);
        if (!s.is_object()) {
            errors_.push_back({key, "must be an object"});
            return fallback;
        }
        const json reference = json(fallback);
        unknown_keys(s, reference, key);
        json accepted = reference;
        for (const auto& [field, v] : s.items()) {
            if (!reference.contains(field)) continue;
            json probe = reference;
            probe[field] = v;
            try {
                (void)probe.get<T>();
                accepted[field] = v;
            } catch (const std::exception& e) {
                errors_.push_back({join(key, field), clean(e.what())});
            }
        }
        return accepted.get<T>();
    }

    template <typename T>
    T scalar(const json& raw, const std::string& path, const std::string& key, T fallback) {
        if (!raw.contains(key)) return fallback;
        try {
            return raw.at(key).get<T>();
        } catch (const std::exception& e) {
            errors_.push_back({join(path, key), clean(e.what())});
            return fallback;
        }
    }

    std::vector<FieldError>& errors() { return errors_; }

private:
    static std::string join(const std::string& prefix, const std::string& key) {
        return prefix.empty() ? key : prefix + "." + key;
    }

    static std::string clean(std::string what) {
        // nlohmann messages start with "[json.exception.type_error.302] ".
        if (const auto pos = what.find("] "); what.rfind("[json.exception", 0) == 0 && pos != std::string::npos) {
            what = what.substr(pos + 2);
        }
        return what;
    }

    std::vector<FieldError>& errors_;
};

void to_json_data(json& j, const DataConfig& d) {
    j = {{"expert_episodes", d.expert_episodes},
         {"random_episodes", d.random_episodes},
         {"expert_mode", eval::to_string(d.expert_mode)}};
}

} // namespace

json to_json(const PipelineConfig& c) {
    json data;
    to_json_data(data, c.data);
    return {{"name", c.name},
            {"scenario", env::to_string(c.scenario)},
            {"seed", c.seed},
            {"run_dir", c.run_dir},
            {"domains", domains_json(c)},
            {"vae", c.vae},
            {"ppo", c.ppo},
            {"iq", c.iq},
            {"data", data},
            {"evaluation",
             {{"episodes", c.evaluation.episodes},
              {"mode", eval::to_string(c.evaluation.mode)},
              {"target_baselines", c.evaluation.target_baselines},
              {"sweep_counts", c.evaluation.sweep_counts}}}};
}

PipelineConfig validate_config(const json& raw) {
    if (!raw.is_object()) throw ConfigError(std::vector<FieldError>{{"", "configuration must be a JSON object"}});
    std::vector<FieldError> errors;
    Parser p(errors);
    PipelineConfig c;
    const json reference = to_json(c);
    p.unknown_keys(raw, reference, "");

    c.name = p.scalar(raw, "", "name", c.name);
    c.seed = p.scalar(raw, "", "seed", c.seed);
    c.run_dir = p.scalar(raw, "", "run_dir", c.run_dir);
    try {
        c.scenario = env::scenario_from_string(p.scalar(raw, "", "scenario", std::string("combi")));
    } catch (const Error& e) {
        errors.push_back({"scenario", e.what()});
    }

    // Domains: scenario and role follow from the position; themes default to the standard set.
    c.source = env::standard_domain(c.scenario, env::Role::source);
    c.target = env::standard_domain(c.scenario, env::Role::target);
    c.vae_training = env::standard_domain(c.scenario, env::Role::vae_training);
    if (raw.contains("domains")) {
        const auto& d = raw.at("domains");
        if (!d.is_object()) {
            errors.push_back({"domains", "must be an object"});
        } else {
            p.unknown_keys(d, domains_json(c), "domains");
            const std::pair<const char*, env::DomainSpec*> slots[] = {
                {"source", &c.source}, {"target", &c.target}, {"vae_training", &c.vae_training}};
            for (const auto& [key, spec] : slots) {
                if (!d.contains(key)) continue;
                const std::string path = std::string("domains.") + key;
                const auto& entry = d.at(key);
                if (!entry.is_object()) {
                    errors.push_back({path, "must be an object"});
                    continue;
                }
                p.unknown_keys(entry, json{{"themes", nullptr}}, path);
                if (!entry.contains("themes")) continue;
                try {
                    spec->themes = entry.at("themes").get<std::vector<env::ColorTheme>>();
                } catch (const std::exception& e) {
                    errors.push_back({path + ".themes", e.what()});
                }
            }
        }
    }
    for (const auto& [key, spec] : {std::pair{"source", &c.source}, std::pair{"target", &c.target},
                                    std::pair{"vae_training", &c.vae_training}}) {
        try {
            env::validate_domain(*spec);
        } catch (const Error& e) {
            errors.push_back({std::string("domains.") + key + ".themes", e.what()});
        }
    }

    c.vae = p.section(raw, "vae", c.vae);
    c.ppo = p.section(raw, "ppo", c.ppo);
    c.iq = p.section(raw, "iq", c.iq);

    if (raw.contains("data")) {
        const auto& d = raw.at("data");
        if (!d.is_object()) {
            errors.push_back({"data", "must be an object"});
        } else {
            p.unknown_keys(d, reference.at("data"), "data");
            c.data.expert_episodes = p.scalar(d, "data", "expert_episodes", c.data.expert_episodes);
            c.data.random_episodes = p.scalar(d, "data", "random_episodes", c.data.random_episodes);
            try {
                c.data.expert_mode = eval::acting_mode_from_string(p.scalar(d, "data", "expert_mode", std::string("greedy")));
            } catch (const Error& e) {
                errors.push_back({"data.expert_mode", e.what()});
            }
        }
    }
    if (raw.contains("evaluation")) {
        const auto& e = raw.at("evaluation");
        if (!e.is_object()) {
            errors.push_back({"evaluation", "must be an object"});
        } else {
            p.unknown_keys(e, reference.at("evaluation"), "evaluation");
            c.evaluation.episodes = p.scalar(e, "evaluation", "episodes", c.evaluation.episodes);
            c.evaluation.target_baselines = p.scalar(e, "evaluation", "target_baselines", c.evaluation.target_baselines);
            c.evaluation.sweep_counts = p.scalar(e, "evaluation", "sweep_counts", c.evaluation.sweep_counts);
            try {
                c.evaluation.mode = eval::acting_mode_from_string(p.scalar(e, "evaluation", "mode", std::string("greedy")));
            } catch (const Error& ex) {
                errors.push_back({"evaluation.mode", ex.what()});
            }
        }
    }

    // Section invariants.
    for (auto&& e : c.vae.validate("vae")) errors.push_back(e);
    for (auto&& e : c.ppo.validate("ppo")) errors.push_back(e);
    for (auto&& e : c.iq.validate("iq")) errors.push_back(e);
    if (c.data.expert_episodes < 1) errors.push_back({"data.expert_episodes", "must be >= 1"});
    if (c.data.random_episodes < 1) errors.push_back({"data.random_episodes", "must be >= 1"});
    if (c.evaluation.episodes < 1) errors.push_back({"evaluation.episodes", "must be >= 1"});
    for (int n : c.evaluation.sweep_counts) {
        if (n < 1) errors.push_back({"evaluation.sweep_counts", "every count must be >= 1"});
        else if (n > c.data.expert_episodes) {
            errors.push_back({"evaluation.sweep_counts", "count " + std::to_string(n) + " exceeds data.expert_episodes"});
        }
    }
    if (c.run_dir.empty()) errors.push_back({"run_dir", "must not be empty"});

    // Cross-references.
    if (c.iq.latent_dim != c.vae.latent_dim) {
        errors.push_back({"iq.latent_dim", "must equal vae.latent_dim (" + std::to_string(c.vae.latent_dim) + ")"});
    }
    if (c.ppo.num_actions != env::kNumActions) {
        errors.push_back({"ppo.num_actions", "environment has " + std::to_string(env::kNumActions) + " actions"});
    }
    if (c.iq.num_actions != env::kNumActions) {
        errors.push_back({"iq.num_actions", "environment has " + std::to_string(env::kNumActions) + " actions"});
    }
    if (c.vae.image_size != env::kObservationSize) {
        errors.push_back({"vae.image_size", "observations are " + std::to_string(env::kObservationSize) + " pixels wide"});
    }
    if (c.vae.image_channels != env::kChannels) {
        errors.push_back({"vae.image_channels", "observations have " + std::to_string(env::kChannels) + " channels"});
    }

    if (!errors.empty()) throw ConfigError(std::move(errors));
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(std::vector<FieldError>{{"", "cannot open config file " + path.string()}});
    json raw;
    try {
        raw = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::vector<FieldError>{{"", std::string("config is not valid JSON: ") + e.what()}});
    }
    return validate_config(raw);
}

std::string config_hash(const PipelineConfig& config) {
    auto j = to_json(config);
    j.erase("run_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(0, j.dump())));
    return buf;
}

} // namespace zsil::pipeline
