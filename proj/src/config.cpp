#include "fincurate/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace fincurate::config {

using json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path & path) {
    std::ifstream in(path);
    if (!in) {
        throw config_error("cannot read file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void reject_unknown_keys(const json & obj, const std::set<std::string> & allowed, const std::string & section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw config_error("config: unknown key \"" + it.key() + "\" in section " + section);
        }
    }
}

std::filesystem::path resolve(const std::filesystem::path & base, const std::string & p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_exists(const std::filesystem::path & path, const std::string & what) {
    if (!std::filesystem::exists(path)) {
        throw config_error("config: " + what + " does not exist: " + path.string());
    }
}

} // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path & path) {
    return from_json(read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

PipelineConfig PipelineConfig::from_json(const std::string & json_text, const std::filesystem::path & base_dir) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw config_error("config: not a JSON object");
    }
    reject_unknown_keys(j,
                        {"run", "ingest", "cleanse", "dedup", "taxonomy", "split", "blend", "pack", "registry",
                         "conversations", "judge", "clients", "eval", "sim"},
                        "(root)");

    PipelineConfig cfg;

    if (j.contains("run")) {
        const auto & r = j["run"];
        reject_unknown_keys(r, {"seed", "output_dir", "fixed_timestamp", "workers"}, "run");
        cfg.run.seed = r.value("seed", 0ULL);
        cfg.run.output_dir = resolve(base_dir, r.value("output_dir", "out"));
        cfg.run.fixed_timestamp = r.value("fixed_timestamp", "");
        cfg.run.workers = r.value("workers", 1ULL);
    }

    if (j.contains("ingest")) {
        const auto & r = j["ingest"];
        reject_unknown_keys(r, {"input", "max_records_per_shard"}, "ingest");
        if (r.contains("input")) {
            cfg.ingest.input = resolve(base_dir, r["input"].get<std::string>());
            require_exists(cfg.ingest.input, "ingest.input");
        }
        cfg.ingest.max_records_per_shard = r.value("max_records_per_shard", 100000ULL);
    }

    if (j.contains("cleanse")) {
        const auto & r = j["cleanse"];
        reject_unknown_keys(r,
                            {"min_word_count", "max_symbol_ratio", "max_repetition_ratio", "tier_high_cut",
                             "tier_low_cut", "pii_rules"},
                            "cleanse");
        cfg.cleanse_policy.min_word_count = r.value("min_word_count", cfg.cleanse_policy.min_word_count);
        cfg.cleanse_policy.max_symbol_ratio = r.value("max_symbol_ratio", cfg.cleanse_policy.max_symbol_ratio);
        cfg.cleanse_policy.max_repetition_ratio =
            r.value("max_repetition_ratio", cfg.cleanse_policy.max_repetition_ratio);
        cfg.cleanse_policy.tier_high_cut = r.value("tier_high_cut", cfg.cleanse_policy.tier_high_cut);
        cfg.cleanse_policy.tier_low_cut = r.value("tier_low_cut", cfg.cleanse_policy.tier_low_cut);
        if (r.contains("pii_rules")) {
            cfg.cleanse_policy.pii_rules.clear();
            for (const auto & jr : r["pii_rules"]) {
                reject_unknown_keys(jr, {"name", "pattern", "placeholder"}, "cleanse.pii_rules[]");
                cfg.cleanse_policy.pii_rules.push_back({jr.at("name").get<std::string>(),
                                                        jr.at("pattern").get<std::string>(),
                                                        jr.at("placeholder").get<std::string>()});
            }
        }
        cfg.cleanse_policy.validate();
    }

    if (j.contains("dedup")) {
        const auto & r = j["dedup"];
        reject_unknown_keys(r, {"threshold"}, "dedup");
        cfg.dedup.threshold = r.value("threshold", 0.8);
        if (!(cfg.dedup.threshold > 0.0 && cfg.dedup.threshold <= 1.0)) {
            throw config_error("config: dedup.threshold must be in (0,1]");
        }
    }

    if (j.contains("taxonomy")) {
        const auto & r = j["taxonomy"];
        reject_unknown_keys(r, {"domains", "max_leaf_size", "min_leaf_size", "residual_floor"}, "taxonomy");
        for (const auto & d : r.value("domains", json::array())) {
            reject_unknown_keys(d, {"label", "description"}, "taxonomy.domains[]");
            cfg.taxonomy.domains.push_back({d.at("label").get<std::string>(), d.value("description", "")});
        }
        cfg.taxonomy.max_leaf_size = r.value("max_leaf_size", 5000ULL);
        cfg.taxonomy.min_leaf_size = r.value("min_leaf_size", 50ULL);
        cfg.taxonomy.residual_floor = r.value("residual_floor", 0.15);
        if (cfg.taxonomy.max_leaf_size <= cfg.taxonomy.min_leaf_size) {
            throw config_error("config: taxonomy.max_leaf_size must exceed min_leaf_size");
        }
    }

    if (j.contains("split")) {
        const auto & r = j["split"];
        reject_unknown_keys(r, {"train_fraction"}, "split");
        cfg.split.train_fraction = r.value("train_fraction", 0.95);
        if (!(cfg.split.train_fraction > 0.0 && cfg.split.train_fraction < 1.0)) {
            throw config_error("config: split.train_fraction must be in (0,1)");
        }
    }

    if (j.contains("blend")) {
        const auto & r = j["blend"];
        reject_unknown_keys(r, {"entries"}, "blend");
        for (const auto & e : r.value("entries", json::array())) {
            reject_unknown_keys(e, {"stream", "data_type", "sampling_ratio"}, "blend.entries[]");
            blend::BlendEntry entry;
            auto stream = resolve(base_dir, e.at("stream").get<std::string>());
            entry.stream_id = stream.string();
            auto dt = ingest::data_type_from_name(e.value("data_type", "text"));
            if (!dt) {
                throw config_error("config: blend data_type unknown: " + e["data_type"].get<std::string>());
            }
            entry.data_type = *dt;
            entry.sampling_ratio = e.at("sampling_ratio").get<double>();
            cfg.blend.entries.push_back(entry);
            cfg.blend_inputs.push_back(stream);
            require_exists(stream, "blend stream");
        }
        if (!cfg.blend.entries.empty()) {
            cfg.blend.seed = cfg.run.seed;
            cfg.blend.validate();
        }
    }

    if (j.contains("pack")) {
        const auto & r = j["pack"];
        reject_unknown_keys(r, {"context_window"}, "pack");
        cfg.pack.context_window = r.value("context_window", 8192ULL);
        if (cfg.pack.context_window < 2) {
            throw config_error("config: pack.context_window must be >= 2");
        }
    }

    if (j.contains("registry")) {
        cfg.registry_file = resolve(base_dir, j["registry"].get<std::string>());
        require_exists(cfg.registry_file, "registry");
    }

    if (j.contains("conversations")) {
        const auto & r = j["conversations"];
        reject_unknown_keys(r, {"input"}, "conversations");
        if (r.contains("input")) {
            cfg.conversations.input = resolve(base_dir, r["input"].get<std::string>());
            require_exists(cfg.conversations.input, "conversations.input");
        }
    }

    if (j.contains("judge")) {
        const auto & r = j["judge"];
        reject_unknown_keys(r, {"taxonomy", "rejecting_pillars"}, "judge");
        if (r.contains("taxonomy")) {
            cfg.judge.taxonomy_file = resolve(base_dir, r["taxonomy"].get<std::string>());
            require_exists(cfg.judge.taxonomy_file, "judge.taxonomy");
        }
        if (r.contains("rejecting_pillars")) {
            cfg.judge.rejecting_pillars.clear();
            for (const auto & p : r["rejecting_pillars"]) {
                cfg.judge.rejecting_pillars.push_back(p.get<std::size_t>());
            }
        }
    }

    if (j.contains("clients")) {
        const auto & r = j["clients"];
        reject_unknown_keys(r, {"chat", "embedding"}, "clients");
        if (r.contains("chat")) {
            const auto & c = r["chat"];
            reject_unknown_keys(c, {"endpoint", "model", "timeout_seconds", "max_inflight", "max_retries", "stub_script"},
                                "clients.chat");
            cfg.clients.chat.endpoint = c.value("endpoint", "");
            cfg.clients.chat.model = c.value("model", "");
            cfg.clients.chat.timeout_seconds = c.value("timeout_seconds", 30.0);
            cfg.clients.chat.max_inflight = c.value("max_inflight", 4ULL);
            cfg.clients.chat.max_retries = c.value("max_retries", 1ULL);
            cfg.clients.chat.validate();
            if (c.contains("stub_script")) {
                cfg.clients.chat_stub_script = resolve(base_dir, c["stub_script"].get<std::string>());
                require_exists(cfg.clients.chat_stub_script, "clients.chat.stub_script");
            }
        }
        if (r.contains("embedding")) {
            const auto & c = r["embedding"];
            reject_unknown_keys(c, {"dim"}, "clients.embedding");
            cfg.clients.embedding_dim = c.value("dim", 64ULL);
        }
    }

    if (j.contains("eval")) {
        const auto & r = j["eval"];
        reject_unknown_keys(
            r, {"kl_input", "logprob_input", "toolcalls_gold", "toolcalls_predicted", "questions_input",
                "drift_threshold"},
            "eval");
        auto path_field = [&](const char * key, std::filesystem::path & target) {
            if (r.contains(key)) {
                target = resolve(base_dir, r[key].get<std::string>());
                require_exists(target, std::string("eval.") + key);
            }
        };
        path_field("kl_input", cfg.eval.kl_input);
        path_field("logprob_input", cfg.eval.logprob_input);
        path_field("toolcalls_gold", cfg.eval.toolcalls_gold);
        path_field("toolcalls_predicted", cfg.eval.toolcalls_predicted);
        path_field("questions_input", cfg.eval.questions_input);
        cfg.eval.drift_threshold = r.value("drift_threshold", 1.0);
    }

    if (j.contains("sim")) {
        const auto & r = j["sim"];
        reject_unknown_keys(r, {"mandate_count", "transaction_count", "scenarios", "traces_per_scenario"}, "sim");
        cfg.sim.mandate_count = r.value("mandate_count", 24ULL);
        cfg.sim.transaction_count = r.value("transaction_count", 20ULL);
        for (const auto & s : r.value("scenarios", json::array())) {
            cfg.sim.scenarios.push_back(s.get<std::string>());
        }
        cfg.sim.traces_per_scenario = r.value("traces_per_scenario", 4ULL);
    }

    return cfg;
}

namespace {

struct FieldRule {
    const char * name;
    enum Kind { Number, PositiveNumber, PositiveInt, NonNegativeInt, String, BetaPair } kind;
};

const FieldRule kRecipeFields[] = {
    {"learning_rate", FieldRule::PositiveNumber},
    {"duration", FieldRule::String},
    {"batch_size_per_device", FieldRule::PositiveInt},
    {"gradient_accumulation_steps", FieldRule::PositiveInt},
    {"training_steps", FieldRule::PositiveInt},
    {"lr_scheduler", FieldRule::String},
    {"warmup_steps", FieldRule::NonNegativeInt},
    {"optimizer", FieldRule::String},
    {"weight_decay", FieldRule::Number},
    {"adam_betas", FieldRule::BetaPair},
    {"adam_epsilon", FieldRule::PositiveNumber},
};

} // namespace

std::vector<RecipeViolation> validate_phase_recipe(const std::string & recipe_json) {
    std::vector<RecipeViolation> violations;
    json j = json::parse(recipe_json, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("phases") || !j["phases"].is_object()) {
        violations.push_back({"", "", "document must be an object with a \"phases\" object"});
        return violations;
    }
    const auto & phases = j["phases"];
    for (const char * phase : {"C1", "C2", "C3"}) {
        if (!phases.contains(phase)) {
            violations.push_back({phase, "", "phase missing"});
            continue;
        }
        const auto & p = phases[phase];
        for (const auto & rule : kRecipeFields) {
            if (!p.contains(rule.name)) {
                violations.push_back({phase, rule.name, "field missing"});
                continue;
            }
            const auto & v = p[rule.name];
            switch (rule.kind) {
                case FieldRule::Number:
                    if (!v.is_number()) {
                        violations.push_back({phase, rule.name, "expected a number"});
                    } else if (v.get<double>() < 0.0) {
                        violations.push_back({phase, rule.name, "must be >= 0"});
                    }
                    break;
                case FieldRule::PositiveNumber:
                    if (!v.is_number() || !(v.get<double>() > 0.0)) {
                        violations.push_back({phase, rule.name, "expected a number > 0"});
                    }
                    break;
                case FieldRule::PositiveInt:
                    if (!v.is_number_integer() || v.get<long long>() < 1) {
                        violations.push_back({phase, rule.name, "expected an integer >= 1"});
                    }
                    break;
                case FieldRule::NonNegativeInt:
                    if (!v.is_number_integer() || v.get<long long>() < 0) {
                        violations.push_back({phase, rule.name, "expected an integer >= 0"});
                    }
                    break;
                case FieldRule::String:
                    if (!v.is_string() || v.get<std::string>().empty()) {
                        violations.push_back({phase, rule.name, "expected a nonempty string"});
                    }
                    break;
                case FieldRule::BetaPair:
                    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() ||
                        !(v[0].get<double>() > 0.0 && v[0].get<double>() < 1.0) ||
                        !(v[1].get<double>() > 0.0 && v[1].get<double>() < 1.0)) {
                        violations.push_back({phase, rule.name, "expected [beta1, beta2] each in (0,1)"});
                    }
                    break;
            }
        }
        for (auto it = p.begin(); it != p.end(); ++it) {
            bool known = false;
            for (const auto & rule : kRecipeFields) {
                if (it.key() == rule.name) {
                    known = true;
                    break;
                }
            }
            if (!known) {
                violations.push_back({phase, it.key(), "unknown field"});
            }
        }
    }
    return violations;
}

} // namespace fincurate::config
