#pragma once

#include "fincurate/blend.hpp"
#include "fincurate/cleanse.hpp"
#include "fincurate/errors.hpp"
#include "fincurate/judge.hpp"
#include "fincurate/llmgate.hpp"
#include "fincurate/taxonomy.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::config {

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    std::string fixed_timestamp; // empty: wall clock (manifests stop being reproducible)
    std::size_t workers = 1;
};

struct IngestConfig {
    std::filesystem::path input; // JSONL corpus
    std::size_t max_records_per_shard = 100000;
};

struct DedupConfig {
    double threshold = 0.8;
};

struct TaxonomyConfig {
    std::vector<taxonomy::Subtopic> domains;
    std::size_t max_leaf_size = 5000;
    std::size_t min_leaf_size = 50;
    double residual_floor = 0.15;
};

struct SplitConfig {
    double train_fraction = 0.95;
};

struct PackConfig {
    std::size_t context_window = 8192;
};

struct ClientsConfig {
    llmgate::ClientConfig chat;
    std::filesystem::path chat_stub_script; // empty: all-pass stub
    std::size_t embedding_dim = 64;
};

struct JudgeConfig {
    std::filesystem::path taxonomy_file; // empty: built-in defaults
    std::vector<std::size_t> rejecting_pillars = {0, 1};
};

struct EvalConfig {
    std::filesystem::path kl_input;        // JSONL {"seq","position","p","q"}
    std::filesystem::path logprob_input;   // JSONL {"tokens":[{"logprob_cpt","logprob_base"}]}
    std::filesystem::path toolcalls_gold;
    std::filesystem::path toolcalls_predicted;
    std::filesystem::path questions_input; // JSONL {"stem","options"}
    double drift_threshold = 1.0;
};

struct SimConfig {
    std::size_t mandate_count = 24;
    std::size_t transaction_count = 20;
    std::vector<std::string> scenarios; // empty: all
    std::size_t traces_per_scenario = 4;
};

struct ConversationsConfig {
    std::filesystem::path input; // conversation JSONL for conv-validate
};

struct PipelineConfig {
    RunConfig run;
    IngestConfig ingest;
    cleanse::CleansePolicy cleanse_policy = cleanse::CleansePolicy::defaults();
    DedupConfig dedup;
    TaxonomyConfig taxonomy;
    SplitConfig split;
    blend::BlendSpec blend; // entries reference shard streams by path
    std::vector<std::filesystem::path> blend_inputs;
    PackConfig pack;
    std::filesystem::path registry_file; // empty: built-in default registry
    ConversationsConfig conversations;
    JudgeConfig judge;
    ClientsConfig clients;
    EvalConfig eval;
    SimConfig sim;

    // Parse and validate: unknown keys rejected, referenced files must exist.
    static PipelineConfig load(const std::filesystem::path & path);
    static PipelineConfig from_json(const std::string & json_text, const std::filesystem::path & base_dir = ".");
};

struct RecipeViolation {
    std::string phase;
    std::string field;
    std::string detail;
};

// Schema check for the three-phase training recipe document; never executes
// anything. Field set: learning_rate, duration, batch_size_per_device,
// gradient_accumulation_steps, training_steps, lr_scheduler, warmup_steps,
// optimizer, weight_decay, adam_betas, adam_epsilon.
std::vector<RecipeViolation> validate_phase_recipe(const std::string & recipe_json);

} // namespace fincurate::config
