#include "fincurate/pipeline.hpp"

#include "fincurate/blend.hpp"
#include "fincurate/cleanse.hpp"
#include "fincurate/conversation.hpp"
#include "fincurate/dedup.hpp"
#include "fincurate/evalsuite.hpp"
#include "fincurate/ingest.hpp"
#include "fincurate/judge.hpp"
#include "fincurate/mandatesim.hpp"
#include "fincurate/taxonomy.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

namespace fincurate::pipeline {

using json = nlohmann::ordered_json;

std::string StageReport::to_json() const {
    json j;
    j["stage"] = stage;
    j["in"] = in;
    j["out"] = out;
    j["dropped"] = dropped;
    j["reasons"] = reasons;
    j["metrics"] = metrics;
    j["wall_ms"] = wall_ms;
    return j.dump();
}

StageReport StageReport::from_json(const std::string & text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw data_error("stage report: malformed JSON");
    }
    StageReport r;
    r.stage = j.at("stage").get<std::string>();
    r.in = j.value("in", 0ULL);
    r.out = j.value("out", 0ULL);
    r.dropped = j.value("dropped", 0ULL);
    if (j.contains("reasons")) {
        for (auto it = j["reasons"].begin(); it != j["reasons"].end(); ++it) {
            r.reasons[it.key()] = it.value().get<std::size_t>();
        }
    }
    if (j.contains("metrics")) {
        for (auto it = j["metrics"].begin(); it != j["metrics"].end(); ++it) {
            r.metrics[it.key()] = it.value().get<double>();
        }
    }
    r.wall_ms = j.value("wall_ms", 0.0);
    return r;
}

const std::vector<std::string> & stage_names() {
    static const std::vector<std::string> names = {
        "ingest",     "cleanse",       "dedup",          "taxonomy",          "split",
        "qa-gen",     "blend",         "pack",           "conv-validate",     "judge",
        "sim-gen",    "eval-kl",       "eval-ppl",       "eval-toolcalls",    "profile-questions",
        "report",     "validate-recipe",
    };
    return names;
}

namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path & path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot read file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const fs::path & path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot read file: " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

void write_file(const fs::path & path, const std::string & content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw data_error("cannot write file: " + path.string());
    }
    out << content;
}

fs::path stage_dir(const config::PipelineConfig & cfg, const std::string & stage) {
    fs::path dir = cfg.run.output_dir / stage;
    fs::create_directories(dir);
    return dir;
}

// Curated-document JSONL used between cleanse, dedup and taxonomy.
json curated_to_json(const cleanse::CuratedDocument & doc) {
    json j;
    j["id"] = doc.id;
    j["text"] = doc.record.text;
    if (!doc.record.source.empty()) {
        j["source"] = doc.record.source;
    }
    j["data_type"] = ingest::data_type_name(doc.record.data_type);
    if (!doc.record.meta.empty()) {
        j["meta"] = doc.record.meta;
    }
    j["tier"] = cleanse::tier_name(doc.tier);
    j["pii_redactions"] = doc.pii_redactions;
    return j;
}

cleanse::CuratedDocument curated_from_json(const std::string & line) {
    json j = json::parse(line);
    cleanse::CuratedDocument doc;
    doc.id = j.at("id").get<std::string>();
    doc.record.text = j.at("text").get<std::string>();
    doc.record.source = j.value("source", "");
    if (auto dt = ingest::data_type_from_name(j.value("data_type", "text"))) {
        doc.record.data_type = *dt;
    }
    if (j.contains("meta")) {
        for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it) {
            doc.record.meta[it.key()] = it.value().get<std::string>();
        }
    }
    doc.pii_redactions = j.value("pii_redactions", 0ULL);
    doc.tier = j.value("tier", "medium") == "high"  ? cleanse::Tier::High
               : j.value("tier", "medium") == "low" ? cleanse::Tier::Low
                                                    : cleanse::Tier::Medium;
    return doc;
}

conversation::ToolRegistry load_registry(const config::PipelineConfig & cfg) {
    if (cfg.registry_file.empty()) {
        return mandatesim::default_tool_registry();
    }
    return conversation::ToolRegistry::from_json(read_file(cfg.registry_file));
}

// Offline stub behind the retry/backpressure gate; live runs would swap in
// make_http_chat_client behind the same wrapper.
std::shared_ptr<llmgate::ChatClient> load_chat_stub(const config::PipelineConfig & cfg,
                                                    const std::string & default_response) {
    std::shared_ptr<llmgate::ChatClient> stub;
    if (!cfg.clients.chat_stub_script.empty()) {
        stub = std::make_shared<llmgate::StubChatClient>(
            llmgate::StubChatClient::from_json(read_file(cfg.clients.chat_stub_script)));
    } else {
        stub = std::make_shared<llmgate::StubChatClient>(default_response);
    }
    return std::make_shared<llmgate::GatedChatClient>(std::move(stub), cfg.clients.chat);
}

std::vector<taxonomy::Subtopic> domains_or_default(const config::PipelineConfig & cfg) {
    if (!cfg.taxonomy.domains.empty()) {
        return cfg.taxonomy.domains;
    }
    return {
        {"economic and monetary system", "macro economy, monetary policy, currency and banking system"},
        {"investment schemes", "mutual funds, deposits, equities, retirement and savings schemes"},
        {"insurance services", "life, health and general insurance products and claims"},
        {"finance news", "markets, earnings, regulatory announcements and financial journalism"},
        {"payments ecosystem", "digital payments, transfers, mandates, settlement and disputes"},
    };
}

StageReport stage_ingest(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "ingest";
    if (cfg.ingest.input.empty()) {
        throw config_error("ingest: no input configured");
    }
    auto stream = ingest::open_text_stream(cfg.ingest.input);
    ingest::ShardWriter writer(stage_dir(cfg, "ingest"), "shard", cfg.ingest.max_records_per_shard);
    while (auto item = stream.next()) {
        ++report.in;
        if (item->ok()) {
            writer.write(item->record());
            ++report.out;
        } else {
            ++report.dropped;
            ++report.reasons[ingest::parse_error_name(item->failure().kind)];
        }
    }
    auto manifest = writer.finish(cfg.run.fixed_timestamp);
    write_file(stage_dir(cfg, "ingest") / "manifest.json", manifest.to_json() + "\n");
    return report;
}

StageReport stage_cleanse(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "cleanse";
    fs::path ingest_dir = stage_dir(cfg, "ingest");
    auto manifest = ingest::ShardManifest::from_json(read_file(ingest_dir / "manifest.json"));

    std::vector<ingest::TextRecord> records;
    for (const auto & shard : manifest.shards) {
        fs::path shard_path(shard.path);
        if (shard_path.is_relative()) {
            shard_path = ingest_dir / shard_path;
        }
        auto stream = ingest::open_text_stream(shard_path);
        while (auto item = stream.next()) {
            if (item->ok()) { // ingest already dropped the failures
                records.push_back(item->record());
            }
        }
    }
    report.in = records.size();

    // pure per-document work; parallel workers must reproduce the
    // sequential output bit for bit, so results keep their slot
    std::vector<cleanse::CuratedDocument> docs(records.size());
    std::size_t workers = std::max<std::size_t>(1, cfg.run.workers);
    auto body = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "d%06zu", i);
            docs[i] = cleanse::cleanse_document(id, records[i], cfg.cleanse_policy);
        }
    };
    if (workers <= 1 || records.size() < 2 * workers) {
        body(0, records.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (records.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            std::size_t begin = w * chunk;
            std::size_t end = std::min(records.size(), begin + chunk);
            if (begin < end) {
                pool.emplace_back(body, begin, end);
            }
        }
        for (auto & t : pool) {
            t.join();
        }
    }

    std::ostringstream kept;
    std::size_t redactions = 0;
    for (const auto & doc : docs) {
        redactions += doc.pii_redactions;
        if (doc.kept()) {
            ++report.out;
            kept << curated_to_json(doc).dump() << '\n';
        } else {
            ++report.dropped;
            ++report.reasons[cleanse::drop_reason_name(*doc.drop_reason)];
        }
    }
    report.metrics["pii_redactions"] = static_cast<double>(redactions);
    write_file(stage_dir(cfg, "cleanse") / "kept.jsonl", kept.str());
    return report;
}

StageReport stage_dedup(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "dedup";
    std::ostringstream kept;
    dedup::Deduper deduper(cfg.dedup.threshold);
    for (const auto & line : read_lines(stage_dir(cfg, "cleanse") / "kept.jsonl")) {
        ++report.in;
        auto doc = curated_from_json(line);
        auto decision = deduper.push(doc.id, dedup::signature(doc.record.text));
        if (decision.kept) {
            ++report.out;
            kept << line << '\n';
        } else {
            ++report.dropped;
            ++report.reasons[decision.drop.exact ? "exact_duplicate" : "near_duplicate"];
        }
    }
    write_file(stage_dir(cfg, "dedup") / "kept.jsonl", kept.str());
    write_file(stage_dir(cfg, "dedup") / "dropped_pairs.jsonl", dedup::drop_report_jsonl(deduper.dropped()));
    return report;
}

taxonomy::DocTextLookup load_doc_lookup(const config::PipelineConfig & cfg) {
    taxonomy::DocTextLookup docs;
    for (const auto & line : read_lines(stage_dir(cfg, "dedup") / "kept.jsonl")) {
        auto doc = curated_from_json(line);
        docs[doc.id] = doc.record.text;
    }
    return docs;
}

StageReport stage_taxonomy(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "taxonomy";
    auto docs = load_doc_lookup(cfg);
    report.in = docs.size();

    llmgate::StubEmbeddingClient embedder(cfg.clients.embedding_dim);
    auto chat = load_chat_stub(cfg, "NA");

    auto tree = taxonomy::domain_tree(docs, domains_or_default(cfg), embedder);
    taxonomy::RefineOptions options;
    options.max_leaf_size = cfg.taxonomy.max_leaf_size;
    options.min_leaf_size = cfg.taxonomy.min_leaf_size;
    options.residual_floor = cfg.taxonomy.residual_floor;
    taxonomy::refine_tree(tree, docs, options, *chat, embedder);

    std::size_t members = 0;
    for (auto leaf_id : tree.leaves()) {
        members += tree.node(leaf_id).members.size();
    }
    report.out = members;
    report.metrics["leaves"] = static_cast<double>(tree.leaves().size());
    write_file(stage_dir(cfg, "taxonomy") / "tree.json", tree.to_json() + "\n");
    return report;
}

StageReport stage_split(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "split";
    auto tree = taxonomy::TopicTree::from_json(read_file(stage_dir(cfg, "taxonomy") / "tree.json"));
    taxonomy::SplitSpec spec;
    spec.train_fraction = cfg.split.train_fraction;
    spec.seed = cfg.run.seed;
    auto split = taxonomy::balanced_split(tree, spec);
    report.in = split.train.size() + split.test.size();
    report.out = report.in;
    report.metrics["train"] = static_cast<double>(split.train.size());
    report.metrics["test"] = static_cast<double>(split.test.size());
    std::ostringstream train, test;
    for (const auto & id : split.train) {
        train << id << '\n';
    }
    for (const auto & id : split.test) {
        test << id << '\n';
    }
    write_file(stage_dir(cfg, "split") / "train.txt", train.str());
    write_file(stage_dir(cfg, "split") / "test.txt", test.str());
    return report;
}

StageReport stage_qa_gen(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "qa-gen";
    auto docs = load_doc_lookup(cfg);
    std::vector<std::string> train_ids = read_lines(stage_dir(cfg, "split") / "train.txt");
    report.in = train_ids.size();
    auto chat = load_chat_stub(cfg, R"({"question":"What is covered here?","answer":"See the source document."})");
    auto result = taxonomy::generate_qa_pairs(train_ids, docs, *chat);
    report.out = result.pairs.size();
    report.dropped = result.skipped;
    if (result.skipped > 0) {
        report.reasons["malformed_chat_output"] = result.skipped;
    }
    write_file(stage_dir(cfg, "qa-gen") / "qa.jsonl", taxonomy::qa_pairs_jsonl(result.pairs));
    return report;
}

StageReport stage_blend(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "blend";
    if (cfg.blend.entries.empty()) {
        throw config_error("blend: no entries configured");
    }
    std::vector<std::vector<std::string>> buffers;
    for (const auto & path : cfg.blend_inputs) {
        buffers.push_back(read_lines(path));
        report.in += buffers.back().size();
    }
    std::vector<blend::Puller<std::string>> pullers;
    for (auto & buffer : buffers) {
        auto cursor = std::make_shared<std::size_t>(0);
        auto * buf = &buffer;
        pullers.push_back([cursor, buf]() -> std::optional<std::string> {
            if (*cursor >= buf->size()) {
                return std::nullopt;
            }
            return (*buf)[(*cursor)++];
        });
    }
    blend::Interleaver<std::string> interleaver(std::move(pullers), cfg.blend);
    std::ostringstream out;
    while (auto drawn = interleaver.next()) {
        out << drawn->item << '\n';
        ++report.out;
    }
    report.metrics["renormalizations"] = static_cast<double>(interleaver.renormalizations().size());
    write_file(stage_dir(cfg, "blend") / "blended.jsonl", out.str());
    return report;
}

StageReport stage_pack(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "pack";
    fs::path input = stage_dir(cfg, "blend") / "blended.jsonl";
    if (!fs::exists(input)) {
        input = stage_dir(cfg, "dedup") / "kept.jsonl";
    }
    blend::WordTokenizer tokenizer;
    blend::Packer packer(tokenizer, cfg.pack.context_window);
    std::ostringstream out;
    auto emit = [&](const std::vector<blend::PackedSequence> & seqs) {
        for (const auto & seq : seqs) {
            out << seq.to_json() << '\n';
            ++report.out;
        }
    };
    for (const auto & line : read_lines(input)) {
        ++report.in;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("text")) {
            ++report.dropped;
            ++report.reasons["malformed_record"];
            continue;
        }
        blend::PackInput doc;
        doc.doc_id = j.value("id", "r" + std::to_string(report.in - 1));
        doc.text = j["text"].get<std::string>();
        if (auto dt = ingest::data_type_from_name(j.value("data_type", "text"))) {
            doc.data_type = *dt;
        }
        emit(packer.push(doc));
    }
    emit(packer.flush());
    report.dropped += packer.skipped_docs();
    if (packer.skipped_docs() > 0) {
        report.reasons["tokenizer_failure"] = packer.skipped_docs();
    }
    report.metrics["tokens_in"] = static_cast<double>(packer.tokens_in());
    report.metrics["tokens_out"] = static_cast<double>(packer.tokens_out());
    report.metrics["separators"] = static_cast<double>(packer.separators_out());
    write_file(stage_dir(cfg, "pack") / "packed.jsonl", out.str());
    return report;
}

StageReport stage_conv_validate(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "conv-validate";
    fs::path input = cfg.conversations.input;
    if (input.empty()) {
        input = stage_dir(cfg, "sim-gen") / "traces.jsonl";
    }
    auto lines = read_lines(input);
    auto registry = load_registry(cfg);
    auto result = conversation::stage1_filter(lines, registry);
    report.in = result.input_count;
    report.out = result.accepted.size();
    report.dropped = result.rejected.size();

    std::ostringstream accepted, rejections;
    for (const auto & sample : result.accepted) {
        accepted << sample.to_json() << '\n';
    }
    for (const auto & rej : result.rejected) {
        json j;
        j["input_index"] = rej.input_index;
        if (!rej.sample_id.empty()) {
            j["sample_id"] = rej.sample_id;
        }
        j["reasons"] = rej.reasons;
        rejections << j.dump() << '\n';
        for (const auto & reason : rej.reasons) {
            ++report.reasons[reason.substr(0, reason.find(':'))];
        }
    }
    write_file(stage_dir(cfg, "conv-validate") / "accepted.jsonl", accepted.str());
    write_file(stage_dir(cfg, "conv-validate") / "rejections.jsonl", rejections.str());
    return report;
}

StageReport stage_judge(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "judge";
    auto registry = load_registry(cfg);
    auto taxonomy = cfg.judge.taxonomy_file.empty()
                        ? judge::MetricTaxonomy::defaults()
                        : judge::MetricTaxonomy::from_json(read_file(cfg.judge.taxonomy_file));
    auto chat = load_chat_stub(cfg, "1");

    std::vector<judge::Verdict> verdicts;
    std::vector<conversation::ConversationSample> samples;
    std::size_t aborted = 0;
    for (const auto & line : read_lines(stage_dir(cfg, "conv-validate") / "accepted.jsonl")) {
        ++report.in;
        auto parsed = conversation::parse_conversation(line);
        auto & sample = std::get<conversation::ConversationSample>(parsed);
        if (sample.id.empty()) {
            sample.id = "sample-" + std::to_string(report.in - 1);
        }
        try {
            verdicts.push_back(judge::judge_sample(sample, taxonomy, registry, *chat));
            samples.push_back(std::move(sample));
        } catch (const client_error &) {
            ++aborted; // the sample aborts, the batch continues
        }
    }
    judge::Stage2Policy policy;
    policy.rejecting_pillars = cfg.judge.rejecting_pillars;
    auto result = judge::stage2_filter(verdicts, taxonomy, policy);
    report.out = result.accepted_ids.size();
    report.dropped = result.rejected.size() + aborted;
    if (aborted > 0) {
        report.reasons["chat_unavailable"] = aborted;
    }
    for (const auto & [metric, count] : result.rejection_histogram) {
        report.reasons[metric] = count;
    }
    write_file(stage_dir(cfg, "judge") / "verdicts.jsonl", judge::verdicts_jsonl(verdicts, result));
    std::ostringstream accepted;
    std::set<std::string> accepted_ids(result.accepted_ids.begin(), result.accepted_ids.end());
    for (const auto & sample : samples) {
        if (accepted_ids.count(sample.id)) {
            accepted << sample.to_json() << '\n';
        }
    }
    write_file(stage_dir(cfg, "judge") / "accepted.jsonl", accepted.str());
    return report;
}

StageReport stage_sim_gen(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "sim-gen";
    mandatesim::SimWorld world(cfg.run.seed, cfg.sim.mandate_count, cfg.sim.transaction_count);
    auto registry = load_registry(cfg);

    std::vector<mandatesim::Scenario> scenarios;
    if (cfg.sim.scenarios.empty()) {
        scenarios = {mandatesim::Scenario::MandateSummary,   mandatesim::Scenario::MandateFetch,
                     mandatesim::Scenario::MandatePause,     mandatesim::Scenario::MandateUnpause,
                     mandatesim::Scenario::MandateRevoke,    mandatesim::Scenario::TransactionFailed,
                     mandatesim::Scenario::TransactionPending};
    } else {
        for (const auto & name : cfg.sim.scenarios) {
            auto s = mandatesim::scenario_from_name(name);
            if (!s) {
                throw config_error("sim-gen: unsupported scenario " + name);
            }
            scenarios.push_back(*s);
        }
    }
    std::ostringstream out;
    for (auto scenario : scenarios) {
        for (std::size_t i = 0; i < cfg.sim.traces_per_scenario; ++i) {
            ++report.in;
            conversation::ConversationSample sample;
            try {
                sample = mandatesim::generate_trace(world, scenario, cfg.run.seed * 1000 + report.in);
            } catch (const data_error &) {
                ++report.dropped;
                ++report.reasons["no_material"];
                continue;
            }
            auto violations = conversation::validate_structure(sample, registry);
            if (!violations.empty()) {
                throw data_error("sim-gen: generated trace failed structural validation");
            }
            out << sample.to_json() << '\n';
            ++report.out;
        }
    }
    write_file(stage_dir(cfg, "sim-gen") / "traces.jsonl", out.str());
    write_file(stage_dir(cfg, "sim-gen") / "world.json", world.snapshot_json() + "\n");
    return report;
}

StageReport stage_eval_kl(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "eval-kl";
    if (cfg.eval.kl_input.empty()) {
        throw config_error("eval-kl: eval.kl_input not configured");
    }
    std::map<std::size_t, std::vector<evalsuite::AlignedPositional>> by_seq;
    for (const auto & line : read_lines(cfg.eval.kl_input)) {
        ++report.in;
        json j = json::parse(line);
        evalsuite::AlignedPositional pos;
        pos.position = j.value("position", 0ULL);
        pos.dist_cpt.probs = j.at("p").get<std::vector<double>>();
        pos.dist_base.probs = j.at("q").get<std::vector<double>>();
        by_seq[j.value("seq", 0ULL)].push_back(std::move(pos));
    }
    std::vector<std::vector<evalsuite::AlignedPositional>> sequences;
    for (auto & [seq, positions] : by_seq) {
        sequences.push_back(std::move(positions));
    }
    double kl = evalsuite::corpus_kl(sequences);
    auto drift = evalsuite::drift_guard(kl, cfg.eval.drift_threshold);
    report.out = report.in;
    report.metrics["kl_avg"] = kl;
    report.metrics["drift_warn"] = drift == evalsuite::DriftStatus::Warn ? 1.0 : 0.0;
    json out;
    out["kl_avg"] = kl;
    out["sequences"] = sequences.size();
    out["drift"] = drift == evalsuite::DriftStatus::Warn ? "warn" : "ok";
    out["threshold"] = cfg.eval.drift_threshold;
    write_file(stage_dir(cfg, "eval-kl") / "kl.json", out.dump(2) + "\n");
    return report;
}

StageReport stage_eval_ppl(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "eval-ppl";
    if (cfg.eval.logprob_input.empty()) {
        throw config_error("eval-ppl: eval.logprob_input not configured");
    }
    std::vector<evalsuite::LogProbSequence> cpt, base;
    for (const auto & line : read_lines(cfg.eval.logprob_input)) {
        ++report.in;
        json j = json::parse(line);
        evalsuite::LogProbSequence seq_cpt, seq_base;
        for (const auto & tok : j.at("tokens")) {
            seq_cpt.logprobs.push_back(tok.at("logprob_cpt").get<double>());
            seq_base.logprobs.push_back(tok.at("logprob_base").get<double>());
        }
        cpt.push_back(std::move(seq_cpt));
        base.push_back(std::move(seq_base));
    }
    double ppl_cpt = evalsuite::pooled_perplexity(cpt);
    double ppl_base = evalsuite::pooled_perplexity(base);
    report.out = report.in;
    report.metrics["ppl_cpt"] = ppl_cpt;
    report.metrics["ppl_base"] = ppl_base;
    json out;
    out["ppl_cpt"] = ppl_cpt;
    out["ppl_base"] = ppl_base;
    out["change_pct"] = ppl_base > 0.0 ? 100.0 * (ppl_base - ppl_cpt) / ppl_base : 0.0;
    write_file(stage_dir(cfg, "eval-ppl") / "ppl.json", out.dump(2) + "\n");
    return report;
}

std::vector<conversation::ConversationSample> load_samples(const fs::path & path) {
    std::vector<conversation::ConversationSample> out;
    for (const auto & line : read_lines(path)) {
        auto parsed = conversation::parse_conversation(line);
        if (auto * errors = std::get_if<std::vector<conversation::ParseError>>(&parsed)) {
            throw data_error("malformed conversation in " + path.string() + ": " + (*errors)[0].detail);
        }
        out.push_back(std::move(std::get<conversation::ConversationSample>(parsed)));
    }
    return out;
}

StageReport stage_eval_toolcalls(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "eval-toolcalls";
    if (cfg.eval.toolcalls_gold.empty() || cfg.eval.toolcalls_predicted.empty()) {
        throw config_error("eval-toolcalls: eval.toolcalls_gold and eval.toolcalls_predicted required");
    }
    auto gold = load_samples(cfg.eval.toolcalls_gold);
    auto predicted = load_samples(cfg.eval.toolcalls_predicted);
    report.in = gold.size();
    auto registry = load_registry(cfg);
    std::vector<std::string> tool_names;
    for (const auto & t : registry.tools()) {
        tool_names.push_back(t.name);
    }
    auto scores = evalsuite::tool_call_f1(predicted, gold, tool_names);
    report.out = scores.size();
    double f1_sum = 0.0;
    for (const auto & s : scores) {
        f1_sum += s.f1();
    }
    report.metrics["macro_f1"] = scores.empty() ? 0.0 : f1_sum / static_cast<double>(scores.size());
    write_file(stage_dir(cfg, "eval-toolcalls") / "toolcalls.csv", evalsuite::tool_call_report_csv(scores));
    return report;
}

StageReport stage_profile_questions(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "profile-questions";
    if (cfg.eval.questions_input.empty()) {
        throw config_error("profile-questions: eval.questions_input not configured");
    }
    evalsuite::RuleQuestionClassifier classifier;
    std::vector<evalsuite::QuestionProfile> profiles;
    for (const auto & line : read_lines(cfg.eval.questions_input)) {
        ++report.in;
        json j = json::parse(line);
        std::vector<std::string> options;
        for (const auto & o : j.at("options")) {
            options.push_back(o.get<std::string>());
        }
        try {
            profiles.push_back(evalsuite::profile_question(j.at("stem").get<std::string>(), options, classifier));
            ++report.out;
        } catch (const data_error &) {
            ++report.dropped;
            ++report.reasons["bad_question"];
        }
    }
    auto rows = evalsuite::distribution_report(profiles);
    write_file(stage_dir(cfg, "profile-questions") / "distribution.txt", evalsuite::distribution_report_text(rows));
    std::ostringstream csv;
    csv << "category,count,percentage\n";
    for (const auto & row : rows) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", row.percentage);
        csv << '"' << row.category << "\"," << row.count << ',' << buf << '\n';
    }
    write_file(stage_dir(cfg, "profile-questions") / "distribution.csv", csv.str());
    return report;
}

StageReport stage_report(const config::PipelineConfig & cfg) {
    StageReport report;
    report.stage = "report";
    auto reports = load_reports(cfg.run.output_dir / "reports.jsonl");
    report.in = reports.size();
    report.out = reports.size();
    write_file(cfg.run.output_dir / "report.txt", render_report(reports));

    // raw vs curated token tallies per (data_type, source), when the corpus
    // stages have run
    fs::path ingest_dir = cfg.run.output_dir / "ingest";
    fs::path dedup_kept = cfg.run.output_dir / "dedup" / "kept.jsonl";
    if (fs::exists(ingest_dir / "manifest.json") && fs::exists(dedup_kept)) {
        std::map<std::pair<std::string, std::string>, blend::CompositionRow> rows;
        auto manifest = ingest::ShardManifest::from_json(read_file(ingest_dir / "manifest.json"));
        for (const auto & shard : manifest.shards) {
            fs::path shard_path(shard.path);
            if (shard_path.is_relative()) {
                shard_path = ingest_dir / shard_path;
            }
            auto stream = ingest::open_text_stream(shard_path);
            while (auto item = stream.next()) {
                if (!item->ok()) {
                    continue;
                }
                auto key = std::make_pair(std::string(ingest::data_type_name(item->record().data_type)),
                                          item->record().source);
                auto & row = rows[key];
                row.data_type = key.first;
                row.dataset = key.second.empty() ? "(unlabeled)" : key.second;
                row.raw_tokens += static_cast<double>(cleanse::word_count(item->record().text));
            }
        }
        for (const auto & line : read_lines(dedup_kept)) {
            auto doc = curated_from_json(line);
            auto key = std::make_pair(std::string(ingest::data_type_name(doc.record.data_type)), doc.record.source);
            auto & row = rows[key];
            row.data_type = key.first;
            row.dataset = key.second.empty() ? "(unlabeled)" : key.second;
            row.curated_tokens += static_cast<double>(cleanse::word_count(doc.record.text));
        }
        std::vector<blend::CompositionRow> ordered;
        for (auto & [key, row] : rows) {
            ordered.push_back(row);
        }
        auto composition = blend::composition_report(ordered);
        write_file(cfg.run.output_dir / "composition.txt", blend::composition_report_text(composition));
        write_file(cfg.run.output_dir / "composition.csv", blend::composition_report_csv(composition));
        report.metrics["composition_rows"] = static_cast<double>(ordered.size());
    }
    return report;
}

StageReport stage_validate_recipe(const config::PipelineConfig & cfg, const std::string & arg) {
    StageReport report;
    report.stage = "validate-recipe";
    if (arg.empty()) {
        throw config_error("validate-recipe: recipe path required");
    }
    auto violations = config::validate_phase_recipe(read_file(arg));
    report.in = 1;
    report.out = violations.empty() ? 1 : 0;
    report.dropped = violations.empty() ? 0 : 1;
    std::ostringstream out;
    if (violations.empty()) {
        out << "ok\n";
    } else {
        for (const auto & v : violations) {
            out << v.phase << (v.phase.empty() ? "" : ".") << v.field << ": " << v.detail << '\n';
            ++report.reasons[v.field.empty() ? "document" : v.field];
        }
    }
    write_file(stage_dir(cfg, "validate-recipe") / "violations.txt", out.str());
    if (!violations.empty()) {
        report.metrics["violations"] = static_cast<double>(violations.size());
    }
    return report;
}

} // namespace

StageReport run_stage(const std::string & stage, const config::PipelineConfig & cfg, const std::string & arg) {
    auto known = stage_names();
    if (std::find(known.begin(), known.end(), stage) == known.end()) {
        throw config_error("unknown stage: " + stage);
    }
    auto start = std::chrono::steady_clock::now();
    StageReport report;
    if (stage == "ingest")                 report = stage_ingest(cfg);
    else if (stage == "cleanse")           report = stage_cleanse(cfg);
    else if (stage == "dedup")             report = stage_dedup(cfg);
    else if (stage == "taxonomy")          report = stage_taxonomy(cfg);
    else if (stage == "split")             report = stage_split(cfg);
    else if (stage == "qa-gen")            report = stage_qa_gen(cfg);
    else if (stage == "blend")             report = stage_blend(cfg);
    else if (stage == "pack")              report = stage_pack(cfg);
    else if (stage == "conv-validate")     report = stage_conv_validate(cfg);
    else if (stage == "judge")             report = stage_judge(cfg);
    else if (stage == "sim-gen")           report = stage_sim_gen(cfg);
    else if (stage == "eval-kl")           report = stage_eval_kl(cfg);
    else if (stage == "eval-ppl")          report = stage_eval_ppl(cfg);
    else if (stage == "eval-toolcalls")    report = stage_eval_toolcalls(cfg);
    else if (stage == "profile-questions") report = stage_profile_questions(cfg);
    else if (stage == "report")            report = stage_report(cfg);
    else                                   report = stage_validate_recipe(cfg, arg);

    auto elapsed = std::chrono::steady_clock::now() - start;
    report.wall_ms = std::chrono::duration<double, std::milli>(elapsed).count();

    // append-only run log; not a pipeline artifact
    std::filesystem::create_directories(cfg.run.output_dir);
    std::ofstream log(cfg.run.output_dir / "reports.jsonl", std::ios::app);
    log << report.to_json() << '\n';
    return report;
}

std::vector<StageReport> load_reports(const std::filesystem::path & reports_file) {
    std::vector<StageReport> out;
    std::ifstream in(reports_file);
    if (!in) {
        return out;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(StageReport::from_json(line));
        }
    }
    return out;
}

std::string render_report(const std::vector<StageReport> & reports) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-18s %10s %10s %10s  %s\n", "stage", "in", "out", "dropped", "reasons");
    out << buf;
    for (const auto & r : reports) {
        std::string reasons;
        for (const auto & [reason, count] : r.reasons) {
            if (!reasons.empty()) {
                reasons += ", ";
            }
            reasons += reason + "=" + std::to_string(count);
        }
        std::snprintf(buf, sizeof(buf), "%-18s %10zu %10zu %10zu  %s\n", r.stage.c_str(), r.in, r.out, r.dropped,
                      reasons.c_str());
        out << buf;
    }

    // attrition funnel over the validation stages, latest run of each
    const StageReport * stage1 = nullptr;
    const StageReport * stage2 = nullptr;
    for (const auto & r : reports) {
        if (r.stage == "conv-validate") {
            stage1 = &r;
        }
        if (r.stage == "judge") {
            stage2 = &r;
        }
    }
    if (stage1 && stage2) {
        out << "\nvalidation funnel\n";
        std::snprintf(buf, sizeof(buf), "  generated            %10zu\n", stage1->in);
        out << buf;
        std::snprintf(buf, sizeof(buf), "  format validated     %10zu\n", stage1->out);
        out << buf;
        std::snprintf(buf, sizeof(buf), "  judge evaluated      %10zu\n", stage2->out);
        out << buf;
    }
    return out.str();
}

} // namespace fincurate::pipeline
