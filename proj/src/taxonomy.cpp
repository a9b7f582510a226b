#include "fincurate/taxonomy.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <set>
#include <sstream>

namespace fincurate::taxonomy {

using json = nlohmann::ordered_json;

NodeId TopicTree::add_root(std::string label, std::string description) {
    TopicNode node;
    node.id = nodes_.size();
    node.label = std::move(label);
    node.description = std::move(description);
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
}

NodeId TopicTree::add_child(NodeId parent, std::string label, std::string description) {
    TopicNode node;
    node.id = nodes_.size();
    node.label = std::move(label);
    node.description = std::move(description);
    node.parent = parent;
    nodes_.push_back(std::move(node));
    nodes_[parent].children.push_back(nodes_.back().id);
    return nodes_.back().id;
}

TopicNode & TopicTree::node(NodeId id) {
    if (id >= nodes_.size()) {
        throw data_error("topic tree: bad node id");
    }
    return nodes_[id];
}

const TopicNode & TopicTree::node(NodeId id) const {
    if (id >= nodes_.size()) {
        throw data_error("topic tree: bad node id");
    }
    return nodes_[id];
}

std::vector<NodeId> TopicTree::roots() const {
    std::vector<NodeId> out;
    for (const auto & n : nodes_) {
        if (!n.parent) {
            out.push_back(n.id);
        }
    }
    return out;
}

std::vector<NodeId> TopicTree::leaves() const {
    std::vector<NodeId> out;
    for (const auto & n : nodes_) {
        if (n.leaf()) {
            out.push_back(n.id);
        }
    }
    return out;
}

std::string TopicTree::to_json() const {
    json arr = json::array();
    for (const auto & n : nodes_) {
        json jn;
        jn["id"] = n.id;
        jn["label"] = n.label;
        jn["description"] = n.description;
        if (n.parent) {
            jn["parent"] = *n.parent;
        }
        jn["children"] = n.children;
        jn["members"] = n.members;
        jn["flagged_for_augmentation"] = n.flagged_for_augmentation;
        jn["non_splittable"] = n.non_splittable;
        arr.push_back(std::move(jn));
    }
    return json({{"nodes", arr}}).dump(2);
}

TopicTree TopicTree::from_json(const std::string & text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.contains("nodes")) {
        throw data_error("topic tree: malformed JSON");
    }
    TopicTree tree;
    for (const auto & jn : j["nodes"]) {
        TopicNode n;
        n.id = jn.at("id").get<NodeId>();
        n.label = jn.at("label").get<std::string>();
        n.description = jn.value("description", "");
        if (jn.contains("parent")) {
            n.parent = jn["parent"].get<NodeId>();
        }
        n.children = jn.value("children", std::vector<NodeId>{});
        n.members = jn.value("members", std::vector<std::string>{});
        n.flagged_for_augmentation = jn.value("flagged_for_augmentation", false);
        n.non_splittable = jn.value("non_splittable", false);
        tree.nodes_.push_back(std::move(n));
    }
    return tree;
}

void SplitSpec::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw config_error("split: train_fraction must be in (0,1)");
    }
}

std::map<std::string, std::string> init_domains(const DocTextLookup & docs, const std::vector<Subtopic> & domains,
                                                llmgate::EmbeddingClient & embedder) {
    if (domains.empty()) {
        throw config_error("init_domains: no domain labels");
    }
    std::vector<std::string> label_texts;
    label_texts.reserve(domains.size());
    for (const auto & d : domains) {
        label_texts.push_back(d.description.empty() ? d.label : d.label + " " + d.description);
    }
    auto label_vecs = embedder.embed(label_texts);

    std::map<std::string, std::string> assignment;
    for (const auto & [doc_id, text] : docs) {
        auto doc_vec = embedder.embed({text})[0];
        std::size_t best = 0;
        float best_cos = -2.0f;
        for (std::size_t i = 0; i < label_vecs.size(); ++i) {
            float c = llmgate::cosine(doc_vec, label_vecs[i]);
            if (c > best_cos) { // strict: ties keep the earlier label
                best_cos = c;
                best = i;
            }
        }
        assignment[doc_id] = domains[best].label;
    }
    return assignment;
}

TopicTree domain_tree(const DocTextLookup & docs, const std::vector<Subtopic> & domains,
                      llmgate::EmbeddingClient & embedder) {
    TopicTree tree;
    std::map<std::string, NodeId> by_label;
    for (const auto & d : domains) {
        by_label[d.label] = tree.add_root(d.label, d.description);
    }
    for (const auto & [doc_id, label] : init_domains(docs, domains, embedder)) {
        tree.node(by_label[label]).members.push_back(doc_id);
    }
    return tree;
}

std::vector<Subtopic> propose_subtopics(const TopicNode & node, const DocTextLookup & docs,
                                        llmgate::ChatClient & chat) {
    if (node.members.size() < 2) {
        throw data_error("propose_subtopics: node needs at least 2 members");
    }
    std::ostringstream prompt;
    prompt << "Propose subtopics for the topic \"" << node.label << "\" given these samples:\n";
    std::size_t shown = 0;
    for (const auto & doc_id : node.members) {
        auto it = docs.find(doc_id);
        if (it != docs.end() && shown < 8) {
            prompt << "- " << it->second.substr(0, 160) << "\n";
            ++shown;
        }
    }
    prompt << "Reply with a JSON array of {\"label\",\"description\"} objects.";

    std::string reply = chat.complete("You organize a finance corpus into topic hierarchies.", prompt.str());

    std::vector<Subtopic> out;
    json parsed = json::parse(reply, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_array()) {
        for (const auto & item : parsed) {
            if (item.is_object() && item.contains("label")) {
                out.push_back({item["label"].get<std::string>(), item.value("description", "")});
            }
        }
    } else {
        // fallback: "label: description" lines
        std::istringstream lines(reply);
        std::string line;
        while (std::getline(lines, line)) {
            auto colon = line.find(':');
            if (colon != std::string::npos && colon > 0) {
                out.push_back({line.substr(0, colon), line.substr(colon + 1)});
            }
        }
    }
    std::set<std::string> distinct;
    std::vector<Subtopic> unique;
    for (auto & s : out) {
        if (!s.label.empty() && distinct.insert(s.label).second) {
            unique.push_back(std::move(s));
        }
    }
    if (unique.size() < 2) {
        throw data_error("DegenerateProposal: fewer than 2 distinct subtopic labels");
    }
    return unique;
}

AssignResult assign_by_similarity(const TopicNode & node, const std::vector<Subtopic> & subtopics,
                                  const DocTextLookup & docs, llmgate::EmbeddingClient & embedder,
                                  double residual_floor) {
    std::vector<std::string> label_texts;
    for (const auto & s : subtopics) {
        label_texts.push_back(s.description.empty() ? s.label : s.label + " " + s.description);
    }
    auto label_vecs = embedder.embed(label_texts);

    AssignResult result;
    for (const auto & doc_id : node.members) {
        auto it = docs.find(doc_id);
        if (it == docs.end()) {
            result.residual.push_back(doc_id);
            continue;
        }
        auto vec = embedder.embed({it->second})[0];
        std::size_t best = 0;
        float best_cos = -2.0f;
        for (std::size_t i = 0; i < label_vecs.size(); ++i) {
            float c = llmgate::cosine(vec, label_vecs[i]);
            if (c > best_cos) {
                best_cos = c;
                best = i;
            }
        }
        if (best_cos >= static_cast<float>(residual_floor)) {
            result.assignment[doc_id] = best;
        } else {
            result.residual.push_back(doc_id);
        }
    }
    return result;
}

static std::string label_residual(const TopicNode & node, const std::vector<std::string> & residual,
                                  const DocTextLookup & docs, llmgate::ChatClient & chat) {
    std::ostringstream prompt;
    prompt << "Give one precise, descriptive label for leftover documents under \"" << node.label << "\":\n";
    std::size_t shown = 0;
    for (const auto & doc_id : residual) {
        auto it = docs.find(doc_id);
        if (it != docs.end() && shown < 5) {
            prompt << "- " << it->second.substr(0, 120) << "\n";
            ++shown;
        }
    }
    prompt << "Reply with the label only.";
    std::string label = chat.complete("You organize a finance corpus into topic hierarchies.", prompt.str());
    auto end = label.find('\n');
    if (end != std::string::npos) {
        label = label.substr(0, end);
    }
    return label.empty() ? node.label + " (misc)" : label;
}

void refine_tree(TopicTree & tree, const DocTextLookup & docs, const RefineOptions & options,
                 llmgate::ChatClient & chat, llmgate::EmbeddingClient & embedder) {
    if (options.max_leaf_size <= options.min_leaf_size) {
        throw config_error("refine: max_leaf_size must exceed min_leaf_size");
    }
    struct Pending {
        NodeId id;
        std::size_t depth;
        std::size_t failures;
    };
    std::deque<Pending> queue;
    for (NodeId id : tree.leaves()) {
        queue.push_back({id, 0, 0});
    }
    while (!queue.empty()) {
        Pending item = queue.front();
        queue.pop_front();
        TopicNode & node = tree.node(item.id);
        if (node.members.size() <= options.max_leaf_size) {
            if (node.members.size() < options.min_leaf_size) {
                node.flagged_for_augmentation = true;
            }
            continue;
        }
        if (item.depth >= options.max_depth) {
            throw data_error("refine: recursion depth limit exceeded at node " + node.label);
        }
        std::vector<Subtopic> subtopics;
        try {
            subtopics = propose_subtopics(node, docs, chat);
        } catch (const data_error &) {
            if (item.failures + 1 >= 2) {
                node.non_splittable = true; // two degenerate proposals; leave as-is
                continue;
            }
            queue.push_back({item.id, item.depth, item.failures + 1});
            continue;
        }
        auto assigned = assign_by_similarity(node, subtopics, docs, embedder, options.residual_floor);

        std::vector<std::vector<std::string>> buckets(subtopics.size());
        for (const auto & doc_id : node.members) {
            auto it = assigned.assignment.find(doc_id);
            if (it != assigned.assignment.end()) {
                buckets[it->second].push_back(doc_id);
            }
        }
        // a split that lands everything in one bucket makes no progress
        std::size_t nonempty = 0;
        for (const auto & b : buckets) {
            nonempty += b.empty() ? 0 : 1;
        }
        if (nonempty + (assigned.residual.empty() ? 0 : 1) < 2) {
            if (item.failures + 1 >= 2) {
                tree.node(item.id).non_splittable = true;
                continue;
            }
            queue.push_back({item.id, item.depth, item.failures + 1});
            continue;
        }

        tree.node(item.id).members.clear();
        for (std::size_t i = 0; i < subtopics.size(); ++i) {
            if (buckets[i].empty()) {
                continue;
            }
            NodeId child = tree.add_child(item.id, subtopics[i].label, subtopics[i].description);
            tree.node(child).members = std::move(buckets[i]);
            queue.push_back({child, item.depth + 1, 0});
        }
        if (!assigned.residual.empty()) {
            std::string label = label_residual(tree.node(item.id), assigned.residual, docs, chat);
            NodeId child = tree.add_child(item.id, label, "residual group");
            tree.node(child).members = assigned.residual;
            queue.push_back({child, item.depth + 1, 0});
        }
    }
}

SplitResult balanced_split(const TopicTree & tree, const SplitSpec & spec) {
    spec.validate();
    SplitResult result;
    for (NodeId leaf_id : tree.leaves()) {
        const TopicNode & leaf = tree.node(leaf_id);
        if (leaf.members.empty()) {
            continue;
        }
        std::size_t n = leaf.members.size();
        auto test_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - spec.train_fraction)));
        if (n >= 2 && test_count == 0) {
            test_count = 1;
        }
        if (n == 1) {
            test_count = 0;
        }
        // per-leaf stream keeps the draw independent of leaf visit order
        std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(leaf_id)};
        std::mt19937_64 rng(seq);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) {
            order[i] = i;
        }
        for (std::size_t i = n; i > 1; --i) { // Fisher-Yates, modulo draw for portability
            std::size_t j = rng() % i;
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (i < test_count) {
                result.test.push_back(leaf.members[order[i]]);
            } else {
                result.train.push_back(leaf.members[order[i]]);
            }
        }
    }
    return result;
}

QaResult generate_qa_pairs(const std::vector<std::string> & train_doc_ids, const DocTextLookup & docs,
                           llmgate::ChatClient & chat) {
    QaResult result;
    for (const auto & doc_id : train_doc_ids) {
        auto it = docs.find(doc_id);
        if (it == docs.end()) {
            ++result.skipped;
            continue;
        }
        std::string reply = chat.complete(
            "You write one factual question-answer pair about the given passage. "
            "Reply with {\"question\",\"answer\"} JSON only.",
            it->second);
        json parsed = json::parse(reply, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("question") ||
            !parsed.contains("answer") || !parsed["question"].is_string() || !parsed["answer"].is_string() ||
            parsed["question"].get<std::string>().empty() || parsed["answer"].get<std::string>().empty()) {
            ++result.skipped;
            continue;
        }
        result.pairs.push_back({parsed["question"].get<std::string>(), parsed["answer"].get<std::string>(), doc_id});
    }
    return result;
}

std::string qa_pairs_jsonl(const std::vector<QaPair> & pairs) {
    std::string out;
    for (const auto & p : pairs) {
        json j;
        j["question"] = p.question;
        j["answer"] = p.answer;
        j["source"] = p.source;
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace fincurate::taxonomy
