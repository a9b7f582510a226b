#pragma once

#include "fincurate/errors.hpp"
#include "fincurate/llmgate.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::taxonomy {

using NodeId = std::size_t;

struct TopicNode {
    NodeId id = 0;
    std::string label;
    std::string description;
    std::optional<NodeId> parent;
    std::vector<NodeId> children;
    std::vector<std::string> members; // doc ids; leaves only after refinement
    bool flagged_for_augmentation = false;
    bool non_splittable = false; // degenerate proposals twice

    bool leaf() const { return children.empty(); }
};

class TopicTree {
  public:
    NodeId add_root(std::string label, std::string description);
    NodeId add_child(NodeId parent, std::string label, std::string description);

    TopicNode & node(NodeId id);
    const TopicNode & node(NodeId id) const;
    const std::vector<TopicNode> & nodes() const { return nodes_; }
    std::vector<TopicNode> & nodes() { return nodes_; }
    std::vector<NodeId> roots() const;
    std::vector<NodeId> leaves() const;

    std::string to_json() const;
    static TopicTree from_json(const std::string & text);

  private:
    std::vector<TopicNode> nodes_;
};

struct Subtopic {
    std::string label;
    std::string description;
};

struct SplitSpec {
    double train_fraction = 0.95;
    std::uint64_t seed = 0;

    void validate() const;
};

// Looked up per document; the text backs the embedding calls.
using DocTextLookup = std::map<std::string, std::string>;

// Assign every doc to the domain label with maximal cosine similarity to its
// embedding; ties break by label list order.
std::map<std::string, std::string> init_domains(const DocTextLookup & docs,
                                                const std::vector<Subtopic> & domains,
                                                llmgate::EmbeddingClient & embedder);

// Build a one-level tree: one root per domain holding its assigned docs.
TopicTree domain_tree(const DocTextLookup & docs, const std::vector<Subtopic> & domains,
                      llmgate::EmbeddingClient & embedder);

// Ask the chat client for candidate subtopics of one node. The reply must
// carry at least 2 distinct labels (JSON array of {label, description} or
// "label: description" lines); fewer raises DegenerateProposal via
// data_error with that message prefix.
std::vector<Subtopic> propose_subtopics(const TopicNode & node, const DocTextLookup & docs,
                                        llmgate::ChatClient & chat);

struct AssignResult {
    std::map<std::string, std::size_t> assignment; // doc id -> subtopic index
    std::vector<std::string> residual;             // below the cosine floor
};

AssignResult assign_by_similarity(const TopicNode & node, const std::vector<Subtopic> & subtopics,
                                  const DocTextLookup & docs, llmgate::EmbeddingClient & embedder,
                                  double residual_floor = 0.15);

struct RefineOptions {
    std::size_t max_leaf_size = 5000;
    std::size_t min_leaf_size = 50;
    double residual_floor = 0.15;
    std::size_t max_depth = 12;
};

// Recursively split oversized leaves until every leaf fits or is marked
// non-splittable; undersized leaves get flagged_for_augmentation; residual
// groups receive chat-generated labels.
void refine_tree(TopicTree & tree, const DocTextLookup & docs, const RefineOptions & options,
                 llmgate::ChatClient & chat, llmgate::EmbeddingClient & embedder);

struct SplitResult {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

// Per leaf with n members: test count = round(n * (1 - train_fraction)),
// floored at 1 when n >= 2; selection is a seeded uniform draw.
SplitResult balanced_split(const TopicTree & tree, const SplitSpec & spec);

struct QaPair {
    std::string question;
    std::string answer;
    std::string source; // doc id
};

struct QaResult {
    std::vector<QaPair> pairs;
    std::size_t skipped = 0; // malformed chat outputs
};

// One chat call per doc; replies must parse as {"question","answer"} JSON.
QaResult generate_qa_pairs(const std::vector<std::string> & train_doc_ids, const DocTextLookup & docs,
                           llmgate::ChatClient & chat);

std::string qa_pairs_jsonl(const std::vector<QaPair> & pairs);

} // namespace fincurate::taxonomy
