#pragma once

#include "fincurate/errors.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace fincurate::llmgate {

struct ClientConfig {
    std::string endpoint;
    std::string model;
    double timeout_seconds = 30.0;
    std::size_t max_inflight = 4;
    std::size_t max_retries = 1;

    void validate() const;
};

// Chat-completion contract shared by subtopic proposal, QA generation and
// judging. Implementations must be safe to share across workers.
class ChatClient {
  public:
    virtual ~ChatClient() = default;
    // Throws client_error when the backend is unavailable or times out.
    virtual std::string complete(const std::string & system_prompt, const std::string & user_prompt) = 0;
};

class EmbeddingClient {
  public:
    virtual ~EmbeddingClient() = default;
    // Returns one unit vector per input text. Throws client_error.
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string> & texts) = 0;
};

// Scripted offline chat stub. Entries are tried in order: exact match on the
// user prompt first, then substring patterns. A list-valued response is
// consumed one element per hit; the element "<<FAIL>>" simulates a transport
// failure for retry tests.
class StubChatClient : public ChatClient {
  public:
    struct Entry {
        std::string pattern;
        bool exact = false;
        std::vector<std::string> responses;
        std::size_t cursor = 0;
    };

    explicit StubChatClient(std::string default_response = "NA");

    void add_exact(const std::string & prompt, std::vector<std::string> responses);
    void add_pattern(const std::string & substring, std::vector<std::string> responses);
    static StubChatClient from_json(const std::string & json_text);

    // Not synchronized: share across workers via GatedChatClient or keep
    // one stub per worker.
    std::string complete(const std::string & system_prompt, const std::string & user_prompt) override;

    std::size_t calls() const { return calls_; }

  private:
    std::string default_response_;
    std::vector<Entry> entries_;
    std::size_t calls_ = 0;
};

// Deterministic embedding stub: each whitespace-separated word hashes to one
// signed coordinate, the word vectors are summed and the result normalized.
class StubEmbeddingClient : public EmbeddingClient {
  public:
    explicit StubEmbeddingClient(std::size_t dim = 64) : dim_(dim) {}

    std::vector<std::vector<float>> embed(const std::vector<std::string> & texts) override;
    std::vector<float> embed_one(const std::string & text);

    std::size_t dim() const { return dim_; }

  private:
    std::size_t dim_;
};

// Retry/backpressure wrapper enforcing ClientConfig: at most 1+max_retries
// attempts per call and never more than max_inflight calls in flight.
class GatedChatClient : public ChatClient {
  public:
    GatedChatClient(std::shared_ptr<ChatClient> inner, ClientConfig config);

    std::string complete(const std::string & system_prompt, const std::string & user_prompt) override;

  private:
    std::shared_ptr<ChatClient> inner_;
    ClientConfig config_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t inflight_ = 0;
};

// Reference transport speaking the common chat-completions HTTP shape.
// Provided for live runs; no test depends on it.
std::shared_ptr<ChatClient> make_http_chat_client(const ClientConfig & config);

float cosine(const std::vector<float> & a, const std::vector<float> & b);

} // namespace fincurate::llmgate
