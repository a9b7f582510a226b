#include "fincurate/llmgate.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>

namespace fincurate::llmgate {

using json = nlohmann::ordered_json;

void ClientConfig::validate() const {
    if (max_inflight < 1) {
        throw config_error("llmgate: max_inflight must be >= 1");
    }
    if (!(timeout_seconds > 0.0)) {
        throw config_error("llmgate: timeout must be > 0");
    }
}

StubChatClient::StubChatClient(std::string default_response) : default_response_(std::move(default_response)) {}

void StubChatClient::add_exact(const std::string & prompt, std::vector<std::string> responses) {
    entries_.push_back({prompt, true, std::move(responses), 0});
}

void StubChatClient::add_pattern(const std::string & substring, std::vector<std::string> responses) {
    entries_.push_back({substring, false, std::move(responses), 0});
}

StubChatClient StubChatClient::from_json(const std::string & json_text) {
    json j = json::parse(json_text);
    StubChatClient stub(j.value("default", "NA"));
    for (const auto & e : j.value("entries", json::array())) {
        std::vector<std::string> responses;
        if (e["response"].is_array()) {
            for (const auto & r : e["response"]) {
                responses.push_back(r.get<std::string>());
            }
        } else {
            responses.push_back(e["response"].get<std::string>());
        }
        if (e.value("exact", false)) {
            stub.add_exact(e.at("pattern").get<std::string>(), std::move(responses));
        } else {
            stub.add_pattern(e.at("pattern").get<std::string>(), std::move(responses));
        }
    }
    return stub;
}

std::string StubChatClient::complete(const std::string & /*system_prompt*/, const std::string & user_prompt) {
    ++calls_;
    for (auto & entry : entries_) {
        bool hit = entry.exact ? user_prompt == entry.pattern : user_prompt.find(entry.pattern) != std::string::npos;
        if (!hit) {
            continue;
        }
        const std::string & response =
            entry.responses[entry.cursor < entry.responses.size() ? entry.cursor : entry.responses.size() - 1];
        ++entry.cursor;
        if (response == "<<FAIL>>") {
            throw client_error("stub: scripted failure");
        }
        return response;
    }
    return default_response_;
}

static std::uint64_t fnv1a64(const std::string & s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::vector<float> StubEmbeddingClient::embed_one(const std::string & text) {
    std::vector<double> acc(dim_, 0.0);
    std::size_t start = 0;
    bool any = false;
    auto feed = [&](const std::string & word) {
        std::uint64_t h = fnv1a64(word);
        std::size_t coord = h % dim_;
        double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
        acc[coord] += sign;
        any = true;
    };
    while (start < text.size()) {
        std::size_t end = text.find(' ', start);
        if (end == std::string::npos) {
            end = text.size();
        }
        if (end > start) {
            feed(text.substr(start, end - start));
        }
        start = end + 1;
    }
    if (!any) {
        acc[0] = 1.0; // empty text maps to a fixed unit vector
    }
    double norm = 0.0;
    for (double v : acc) {
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        acc[0] = 1.0;
        norm = 1.0;
    }
    std::vector<float> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        out[i] = static_cast<float>(acc[i] / norm);
    }
    return out;
}

std::vector<std::vector<float>> StubEmbeddingClient::embed(const std::vector<std::string> & texts) {
    if (texts.empty()) {
        throw client_error("embed: no input texts");
    }
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto & t : texts) {
        out.push_back(embed_one(t));
    }
    return out;
}

GatedChatClient::GatedChatClient(std::shared_ptr<ChatClient> inner, ClientConfig config)
    : inner_(std::move(inner)), config_(std::move(config)) {
    config_.validate();
}

std::string GatedChatClient::complete(const std::string & system_prompt, const std::string & user_prompt) {
    {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return inflight_ < config_.max_inflight; });
        ++inflight_;
    }
    struct Release {
        GatedChatClient * self;
        ~Release() {
            {
                std::lock_guard<std::mutex> lock(self->mu_);
                --self->inflight_;
            }
            self->cv_.notify_one();
        }
    } release{this};

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
        try {
            return inner_->complete(system_prompt, user_prompt);
        } catch (const client_error & e) {
            last_error = e.what();
        }
    }
    throw client_error("chat unavailable after " + std::to_string(config_.max_retries + 1) +
                       " attempts: " + last_error);
}

namespace {

// Minimal chat-completions client over HTTP. Kept behind make_http_chat_client
// so offline runs never touch it.
class HttpChatClient : public ChatClient {
  public:
    explicit HttpChatClient(ClientConfig config) : config_(std::move(config)) { config_.validate(); }

    std::string complete(const std::string & system_prompt, const std::string & user_prompt) override;

  private:
    ClientConfig config_;
};

std::string HttpChatClient::complete(const std::string & system_prompt, const std::string & user_prompt) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(static_cast<time_t>(config_.timeout_seconds));
    client.set_read_timeout(static_cast<time_t>(config_.timeout_seconds));

    json body;
    body["model"] = config_.model;
    body["messages"] = json::array();
    if (!system_prompt.empty()) {
        body["messages"].push_back({{"role", "system"}, {"content", system_prompt}});
    }
    body["messages"].push_back({{"role", "user"}, {"content", user_prompt}});

    auto res = client.Post("/v1/chat/completions", body.dump(), "application/json");
    if (!res) {
        throw client_error("chat endpoint unreachable: " + config_.endpoint);
    }
    if (res->status != 200) {
        throw client_error("chat endpoint returned status " + std::to_string(res->status));
    }
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
        throw client_error("chat endpoint returned malformed body");
    }
    return reply["choices"][0]["message"]["content"].get<std::string>();
}

} // namespace

std::shared_ptr<ChatClient> make_http_chat_client(const ClientConfig & config) {
    return std::make_shared<GatedChatClient>(std::make_shared<HttpChatClient>(config), config);
}

float cosine(const std::vector<float> & a, const std::vector<float> & b) {
    if (a.size() != b.size()) {
        throw data_error("cosine: dimension mismatch");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0f;
    }
    return static_cast<float>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

} // namespace fincurate::llmgate
